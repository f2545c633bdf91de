#pragma once
// Test stimuli in volts. Levels are given in dBV (dB re 1 Vrms).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace vcoadc {

enum class StimulusKind { silence, dc, tone, multitone };

StimulusKind parse_stimulus_kind(const std::string& s);
std::string to_string(StimulusKind k);

struct ToneComponent {
  double amplitude_dbv = -120.0;
  double frequency_hz = 1000.0;
  double phase_rad = 0.0;
};

struct Stimulus {
  StimulusKind kind = StimulusKind::silence;
  std::vector<ToneComponent> tones;  // one for tone, >= 1 for multitone
  double dc_volts = 0.0;
  std::int64_t duration_samples = 0;  // informational; generate() takes n explicitly

  static Stimulus silence() { return {}; }
  static Stimulus tone(double level_dbv, double freq_hz, double phase_rad = 0.0) {
    return {StimulusKind::tone, {{level_dbv, freq_hz, phase_rad}}, 0.0, 0};
  }
  static Stimulus dc(double volts) { return {StimulusKind::dc, {}, volts, 0}; }

  /// Throws ConfigError if a level is not finite or a frequency is outside
  /// [0, engine_rate/2).
  void validate(double engine_rate_hz) const;
};

/// Peak amplitude of a sine whose RMS level is level_dbv: sqrt(2) 10^(L/20).
double dbv_to_peak(double level_dbv);
double peak_to_dbv(double peak_v);

/// Streams stimulus samples at the engine rate. The value at index i depends
/// only on i (not on how callers split the stream into blocks), so block-wise
/// and one-shot generation agree bit for bit.
class StimulusSource {
 public:
  StimulusSource(const Stimulus& stim, double engine_rate_hz, double gain = 1.0);

  void fill(std::span<double> out, std::int64_t first_index) const;

 private:
  struct Osc {
    double peak;
    double cycles_per_sample;
    double phase_rad;
  };
  std::vector<Osc> osc_;
  double dc_ = 0.0;
};

std::vector<double> generate(const Stimulus& stim, double engine_rate_hz, std::int64_t n);

}  // namespace vcoadc
