#pragma once
// Phase-accumulator oscillator models: tuning curve, phase integration with
// optional frequency noise, counter and tap views of the phase, and the R-2R
// DAC that drives the loop DCO.

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "vcoadc/types.hpp"

namespace vcoadc {

/// Lower bound on any oscillator frequency. A ring oscillator cannot run
/// backwards; requests below this are clamped and flagged as overload.
inline constexpr double kMinFrequencyHz = 1.0;

struct FrequencyNoise {
  /// One-sided white fractional-frequency noise density, 1/sqrt(Hz)
  /// (frequency noise PSD = (f0 * density)^2 Hz^2/Hz). 0 disables.
  double white_frac_density = 0.0;
  /// Frequency where the 1/f component equals the white floor. 0 disables.
  double flicker_corner_hz = 0.0;

  bool enabled() const { return white_frac_density > 0.0; }
};

struct OscillatorParams {
  double f0_hz = 1.0;              // rest frequency, v_ctrl = 0
  double k_tune = 0.0;             // Hz per volt
  unsigned states_per_cycle = 1;   // counter-visible states per period
  std::vector<double> poly_nl;     // f = f0 + k (v + sum poly_nl[i] v^(i+2))
  FrequencyNoise noise;
  unsigned taps = 0;               // physical output phases (0 = not used)

  /// Effective count rate at rest, f0 * S.
  double effective_rest_hz() const { return f0_hz * states_per_cycle; }
  void validate(bool feeds_gray_counter = false) const;
};

struct TuneResult {
  double hz;
  bool clamped;
};

TuneResult instantaneous_frequency(const OscillatorParams& params, double v_ctrl);

/// Oscillator phase in cycles, kept as an integer cycle count plus a
/// fractional part in [0, 1) so that resolution does not degrade with run
/// length.
class OscillatorState {
 public:
  OscillatorState() = default;
  OscillatorState(double f0_hz, const FrequencyNoise& noise, std::uint64_t seed);

  /// theta += f_inst * dt (+ noise). dt must be positive.
  void advance(double f_inst, double dt);
  /// Noise-free advance by a phase increment in cycles (must be >= 0).
  void advance_cycles(double dtheta) {
    frac_ += dtheta;
    if (frac_ >= 1.0) {
      const double w = static_cast<double>(static_cast<std::int64_t>(frac_));
      whole_ += static_cast<std::int64_t>(w);
      frac_ -= w;
    }
  }

  double theta() const { return static_cast<double>(whole_) + frac_; }
  std::int64_t whole_cycles() const { return whole_; }
  double fraction() const { return frac_; }
  /// floor(S * theta), without forming the large product in floating point.
  std::int64_t states(unsigned s) const {
    return whole_ * static_cast<std::int64_t>(s) + static_cast<std::int64_t>(frac_ * s);
  }
  double last_freq_hz() const { return last_freq_hz_; }
  bool noisy() const { return noise_.enabled(); }

  void set_theta(double theta);

  /// Phase noise accumulated over an interval dt, in cycles. Advances the
  /// noise generator state but not the phase.
  double noise_increment(double dt);

 private:

  std::int64_t whole_ = 0;
  double frac_ = 0.0;
  double last_freq_hz_ = 0.0;
  double f0_hz_ = 0.0;
  FrequencyNoise noise_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  // 1/f synthesis: first-order lowpass states, one per decade below the corner
  std::vector<double> flicker_state_;
  std::vector<double> flicker_pole_hz_;
};

/// floor(S * theta) mod 2^B as a binary word.
DigitalWord counter_view(double theta, unsigned states_per_cycle, unsigned width_bits);
DigitalWord counter_view(const OscillatorState& state, unsigned states_per_cycle, unsigned width_bits);

enum class TapOrder : std::uint8_t {
  delay,     // tap k lags tap 0 by k/(2M) of a period
  reversed,  // tap k wired to physical phase M-1-k (encoder counts up)
};

/// Logic levels of the M taps at phase theta. For a differential ring the
/// state index is s = floor(2M theta) and phase k is high iff
/// (s - k) mod 2M < M. A single-ended ring additionally inverts every other
/// tap.
TapVector tap_waveforms(double theta, unsigned taps, bool differential, TapOrder order = TapOrder::delay);
TapVector tap_waveforms_at_state(std::int64_t state, unsigned taps, bool differential,
                                 TapOrder order = TapOrder::delay);

struct DacModel {
  unsigned n_bits = 6;
  double v_lsb = 0.01;
  std::vector<double> bit_weight_error;  // relative error of bit b, empty = ideal
  double offset_v = 0.0;

  void validate() const;
};

/// offset + sum_b bit(code, b) 2^b v_lsb (1 + err_b).
double dac_output(const DacModel& model, const DigitalWord& code);
double dac_output(const DacModel& model, std::uint32_t code);

}  // namespace vcoadc
