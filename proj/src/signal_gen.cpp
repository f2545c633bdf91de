#include "vcoadc/signal_gen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vcoadc/types.hpp"

namespace vcoadc {

namespace {
// Phase is recomputed exactly at every multiple of this index; in between a
// complex rotation is used.
constexpr std::int64_t kAnchorSpacing = 256;
}  // namespace

StimulusKind parse_stimulus_kind(const std::string& s) {
  if (s == "silence") return StimulusKind::silence;
  if (s == "dc") return StimulusKind::dc;
  if (s == "tone") return StimulusKind::tone;
  if (s == "multitone") return StimulusKind::multitone;
  throw ConfigError("unknown stimulus kind '" + s + "'");
}

std::string to_string(StimulusKind k) {
  switch (k) {
    case StimulusKind::silence: return "silence";
    case StimulusKind::dc: return "dc";
    case StimulusKind::tone: return "tone";
    case StimulusKind::multitone: return "multitone";
  }
  return "?";
}

double dbv_to_peak(double level_dbv) {
  if (!std::isfinite(level_dbv)) throw ConfigError("level in dBV must be finite");
  return std::numbers::sqrt2 * std::pow(10.0, level_dbv / 20.0);
}

double peak_to_dbv(double peak_v) { return 20.0 * std::log10(peak_v / std::numbers::sqrt2); }

void Stimulus::validate(double engine_rate_hz) const {
  if (kind == StimulusKind::tone && tones.size() != 1) throw ConfigError("tone stimulus needs exactly one component");
  if (kind == StimulusKind::multitone && tones.empty()) throw ConfigError("multitone stimulus needs components");
  if (!std::isfinite(dc_volts)) throw ConfigError("dc level must be finite");
  if (kind != StimulusKind::tone && kind != StimulusKind::multitone) return;
  for (const auto& t : tones) {
    if (!std::isfinite(t.amplitude_dbv)) throw ConfigError("stimulus amplitude_dbv must be finite");
    if (!std::isfinite(t.phase_rad)) throw ConfigError("stimulus phase must be finite");
    if (!(t.frequency_hz >= 0.0) || t.frequency_hz >= 0.5 * engine_rate_hz)
      throw ConfigError("stimulus frequency " + std::to_string(t.frequency_hz) + " Hz is not below engine Nyquist");
  }
}

StimulusSource::StimulusSource(const Stimulus& stim, double engine_rate_hz, double gain) {
  stim.validate(engine_rate_hz);
  if (stim.kind == StimulusKind::dc) dc_ = gain * stim.dc_volts;
  if (stim.kind == StimulusKind::tone || stim.kind == StimulusKind::multitone)
    for (const auto& t : stim.tones)
      osc_.push_back({gain * dbv_to_peak(t.amplitude_dbv), t.frequency_hz / engine_rate_hz, t.phase_rad});
}

void StimulusSource::fill(std::span<double> out, std::int64_t first_index) const {
  std::fill(out.begin(), out.end(), dc_);
  const auto n = static_cast<std::int64_t>(out.size());
  for (const Osc& o : osc_) {
    const double step = 2.0 * std::numbers::pi * o.cycles_per_sample;
    const double c = std::cos(step);
    const double s = std::sin(step);
    std::int64_t i = first_index;
    while (i < first_index + n) {
      const std::int64_t anchor = (i / kAnchorSpacing) * kAnchorSpacing;
      const std::int64_t stop = std::min(anchor + kAnchorSpacing, first_index + n);
      const double cyc = std::fmod(o.cycles_per_sample * static_cast<double>(anchor), 1.0);
      const double ph = 2.0 * std::numbers::pi * cyc + o.phase_rad;
      double re = std::cos(ph);
      double im = std::sin(ph);
      for (std::int64_t j = anchor; j < stop; ++j) {
        if (j >= i) out[static_cast<std::size_t>(j - first_index)] += o.peak * im;
        const double nre = re * c - im * s;
        im = re * s + im * c;
        re = nre;
      }
      i = stop;
    }
  }
}

std::vector<double> generate(const Stimulus& stim, double engine_rate_hz, std::int64_t n) {
  if (n <= 0) throw ConfigError("generate: sample count must be positive");
  StimulusSource src(stim, engine_rate_hz);
  std::vector<double> out(static_cast<std::size_t>(n));
  src.fill(out, 0);
  return out;
}

}  // namespace vcoadc
