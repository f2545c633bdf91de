#include "vcoadc/oscillator.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <string>

namespace vcoadc {

void OscillatorParams::validate(bool feeds_gray_counter) const {
  if (!(f0_hz > 0.0) || !std::isfinite(f0_hz)) throw ConfigError("oscillator f0_hz must be positive");
  if (!std::isfinite(k_tune)) throw ConfigError("oscillator k_tune must be finite");
  if (states_per_cycle < 1) throw ConfigError("oscillator states_per_cycle must be >= 1");
  if (feeds_gray_counter && !std::has_single_bit(states_per_cycle))
    throw ConfigError("oscillator feeding a Gray counter needs a power-of-two states_per_cycle, got " +
                      std::to_string(states_per_cycle));
  for (double c : poly_nl)
    if (!std::isfinite(c)) throw ConfigError("oscillator poly_nl coefficients must be finite");
  if (noise.white_frac_density < 0.0 || noise.flicker_corner_hz < 0.0)
    throw ConfigError("oscillator noise parameters must be >= 0");
}

TuneResult instantaneous_frequency(const OscillatorParams& params, double v_ctrl) {
  // Horner over v + c0 v^2 + c1 v^3 + ...
  double acc = 0.0;
  for (auto it = params.poly_nl.rbegin(); it != params.poly_nl.rend(); ++it) acc = (acc + *it) * v_ctrl;
  const double shaped = v_ctrl + acc * v_ctrl;
  const double f = params.f0_hz + params.k_tune * shaped;
  if (f < kMinFrequencyHz || std::isnan(f)) return {kMinFrequencyHz, true};
  return {f, false};
}

// ---------------------------------------------------------------------------

OscillatorState::OscillatorState(double f0_hz, const FrequencyNoise& noise, std::uint64_t seed)
    : f0_hz_(f0_hz), noise_(noise), rng_(seed) {
  if (noise_.enabled() && noise_.flicker_corner_hz > 0.0) {
    // Five decades of first-order sections below the corner approximate 1/f.
    for (int i = 0; i < 6; ++i) {
      flicker_pole_hz_.push_back(noise_.flicker_corner_hz * std::pow(10.0, -i));
      flicker_state_.push_back(0.0);
    }
  }
}

void OscillatorState::set_theta(double theta) {
  const double w = std::floor(theta);
  whole_ = static_cast<std::int64_t>(w);
  frac_ = theta - w;
}

double OscillatorState::noise_increment(double dt) {
  const double white_psd = f0_hz_ * f0_hz_ * noise_.white_frac_density * noise_.white_frac_density;
  double dtheta = std::sqrt(0.5 * white_psd * dt) * normal_(rng_);
  if (!flicker_state_.empty()) {
    const double spacing = std::log(10.0);
    for (std::size_t i = 0; i < flicker_state_.size(); ++i) {
      const double p = flicker_pole_hz_[i];
      const double amp = (2.0 * spacing / std::numbers::pi) * white_psd * noise_.flicker_corner_hz / p;
      const double var = amp * p * std::numbers::pi / 2.0;
      const double a = std::exp(-2.0 * std::numbers::pi * p * dt);
      flicker_state_[i] = a * flicker_state_[i] + std::sqrt((1.0 - a * a) * var) * normal_(rng_);
      dtheta += flicker_state_[i] * dt;
    }
  }
  return dtheta;
}

void OscillatorState::advance(double f_inst, double dt) {
  if (!(dt > 0.0)) throw std::logic_error("OscillatorState::advance: dt must be positive");
  last_freq_hz_ = f_inst;
  double dtheta = f_inst * dt;
  if (noise_.enabled()) dtheta += noise_increment(dt);
  if (dtheta < 0.0) dtheta = 0.0;
  advance_cycles(dtheta);
}

// ---------------------------------------------------------------------------

DigitalWord counter_view(double theta, unsigned states_per_cycle, unsigned width_bits) {
  const auto count = static_cast<std::int64_t>(std::floor(theta * states_per_cycle));
  const std::int64_t m = std::int64_t{1} << width_bits;
  return DigitalWord::binary(static_cast<std::uint32_t>(((count % m) + m) % m), width_bits);
}

DigitalWord counter_view(const OscillatorState& state, unsigned states_per_cycle, unsigned width_bits) {
  const std::int64_t count = state.states(states_per_cycle);
  const std::int64_t m = std::int64_t{1} << width_bits;
  return DigitalWord::binary(static_cast<std::uint32_t>(((count % m) + m) % m), width_bits);
}

TapVector tap_waveforms_at_state(std::int64_t state, unsigned taps, bool differential, TapOrder order) {
  if (taps < 2 || taps > 64) throw ConfigError("tap_waveforms: tap count must be in [2, 64]");
  const std::int64_t period = 2 * static_cast<std::int64_t>(taps);
  const std::int64_t s = ((state % period) + period) % period;
  TapVector out{0, taps};
  for (unsigned k = 0; k < taps; ++k) {
    const unsigned phase = order == TapOrder::delay ? k : taps - 1 - k;
    bool level = ((s - phase) % period + period) % period < taps;
    if (!differential && (phase & 1u)) level = !level;
    out.set(k, level);
  }
  return out;
}

TapVector tap_waveforms(double theta, unsigned taps, bool differential, TapOrder order) {
  return tap_waveforms_at_state(static_cast<std::int64_t>(std::floor(2.0 * taps * theta)), taps, differential, order);
}

// ---------------------------------------------------------------------------

void DacModel::validate() const {
  if (n_bits < 1 || n_bits > 16) throw ConfigError("DAC n_bits must be in [1, 16]");
  if (!(v_lsb > 0.0)) throw ConfigError("DAC v_lsb must be positive");
  if (!bit_weight_error.empty() && bit_weight_error.size() != n_bits)
    throw ConfigError("DAC bit_weight_error must have one entry per bit");
}

double dac_output(const DacModel& model, std::uint32_t code) {
  if (code >> model.n_bits) throw std::logic_error("dac_output: code " + std::to_string(code) + " out of range");
  const bool ideal = std::all_of(model.bit_weight_error.begin(), model.bit_weight_error.end(),
                                 [](double e) { return e == 0.0; });
  if (ideal) return model.offset_v + code * model.v_lsb;
  double v = model.offset_v;
  for (unsigned b = 0; b < model.n_bits; ++b) {
    if (!((code >> b) & 1u)) continue;
    v += std::ldexp(model.v_lsb, static_cast<int>(b)) * (1.0 + model.bit_weight_error[b]);
  }
  return v;
}

double dac_output(const DacModel& model, const DigitalWord& code) {
  if (code.encoding() != Encoding::binary) throw EncodingError("dac_output: code must be binary");
  return dac_output(model, code.value());
}

}  // namespace vcoadc
