#pragma once
// JSON experiment configuration (schema 1). Every field is optional; missing
// fields take the defaults of default_experiment(). Unknown keys are
// rejected so that typos do not silently fall back to defaults.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vcoadc/modulator.hpp"
#include "vcoadc/signal_gen.hpp"
#include "vcoadc/spectral.hpp"

namespace vcoadc {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

struct AnalysisConfig {
  std::size_t nfft = 16384;
  std::size_t n_avg = 32;
  Window window = Window::hann;
  MetricOptions metrics;
  double slope_lo_hz = 20e3;
  double slope_hi_hz = 200e3;
  bool coherent = true;  // move tone frequencies onto FFT bins
};

struct SweepConfig {
  std::vector<double> levels_dbv;
  std::vector<double> frequencies_hz;
  double tone_hz = 1000.0;
  double freq_sweep_level_dbv = -10.0;
  std::size_t n_avg = 8;
};

struct HigherOrderConfig {
  unsigned order = 3;
  double pole = 0.6;
  std::vector<double> gains_hz_per_lsb;  // empty: higher_order_gains(order, fs, pole)
  unsigned word_bits = 7;
};

struct NtfConfig {
  std::size_t points = 512;
  bool measure = false;        // add a noise-injection estimate column
  int injection_amplitude = 2;
  std::size_t smooth_bins = 4;
};

struct CompareConfig {
  std::optional<std::filesystem::path> reference_config;
  double x1_init = 0.0;  // nested-form initial state
  double x2_init = 0.0;
  unsigned modulo_bits = 0;
  int bands_per_decade = 10;
  int min_bins = 32;  // bins merged into each comparison band at least
};

struct ExperimentConfig {
  SimConfig sim;
  Stimulus stimulus;
  std::int64_t n_samples = 0;  // 0: nfft * n_avg
  AnalysisConfig analysis;
  SweepConfig sweep;
  HigherOrderConfig higher_order;
  NtfConfig ntf;
  CompareConfig compare;

  std::int64_t samples() const {
    return n_samples > 0 ? n_samples : static_cast<std::int64_t>(analysis.nfft * analysis.n_avg);
  }
};

/// Default stimulus -36 dBV at 1 kHz, default sweeps as used by the
/// reproduction recipes.
ExperimentConfig default_experiment();

/// Throws ConfigError on malformed JSON, wrong schema, unknown keys, bad
/// types or invalid values.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string to_json_text(const ExperimentConfig& cfg);

/// 16 hex digits of FNV-1a over the canonical JSON form.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace vcoadc
