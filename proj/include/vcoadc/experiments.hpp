#pragma once
// Named reproduction experiments and the analysis pipelines behind them.
// The cmd_* entry points write their outputs into a fresh directory that is
// renamed into place only when every file has been written.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vcoadc/config.hpp"
#include "vcoadc/modulator.hpp"
#include "vcoadc/spectral.hpp"

namespace vcoadc {

struct RunManifest {
  std::string experiment;  // run | sweep-amp | sweep-freq | ntf | stf | compare | higher-order
  std::filesystem::path config_path;  // empty: built-in defaults
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;
  unsigned jobs = 1;
};

/// Exit status: 0 ok, 1 run flagged unstable or unlocked (outputs written),
/// 2 configuration or I/O error (nothing written). Diagnostics go to err.
int run_experiment(const RunManifest& manifest, std::ostream& err);

const std::vector<std::string>& experiment_names();

// ---------------------------------------------------------------------------
// Pipelines, usable without the file plumbing.

/// Tone frequencies moved onto FFT bins when analysis.coherent is set.
ExperimentConfig with_coherent_stimulus(const ExperimentConfig& cfg);

struct RunResult {
  ModulatorTrace trace;
  SpectrumRecord spectrum;
  std::optional<ToneMetrics> tone;  // first stimulus tone, if any
  double slope_db_per_dec = 0.0;
  double inband_power_dba = 0.0;      // A-weighted in-band power, dB re 1 LSB^2
  LockReport lock;
};

RunResult run_proposed(const ExperimentConfig& cfg);
RunResult run_higher_order(const ExperimentConfig& cfg);

struct BandSpectrum {
  std::vector<double> center_hz;
  std::vector<double> power_db;
};

/// Power in log-spaced bands between lo and hi, merging bands until each
/// holds at least min_bins bins.
BandSpectrum band_spectrum(const SpectrumRecord& spec, double lo_hz, double hi_hz, int bands_per_decade,
                           int min_bins = 8);

struct CompareResult {
  SpectrumRecord reference;
  SpectrumRecord nested;
  BandSpectrum reference_bands;
  BandSpectrum nested_bands;
  double max_band_delta_db = 0.0;
  std::int64_t sample_mismatches = 0;
  std::int64_t multi_wraps = 0;
};

/// Reference loop (zero initial state) against the nested form with the
/// configured initial state, on the same input. Throws ConfigError when the
/// two configurations disagree on fs.
CompareResult compare_architectures(const ExperimentConfig& cfg, const SimConfig& reference_sim);

struct StfPoint {
  double freq_hz = 0.0;
  double gain_db = 0.0;  // output amplitude per volt of differential input
  double h3_dbc = 0.0;
  bool locked = true;
};

std::vector<StfPoint> frequency_sweep(const ExperimentConfig& cfg, unsigned jobs);

/// Noise-injection NTF estimate of the proposed loop (single-ended, silent
/// input, integer sequence added to the sampled count).
TransferEstimate measure_ntf_proposed(SimConfig sim, int amplitude, std::size_t nfft, std::size_t n_avg,
                                      int smooth_bins);
/// Same for the reference CT loop.
TransferEstimate measure_ntf_reference(const SimConfig& sim, int amplitude, std::size_t nfft, std::size_t n_avg,
                                       int smooth_bins);

}  // namespace vcoadc
