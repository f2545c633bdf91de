#pragma once
// Averaged periodograms and the audio metrics computed from them.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vcoadc/modulator.hpp"

namespace vcoadc {

enum class Window { hann, rect };
enum class PsdUnit { lsb2_per_hz, fs2_per_hz };

std::string to_string(Window w);
Window parse_window(const std::string& s);

/// One-sided PSD. psd[k] * bin_hz() summed over all bins equals the mean
/// square of the (detrended, window-power corrected) input.
struct SpectrumRecord {
  std::vector<double> freq_hz;
  std::vector<double> psd;  // linear, unit^2 / Hz
  std::size_t nfft = 0;
  std::size_t n_avg = 0;
  Window window = Window::hann;
  PsdUnit unit = PsdUnit::lsb2_per_hz;
  double fs_hz = 0.0;
  double enbw_bins = 1.0;  // equivalent noise bandwidth of the window, bins

  double bin_hz() const { return fs_hz / static_cast<double>(nfft); }
  std::vector<double> psd_db() const;  // clamped at -300 dB
};

struct PeriodogramOptions {
  Window window = Window::hann;
  bool detrend = true;       // subtract each segment's mean
  double full_scale = 0.0;   // > 0: normalise to a full-scale sine of this peak
};

/// Mean of n_avg non-overlapping windowed segments of length nfft taken from
/// the start of y. Throws ConfigError when y is too short or nfft is not a
/// power of two.
SpectrumRecord averaged_periodogram(std::span<const double> y, double fs_hz, std::size_t nfft, std::size_t n_avg,
                                    const PeriodogramOptions& opt = {});
SpectrumRecord averaged_periodogram(std::span<const std::int32_t> y, double fs_hz, std::size_t nfft,
                                    std::size_t n_avg, const PeriodogramOptions& opt = {});

/// Nearest bin-centred frequency, so a tone falls on a single FFT bin.
double coherent_frequency(double f_hz, double fs_hz, std::size_t nfft);
/// Alias of f in [0, fs/2].
double fold_frequency(double f_hz, double fs_hz);

/// A-weighting gain in dB, 0 dB at 1 kHz. f must be positive.
double a_weight_db(double f_hz);

enum class Weighting { flat, a };

struct MetricOptions {
  double band_lo_hz = 20.0;
  double band_hi_hz = 20000.0;
  Weighting weighting = Weighting::a;
  int skirt_bins = 1;    // bins either side of a tone counted as that tone (Hann, coherent tone)
  int n_harmonics = 10;  // harmonics 2 .. n_harmonics + 1
  int dc_bins = 2;       // bins 0 .. dc_bins - 1 hold the window's DC lobe and are ignored
};

struct ToneMetrics {
  double signal_hz = 0.0;
  double signal_power = 0.0;     // weighted, unit^2
  double noise_power = 0.0;      // weighted in-band; harmonic bins take the neighbouring noise density
  double distortion_power = 0.0; // weighted in-band harmonics
  double sndr_db = 0.0;
  double snr_db = 0.0;
  double thd_pct = 0.0;          // unweighted, all harmonics below Nyquist after folding
  bool below_floor = false;      // signal not above the in-band noise
};

ToneMetrics analyze_tone(const SpectrumRecord& spec, double f_sig_hz, const MetricOptions& opt = {});
double sndr_db(const SpectrumRecord& spec, double f_sig_hz, Weighting w);
double thd_pct(const SpectrumRecord& spec, double f_sig_hz, int n_harmonics);
/// Power of the tone at f (skirt included), unweighted.
double tone_power(const SpectrumRecord& spec, double f_hz, int skirt_bins = 3);
/// Weighted power of all bins in [lo, hi].
double band_power(const SpectrumRecord& spec, double lo_hz, double hi_hz, Weighting w);

/// Least-squares slope of 10 log10(PSD) against log10(f) over bins in
/// [f_lo, f_hi]. Throws ConfigError for fewer than 10 bins.
double slope_fit_db_per_decade(const SpectrumRecord& spec, double f_lo_hz, double f_hi_hz);

struct TransferEstimate {
  std::vector<double> freq_hz;
  std::vector<double> mag_db;
  std::vector<double> coherence;
};

/// |S_xy / S_xx| from averaged Hann-windowed cross spectra, each bin
/// smoothed over +-smooth_bins neighbours.
TransferEstimate estimate_transfer(std::span<const double> x, std::span<const double> y, double fs_hz,
                                   std::size_t nfft, std::size_t n_avg, int smooth_bins = 0);

// ---------------------------------------------------------------------------
// Amplitude sweeps

struct SweepOptions {
  std::size_t nfft = 16384;
  std::size_t n_avg = 8;
  unsigned jobs = 1;
  MetricOptions metrics;
};

struct SweepPoint {
  double level_dbv = 0.0;
  double snr_dba = 0.0;
  double sndr_dba = 0.0;
  double thd_pct = 0.0;
  bool locked = true;
};

/// One simulation per level with a coherent tone near f_sig.
std::vector<SweepPoint> amplitude_sweep(const SimConfig& cfg, std::span<const double> levels_dbv, double f_sig_hz,
                                        const SweepOptions& opt = {});

/// Lowest level at or above the peak-SNDR point whose THD reaches
/// threshold_pct, interpolated in log THD between the bracketing points.
/// nullopt if never reached.
std::optional<double> aop_dbv(std::span<const SweepPoint> points, double threshold_pct = 5.0);
/// Level where SNR extrapolates to 0 dB, from a least-squares line through
/// the lowest n_points levels.
double snr_zero_crossing_dbv(std::span<const SweepPoint> points, std::size_t n_points = 3);

}  // namespace vcoadc
