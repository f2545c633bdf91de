#include "vcoadc/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numbers>

#include "vcoadc/kernels.hpp"

namespace vcoadc {

std::string to_string(Window w) { return w == Window::hann ? "hann" : "rect"; }

Window parse_window(const std::string& s) {
  if (s == "hann") return Window::hann;
  if (s == "rect") return Window::rect;
  throw ConfigError("unknown window '" + s + "'");
}

std::vector<double> SpectrumRecord::psd_db() const {
  std::vector<double> out(psd.size());
  for (std::size_t i = 0; i < psd.size(); ++i) out[i] = psd[i] > 0.0 ? std::max(-300.0, 10.0 * std::log10(psd[i])) : -300.0;
  return out;
}

namespace {

struct FftwBuffer {
  explicit FftwBuffer(std::size_t n) : in(fftw_alloc_real(n)), out(fftw_alloc_complex(n / 2 + 1)) {}
  ~FftwBuffer() {
    fftw_free(in);
    fftw_free(out);
  }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  double* in;
  fftw_complex* out;
};

// Planning is not thread-safe in FFTW; execution on fresh arrays is.
fftw_plan plan_for(std::size_t nfft) {
  static std::mutex mu;
  static std::map<std::size_t, fftw_plan> plans;
  std::lock_guard lock(mu);
  auto it = plans.find(nfft);
  if (it != plans.end()) return it->second;
  FftwBuffer tmp(nfft);
  fftw_plan p = fftw_plan_dft_r2c_1d(static_cast<int>(nfft), tmp.in, tmp.out, FFTW_ESTIMATE);
  plans.emplace(nfft, p);
  return p;
}

std::vector<double> make_window(Window w, std::size_t n) {
  std::vector<double> out(n, 1.0);
  if (w == Window::hann)
    for (std::size_t i = 0; i < n; ++i)
      out[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return out;
}

void check_fft_args(std::size_t len, std::size_t nfft, std::size_t n_avg) {
  if (nfft < 16 || (nfft & (nfft - 1)) != 0) throw ConfigError("nfft must be a power of two >= 16");
  if (n_avg == 0) throw ConfigError("n_avg must be >= 1");
  if (len < nfft * n_avg)
    throw ConfigError("need " + std::to_string(nfft * n_avg) + " samples for the periodogram, have " +
                      std::to_string(len));
}

double weight(double f, Weighting w) {
  if (w == Weighting::flat) return 1.0;
  return std::pow(10.0, a_weight_db(f) / 10.0);
}

}  // namespace

SpectrumRecord averaged_periodogram(std::span<const double> y, double fs_hz, std::size_t nfft, std::size_t n_avg,
                                    const PeriodogramOptions& opt) {
  check_fft_args(y.size(), nfft, n_avg);
  if (!(fs_hz > 0.0)) throw ConfigError("fs must be positive");
  const auto& kt = kernels::active();
  const std::vector<double> win = make_window(opt.window, nfft);
  const double w_sum = kt.sum(win.data(), nfft);
  const double w_pow = kt.dot(win.data(), win.data(), nfft);
  const std::size_t n_bins = nfft / 2 + 1;

  FftwBuffer buf(nfft);
  const fftw_plan plan = plan_for(nfft);
  std::vector<double> acc(n_bins, 0.0);
  for (std::size_t s = 0; s < n_avg; ++s) {
    const double* seg = y.data() + s * nfft;
    const double mean = opt.detrend ? kt.sum(seg, nfft) / static_cast<double>(nfft) : 0.0;
    kt.window_detrend(seg, win.data(), mean, buf.in, nfft);
    fftw_execute_dft_r2c(plan, buf.in, buf.out);
    kt.accumulate_power(reinterpret_cast<const double*>(buf.out), acc.data(), n_bins);
  }

  SpectrumRecord r;
  r.nfft = nfft;
  r.n_avg = n_avg;
  r.window = opt.window;
  r.fs_hz = fs_hz;
  r.enbw_bins = static_cast<double>(nfft) * w_pow / (w_sum * w_sum);
  r.unit = opt.full_scale > 0.0 ? PsdUnit::fs2_per_hz : PsdUnit::lsb2_per_hz;
  const double fs_norm = opt.full_scale > 0.0 ? 0.5 * opt.full_scale * opt.full_scale : 1.0;
  const double scale = 1.0 / (static_cast<double>(n_avg) * fs_hz * w_pow * fs_norm);
  r.freq_hz.resize(n_bins);
  r.psd.resize(n_bins);
  for (std::size_t k = 0; k < n_bins; ++k) {
    r.freq_hz[k] = static_cast<double>(k) * fs_hz / static_cast<double>(nfft);
    const double one_sided = (k == 0 || k == n_bins - 1) ? 1.0 : 2.0;
    r.psd[k] = one_sided * acc[k] * scale;
  }
  return r;
}

SpectrumRecord averaged_periodogram(std::span<const std::int32_t> y, double fs_hz, std::size_t nfft,
                                    std::size_t n_avg, const PeriodogramOptions& opt) {
  check_fft_args(y.size(), nfft, n_avg);
  std::vector<double> d(nfft * n_avg);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = y[i];
  return averaged_periodogram(std::span<const double>(d), fs_hz, nfft, n_avg, opt);
}

double coherent_frequency(double f_hz, double fs_hz, std::size_t nfft) {
  const double bin = fs_hz / static_cast<double>(nfft);
  return std::max(1.0, std::round(f_hz / bin)) * bin;
}

double fold_frequency(double f_hz, double fs_hz) {
  double f = std::fmod(std::abs(f_hz), fs_hz);
  if (f > 0.5 * fs_hz) f = fs_hz - f;
  return f;
}

double a_weight_db(double f_hz) {
  if (!(f_hz > 0.0)) throw ConfigError("a_weight_db: f must be positive");
  auto ra = [](double f) {
    const double f2 = f * f;
    const double c1 = 20.598997 * 20.598997, c2 = 107.65265 * 107.65265, c3 = 737.86223 * 737.86223,
                 c4 = 12194.217 * 12194.217;
    return c4 * f2 * f2 / ((f2 + c1) * std::sqrt((f2 + c2) * (f2 + c3)) * (f2 + c4));
  };
  return 20.0 * std::log10(ra(f_hz) / ra(1000.0));
}

ToneMetrics analyze_tone(const SpectrumRecord& spec, double f_sig_hz, const MetricOptions& opt) {
  if (spec.psd.empty()) throw ConfigError("empty spectrum");
  const double df = spec.bin_hz();
  const auto n_bins = static_cast<long>(spec.psd.size());
  const long k0 = std::lround(f_sig_hz / df);
  if (k0 < 1 || k0 >= n_bins) throw ConfigError("signal frequency outside the spectrum");
  const long s = opt.skirt_bins;

  std::vector<std::uint8_t> role(spec.psd.size(), 0);  // 1 signal, 2 harmonic, 3 dc
  for (long k = 0; k < std::min<long>(n_bins, opt.dc_bins); ++k) role[k] = 3;
  for (long k = std::max(1L, k0 - s); k <= std::min(n_bins - 1, k0 + s); ++k) role[k] = 1;
  for (int h = 2; h <= opt.n_harmonics + 1; ++h) {
    const long kh = std::lround(fold_frequency(h * f_sig_hz, spec.fs_hz) / df);
    for (long k = std::max(1L, kh - s); k <= std::min(n_bins - 1, kh + s); ++k)
      if (role[k] == 0) role[k] = 2;
  }

  ToneMetrics m;
  m.signal_hz = static_cast<double>(k0) * df;
  double sig_flat = 0.0, harm_flat = 0.0;
  double noise_counted = 0.0, noise_filled = 0.0, w_counted = 0.0;
  auto in_band = [&](long k) { return spec.freq_hz[k] >= opt.band_lo_hz && spec.freq_hz[k] <= opt.band_hi_hz; };
  // Noise density under a harmonic skirt: mean of the nearest plain noise
  // bins on either side.
  auto neighbour_density = [&](long k) {
    double sum = 0.0;
    int n = 0;
    for (long j = k - 1; j >= 1 && in_band(j); --j)
      if (role[j] == 0) {
        sum += spec.psd[j];
        ++n;
        break;
      }
    for (long j = k + 1; j < n_bins && in_band(j); ++j)
      if (role[j] == 0) {
        sum += spec.psd[j];
        ++n;
        break;
      }
    return n > 0 ? sum / n : 0.0;
  };
  for (long k = 1; k < n_bins; ++k) {
    const double f = spec.freq_hz[k];
    const double p = spec.psd[k] * df;
    if (role[k] == 1) sig_flat += p;
    if (role[k] == 2) harm_flat += p;
    if (!in_band(k) || role[k] == 3) continue;
    const double wt = weight(f, opt.weighting);
    if (role[k] == 1) {
      m.signal_power += p * wt;
    } else if (role[k] == 2) {
      m.distortion_power += p * wt;
      noise_filled += neighbour_density(k) * df * wt;
    } else {
      noise_counted += p * wt;
      w_counted += wt;
    }
  }
  m.noise_power = noise_counted + noise_filled;
  const double nd = noise_counted + m.distortion_power;
  auto ratio_db = [](double a, double b) {
    if (!(b > 0.0)) return 300.0;
    if (!(a > 0.0)) return -300.0;
    return 10.0 * std::log10(a / b);
  };
  m.sndr_db = ratio_db(m.signal_power, nd);
  m.snr_db = ratio_db(m.signal_power, m.noise_power);
  m.thd_pct = sig_flat > 0.0 ? 100.0 * std::sqrt(harm_flat / sig_flat) : 0.0;
  const double skirt_noise = w_counted > 0.0 ? noise_counted / w_counted * static_cast<double>(2 * s + 1) : 0.0;
  m.below_floor = m.signal_power <= 2.0 * skirt_noise;
  return m;
}

double sndr_db(const SpectrumRecord& spec, double f_sig_hz, Weighting w) {
  MetricOptions opt;
  opt.weighting = w;
  return analyze_tone(spec, f_sig_hz, opt).sndr_db;
}

double thd_pct(const SpectrumRecord& spec, double f_sig_hz, int n_harmonics) {
  MetricOptions opt;
  opt.n_harmonics = n_harmonics;
  return analyze_tone(spec, f_sig_hz, opt).thd_pct;
}

double tone_power(const SpectrumRecord& spec, double f_hz, int skirt_bins) {
  const double df = spec.bin_hz();
  const auto n_bins = static_cast<long>(spec.psd.size());
  const long k0 = std::lround(f_hz / df);
  double p = 0.0;
  for (long k = std::max(0L, k0 - skirt_bins); k <= std::min(n_bins - 1, k0 + skirt_bins); ++k) p += spec.psd[k] * df;
  return p;
}

double band_power(const SpectrumRecord& spec, double lo_hz, double hi_hz, Weighting w) {
  double p = 0.0;
  for (std::size_t k = 1; k < spec.psd.size(); ++k) {
    const double f = spec.freq_hz[k];
    if (f < lo_hz || f > hi_hz) continue;
    p += spec.psd[k] * spec.bin_hz() * weight(f, w);
  }
  return p;
}

double slope_fit_db_per_decade(const SpectrumRecord& spec, double f_lo_hz, double f_hi_hz) {
  if (!(f_lo_hz > 0.0 && f_lo_hz < f_hi_hz)) throw ConfigError("slope fit needs 0 < f_lo < f_hi");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  for (std::size_t k = 1; k < spec.psd.size(); ++k) {
    const double f = spec.freq_hz[k];
    if (f < f_lo_hz || f > f_hi_hz || !(spec.psd[k] > 0.0)) continue;
    const double x = std::log10(f);
    const double y = 10.0 * std::log10(spec.psd[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 10) throw ConfigError("slope fit needs at least 10 bins in range, have " + std::to_string(n));
  const double dn = static_cast<double>(n);
  return (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
}

TransferEstimate estimate_transfer(std::span<const double> x, std::span<const double> y, double fs_hz,
                                   std::size_t nfft, std::size_t n_avg, int smooth_bins) {
  check_fft_args(std::min(x.size(), y.size()), nfft, n_avg);
  const auto& kt = kernels::active();
  const std::vector<double> win = make_window(Window::hann, nfft);
  const std::size_t n_bins = nfft / 2 + 1;
  FftwBuffer bx(nfft), by(nfft);
  const fftw_plan plan = plan_for(nfft);
  std::vector<double> sxx(n_bins, 0.0), syy(n_bins, 0.0);
  std::vector<std::complex<double>> sxy(n_bins, 0.0);
  for (std::size_t s = 0; s < n_avg; ++s) {
    const double* xs = x.data() + s * nfft;
    const double* ys = y.data() + s * nfft;
    kt.window_detrend(xs, win.data(), kt.sum(xs, nfft) / static_cast<double>(nfft), bx.in, nfft);
    kt.window_detrend(ys, win.data(), kt.sum(ys, nfft) / static_cast<double>(nfft), by.in, nfft);
    fftw_execute_dft_r2c(plan, bx.in, bx.out);
    fftw_execute_dft_r2c(plan, by.in, by.out);
    kt.accumulate_power(reinterpret_cast<const double*>(bx.out), sxx.data(), n_bins);
    kt.accumulate_power(reinterpret_cast<const double*>(by.out), syy.data(), n_bins);
    for (std::size_t k = 0; k < n_bins; ++k) {
      const std::complex<double> X(bx.out[k][0], bx.out[k][1]);
      const std::complex<double> Y(by.out[k][0], by.out[k][1]);
      sxy[k] += std::conj(X) * Y;
    }
  }
  TransferEstimate r;
  const auto nb = static_cast<long>(n_bins);
  for (long k = 1; k < nb - 1; ++k) {
    double a = 0.0, b = 0.0;
    std::complex<double> c = 0.0;
    for (long j = std::max(1L, k - smooth_bins); j <= std::min(nb - 2, k + smooth_bins); ++j) {
      a += sxx[j];
      b += syy[j];
      c += sxy[j];
    }
    r.freq_hz.push_back(static_cast<double>(k) * fs_hz / static_cast<double>(nfft));
    const double h = a > 0.0 ? std::abs(c) / a : 0.0;
    r.mag_db.push_back(h > 0.0 ? 20.0 * std::log10(h) : -300.0);
    r.coherence.push_back(a > 0.0 && b > 0.0 ? std::norm(c) / (a * b) : 0.0);
  }
  return r;
}

// ---------------------------------------------------------------------------

std::vector<SweepPoint> amplitude_sweep(const SimConfig& cfg, std::span<const double> levels_dbv, double f_sig_hz,
                                        const SweepOptions& opt) {
  for (std::size_t i = 1; i < levels_dbv.size(); ++i)
    if (!(levels_dbv[i] > levels_dbv[i - 1])) throw ConfigError("sweep levels must be ascending");
  const double f = coherent_frequency(f_sig_hz, cfg.fs_hz, opt.nfft);
  const auto n = static_cast<std::int64_t>(opt.nfft * opt.n_avg);
  std::vector<std::function<ModulatorTrace()>> jobs;
  for (double level : levels_dbv) {
    jobs.push_back([&cfg, level, f, n] {
      return simulate_proposed(cfg, input_from_stimulus(Stimulus::tone(level, f), cfg.fs_hz * cfg.oversampling), n);
    });
  }
  std::vector<SweepPoint> out;
  // Traces are large; analyse in batches of `jobs` to bound memory.
  const std::size_t batch = std::max<std::size_t>(1, opt.jobs);
  for (std::size_t start = 0; start < jobs.size(); start += batch) {
    const std::size_t stop = std::min(jobs.size(), start + batch);
    std::vector<std::function<ModulatorTrace()>> part(jobs.begin() + static_cast<long>(start),
                                                      jobs.begin() + static_cast<long>(stop));
    const std::vector<ModulatorTrace> traces = run_parallel(part, opt.jobs);
    for (std::size_t i = 0; i < traces.size(); ++i) {
      const SpectrumRecord spec = averaged_periodogram(std::span<const std::int32_t>(traces[i].dout), cfg.fs_hz,
                                                       opt.nfft, opt.n_avg);
      const ToneMetrics m = analyze_tone(spec, f, opt.metrics);
      out.push_back({levels_dbv[start + i], m.snr_db, m.sndr_db, m.thd_pct, lock_check(traces[i]).locked});
    }
  }
  return out;
}

std::optional<double> aop_dbv(std::span<const SweepPoint> points, double threshold_pct) {
  std::vector<SweepPoint> p(points.begin(), points.end());
  std::sort(p.begin(), p.end(), [](const SweepPoint& a, const SweepPoint& b) { return a.level_dbv < b.level_dbv; });
  if (p.empty()) return std::nullopt;
  // Search upward from the best SNDR point; THD below it is noise-dominated.
  std::size_t i0 = 0;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i].sndr_dba > p[i0].sndr_dba) i0 = i;
  for (std::size_t i = i0; i < p.size(); ++i) {
    if (p[i].thd_pct < threshold_pct) continue;
    if (i == i0) return p[i].level_dbv;
    const double a = std::log10(std::max(p[i - 1].thd_pct, 1e-9));
    const double b = std::log10(p[i].thd_pct);
    const double t = std::log10(threshold_pct);
    if (!(b > a)) return p[i].level_dbv;
    return p[i - 1].level_dbv + (t - a) / (b - a) * (p[i].level_dbv - p[i - 1].level_dbv);
  }
  return std::nullopt;
}

double snr_zero_crossing_dbv(std::span<const SweepPoint> points, std::size_t n_points) {
  if (points.size() < n_points || n_points < 2) throw ConfigError("not enough sweep points to extrapolate SNR");
  std::vector<SweepPoint> p(points.begin(), points.end());
  std::sort(p.begin(), p.end(), [](const SweepPoint& a, const SweepPoint& b) { return a.level_dbv < b.level_dbv; });
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n_points; ++i) {
    sx += p[i].level_dbv;
    sy += p[i].snr_dba;
    sxx += p[i].level_dbv * p[i].level_dbv;
    sxy += p[i].level_dbv * p[i].snr_dba;
  }
  const double dn = static_cast<double>(n_points);
  const double slope = (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
  if (!(slope > 0.0)) throw std::runtime_error("SNR does not rise with level in the lowest sweep points");
  const double icept = (sy - slope * sx) / dn;
  return -icept / slope;
}

}  // namespace vcoadc
