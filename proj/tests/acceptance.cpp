// Acceptance run: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "vcoadc/config.hpp"
#include "vcoadc/digital_logic.hpp"
#include "vcoadc/experiments.hpp"
#include "vcoadc/linear_model.hpp"

using namespace vcoadc;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  if (!ok) ++failures;
  std::printf("criterion %2d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Square wave of tap k, delay order: high for states s - k mod 2M in [0, M).
TapVector ring_taps(int s, unsigned m) {
  TapVector t;
  t.taps = m;
  for (unsigned k = 0; k < m; ++k) {
    const int d = ((s - static_cast<int>(k)) % static_cast<int>(2 * m) + static_cast<int>(2 * m)) % static_cast<int>(2 * m);
    t.set(k, d < static_cast<int>(m));
  }
  return t;
}

// XOR equations of the encoder: bit i < B-1 is the parity of taps k with
// k mod 2^(i+1) == 2^i; the MSB is tap M/2 xor tap 0.
std::uint32_t xor_equations(const TapVector& t, unsigned bits) {
  const unsigned m = 1u << bits;
  std::uint32_t g = 0;
  for (unsigned i = 0; i + 1 < bits; ++i) {
    unsigned par = 0;
    for (unsigned k = 0; k < m; ++k)
      if (k % (2u << i) == (1u << i)) par ^= t[k] ? 1u : 0u;
    g |= par << i;
  }
  g |= ((t[m / 2] ? 1u : 0u) ^ (t[0] ? 1u : 0u)) << (bits - 1);
  return g;
}

int circular_distance(std::int64_t a, std::int64_t b, std::int64_t m) {
  const std::int64_t d = ((a - b) % m + m) % m;
  return static_cast<int>(std::min(d, m - d));
}

// 1. second-order shaping slope
void noise_shaping() {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig cfg = default_experiment();
  const RunResult r = run_proposed(cfg);
  const double secs = seconds_since(t0);
  const double hi_band = slope_fit_db_per_decade(r.spectrum, 100e3, 1e6);
  const bool ok = std::abs(r.slope_db_per_dec - 40.0) <= 5.0 && secs < 120.0 && r.lock.locked;
  report(1, ok,
         fmt("PSD slope %.2f dB/dec over [%.0f, %.0f] Hz (target 40 +/- 5); [100k, 1M]: %.2f; %zux%zu FFT, %.1f s",
             r.slope_db_per_dec, cfg.analysis.slope_lo_hz, cfg.analysis.slope_hi_hz, hi_band, cfg.analysis.n_avg,
             cfg.analysis.nfft, secs));
}

// 2. reference loop vs nested modulo form
void equivalence() {
  ExperimentConfig same = default_experiment();
  const CompareResult exact = compare_architectures(same, same.sim);
  ExperimentConfig shifted = default_experiment();
  shifted.compare.x1_init = 0.37;
  shifted.compare.x2_init = 0.61;
  shifted.compare.modulo_bits = shifted.sim.word_bits;
  const CompareResult mod = compare_architectures(shifted, shifted.sim);
  const bool ok = exact.sample_mismatches == 0 && mod.max_band_delta_db <= 1.0 && mod.multi_wraps == 0;
  report(2, ok,
         fmt("identical state: %lld mismatching samples of %lld; other state + %u-bit modulo: max band delta %.3f dB "
             "(limit 1), %lld multi-wraps",
             static_cast<long long>(exact.sample_mismatches), static_cast<long long>(same.samples()),
             shifted.compare.modulo_bits, mod.max_band_delta_db, static_cast<long long>(mod.multi_wraps)));
}

// 3. NTF: composed model vs closed form, and measured
void ntf_identity() {
  const SimConfig sim = default_config();
  const double k = sim.k_dco_eff();
  const Rational a = proposed_ntf_composed(k, sim.fs_hz).normalized();
  const Rational b = proposed_ntf_closed_form(k, sim.fs_hz).normalized();
  double coeff_err = a.num.size() == b.num.size() && a.den.size() == b.den.size() ? 0.0 : 1e9;
  if (coeff_err == 0.0) {
    for (std::size_t i = 0; i < a.num.size(); ++i) coeff_err = std::max(coeff_err, std::abs(a.num[i] - b.num[i]));
    for (std::size_t i = 0; i < a.den.size(); ++i) coeff_err = std::max(coeff_err, std::abs(a.den[i] - b.den[i]));
  }
  const ExperimentConfig cfg = default_experiment();
  const TransferEstimate est =
      measure_ntf_proposed(sim, cfg.ntf.injection_amplitude, cfg.analysis.nfft, cfg.analysis.n_avg,
                           static_cast<int>(cfg.ntf.smooth_bins));
  double worst = 0.0;
  for (std::size_t i = 0; i < est.freq_hz.size(); ++i) {
    const double f = est.freq_hz[i];
    if (f < sim.fs_hz / 1000.0 || f > sim.fs_hz / 4.0) continue;
    worst = std::max(worst, std::abs(est.mag_db[i] - ntf_magnitude(k, sim.fs_hz, f)));
  }
  report(3, coeff_err < 1e-12 && worst <= 1.0,
         fmt("max coefficient difference %.1e; measured vs closed form max %.3f dB over [fs/1000, fs/4] (limit 1)",
             coeff_err, worst));
}

// 4. dynamic range from an amplitude sweep
void dynamic_range() {
  ExperimentConfig cfg = default_experiment();
  cfg.sim.vco.noise.white_frac_density = 3.7e-9;  // dither ~10 dB below the quantization floor
  SweepOptions so;
  so.nfft = cfg.analysis.nfft;
  so.n_avg = cfg.sweep.n_avg;
  so.metrics = cfg.analysis.metrics;
  const auto pts = amplitude_sweep(cfg.sim, cfg.sweep.levels_dbv, cfg.sweep.tone_hz, so);
  const auto aop = aop_dbv(pts);
  const double x0 = snr_zero_crossing_dbv(pts);
  if (!aop) {
    report(4, false, "THD never reached 5%; no AOP");
    return;
  }
  const double dr = *aop - x0;
  const bool near_ref = std::abs(dr - 103.0) <= 3.0;
  report(4, dr >= 100.0,
         fmt("DR %.1f dB-A (AOP %.2f dBV, SNR = 0 at %.1f dBV; dither white_frac_density 3.7e-9); >= 100: %s; "
             "103 +/- 3 reference: %s (%+.1f dB, no circuit noise modelled)",
             dr, *aop, x0, dr >= 100.0 ? "yes" : "no", near_ref ? "matched" : "not matched", dr - 103.0));
}

// 5. sampler metastability
void metastability() {
  Sampler gray({1e-9, 2024, SamplerMode::per_word});
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::uint32_t> count(0, 63);
  std::uniform_real_distribution<double> when(-0.5e-9, 0.5e-9);
  int worst = 0;
  const int n_gray = 1000000;
  for (int i = 0; i < n_gray; ++i) {
    const std::uint32_t c = count(rng);
    const double te = when(rng);
    const auto r = gray.sample_edge(binary_to_gray(DigitalWord::binary(c, 6)),
                                    binary_to_gray(DigitalWord::binary((c + 1) % 64, 6)), te, 0.0);
    worst = std::max(worst, circular_distance(gray_to_binary(r.word).value(), te <= 0.0 ? (c + 1) % 64 : c, 64));
  }
  Sampler bin({1e-9, 7, SamplerMode::per_bit});
  int big = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::uint32_t c = count(rng);
    const auto r = bin.sample_edge(DigitalWord::binary(c, 6), DigitalWord::binary((c + 1) % 64, 6), 0.0, 0.0);
    if (circular_distance(r.word.value(), c, 64) > 1) ++big;
  }
  report(5, worst == 1 && big > 0,
         fmt("Gray per-word: max error %d LSB over %d events; binary per-bit: %d of 10000 events > 1 LSB", worst, n_gray,
             big));
}

// 6. Gray encoder
void gray_encoder() {
  bool ok = true;
  int eq_mismatch = 0, bad_steps = 0, bad_offsets = 0;
  for (unsigned bits : {3u, 4u, 5u}) {
    const unsigned m = 1u << bits;
    std::vector<std::uint32_t> seq;
    for (unsigned s = 0; s < 2 * m; ++s) {
      const TapVector t = ring_taps(static_cast<int>(s), m);
      const std::uint32_t g = gray_from_phases(t, bits).value();
      eq_mismatch += g != xor_equations(t, bits);
      seq.push_back(g);
    }
    for (unsigned s = 0; s < 2 * m; ++s) bad_steps += std::popcount(seq[s] ^ seq[(s + 1) % (2 * m)]) != 1;
    // reversed wiring counts up: decoded value minus state count is constant
    std::int64_t offset = -1;
    for (int s = 0; s < 4 * static_cast<int>(m); ++s) {
      const auto t = tap_waveforms_at_state(s, m, true, TapOrder::reversed);
      const std::int64_t dec = gray_to_binary(gray_from_phases(t, bits)).value();
      const std::int64_t off = ((dec - s) % m + m) % m;
      if (offset < 0) offset = off;
      bad_offsets += off != offset;
    }
  }
  // 4-bit case, first states: 1000, 1001
  ok = eq_mismatch == 0 && bad_steps == 0 && bad_offsets == 0 &&
       gray_from_phases(ring_taps(0, 16), 4).value() == 0b1000u && gray_from_phases(ring_taps(1, 16), 4).value() == 0b1001u;
  report(6, ok,
         fmt("B = 3, 4, 5 over all 2M ring states: %d equation mismatches, %d non-unit steps, %d offset changes",
             eq_mismatch, bad_steps, bad_offsets));
}

// 7. modulo subtractor
void modulo_feedback() {
  std::int64_t bad = 0, pairs = 0;
  for (unsigned bits : {4u, 6u}) {
    const std::int64_t m = std::int64_t{1} << bits;
    for (std::int64_t w = -2 * m; w < 2 * m; ++w)
      for (std::int64_t d = 0; d < m; ++d) {
        const std::int64_t x = w + d;
        const auto xr = static_cast<std::uint32_t>(((x % m) + m) % m);
        const auto wr = static_cast<std::uint32_t>(((w % m) + m) % m);
        bad += mod_subtract(DigitalWord::binary(xr, bits), DigitalWord::binary(wr, bits)).value() !=
               static_cast<std::uint32_t>(d);
        ++pairs;
      }
  }
  const std::uint32_t ex = mod_subtract(DigitalWord::binary(3, 4), DigitalWord::binary(14, 4)).value();
  report(7, bad == 0 && ex == 5,
         fmt("%lld of %lld non-wrapping pairs differ from unbounded subtraction (B = 4, 6); 3 - 14 mod 16 = %u",
             static_cast<long long>(bad), static_cast<long long>(pairs), ex));
}

// 8. signal transfer, DCO nonlinearity, injected stage-2 tone
void signal_transfer() {
  ExperimentConfig cfg = default_experiment();
  const auto lin = frequency_sweep(cfg, 1);
  double lo = 1e9, hi = -1e9;
  bool locked = true;
  for (const auto& p : lin) {
    locked = locked && p.locked;
    if (p.freq_hz > 20e3) continue;
    lo = std::min(lo, p.gain_db);
    hi = std::max(hi, p.gain_db);
  }
  ExperimentConfig nl = cfg;
  nl.sim.dco.poly_nl = {0.0, 1.0};
  const auto pts = frequency_sweep(nl, 1);
  std::vector<double> lx, h3;
  for (const auto& p : pts) {
    locked = locked && p.locked;
    lx.push_back(std::log10(p.freq_hz));
    h3.push_back(p.h3_dbc);
  }
  const double h3_slope = fit_slope(lx, h3);

  std::vector<double> ix, iy;
  for (double f0 : {1e3, 2e3, 5e3, 10e3, 20e3, 50e3, 100e3}) {
    SimConfig s = default_config();
    s.pseudo_differential = false;
    const std::size_t nfft = 16384;
    const double f = coherent_frequency(f0, s.fs_hz, nfft);
    s.injection.stage2_tone_lsb = 2.0;
    s.injection.stage2_tone_hz = f;
    const auto t = simulate_proposed(s, input_from_stimulus(Stimulus::silence(), s.fs_hz * s.oversampling), nfft * 4);
    const auto spec = averaged_periodogram(std::span<const std::int32_t>(t.dout), s.fs_hz, nfft, 4);
    locked = locked && lock_check(t).locked;
    ix.push_back(std::log10(f));
    iy.push_back(20 * std::log10(std::sqrt(2 * tone_power(spec, f, 1)) / 2.0));
  }
  const double inj_slope = fit_slope(ix, iy);
  const bool ok = hi - lo <= 0.5 && std::abs(h3_slope - 20.0) <= 3.0 && std::abs(inj_slope - 20.0) <= 2.0 && locked;
  report(8, ok,
         fmt("gain flatness 1-20 kHz %.3f dB (limit 0.5); H3 slope %.2f dB/dec (20 +/- 3); injected tone gain %.1f dB "
             "at 1 kHz, slope %.2f dB/dec (20 +/- 2)",
             hi - lo, h3_slope, iy.front(), inj_slope));
}

// 9. third-order cascade
void higher_order() {
  ExperimentConfig cfg = default_experiment();
  cfg.analysis.n_avg = 8;
  const RunResult r = run_higher_order(cfg);
  report(9, std::abs(r.slope_db_per_dec - 60.0) <= 8.0 && r.lock.locked,
         fmt("N = %u, pole %.2f: slope %.2f dB/dec over [%.0f, %.0f] Hz (target 60 +/- 8), SNDR %.1f dB-A",
             cfg.higher_order.order, cfg.higher_order.pole, r.slope_db_per_dec, cfg.analysis.slope_lo_hz,
             cfg.analysis.slope_hi_hz, r.tone ? r.tone->sndr_db : 0.0));
}

// 10. engine step and reproducibility
void numerical_hygiene() {
  ExperimentConfig cfg = default_experiment();
  cfg.analysis.n_avg = 8;
  const RunResult a = run_proposed(cfg);
  ExperimentConfig fine = cfg;
  fine.sim.oversampling = 1024;
  const RunResult b = run_proposed(fine);
  const double delta = std::abs(a.tone->sndr_db - b.tone->sndr_db);

  ExperimentConfig noisy = cfg;
  noisy.analysis.n_avg = 2;
  noisy.sim.vco.noise.white_frac_density = 1e-7;
  noisy.sim.dco.noise.white_frac_density = 1e-7;
  noisy.sim.vco.noise.flicker_corner_hz = 1e4;
  const RunResult r1 = run_proposed(noisy);
  const RunResult r2 = run_proposed(noisy);
  const bool same = r1.trace.dout == r2.trace.dout && r1.trace.p.w == r2.trace.p.w && r1.trace.n.w == r2.trace.n.w &&
                    r1.spectrum.psd == r2.spectrum.psd && to_json_text(noisy) == to_json_text(noisy);
  SweepOptions so;
  so.nfft = 4096;
  so.n_avg = 2;
  const std::vector<double> levels{-40.0, -20.0, -10.0};
  so.jobs = 1;
  const auto s1 = amplitude_sweep(noisy.sim, levels, 1000.0, so);
  so.jobs = 3;
  const auto s3 = amplitude_sweep(noisy.sim, levels, 1000.0, so);
  bool sweep_same = s1.size() == s3.size();
  for (std::size_t i = 0; sweep_same && i < s1.size(); ++i)
    sweep_same = s1[i].sndr_dba == s3[i].sndr_dba && s1[i].thd_pct == s3[i].thd_pct;
  report(10, delta < 0.5 && same && sweep_same,
         fmt("SNDR %.2f dB-A at K = 512, %.2f at K = 1024, delta %.2f dB (limit 0.5); repeated noisy run identical: %s; "
             "sweep with 1 vs 3 jobs identical: %s",
             a.tone->sndr_db, b.tone->sndr_db, delta, same ? "yes" : "no", sweep_same ? "yes" : "no"));
}

}  // namespace

int main() {
  noise_shaping();
  equivalence();
  ntf_identity();
  dynamic_range();
  metastability();
  gray_encoder();
  modulo_feedback();
  signal_transfer();
  higher_order();
  numerical_hygiene();
  std::printf("%d of 10 criteria failed\n", failures);
  return failures;
}
