#include "vcoadc/experiments.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <ostream>

#include "vcoadc/linear_model.hpp"

namespace vcoadc {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"run", "sweep-amp", "sweep-freq", "ntf", "stf", "compare", "higher-order"};
  return names;
}

ExperimentConfig with_coherent_stimulus(const ExperimentConfig& cfg) {
  ExperimentConfig out = cfg;
  if (cfg.analysis.coherent)
    for (auto& t : out.stimulus.tones) t.frequency_hz = coherent_frequency(t.frequency_hz, cfg.sim.fs_hz, cfg.analysis.nfft);
  return out;
}

namespace {

double engine_rate(const SimConfig& s) { return s.fs_hz * s.oversampling; }

double power_db(double p) { return p > 0.0 ? 10.0 * std::log10(p) : kDbFloor; }

RunResult analyse(const ExperimentConfig& cfg, ModulatorTrace trace) {
  RunResult r;
  PeriodogramOptions po;
  po.window = cfg.analysis.window;
  r.spectrum = averaged_periodogram(std::span<const std::int32_t>(trace.dout), cfg.sim.fs_hz, cfg.analysis.nfft,
                                    cfg.analysis.n_avg, po);
  if (!cfg.stimulus.tones.empty() &&
      (cfg.stimulus.kind == StimulusKind::tone || cfg.stimulus.kind == StimulusKind::multitone))
    r.tone = analyze_tone(r.spectrum, cfg.stimulus.tones.front().frequency_hz, cfg.analysis.metrics);
  r.slope_db_per_dec = slope_fit_db_per_decade(r.spectrum, cfg.analysis.slope_lo_hz, cfg.analysis.slope_hi_hz);
  r.inband_power_dba = power_db(band_power(r.spectrum, cfg.analysis.metrics.band_lo_hz,
                                         cfg.analysis.metrics.band_hi_hz, Weighting::a));
  r.lock = lock_check(trace);
  r.trace = std::move(trace);
  return r;
}

}  // namespace

RunResult run_proposed(const ExperimentConfig& in) {
  const ExperimentConfig cfg = with_coherent_stimulus(in);
  auto trace = simulate_proposed(cfg.sim, input_from_stimulus(cfg.stimulus, engine_rate(cfg.sim)), cfg.samples());
  return analyse(cfg, std::move(trace));
}

namespace {

SimConfig higher_order_sim(const ExperimentConfig& cfg, std::vector<double>& gains) {
  SimConfig sim = cfg.sim;
  sim.word_bits = cfg.higher_order.word_bits;
  sim.dac.n_bits = cfg.higher_order.word_bits;
  gains = cfg.higher_order.gains_hz_per_lsb;
  if (gains.empty()) gains = higher_order_gains(cfg.higher_order.order, sim.fs_hz, cfg.higher_order.pole);
  set_dco_gain(sim, gains.back());
  return sim;
}

}  // namespace

RunResult run_higher_order(const ExperimentConfig& in) {
  const ExperimentConfig cfg = with_coherent_stimulus(in);
  std::vector<double> gains;
  const SimConfig sim = higher_order_sim(cfg, gains);
  auto trace = simulate_higher_order(sim, cfg.higher_order.order, gains,
                                     input_from_stimulus(cfg.stimulus, engine_rate(sim)), cfg.samples());
  return analyse(cfg, std::move(trace));
}

BandSpectrum band_spectrum(const SpectrumRecord& spec, double lo_hz, double hi_hz, int bands_per_decade,
                           int min_bins) {
  if (!(lo_hz > 0.0 && lo_hz < hi_hz)) throw ConfigError("band_spectrum: empty range");
  BandSpectrum out;
  const double ratio = std::pow(10.0, 1.0 / bands_per_decade);
  double edge = lo_hz;
  double acc = 0.0, f_first = 0.0, f_last = 0.0;
  int count = 0;
  std::size_t k = 1;
  while (k < spec.psd.size() && spec.freq_hz[k] < lo_hz) ++k;
  while (edge < hi_hz) {
    const double next = std::min(edge * ratio, hi_hz);
    for (; k < spec.psd.size() && spec.freq_hz[k] < next; ++k) {
      if (count == 0) f_first = spec.freq_hz[k];
      f_last = spec.freq_hz[k];
      acc += spec.psd[k] * spec.bin_hz();
      ++count;
    }
    if (count >= min_bins || next >= hi_hz) {
      if (count > 0) {
        out.center_hz.push_back(std::sqrt(f_first * f_last));
        out.power_db.push_back(power_db(acc));
      }
      acc = 0.0;
      count = 0;
    }
    edge = next;
  }
  return out;
}

CompareResult compare_architectures(const ExperimentConfig& in, const SimConfig& reference_sim) {
  if (reference_sim.fs_hz != in.sim.fs_hz)
    throw ConfigError(fmt::format("compare: sampling rates differ ({} Hz vs {} Hz)", reference_sim.fs_hz, in.sim.fs_hz));
  if (reference_sim.oversampling != in.sim.oversampling)
    throw ConfigError("compare: engine oversampling differs between configurations");
  const ExperimentConfig cfg = with_coherent_stimulus(in);
  const std::int64_t n = cfg.samples();
  const InputFn input = input_from_stimulus(cfg.stimulus, engine_rate(cfg.sim));
  const IdealArchResult ref = simulate_reference_ctsdm(reference_sim, input, n);
  IdealArchOptions opt;
  opt.x1_init = cfg.compare.x1_init;
  opt.x2_init = cfg.compare.x2_init;
  opt.modulo_bits = cfg.compare.modulo_bits;
  const IdealArchResult nest = simulate_nested(cfg.sim, input, n, opt);

  CompareResult r;
  r.multi_wraps = nest.multi_wraps;
  for (std::size_t i = 0; i < ref.y.size(); ++i)
    if (ref.y[i] != nest.y[i]) ++r.sample_mismatches;
  const std::vector<double> a(ref.y.begin(), ref.y.end());
  const std::vector<double> b(nest.y.begin(), nest.y.end());
  PeriodogramOptions po;
  po.window = cfg.analysis.window;
  r.reference = averaged_periodogram(a, cfg.sim.fs_hz, cfg.analysis.nfft, cfg.analysis.n_avg, po);
  r.nested = averaged_periodogram(b, cfg.sim.fs_hz, cfg.analysis.nfft, cfg.analysis.n_avg, po);
  const double lo = cfg.analysis.metrics.band_lo_hz;
  const double hi = cfg.sim.fs_hz / 4.0;
  r.reference_bands = band_spectrum(r.reference, lo, hi, cfg.compare.bands_per_decade, cfg.compare.min_bins);
  r.nested_bands = band_spectrum(r.nested, lo, hi, cfg.compare.bands_per_decade, cfg.compare.min_bins);
  for (std::size_t i = 0; i < r.reference_bands.power_db.size(); ++i)
    r.max_band_delta_db =
        std::max(r.max_band_delta_db, std::abs(r.reference_bands.power_db[i] - r.nested_bands.power_db[i]));
  return r;
}

std::vector<StfPoint> frequency_sweep(const ExperimentConfig& cfg, unsigned jobs) {
  const std::size_t nfft = cfg.analysis.nfft;
  const auto n = static_cast<std::int64_t>(nfft * cfg.sweep.n_avg);
  std::vector<double> freqs;
  for (double f : cfg.sweep.frequencies_hz) freqs.push_back(coherent_frequency(f, cfg.sim.fs_hz, nfft));
  const double level = cfg.sweep.freq_sweep_level_dbv;
  std::vector<std::function<ModulatorTrace()>> work;
  for (double f : freqs)
    work.push_back([&cfg, f, level, n] {
      return simulate_proposed(cfg.sim, input_from_stimulus(Stimulus::tone(level, f), engine_rate(cfg.sim)), n);
    });
  const double in_peak = dbv_to_peak(level) * (cfg.sim.pseudo_differential ? 2.0 : 1.0);
  std::vector<StfPoint> out;
  const std::size_t batch = std::max(1u, jobs);
  for (std::size_t start = 0; start < work.size(); start += batch) {
    const std::size_t stop = std::min(work.size(), start + batch);
    std::vector<std::function<ModulatorTrace()>> part(work.begin() + static_cast<long>(start),
                                                      work.begin() + static_cast<long>(stop));
    const auto traces = run_parallel(part, jobs);
    for (std::size_t i = 0; i < traces.size(); ++i) {
      const double f = freqs[start + i];
      const SpectrumRecord spec = averaged_periodogram(std::span<const std::int32_t>(traces[i].dout), cfg.sim.fs_hz,
                                                       nfft, cfg.sweep.n_avg);
      const double p1 = tone_power(spec, f, cfg.analysis.metrics.skirt_bins);
      const double p3 = tone_power(spec, fold_frequency(3.0 * f, cfg.sim.fs_hz), cfg.analysis.metrics.skirt_bins);
      StfPoint pt;
      pt.freq_hz = f;
      pt.gain_db = 20.0 * std::log10(std::sqrt(2.0 * p1) / in_peak);
      pt.h3_dbc = power_db(p3) - power_db(p1);
      pt.locked = lock_check(traces[i]).locked;
      out.push_back(pt);
    }
  }
  return out;
}

TransferEstimate measure_ntf_proposed(SimConfig sim, int amplitude, std::size_t nfft, std::size_t n_avg,
                                      int smooth_bins) {
  sim.pseudo_differential = false;
  sim.injection.quantizer_prbs_amplitude = amplitude;
  const auto n = static_cast<std::int64_t>(nfft * n_avg);
  const ModulatorTrace t = simulate_proposed(sim, input_from_stimulus(Stimulus::silence(), engine_rate(sim)), n);
  const std::vector<double> x(t.p.injected.begin(), t.p.injected.end());
  const std::vector<double> y(t.dout.begin(), t.dout.end());
  return estimate_transfer(x, y, sim.fs_hz, nfft, n_avg, smooth_bins);
}

TransferEstimate measure_ntf_reference(const SimConfig& sim, int amplitude, std::size_t nfft, std::size_t n_avg,
                                       int smooth_bins) {
  IdealArchOptions opt;
  opt.quantizer_prbs_amplitude = amplitude;
  const auto n = static_cast<std::int64_t>(nfft * n_avg);
  const IdealArchResult r =
      simulate_reference_ctsdm(sim, input_from_stimulus(Stimulus::silence(), engine_rate(sim)), n, opt);
  const std::vector<double> x(r.injected.begin(), r.injected.end());
  const std::vector<double> y(r.y.begin(), r.y.end());
  return estimate_transfer(x, y, sim.fs_hz, nfft, n_avg, smooth_bins);
}

// ---------------------------------------------------------------------------
// File plumbing

namespace {

class OutputDir {
 public:
  explicit OutputDir(const fs::path& final_dir) : final_(final_dir), tmp_(final_dir.string() + ".partial") {
    fs::remove_all(tmp_);
    fs::create_directories(tmp_);
  }
  ~OutputDir() {
    if (committed_) return;
    std::error_code ec;
    fs::remove_all(tmp_, ec);
  }
  OutputDir(const OutputDir&) = delete;
  OutputDir& operator=(const OutputDir&) = delete;

  std::ofstream open(const std::string& name) const {
    std::ofstream f(tmp_ / name, std::ios::binary);
    if (!f) throw fs::filesystem_error("cannot create output file", tmp_ / name, std::make_error_code(std::errc::io_error));
    return f;
  }
  void commit() {
    if (fs::exists(final_)) fs::remove_all(final_);
    fs::rename(tmp_, final_);
    committed_ = true;
  }

 private:
  fs::path final_;
  fs::path tmp_;
  bool committed_ = false;
};

struct Context {
  const RunManifest& manifest;
  const ExperimentConfig& cfg;
  std::string hash;
  OutputDir& out;
  std::ostream& err;
};

std::string g(double v) { return fmt::format("{:.10g}", v); }

std::ofstream csv(const Context& c, const std::string& name, const std::string& header) {
  std::ofstream f = c.out.open(name);
  fmt::print(f, "# vcosim {} experiment={} config_hash={} seed={}\n", kToolVersion, c.manifest.experiment, c.hash,
             c.cfg.sim.seed);
  f << header << '\n';
  return f;
}

void write_json(const Context& c, const std::string& name, json j) {
  j["config_hash"] = c.hash;
  j["tool_version"] = kToolVersion;
  j["experiment"] = c.manifest.experiment;
  std::ofstream f = c.out.open(name);
  f << j.dump(2) << '\n';
}

void write_spectrum(const Context& c, const std::string& name, const SpectrumRecord& s) {
  std::ofstream f = csv(c, name, "freq_hz,psd_db");
  const std::vector<double> db = s.psd_db();
  for (std::size_t k = 0; k < db.size(); ++k) f << g(s.freq_hz[k]) << ',' << g(db[k]) << '\n';
}

void write_trace(const Context& c, const ModulatorTrace& t) {
  std::ofstream f = csv(c, "trace.csv", "n,dout,wp,wn");
  for (std::size_t i = 0; i < t.dout.size(); ++i)
    f << i << ',' << t.dout[i] << ',' << t.p.w[i] << ',' << (t.n.w.empty() ? 0u : t.n.w[i]) << '\n';
}

json lock_json(const LockReport& l, const ModulatorTrace& t) {
  json events = json::object();
  for (const Event& e : t.events) events[to_string(e.kind)] = events.value(to_string(e.kind), 0) + 1;
  return json{{"locked", l.locked},
              {"overload_count", l.overload_count},
              {"multi_wrap_count", l.multi_wrap_count},
              {"v1_saturation_dwell", l.v1_saturation_dwell},
              {"aperture_events", l.aperture_events},
              {"unstable", t.unstable},
              {"logged_events", events}};
}

json run_json(const RunResult& r) {
  json j{{"slope_db_per_dec", r.slope_db_per_dec}, {"inband_power_dba", r.inband_power_dba}, {"lock", lock_json(r.lock, r.trace)}};
  if (r.tone) {
    j["signal_hz"] = r.tone->signal_hz;
    j["sndr_dba"] = r.tone->sndr_db;
    j["snr_dba"] = r.tone->snr_db;
    j["thd_pct"] = r.tone->thd_pct;
  }
  return j;
}

int cmd_run(const Context& c) {
  const RunResult r = run_proposed(c.cfg);
  write_trace(c, r.trace);
  write_spectrum(c, "spectrum.csv", r.spectrum);
  write_json(c, "metrics.json", run_json(r));
  return r.lock.locked && !r.trace.unstable ? 0 : 1;
}

int cmd_higher_order(const Context& c) {
  const RunResult r = run_higher_order(c.cfg);
  std::vector<double> gains;
  higher_order_sim(c.cfg, gains);
  write_trace(c, r.trace);
  write_spectrum(c, "spectrum.csv", r.spectrum);
  json j = run_json(r);
  j["order"] = c.cfg.higher_order.order;
  j["gains_hz_per_lsb"] = gains;
  write_json(c, "metrics.json", j);
  return r.trace.unstable ? 1 : 0;
}

int cmd_sweep_amp(const Context& c) {
  SweepOptions so;
  so.nfft = c.cfg.analysis.nfft;
  so.n_avg = c.cfg.sweep.n_avg;
  so.jobs = c.manifest.jobs;
  so.metrics = c.cfg.analysis.metrics;
  const auto pts = amplitude_sweep(c.cfg.sim, c.cfg.sweep.levels_dbv, c.cfg.sweep.tone_hz, so);
  {
    std::ofstream f = csv(c, "sweep_amp.csv", "level_dbv,snr_dba,sndr_dba,thd_pct,locked");
    for (const auto& p : pts)
      f << g(p.level_dbv) << ',' << g(p.snr_dba) << ',' << g(p.sndr_dba) << ',' << g(p.thd_pct) << ','
        << (p.locked ? 1 : 0) << '\n';
  }
  json j;
  const auto aop = aop_dbv(pts);
  j["aop_dbv"] = aop ? json(*aop) : json(nullptr);
  double peak = -300.0;
  for (const auto& p : pts) peak = std::max(peak, p.sndr_dba);
  j["peak_sndr_dba"] = peak;
  if (pts.size() >= 3) {
    const double x0 = snr_zero_crossing_dbv(pts);
    j["snr_zero_dbv"] = x0;
    j["dr_db"] = aop ? json(*aop - x0) : json(nullptr);
  }
  write_json(c, "metrics.json", j);
  return 0;
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

int cmd_sweep_freq(const Context& c) {
  const auto pts = frequency_sweep(c.cfg, c.manifest.jobs);
  {
    std::ofstream f = csv(c, "stf.csv", "freq_hz,gain_db,h3_dbc");
    for (const auto& p : pts) f << g(p.freq_hz) << ',' << g(p.gain_db) << ',' << g(p.h3_dbc) << '\n';
  }
  json j;
  double lo = 1e300, hi = -1e300;
  std::vector<double> bx, by, hx, hy;
  bool locked = true;
  for (const auto& p : pts) {
    locked = locked && p.locked;
    if (p.freq_hz <= 20e3) {
      lo = std::min(lo, p.gain_db);
      hi = std::max(hi, p.gain_db);
      bx.push_back(p.freq_hz);
      by.push_back(p.gain_db);
    }
    hx.push_back(std::log10(p.freq_hz));
    hy.push_back(p.h3_dbc);
  }
  if (!bx.empty()) j["inband_flatness_db"] = hi - lo;
  if (bx.size() >= 2) {
    const double slope = fit_slope(bx, by);
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < bx.size(); ++i) {
      mx += bx[i];
      my += by[i];
    }
    j["dc_gain_extrapolated_db"] = my / bx.size() - slope * mx / bx.size();
  }
  j["stf_model_dc_db"] = stf_magnitude(c.cfg.sim.k_vco_eff(), c.cfg.sim.fs_hz, 0.0);
  if (hx.size() >= 2) j["h3_slope_db_per_dec"] = fit_slope(hx, hy);
  j["locked"] = locked;
  write_json(c, "metrics.json", j);
  return locked ? 0 : 1;
}

int cmd_ntf(const Context& c) {
  const SimConfig& s = c.cfg.sim;
  const double k = s.k_dco_eff();
  json j{{"k_dco_eff_hz_per_lsb", k}, {"pole", ntf_pole(k, s.fs_hz)}};
  if (const auto w = ntf_stability_warning(k, s.fs_hz)) {
    fmt::print(c.err, "warning: {}\n", *w);
    j["warning"] = *w;
  }
  if (c.cfg.ntf.measure) {
    const TransferEstimate est = measure_ntf_proposed(s, c.cfg.ntf.injection_amplitude, c.cfg.analysis.nfft,
                                                      c.cfg.analysis.n_avg, static_cast<int>(c.cfg.ntf.smooth_bins));
    std::ofstream f = csv(c, "ntf.csv", "freq_hz,ntf_db,measured_db");
    double worst = 0.0;
    for (std::size_t i = 0; i < est.freq_hz.size(); ++i) {
      const double model = ntf_magnitude(k, s.fs_hz, est.freq_hz[i]);
      f << g(est.freq_hz[i]) << ',' << g(model) << ',' << g(est.mag_db[i]) << '\n';
      if (est.freq_hz[i] >= s.fs_hz / 1000.0 && est.freq_hz[i] <= s.fs_hz / 4.0)
        worst = std::max(worst, std::abs(model - est.mag_db[i]));
    }
    j["max_measured_delta_db"] = worst;
  } else {
    std::ofstream f = csv(c, "ntf.csv", "freq_hz,ntf_db");
    const std::size_t n = c.cfg.ntf.points;
    const double f_lo = s.fs_hz * 1e-4, f_hi = s.fs_hz / 2.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double fr = f_lo * std::pow(f_hi / f_lo, static_cast<double>(i) / static_cast<double>(n - 1));
      f << g(fr) << ',' << g(ntf_magnitude(k, s.fs_hz, std::min(fr, f_hi))) << '\n';
    }
  }
  write_json(c, "metrics.json", j);
  return 0;
}

int cmd_stf(const Context& c) {
  const SimConfig& s = c.cfg.sim;
  std::ofstream f = csv(c, "stf_model.csv", "freq_hz,gain_db");
  const std::size_t n = c.cfg.ntf.points;
  const double f_lo = 10.0, f_hi = s.fs_hz / 2.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double fr = f_lo * std::pow(f_hi / f_lo, static_cast<double>(i) / static_cast<double>(n - 1));
    f << g(fr) << ',' << g(stf_magnitude(s.k_vco_eff(), s.fs_hz, fr)) << '\n';
  }
  f.close();
  write_json(c, "metrics.json",
             json{{"dc_gain_db", stf_magnitude(s.k_vco_eff(), s.fs_hz, 0.0)},
                  {"gain_20k_db", stf_magnitude(s.k_vco_eff(), s.fs_hz, 20e3)}});
  return 0;
}

int cmd_compare(const Context& c) {
  SimConfig ref_sim = c.cfg.sim;
  if (c.cfg.compare.reference_config) {
    fs::path p = *c.cfg.compare.reference_config;
    if (p.is_relative() && !c.manifest.config_path.empty()) p = c.manifest.config_path.parent_path() / p;
    ref_sim = load_config(p).sim;
  }
  const CompareResult r = compare_architectures(c.cfg, ref_sim);
  write_spectrum(c, "spectrum_reference.csv", r.reference);
  write_spectrum(c, "spectrum_nested.csv", r.nested);
  {
    std::ofstream f = csv(c, "compare.csv", "freq_hz,reference_db,nested_db,delta_db");
    for (std::size_t i = 0; i < r.reference_bands.center_hz.size(); ++i)
      f << g(r.reference_bands.center_hz[i]) << ',' << g(r.reference_bands.power_db[i]) << ','
        << g(r.nested_bands.power_db[i]) << ',' << g(r.nested_bands.power_db[i] - r.reference_bands.power_db[i])
        << '\n';
  }
  write_json(c, "metrics.json",
             json{{"max_band_delta_db", r.max_band_delta_db},
                  {"sample_mismatches", r.sample_mismatches},
                  {"multi_wraps", r.multi_wraps}});
  return 0;
}

}  // namespace

int run_experiment(const RunManifest& m, std::ostream& err) {
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), m.experiment) == names.end()) {
    fmt::print(err, "error: unknown experiment '{}'\n", m.experiment);
    return 2;
  }
  ExperimentConfig cfg;
  try {
    cfg = m.config_path.empty() ? default_experiment() : load_config(m.config_path);
    if (m.seed) cfg.sim.seed = *m.seed;
    if (m.out_dir.empty()) throw ConfigError("no output directory given");
  } catch (const ConfigError& e) {
    fmt::print(err, "config error: {}\n", e.what());
    return 2;
  }
  try {
    OutputDir out(m.out_dir);
    const Context c{m, cfg, config_hash(cfg), out, err};
    {
      std::ofstream f = out.open("config.json");
      f << to_json_text(cfg) << '\n';
    }
    int code = 0;
    if (m.experiment == "run") code = cmd_run(c);
    else if (m.experiment == "sweep-amp") code = cmd_sweep_amp(c);
    else if (m.experiment == "sweep-freq") code = cmd_sweep_freq(c);
    else if (m.experiment == "ntf") code = cmd_ntf(c);
    else if (m.experiment == "stf") code = cmd_stf(c);
    else if (m.experiment == "compare") code = cmd_compare(c);
    else code = cmd_higher_order(c);
    out.commit();
    if (code == 1) fmt::print(err, "warning: simulation flagged unstable or unlocked; see metrics.json\n");
    return code;
  } catch (const ConfigError& e) {
    fmt::print(err, "config error: {}\n", e.what());
    return 2;
  } catch (const fs::filesystem_error& e) {
    fmt::print(err, "I/O error: {}\n", e.what());
    return 2;
  } catch (const std::runtime_error& e) {
    fmt::print(err, "simulation error: {}\n", e.what());
    return 1;
  }
}

}  // namespace vcoadc
