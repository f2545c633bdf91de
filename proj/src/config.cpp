#include "vcoadc/config.hpp"

#include <fmt/format.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

namespace vcoadc {

using nlohmann::json;

ExperimentConfig default_experiment() {
  ExperimentConfig e;
  e.sim = default_config();
  e.stimulus = Stimulus::tone(-36.0, 1000.0);
  e.sweep.levels_dbv = {-100, -90, -80, -70, -60, -50, -40, -30, -20, -15, -10, -8, -6, -5, -4, -3, -2, -1, 0};
  e.sweep.frequencies_hz = {1e3, 2e3, 5e3, 10e3, 20e3, 50e3, 100e3};
  return e;
}

namespace {

// Reads the keys of one JSON object and rejects any it did not consume.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where());
  }
  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;

  bool has(const char* key) const { return j_.contains(key); }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("expected boolean");
      } else if constexpr (std::is_arithmetic_v<T>) {
        if (!v.is_number()) throw ConfigError("expected number");
        if constexpr (std::is_unsigned_v<T>)
          if (v.is_number_integer() && v.get<std::int64_t>() < 0) throw ConfigError("expected non-negative integer");
        if constexpr (std::is_integral_v<T>)
          if (!v.is_number_integer() && !v.is_number_unsigned()) throw ConfigError("expected integer");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("expected string");
      }
      out = v.get<T>();
    } catch (const json::exception& ex) {
      throw ConfigError(where() + "." + key + ": " + ex.what());
    } catch (const ConfigError& ex) {
      throw ConfigError(where() + "." + key + ": " + ex.what());
    }
  }

  /// Sub-object, or nullptr when absent.
  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  std::string path(const char* key) const { return path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_noise(const json& j, const std::string& path, FrequencyNoise& n) {
  Reader r(j, path);
  r.get("white_frac_density", n.white_frac_density);
  r.get("flicker_corner_hz", n.flicker_corner_hz);
}

void read_osc(const json& j, const std::string& path, OscillatorParams& o, std::optional<double>& k_eff) {
  Reader r(j, path);
  r.get("f0_hz", o.f0_hz);
  r.get("states_per_cycle", o.states_per_cycle);
  r.get("taps", o.taps);
  r.get("k_tune", o.k_tune);
  if (r.has("k_eff")) {
    double k = 0;
    r.get("k_eff", k);
    k_eff = k;
  }
  r.get("poly_nl", o.poly_nl);
  if (const json* n = r.child("noise")) read_noise(*n, r.path("noise"), o.noise);
}

void read_stimulus(const json& j, Stimulus& s) {
  Reader r(j, "stimulus");
  std::string kind = to_string(s.kind);
  r.get("kind", kind);
  s.kind = parse_stimulus_kind(kind);
  r.get("dc_volts", s.dc_volts);
  if (const json* tones = r.child("tones")) {
    if (!tones->is_array()) throw ConfigError("stimulus.tones must be an array");
    s.tones.clear();
    for (std::size_t i = 0; i < tones->size(); ++i) {
      Reader t((*tones)[i], "stimulus.tones[" + std::to_string(i) + "]");
      ToneComponent c;
      t.get("amplitude_dbv", c.amplitude_dbv);
      t.get("frequency_hz", c.frequency_hz);
      t.get("phase_rad", c.phase_rad);
      s.tones.push_back(c);
    }
  }
}

void read_metrics(Reader& r, MetricOptions& m) {
  r.get("band_lo_hz", m.band_lo_hz);
  r.get("band_hi_hz", m.band_hi_hz);
  r.get("skirt_bins", m.skirt_bins);
  r.get("dc_bins", m.dc_bins);
  r.get("n_harmonics", m.n_harmonics);
  std::string w = m.weighting == Weighting::a ? "a" : "flat";
  r.get("weighting", w);
  if (w == "a") m.weighting = Weighting::a;
  else if (w == "flat") m.weighting = Weighting::flat;
  else throw ConfigError("analysis.weighting must be 'a' or 'flat'");
}

void check_values(const ExperimentConfig& e) {
  e.sim.validate();
  e.stimulus.validate(e.sim.fs_hz * e.sim.oversampling);
  const auto& a = e.analysis;
  if (a.nfft < 16 || (a.nfft & (a.nfft - 1)) != 0) throw ConfigError("analysis.nfft must be a power of two >= 16");
  if (a.n_avg == 0) throw ConfigError("analysis.n_avg must be >= 1");
  if (!(a.slope_lo_hz > 0.0 && a.slope_lo_hz < a.slope_hi_hz)) throw ConfigError("analysis slope band is empty");
  if (a.metrics.skirt_bins < 0 || a.metrics.n_harmonics < 0 || a.metrics.dc_bins < 0) throw ConfigError("analysis bin counts must be >= 0");
  if (!(a.metrics.band_lo_hz > 0.0 && a.metrics.band_lo_hz < a.metrics.band_hi_hz))
    throw ConfigError("analysis band is empty");
  if (e.n_samples < 0) throw ConfigError("n_samples must be >= 0");
  for (std::size_t i = 1; i < e.sweep.levels_dbv.size(); ++i)
    if (!(e.sweep.levels_dbv[i] > e.sweep.levels_dbv[i - 1])) throw ConfigError("sweep.levels_dbv must be ascending");
  for (double f : e.sweep.frequencies_hz)
    if (!(f > 0.0 && f < 0.5 * e.sim.fs_hz)) throw ConfigError("sweep.frequencies_hz must lie in (0, fs/2)");
  if (e.sweep.n_avg == 0) throw ConfigError("sweep.n_avg must be >= 1");
  if (e.higher_order.order < 2) throw ConfigError("higher_order.order must be >= 2");
  if (!e.higher_order.gains_hz_per_lsb.empty() && e.higher_order.gains_hz_per_lsb.size() != e.higher_order.order - 1)
    throw ConfigError("higher_order.gains_hz_per_lsb needs order - 1 entries");
  if (e.ntf.points < 2) throw ConfigError("ntf.points must be >= 2");
  if (e.compare.bands_per_decade < 1) throw ConfigError("compare.bands_per_decade must be >= 1");
  if (e.compare.min_bins < 1) throw ConfigError("compare.min_bins must be >= 1");
}

json osc_json(const OscillatorParams& o) {
  return json{{"f0_hz", o.f0_hz},
              {"states_per_cycle", o.states_per_cycle},
              {"taps", o.taps},
              {"k_tune", o.k_tune},
              {"poly_nl", o.poly_nl},
              {"noise", {{"white_frac_density", o.noise.white_frac_density},
                         {"flicker_corner_hz", o.noise.flicker_corner_hz}}}};
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& ex) {
    throw ConfigError(std::string("malformed JSON: ") + ex.what());
  }
  ExperimentConfig e = default_experiment();
  std::optional<double> vco_k_eff, dco_k_eff;
  {
    Reader r(root, "");
    int schema = kSchemaVersion;
    r.get("schema", schema);
    if (schema != kSchemaVersion) throw ConfigError("unsupported schema " + std::to_string(schema));
    SimConfig& s = e.sim;
    r.get("fs_hz", s.fs_hz);
    r.get("oversampling", s.oversampling);
    r.get("word_bits", s.word_bits);
    r.get("pseudo_differential", s.pseudo_differential);
    r.get("bit_accurate", s.bit_accurate);
    r.get("seed", s.seed);
    if (r.has("seed_n")) {
      std::uint64_t v = 0;
      r.get("seed_n", v);
      s.seed_n = v;
    }
    r.get("warmup_samples", s.warmup_samples);
    r.get("n_samples", e.n_samples);
    if (const json* j = r.child("vco")) read_osc(*j, "vco", s.vco, vco_k_eff);
    if (const json* j = r.child("dco")) read_osc(*j, "dco", s.dco, dco_k_eff);
    bool dac_offset_given = false;
    if (const json* j = r.child("dac")) {
      Reader d(*j, "dac");
      d.get("n_bits", s.dac.n_bits);
      d.get("v_lsb", s.dac.v_lsb);
      d.get("bit_weight_error", s.dac.bit_weight_error);
      dac_offset_given = d.has("offset_v");
      d.get("offset_v", s.dac.offset_v);
    }
    if (vco_k_eff) s.vco.k_tune = *vco_k_eff / s.vco.states_per_cycle;
    if (dco_k_eff) {
      const double offset = s.dac.offset_v;
      set_dco_gain(s, *dco_k_eff);
      if (dac_offset_given) s.dac.offset_v = offset;
    }
    if (const json* j = r.child("sampler")) {
      Reader d(*j, "sampler");
      d.get("aperture_s", s.sampler_aperture_s);
      std::string mode = s.sampler_mode == SamplerMode::per_word ? "per_word" : "per_bit";
      d.get("mode", mode);
      if (mode == "per_word") s.sampler_mode = SamplerMode::per_word;
      else if (mode == "per_bit") s.sampler_mode = SamplerMode::per_bit;
      else throw ConfigError("sampler.mode must be 'per_word' or 'per_bit'");
    }
    if (const json* j = r.child("injection")) {
      Reader d(*j, "injection");
      d.get("stage2_tone_lsb", s.injection.stage2_tone_lsb);
      d.get("stage2_tone_hz", s.injection.stage2_tone_hz);
      d.get("quantizer_prbs_amplitude", s.injection.quantizer_prbs_amplitude);
      d.get("prbs_seed", s.injection.prbs_seed);
    }
    if (const json* j = r.child("stimulus")) read_stimulus(*j, e.stimulus);
    if (const json* j = r.child("analysis")) {
      Reader d(*j, "analysis");
      auto& a = e.analysis;
      d.get("nfft", a.nfft);
      d.get("n_avg", a.n_avg);
      std::string w = to_string(a.window);
      d.get("window", w);
      a.window = parse_window(w);
      d.get("slope_lo_hz", a.slope_lo_hz);
      d.get("slope_hi_hz", a.slope_hi_hz);
      d.get("coherent", a.coherent);
      read_metrics(d, a.metrics);
    }
    if (const json* j = r.child("sweep")) {
      Reader d(*j, "sweep");
      d.get("levels_dbv", e.sweep.levels_dbv);
      d.get("frequencies_hz", e.sweep.frequencies_hz);
      d.get("tone_hz", e.sweep.tone_hz);
      d.get("freq_sweep_level_dbv", e.sweep.freq_sweep_level_dbv);
      d.get("n_avg", e.sweep.n_avg);
    }
    if (const json* j = r.child("higher_order")) {
      Reader d(*j, "higher_order");
      d.get("order", e.higher_order.order);
      d.get("pole", e.higher_order.pole);
      d.get("gains_hz_per_lsb", e.higher_order.gains_hz_per_lsb);
      d.get("word_bits", e.higher_order.word_bits);
    }
    if (const json* j = r.child("ntf")) {
      Reader d(*j, "ntf");
      d.get("points", e.ntf.points);
      d.get("measure", e.ntf.measure);
      d.get("injection_amplitude", e.ntf.injection_amplitude);
      d.get("smooth_bins", e.ntf.smooth_bins);
    }
    if (const json* j = r.child("compare")) {
      Reader d(*j, "compare");
      std::string ref;
      d.get("reference_config", ref);
      if (!ref.empty()) e.compare.reference_config = ref;
      d.get("x1_init", e.compare.x1_init);
      d.get("x2_init", e.compare.x2_init);
      d.get("modulo_bits", e.compare.modulo_bits);
      d.get("bands_per_decade", e.compare.bands_per_decade);
      d.get("min_bins", e.compare.min_bins);
    }
  }
  check_values(e);
  return e;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_json_text(const ExperimentConfig& e) {
  const SimConfig& s = e.sim;
  json tones = json::array();
  for (const auto& t : e.stimulus.tones)
    tones.push_back({{"amplitude_dbv", t.amplitude_dbv}, {"frequency_hz", t.frequency_hz}, {"phase_rad", t.phase_rad}});
  json root{
      {"schema", kSchemaVersion},
      {"fs_hz", s.fs_hz},
      {"oversampling", s.oversampling},
      {"word_bits", s.word_bits},
      {"pseudo_differential", s.pseudo_differential},
      {"bit_accurate", s.bit_accurate},
      {"seed", s.seed},
      {"warmup_samples", s.warmup_samples},
      {"n_samples", e.n_samples},
      {"vco", osc_json(s.vco)},
      {"dco", osc_json(s.dco)},
      {"dac",
       {{"n_bits", s.dac.n_bits},
        {"v_lsb", s.dac.v_lsb},
        {"bit_weight_error", s.dac.bit_weight_error},
        {"offset_v", s.dac.offset_v}}},
      {"sampler",
       {{"aperture_s", s.sampler_aperture_s},
        {"mode", s.sampler_mode == SamplerMode::per_word ? "per_word" : "per_bit"}}},
      {"injection",
       {{"stage2_tone_lsb", s.injection.stage2_tone_lsb},
        {"stage2_tone_hz", s.injection.stage2_tone_hz},
        {"quantizer_prbs_amplitude", s.injection.quantizer_prbs_amplitude},
        {"prbs_seed", s.injection.prbs_seed}}},
      {"stimulus", {{"kind", to_string(e.stimulus.kind)}, {"dc_volts", e.stimulus.dc_volts}, {"tones", tones}}},
      {"analysis",
       {{"nfft", e.analysis.nfft},
        {"n_avg", e.analysis.n_avg},
        {"window", to_string(e.analysis.window)},
        {"slope_lo_hz", e.analysis.slope_lo_hz},
        {"slope_hi_hz", e.analysis.slope_hi_hz},
        {"coherent", e.analysis.coherent},
        {"band_lo_hz", e.analysis.metrics.band_lo_hz},
        {"band_hi_hz", e.analysis.metrics.band_hi_hz},
        {"skirt_bins", e.analysis.metrics.skirt_bins},
        {"n_harmonics", e.analysis.metrics.n_harmonics},
        {"dc_bins", e.analysis.metrics.dc_bins},
        {"weighting", e.analysis.metrics.weighting == Weighting::a ? "a" : "flat"}}},
      {"sweep",
       {{"levels_dbv", e.sweep.levels_dbv},
        {"frequencies_hz", e.sweep.frequencies_hz},
        {"tone_hz", e.sweep.tone_hz},
        {"freq_sweep_level_dbv", e.sweep.freq_sweep_level_dbv},
        {"n_avg", e.sweep.n_avg}}},
      {"higher_order",
       {{"order", e.higher_order.order},
        {"pole", e.higher_order.pole},
        {"gains_hz_per_lsb", e.higher_order.gains_hz_per_lsb},
        {"word_bits", e.higher_order.word_bits}}},
      {"ntf",
       {{"points", e.ntf.points},
        {"measure", e.ntf.measure},
        {"injection_amplitude", e.ntf.injection_amplitude},
        {"smooth_bins", e.ntf.smooth_bins}}},
      {"compare",
       {{"reference_config", e.compare.reference_config ? e.compare.reference_config->string() : ""},
        {"x1_init", e.compare.x1_init},
        {"x2_init", e.compare.x2_init},
        {"modulo_bits", e.compare.modulo_bits},
        {"bands_per_decade", e.compare.bands_per_decade},
        {"min_bins", e.compare.min_bins}}},
  };
  if (s.seed_n) root["seed_n"] = *s.seed_n;
  return root.dump(2);
}

std::string config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : to_json_text(cfg)) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return fmt::format("{:016x}", h);
}

}  // namespace vcoadc
