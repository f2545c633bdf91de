#include "vcoadc/modulator.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <memory>
#include <thread>

#include "vcoadc/kernels.hpp"

namespace vcoadc {

std::string to_string(EventKind k) {
  switch (k) {
    case EventKind::vco_clamp: return "vco_clamp";
    case EventKind::dco_clamp: return "dco_clamp";
    case EventKind::modulo_wrap: return "modulo_wrap";
    case EventKind::output_range: return "output_range";
    case EventKind::aperture_wide: return "aperture_wide";
    case EventKind::counter_skip: return "counter_skip";
  }
  return "?";
}

void SimConfig::validate() const {
  if (!(fs_hz > 0.0) || !std::isfinite(fs_hz)) throw ConfigError("fs_hz must be positive");
  if (oversampling < 2) throw ConfigError("oversampling must be >= 2");
  if (word_bits < 3 || word_bits > 16) throw ConfigError("word_bits must be in [3, 16]");
  vco.validate();
  dco.validate(true);
  dac.validate();
  if (dac.n_bits != word_bits) throw ConfigError("DAC resolution must equal word_bits");
  if (dco.taps < 4 || !std::has_single_bit(dco.taps)) throw ConfigError("DCO taps must be a power of two >= 4");
  if (dco.states_per_cycle != 2 * dco.taps)
    throw ConfigError("a differential DCO with M taps has 2M states per cycle");
  if (static_cast<unsigned>(std::countr_zero(dco.taps)) > word_bits)
    throw ConfigError("DCO Gray counter is wider than word_bits");
  const double k_ratio = k_dco_eff() / fs_hz;
  if (!(k_ratio > 0.0 && k_ratio < 2.0))
    throw ConfigError("k_dco_eff / fs = " + std::to_string(k_ratio) + " places the NTF pole outside the unit circle");
  // Counters must advance by well under one state per engine step.
  const double dco_max = k_dco_eff() * static_cast<double>((1u << word_bits) - 1);
  const double vco_max = 2.0 * vco.effective_rest_hz();
  const double margin = dt() * std::max(dco_max, vco_max);
  if (margin > 0.25)
    throw ConfigError("engine step too coarse: dt * max effective frequency = " + std::to_string(margin) + " > 0.25");
  if (sampler_aperture_s > 1.0 / fs_hz) throw ConfigError("sampler aperture longer than a sampling period");
  if (warmup_samples < 0) throw ConfigError("warmup_samples must be >= 0");
  if (injection.quantizer_prbs_amplitude < 0) throw ConfigError("quantizer_prbs_amplitude must be >= 0");
  if (injection.stage2_tone_lsb != 0.0 &&
      !(injection.stage2_tone_hz > 0.0 && injection.stage2_tone_hz < 0.5 * fs_hz * oversampling))
    throw ConfigError("stage-2 injection frequency out of range");
}

void set_dco_gain(SimConfig& cfg, double k_eff_hz_per_lsb) {
  cfg.dco.k_tune = k_eff_hz_per_lsb / (cfg.dco.states_per_cycle * cfg.dac.v_lsb);
  cfg.dac.offset_v = -cfg.dco.f0_hz / cfg.dco.k_tune;
}

SimConfig default_config() {
  SimConfig cfg;
  cfg.vco.f0_hz = 6e6;
  cfg.vco.states_per_cycle = 7;
  cfg.vco.taps = 21;
  cfg.vco.k_tune = 42e6 / 7.0;
  cfg.dco.f0_hz = 1.2e6;
  cfg.dco.taps = 16;
  cfg.dco.states_per_cycle = 32;
  cfg.dac.n_bits = 6;
  cfg.dac.v_lsb = 0.01;
  set_dco_gain(cfg, 1.6e6);
  return cfg;
}

// ---------------------------------------------------------------------------

InputFn input_from_stimulus(const Stimulus& stim, double engine_rate_hz) {
  auto src = std::make_shared<StimulusSource>(stim, engine_rate_hz);
  return [src](std::span<double> out, std::int64_t first) { src->fill(out, first); };
}

InputFn input_from_samples(std::vector<double> samples) {
  auto data = std::make_shared<std::vector<double>>(std::move(samples));
  return [data](std::span<double> out, std::int64_t first) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      const auto idx = static_cast<std::size_t>(first) + i;
      out[i] = idx < data->size() ? (*data)[idx] : 0.0;
    }
  };
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) { return splitmix(seed * 0x100000001b3ull + stream); }

/// Frequency noise of one oscillator, drawn once per sampling period and
/// applied at the first engine step of that period.
class PeriodNoise {
 public:
  PeriodNoise(const OscillatorParams& p, std::uint64_t seed) : gen_(p.f0_hz, p.noise, seed), enabled_(p.noise.enabled()) {}
  double draw(double period_s) { return enabled_ ? gen_.noise_increment(period_s) : 0.0; }
  bool enabled() const { return enabled_; }

 private:
  OscillatorState gen_;
  bool enabled_;
};

struct DcoStage {
  OscillatorParams osc;
  DacModel dac;
  std::vector<double> dac_v;       // DAC output per code
  std::vector<double> dtheta;      // phase increment per engine step per code
  std::vector<std::uint8_t> clamp; // code drives the DCO below the floor
  OscillatorState phase;
  std::int64_t count = 0;          // unbounded state count
};

struct Transition {
  double t_rel;  // seconds relative to the period start
  DigitalWord before;
  DigitalWord after;
};

class BranchEngine {
 public:
  BranchEngine(const SimConfig& cfg, std::span<const double> gains, int branch, std::uint64_t seed)
      : cfg_(cfg),
        branch_(branch),
        mask_((1u << cfg.word_bits) - 1u),
        modulus_(std::int64_t{1} << cfg.word_bits),
        vco_noise_(cfg.vco, derive_seed(seed, 1)),
        sampler_({cfg.aperture_s(), derive_seed(seed, 100), cfg.sampler_mode}),
        gray_bits_(static_cast<unsigned>(std::countr_zero(cfg.dco.taps))),
        extender_(gray_bits_, cfg.word_bits),
        prbs_(derive_seed(cfg.injection.prbs_seed, seed)) {
    const double dt = cfg.dt();
    for (std::size_t j = 0; j < gains.size(); ++j) {
      DcoStage st;
      st.osc = cfg.dco;
      st.dac = cfg.dac;
      if (gains[j] != cfg.k_dco_eff()) {
        st.osc.k_tune = gains[j] / (st.osc.states_per_cycle * st.dac.v_lsb);
        st.dac.offset_v = -st.osc.f0_hz / st.osc.k_tune;
      }
      for (std::uint32_t code = 0; code <= mask_; ++code) {
        const double v = dac_output(st.dac, code);
        const TuneResult f = instantaneous_frequency(st.osc, v);
        st.dac_v.push_back(v);
        st.dtheta.push_back(f.hz * dt);
        st.clamp.push_back(f.clamped ? 1 : 0);
      }
      stage_noise_.emplace_back(st.osc, derive_seed(seed, 2 + j));
      stages_.push_back(std::move(st));
    }
  }

  void run(const InputFn& input, double sign, std::int64_t warmup, std::int64_t n, BranchTrace& out,
           std::vector<Event>& events);

 private:
  DigitalWord gray_word_for(std::int64_t count) {
    if (cfg_.bit_accurate) {
      const TapVector taps = tap_waveforms_at_state(count, cfg_.dco.taps, true, TapOrder::reversed);
      return extender_.update(gray_from_phases(taps, gray_bits_));
    }
    return binary_to_gray(DigitalWord::binary(static_cast<std::uint32_t>((count + count_offset_) & mask_),
                                              cfg_.word_bits));
  }

  void log(std::vector<Event>& events, EventKind kind, std::int64_t sample) {
    if (sample < 0) return;  // start-up transient
    if (events.size() < ModulatorTrace::kMaxLoggedEvents) events.push_back({kind, branch_, sample});
  }

  const SimConfig& cfg_;
  int branch_;
  std::uint32_t mask_;
  std::int64_t modulus_;
  PeriodNoise vco_noise_;
  std::vector<PeriodNoise> stage_noise_;
  std::vector<DcoStage> stages_;
  Sampler sampler_;
  unsigned gray_bits_;
  GrayExtender extender_;
  std::int64_t count_offset_ = 0;  // sampled binary value minus unbounded count
  std::mt19937_64 prbs_;
};

void BranchEngine::run(const InputFn& input, double sign, std::int64_t warmup, std::int64_t n, BranchTrace& out,
                       std::vector<Event>& events) {
  const auto& kt = kernels::active();
  const unsigned K = cfg_.oversampling;
  const double dt = cfg_.dt();
  const double ts = 1.0 / cfg_.fs_hz;
  const unsigned s1 = cfg_.vco.states_per_cycle;
  const unsigned s_last = cfg_.dco.states_per_cycle;
  DcoStage& last = stages_.back();
  const std::int64_t periods = warmup + n;

  out.y.assign(static_cast<std::size_t>(n), 0);
  out.w.assign(static_cast<std::size_t>(n), 0);
  out.v1_probe.assign(static_cast<std::size_t>(n), 0);
  out.injected.assign(cfg_.injection.quantizer_prbs_amplitude > 0 ? static_cast<std::size_t>(n) : 0, 0);
  BranchStats& st = out.stats;

  OscillatorState vco;
  std::vector<double> x(K), f1(K), inj(K, 0.0);
  std::vector<double> stage_kick(stages_.size(), 0.0);
  // Lap index of each unbounded subtractor difference. Start-up may settle
  // on any lap; it is frozen once warm-up ends.
  std::vector<std::int64_t> lap(stages_.size(), 0);

  const bool tone_inj = cfg_.injection.stage2_tone_lsb != 0.0;
  std::optional<StimulusSource> inj_src;
  if (tone_inj) {
    const double peak = cfg_.injection.stage2_tone_lsb * cfg_.dac.v_lsb;
    inj_src.emplace(Stimulus::tone(peak_to_dbv(std::abs(peak)), cfg_.injection.stage2_tone_hz), cfg_.fs_hz * K,
                    peak < 0 ? -1.0 : 1.0);
  }

  // Start-up reset: extender aligned with the ring state, feedback register
  // loaded with the decoded count. Both counter paths share this word.
  extender_.reset(gray_from_phases(tap_waveforms_at_state(0, cfg_.dco.taps, true, TapOrder::reversed), gray_bits_));
  DigitalWord word = extender_.output();
  count_offset_ = gray_to_binary(word).value();
  std::int64_t w_hold_u = count_offset_;
  FirstDifference diff(cfg_.word_bits);

  std::optional<Transition> pre_edge;   // last transition before the pending edge
  std::optional<Transition> post_edge;  // first transition after it
  DigitalWord word_at_edge = word;
  std::int64_t count_at_edge = 0;
  std::uint16_t v1_at_edge = 0;
  bool wrapped = false;
  std::optional<Transition> last_in_period;

  for (std::int64_t p = 0; p <= periods; ++p) {
    if (p == warmup) {
      st = BranchStats{};
      wrapped = false;
    }
    input(x, p * static_cast<std::int64_t>(K));
    if (sign < 0)
      for (double& v : x) v = -v;
    const std::size_t clamped =
        kt.tune(x.data(), f1.data(), K, cfg_.vco.poly_nl.data(), cfg_.vco.poly_nl.size(), cfg_.vco.f0_hz,
                cfg_.vco.k_tune, kMinFrequencyHz);
    if (clamped) {
      st.vco_clamp_steps += static_cast<std::int64_t>(clamped);
      log(events, EventKind::vco_clamp, p - warmup);
    }
    for (double& f : f1) f *= dt;
    if (tone_inj) inj_src->fill(inj, p * static_cast<std::int64_t>(K));
    if (vco_noise_.enabled()) f1[0] = std::max(0.0, f1[0] + vco_noise_.draw(ts));
    for (std::size_t j = 0; j < stages_.size(); ++j) stage_kick[j] = stage_noise_[j].draw(ts);

    last_in_period.reset();
    const unsigned steps = p == periods ? 1u : K;
    for (unsigned k = 0; k < steps; ++k) {
      vco.advance_cycles(f1[k]);
      std::int64_t upstream = vco.states(s1);
      bool rail = false;
      for (std::size_t j = 0; j < stages_.size(); ++j) {
        DcoStage& sg = stages_[j];
        const std::int64_t d = upstream - w_hold_u;
        const auto v = static_cast<std::uint32_t>(d) & mask_;
        const std::int64_t d_lap = (d - static_cast<std::int64_t>(v)) / modulus_;
        if (p < warmup) lap[j] = d_lap;
        if (d_lap != lap[j]) {
          wrapped = true;
          rail = true;
        } else if (v == 0 || v == mask_) {
          rail = true;
        }
        if (j == 0) v1_at_edge = static_cast<std::uint16_t>(v);
        double dth = sg.dtheta[v];
        bool clamp = sg.clamp[v];
        if (j == 0 && tone_inj) {
          const TuneResult f = instantaneous_frequency(sg.osc, sg.dac_v[v] + inj[k]);
          dth = f.hz * dt;
          clamp = f.clamped;
        }
        if (k == 0 && stage_kick[j] != 0.0) dth = std::max(0.0, dth + stage_kick[j]);
        if (clamp) {
          ++st.dco_clamp_steps;
          if (st.dco_clamp_steps < 16) log(events, EventKind::dco_clamp, p - warmup);
        }
        const double pos_before = sg.phase.fraction() * (&sg == &last ? s_last : 1);
        const std::int64_t whole_before = sg.phase.whole_cycles();
        sg.phase.advance_cycles(dth);
        if (&sg == &last) {
          const std::int64_t now = sg.phase.states(s_last);
          if (now != sg.count) {
            if (now - sg.count > 1) {
              ++st.counter_skips;
              log(events, EventKind::counter_skip, p - warmup);
            }
            DigitalWord before = word;
            for (std::int64_t c = sg.count + 1; c <= now; ++c) {
              before = word;
              word = gray_word_for(c);
            }
            // crossing time of the last state boundary inside this step
            const double start = static_cast<double>(whole_before * s_last) + pos_before;
            const double stop = static_cast<double>(sg.phase.whole_cycles() * s_last) + sg.phase.fraction() * s_last;
            const double frac = stop > start ? (static_cast<double>(now) - start) / (stop - start) : 1.0;
            const Transition tr{(k + std::clamp(frac, 0.0, 1.0)) * dt, before, word};
            if (p == periods || (k == 0 && p > 0)) {
              if (!post_edge) post_edge = tr;
            }
            if (p < periods) last_in_period = tr;
            sg.count = now;
          }
        } else {
          sg.count = sg.phase.states(sg.osc.states_per_cycle);
        }
        upstream = sg.count;
      }
      if (rail) ++st.rail_steps;
      ++st.steps;

      if (k == 0 && p > 0) {
        // Resolve the sample taken at the start of this period; the new
        // feedback value applies from the next engine step.
        CounterTrajectory traj;
        traj.initial = pre_edge ? pre_edge->before : word_at_edge;
        if (pre_edge) traj.transitions.push_back({pre_edge->t_rel - ts, word_at_edge});
        if (post_edge && post_edge->t_rel <= dt) traj.transitions.push_back({post_edge->t_rel, post_edge->after});
        const SampleResult sr = sampler_.sample(traj, 0.0);
        const std::int64_t idx = p - 1 - warmup;
        if (sr.metastable) ++st.metastable_samples;
        if (sr.aperture_too_wide) {
          ++st.aperture_wide;
          log(events, EventKind::aperture_wide, idx);
        }
        std::uint32_t w = gray_to_binary(sr.word).value();
        const std::int64_t ref = count_at_edge + count_offset_;
        if (!sr.metastable && static_cast<std::uint32_t>(ref & mask_) != w)
          throw std::logic_error("Gray counter path disagrees with the transition count");
        const std::int64_t delta =
            ((static_cast<std::int64_t>(w) - (ref & mask_) + modulus_ / 2) % modulus_ + modulus_) % modulus_ -
            modulus_ / 2;
        std::int64_t w_u = ref + delta;
        if (const int a = cfg_.injection.quantizer_prbs_amplitude; a > 0) {
          const auto span = static_cast<std::uint64_t>(2 * a + 1);
          const std::int64_t e = static_cast<std::int64_t>(prbs_() % span) - a;
          w_u += e;
          if (idx >= 0) out.injected[static_cast<std::size_t>(idx)] = static_cast<std::int32_t>(e);
          w = static_cast<std::uint32_t>(static_cast<std::int64_t>(w) + e + modulus_) & mask_;
        }
        w_hold_u = w_u;
        const std::int32_t y = diff(w);
        if (wrapped) {
          ++st.wrap_periods;
          log(events, EventKind::modulo_wrap, idx);
        }
        if (diff.last_out_of_range() && idx >= 0) {
          ++st.output_range;
          log(events, EventKind::output_range, idx);
        }
        wrapped = false;
        if (idx >= 0) {
          out.y[static_cast<std::size_t>(idx)] = y;
          out.w[static_cast<std::size_t>(idx)] = w;
          out.v1_probe[static_cast<std::size_t>(idx)] = v1_at_edge;
        }
        pre_edge.reset();
        post_edge.reset();
      }
    }
    // Edge at the end of period p.
    word_at_edge = word;
    count_at_edge = last.count;
    pre_edge = last_in_period;
    if (pre_edge && pre_edge->t_rel < ts - 0.5 * sampler_.model().aperture_s) pre_edge.reset();
  }
}

}  // namespace

ModulatorTrace simulate_higher_order(const SimConfig& cfg, unsigned order, std::span<const double> gains,
                                     const InputFn& input, std::int64_t n_samples) {
  cfg.validate();
  if (order < 2) throw ConfigError("modulator order must be >= 2");
  if (gains.size() != order - 1) throw ConfigError("need one DCO gain per stage after the input VCO");
  const double max_code = static_cast<double>((1u << cfg.word_bits) - 1);
  for (double g : gains) {
    if (!(g > 0.0)) throw ConfigError("DCO gains must be positive");
    if (g * max_code * cfg.dt() > 0.25) throw ConfigError("engine step too coarse for a DCO gain of " + std::to_string(g));
  }
  if (n_samples <= 0) throw ConfigError("n_samples must be positive");

  ModulatorTrace trace;
  trace.config = cfg;
  trace.order = order;
  trace.differential = cfg.pseudo_differential;
  std::vector<Event> ev_p, ev_n;
  {
    BranchEngine eng(cfg, gains, 0, cfg.seed);
    eng.run(input, +1.0, cfg.warmup_samples, n_samples, trace.p, ev_p);
  }
  if (cfg.pseudo_differential) {
    BranchEngine eng(cfg, gains, 1, cfg.n_branch_seed());
    eng.run(input, -1.0, cfg.warmup_samples, n_samples, trace.n, ev_n);
  }
  trace.dout.resize(static_cast<std::size_t>(n_samples));
  for (std::size_t i = 0; i < trace.dout.size(); ++i)
    trace.dout[i] = cfg.pseudo_differential ? trace.p.y[i] - trace.n.y[i] : trace.p.y[i];

  trace.events = std::move(ev_p);
  trace.events.insert(trace.events.end(), ev_n.begin(), ev_n.end());
  std::stable_sort(trace.events.begin(), trace.events.end(),
                   [](const Event& a, const Event& b) { return a.sample < b.sample; });
  if (trace.events.size() > ModulatorTrace::kMaxLoggedEvents) trace.events.resize(ModulatorTrace::kMaxLoggedEvents);

  // A branch whose subtractors wrap for most of the run has diverged.
  for (const BranchTrace* b : {&trace.p, &trace.n})
    if (b->stats.steps > 0 && b->stats.wrap_periods > (cfg.warmup_samples + n_samples) / 2) trace.unstable = true;
  return trace;
}

ModulatorTrace simulate_proposed(const SimConfig& cfg, const InputFn& input, std::int64_t n_samples) {
  const double gain = cfg.k_dco_eff();
  return simulate_higher_order(cfg, 2, std::span<const double>(&gain, 1), input, n_samples);
}

LockReport lock_check(const ModulatorTrace& trace) {
  LockReport r;
  std::int64_t rail = 0, steps = 0;
  for (const BranchTrace* b : {&trace.p, &trace.n}) {
    const BranchStats& s = b->stats;
    r.overload_count += s.vco_clamp_steps + s.dco_clamp_steps + s.output_range;
    r.multi_wrap_count += s.wrap_periods;
    r.aperture_events += s.aperture_wide;
    rail += s.rail_steps;
    steps += s.steps;
  }
  r.v1_saturation_dwell = steps > 0 ? static_cast<double>(rail) / static_cast<double>(steps) : 0.0;
  r.locked = r.overload_count == 0 && r.multi_wrap_count == 0 && rail == 0 && !trace.unstable;
  return r;
}

// ---------------------------------------------------------------------------

namespace {

/// Closed-loop characteristic polynomial (monic, highest power first) of the
/// inner loop with DCO gains a[j] = k_j / fs, from the exact per-period
/// state transition of the integrator chain with w held constant.
std::vector<double> inner_loop_charpoly(const std::vector<double>& a) {
  const std::size_t m = a.size();
  // Propagate polynomials in tau over one period for each unit initial state
  // and for w = 1. c_j(tau) = c_j(0) + a_j int_0^tau (c_{j-1}(s) - w) ds with
  // c_0 = 0 (input VCO omitted).
  auto propagate = [&](const std::vector<double>& init, double w) {
    std::vector<std::vector<double>> poly(m);  // coefficients in tau
    std::vector<double> prev{0.0};             // c_0(tau)
    for (std::size_t j = 0; j < m; ++j) {
      std::vector<double> integrand = prev;
      integrand[0] -= w;
      std::vector<double> c(integrand.size() + 1, 0.0);
      c[0] = init[j];
      for (std::size_t i = 0; i < integrand.size(); ++i) c[i + 1] = a[j] * integrand[i] / static_cast<double>(i + 1);
      poly[j] = c;
      prev = c;
    }
    std::vector<double> end(m);
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (double c : poly[j]) s += c;
      end[j] = s;
    }
    return end;
  };
  // A_cl = A + B e_last^T, since w[n] = c_last[n] in the linear model.
  std::vector<std::vector<double>> acl(m, std::vector<double>(m));
  const std::vector<double> b = propagate(std::vector<double>(m, 0.0), 1.0);
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> e(m, 0.0);
    e[i] = 1.0;
    const std::vector<double> col = propagate(e, 0.0);
    for (std::size_t r = 0; r < m; ++r) acl[r][i] = col[r] + (i == m - 1 ? b[r] : 0.0);
  }
  // Faddeev-LeVerrier
  std::vector<double> coeff(m + 1, 0.0);
  coeff[0] = 1.0;
  std::vector<std::vector<double>> mk(m, std::vector<double>(m, 0.0));
  for (std::size_t k = 1; k <= m; ++k) {
    std::vector<std::vector<double>> next(m, std::vector<double>(m, 0.0));
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < m; ++c) {
        double s = 0.0;
        for (std::size_t t = 0; t < m; ++t) s += acl[r][t] * mk[t][c];
        next[r][c] = s + (r == c ? coeff[k - 1] : 0.0);
      }
    double tr = 0.0;
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t t = 0; t < m; ++t) tr += acl[r][t] * next[t][r];
    coeff[k] = -tr / static_cast<double>(k);
    mk = std::move(next);
  }
  return coeff;
}

}  // namespace

std::vector<double> higher_order_gains(unsigned order, double fs_hz, double pole) {
  if (order < 2) throw ConfigError("order must be >= 2");
  if (!(pole >= 0.0 && pole < 1.0)) throw ConfigError("pole must be in [0, 1)");
  const std::size_t m = order - 1;
  // target (z - pole)^m
  std::vector<double> target{1.0};
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> t(target.size() + 1, 0.0);
    for (std::size_t k = 0; k < target.size(); ++k) {
      t[k] += target[k];
      t[k + 1] -= pole * target[k];
    }
    target = t;
  }
  std::vector<double> a(m, 0.5);
  for (int iter = 0; iter < 200; ++iter) {
    const std::vector<double> c = inner_loop_charpoly(a);
    std::vector<double> r(m);
    double err = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      r[i] = c[i + 1] - target[i + 1];
      err = std::max(err, std::abs(r[i]));
    }
    if (err < 1e-13) break;
    // finite-difference Jacobian, Gaussian elimination
    std::vector<std::vector<double>> jac(m, std::vector<double>(m + 1));
    for (std::size_t j = 0; j < m; ++j) {
      std::vector<double> ap = a;
      const double h = 1e-7 * std::max(1.0, std::abs(a[j]));
      ap[j] += h;
      const std::vector<double> cp = inner_loop_charpoly(ap);
      for (std::size_t i = 0; i < m; ++i) jac[i][j] = (cp[i + 1] - c[i + 1]) / h;
    }
    for (std::size_t i = 0; i < m; ++i) jac[i][m] = -r[i];
    for (std::size_t col = 0; col < m; ++col) {
      std::size_t piv = col;
      for (std::size_t i = col + 1; i < m; ++i)
        if (std::abs(jac[i][col]) > std::abs(jac[piv][col])) piv = i;
      std::swap(jac[col], jac[piv]);
      if (std::abs(jac[col][col]) < 1e-300) throw std::runtime_error("higher_order_gains: singular Jacobian");
      for (std::size_t i = 0; i < m; ++i) {
        if (i == col) continue;
        const double f = jac[i][col] / jac[col][col];
        for (std::size_t k = col; k <= m; ++k) jac[i][k] -= f * jac[col][k];
      }
    }
    for (std::size_t j = 0; j < m; ++j) a[j] += jac[j][m] / jac[j][j];
  }
  std::vector<double> gains(m);
  for (std::size_t j = 0; j < m; ++j) {
    if (!(a[j] > 0.0)) throw std::runtime_error("higher_order_gains: no positive solution for this pole");
    gains[j] = a[j] * fs_hz;
  }
  return gains;
}

// ---------------------------------------------------------------------------

std::vector<ModulatorTrace> run_parallel(const std::vector<std::function<ModulatorTrace()>>& jobs, unsigned threads) {
  std::vector<ModulatorTrace> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(jobs.size())));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        results[i] = jobs[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

}  // namespace vcoadc
