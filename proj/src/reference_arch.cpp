#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "vcoadc/modulator.hpp"

namespace vcoadc {

namespace {

class Injector {
 public:
  Injector(int amplitude, std::uint64_t seed) : amp_(amplitude), rng_(seed) {}
  std::int64_t next(std::vector<std::int64_t>& log) {
    if (amp_ <= 0) return 0;
    const std::int64_t e = static_cast<std::int64_t>(rng_() % static_cast<std::uint64_t>(2 * amp_ + 1)) - amp_;
    log.push_back(e);
    return e;
  }

 private:
  int amp_;
  std::mt19937_64 rng_;
};

void check_ideal_args(const SimConfig& cfg, std::int64_t n_samples, const IdealArchOptions& opt) {
  if (!(cfg.fs_hz > 0.0)) throw ConfigError("fs_hz must be positive");
  if (cfg.oversampling < 2) throw ConfigError("oversampling must be >= 2");
  if (n_samples <= 0) throw ConfigError("n_samples must be positive");
  if (!(opt.k2_over_fs > 0.0 && opt.k2_over_fs < 2.0)) throw ConfigError("k2_over_fs must be in (0, 2)");
  if (opt.modulo_bits > 30) throw ConfigError("modulo_bits too large");
}

void drop_warmup(std::vector<std::int64_t>& v, std::int64_t warmup) {
  if (!v.empty()) v.erase(v.begin(), v.begin() + std::min<std::int64_t>(warmup, static_cast<std::int64_t>(v.size())));
}

// Both ideal loops run in exact integer arithmetic. The only rounding is
// the input increment per engine step, a multiple of kIdealInputQuantum / K.
using i128 = __int128;

constexpr std::int64_t kGainSteps = 1024;  // nested k2 / fs resolution

struct Units {
  explicit Units(unsigned k)
      : s(static_cast<i128>(std::llround(1.0 / kIdealInputQuantum))),
        x1_unit(s * k),
        x2_unit(2 * s * k * k) {}
  i128 s;        // input quanta per count
  i128 x1_unit;  // first state: units per count
  i128 x2_unit;  // second state: units per count
};

i128 floor_div(i128 a, i128 b) {
  i128 q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

i128 to_units(double counts, i128 unit) { return static_cast<i128>(std::round(counts * static_cast<double>(unit))); }

double to_counts(i128 v, i128 unit) { return static_cast<double>(v) / static_cast<double>(unit); }

// u counts per sample over one engine step, in x1 units
i128 input_step(double u) { return static_cast<i128>(std::llround(u / kIdealInputQuantum)); }

}  // namespace

IdealArchResult simulate_reference_ctsdm(const SimConfig& cfg, const InputFn& input, std::int64_t n_samples,
                                         const IdealArchOptions& opt) {
  check_ideal_args(cfg, n_samples, opt);
  const unsigned K = cfg.oversampling;
  const Units q(K);
  const double rest = opt.rest_offset ? cfg.vco.effective_rest_hz() : 0.0;
  const double kv = cfg.k_vco_eff();
  const std::int64_t warmup = cfg.warmup_samples;

  IdealArchResult r;
  r.y.resize(static_cast<std::size_t>(n_samples));
  r.state_max.assign(2, 0.0);
  Injector inj(opt.quantizer_prbs_amplitude, opt.prbs_seed);
  std::vector<double> x(K);

  // x1 in units of q.x1_unit, x2 in units of q.x2_unit
  i128 x1 = to_units(opt.x1_init, q.x1_unit);
  i128 x2 = to_units(opt.x2_init, q.x2_unit);
  const double bound = opt.divergence_bound;
  for (std::int64_t p = 0; p < warmup + n_samples; ++p) {
    const std::int64_t v = static_cast<std::int64_t>(floor_div(x2, q.x2_unit)) + inj.next(r.injected);
    if (p >= warmup) {
      r.y[static_cast<std::size_t>(p - warmup)] = v;
      r.state_max[0] = std::max(r.state_max[0], std::abs(to_counts(x1, q.x1_unit)));
      r.state_max[1] = std::max(r.state_max[1], std::abs(to_counts(x2, q.x2_unit)));
    }
    input(x, p * static_cast<std::int64_t>(K));
    const i128 v1 = static_cast<i128>(v) * q.s;
    const i128 v2 = 3 * static_cast<i128>(v) * q.s * K;
    for (unsigned k = 0; k < K; ++k) {
      const i128 x1_prev = x1;
      x1 += input_step((rest + kv * x[k]) / cfg.fs_hz) - v1;
      x2 += x1_prev + x1 - v2;
    }
    if (!(std::abs(to_counts(x1, q.x1_unit)) <= bound && std::abs(to_counts(x2, q.x2_unit)) <= bound))
      throw std::runtime_error("reference loop diverged at sample " + std::to_string(p - warmup));
  }
  drop_warmup(r.injected, warmup);
  return r;
}

IdealArchResult simulate_nested(const SimConfig& cfg, const InputFn& input, std::int64_t n_samples,
                                const IdealArchOptions& opt) {
  check_ideal_args(cfg, n_samples, opt);
  const unsigned K = cfg.oversampling;
  const Units q(K);
  const double rest = opt.rest_offset ? cfg.vco.effective_rest_hz() : 0.0;
  const double kv = cfg.k_vco_eff();
  const auto gain = static_cast<i128>(std::llround(opt.k2_over_fs * kGainSteps));
  const i128 t_unit = q.x2_unit * kGainSteps;
  const std::int64_t warmup = cfg.warmup_samples;
  const bool modulo = opt.modulo_bits > 0;
  const std::int64_t m = modulo ? (std::int64_t{1} << opt.modulo_bits) : 0;
  auto wrap = [&](std::int64_t v) { return modulo ? ((v % m) + m) % m : v; };

  IdealArchResult r;
  r.y.resize(static_cast<std::size_t>(n_samples));
  r.state_max.assign(2, 0.0);
  Injector inj(opt.quantizer_prbs_amplitude, opt.prbs_seed);
  std::vector<double> x(K);

  // Integer part (wrapped in modulo mode) plus fraction in exact units.
  i128 xf = to_units(opt.x1_init, q.x1_unit);
  i128 tf = to_units(opt.x2_init, t_unit);
  std::int64_t xi = static_cast<std::int64_t>(floor_div(xf, q.x1_unit));
  std::int64_t ti = static_cast<std::int64_t>(floor_div(tf, t_unit));
  xf -= static_cast<i128>(xi) * q.x1_unit;
  tf -= static_cast<i128>(ti) * t_unit;
  std::int64_t xi_u = xi, ti_u = ti;  // unbounded shadows for lock tracking
  xi = wrap(xi);
  ti = wrap(ti);
  std::int64_t w = 0, w_u = 0;

  for (std::int64_t p = 0; p < warmup + n_samples; ++p) {
    const std::int64_t e = inj.next(r.injected);
    const std::int64_t w_new = wrap(ti + e);
    const std::int64_t w_new_u = ti_u + e;
    std::int64_t y = w_new - w;
    if (modulo) y = ((y + m / 2) % m + m) % m - m / 2;
    w = w_new;
    w_u = w_new_u;
    if (p >= warmup) {
      r.y[static_cast<std::size_t>(p - warmup)] = y;
      r.state_max[1] =
          std::max(r.state_max[1], std::abs(static_cast<double>(ti_u - w_u) + to_counts(tf, t_unit)));
    }

    input(x, p * static_cast<std::int64_t>(K));
    bool lost = false;
    const std::int64_t x_start = xi_u;
    i128 v_prev = static_cast<i128>(wrap(xi - w)) * q.x1_unit + xf;
    for (unsigned k = 0; k < K; ++k) {
      xf += input_step((rest + kv * x[k]) / cfg.fs_hz);
      if (xf >= q.x1_unit || xf < 0) {
        const auto c = static_cast<std::int64_t>(floor_div(xf, q.x1_unit));
        xf -= static_cast<i128>(c) * q.x1_unit;
        xi = wrap(xi + c);
        xi_u += c;
      }
      const std::int64_t vi_u = xi_u - w_u;
      if (modulo && (vi_u < 0 || vi_u >= m)) lost = true;
      const i128 v = static_cast<i128>(wrap(xi - w)) * q.x1_unit + xf;
      if (p >= warmup)
        r.state_max[0] = std::max(r.state_max[0], std::abs(static_cast<double>(vi_u) + to_counts(xf, q.x1_unit)));
      tf += gain * (v_prev + v);
      if (tf >= t_unit || tf < 0) {
        const auto c = static_cast<std::int64_t>(floor_div(tf, t_unit));
        tf -= static_cast<i128>(c) * t_unit;
        ti = wrap(ti + c);
        ti_u += c;
      }
      v_prev = v;
    }
    if (modulo && (lost || xi_u - x_start >= m)) ++r.multi_wraps;
    if (!modulo && std::abs(static_cast<double>(ti_u - w_u)) > opt.divergence_bound)
      throw std::runtime_error("nested loop diverged at sample " + std::to_string(p - warmup));
  }
  drop_warmup(r.injected, warmup);
  return r;
}

}  // namespace vcoadc
