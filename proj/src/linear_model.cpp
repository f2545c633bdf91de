#include "vcoadc/linear_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vcoadc/types.hpp"

namespace vcoadc {

Poly poly_mul(const Poly& a, const Poly& b) {
  Poly r(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
  return r;
}

Poly poly_add(const Poly& a, const Poly& b) {
  Poly r(std::max(a.size(), b.size()), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) r[i] += a[i];
  for (std::size_t i = 0; i < b.size(); ++i) r[i] += b[i];
  return r;
}

namespace {
Poly poly_neg(Poly a) {
  for (double& c : a) c = -c;
  return a;
}
}  // namespace

Rational Rational::operator*(const Rational& o) const { return {poly_mul(num, o.num), poly_mul(den, o.den)}; }

Rational Rational::operator+(const Rational& o) const {
  if (den == o.den) return {poly_add(num, o.num), den};
  return {poly_add(poly_mul(num, o.den), poly_mul(o.num, den)), poly_mul(den, o.den)};
}

Rational Rational::operator-(const Rational& o) const { return *this + Rational{poly_neg(o.num), o.den}; }

Rational Rational::operator/(const Rational& o) const { return {poly_mul(num, o.den), poly_mul(den, o.num)}; }

Rational Rational::normalized() const {
  Rational r = *this;
  auto trim = [](Poly& p) {
    while (p.size() > 1 && p.back() == 0.0) p.pop_back();
  };
  trim(r.num);
  trim(r.den);
  const double d0 = r.den.front();
  if (d0 == 0.0) throw std::domain_error("Rational: leading denominator coefficient is zero");
  if (d0 != 1.0) {
    for (double& c : r.num) c /= d0;
    for (double& c : r.den) c /= d0;
  }
  return r;
}

std::complex<double> Rational::at(std::complex<double> z) const {
  const std::complex<double> zi = 1.0 / z;
  auto eval = [&](const Poly& p) {
    std::complex<double> acc = 0.0;
    for (auto it = p.rbegin(); it != p.rend(); ++it) acc = acc * zi + *it;
    return acc;
  };
  return eval(num) / eval(den);
}

std::complex<double> Rational::at_freq(double f_hz, double fs_hz) const {
  return at(std::polar(1.0, 2.0 * std::numbers::pi * f_hz / fs_hz));
}

Rational dt_integrator(double gain) { return {{0.0, gain}, {1.0, -1.0}}; }

Rational first_difference_tf() { return {{1.0, -1.0}, {1.0}}; }

Rational feedback(const Rational& forward, const Rational& loop) {
  // G / (1 + L) with L = G H given directly as the loop gain
  const Rational one = Rational::constant(1.0);
  const Rational denom = one + loop;
  return Rational{poly_mul(forward.num, denom.den), poly_mul(forward.den, denom.num)};
}

Rational proposed_ntf_composed(double k_dco_eff_hz, double fs_hz) {
  // w = I (c1 - w) + E  =>  w/E = 1 / (1 + I)
  const Rational integ = dt_integrator(k_dco_eff_hz / fs_hz);
  const Rational w_over_e = feedback(Rational::constant(1.0), integ);
  return (first_difference_tf() * w_over_e).normalized();
}

Rational proposed_ntf_closed_form(double k_dco_eff_hz, double fs_hz) {
  const double a = k_dco_eff_hz / fs_hz;
  return {{1.0, -2.0, 1.0}, {1.0, -(1.0 - a)}};
}

double ntf_pole(double k_dco_eff_hz, double fs_hz) { return 1.0 - k_dco_eff_hz / fs_hz; }

std::optional<std::string> ntf_stability_warning(double k_dco_eff_hz, double fs_hz) {
  const double r = k_dco_eff_hz / fs_hz;
  if (r > 0.0 && r < 2.0) return std::nullopt;
  return "k_dco/fs = " + std::to_string(r) + " is outside (0, 2): NTF pole " + std::to_string(1.0 - r) +
         " is not inside the unit circle";
}

namespace {
double to_db_clamped(double mag) {
  if (!(mag > 0.0)) return kDbFloor;
  return std::max(kDbFloor, 20.0 * std::log10(mag));
}
}  // namespace

double ntf_magnitude(double k_dco_eff_hz, double fs_hz, double f_hz) {
  if (!(fs_hz > 0.0)) throw ConfigError("fs must be positive");
  if (f_hz < 0.0 || f_hz > 0.5 * fs_hz) throw ConfigError("ntf_magnitude: f must be in [0, fs/2]");
  return to_db_clamped(std::abs(proposed_ntf_closed_form(k_dco_eff_hz, fs_hz).at_freq(f_hz, fs_hz)));
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

double stf_magnitude(double k_vco_eff_hz_per_v, double fs_hz, double f_hz) {
  if (!(fs_hz > 0.0)) throw ConfigError("fs must be positive");
  const double s = sinc(f_hz / fs_hz);
  return to_db_clamped(std::abs(k_vco_eff_hz_per_v / fs_hz * s * s));
}

}  // namespace vcoadc
