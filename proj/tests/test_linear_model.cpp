#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "vcoadc/linear_model.hpp"
#include "vcoadc/types.hpp"

using namespace vcoadc;

namespace {

constexpr double kFs = 3.072e6;

void check_same_poly(const Poly& a, const Poly& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-13).scale(1.0));
}

// Oracle: impulse response of E -> y by running the loop's difference
// equations directly. theta[n] = theta[n-1] - a w[n-1]; w = theta + E;
// y = w[n] - w[n-1].
std::vector<double> simulated_impulse(double a, int n) {
  std::vector<double> y(n);
  double theta = 0, w_prev = 0;
  for (int i = 0; i < n; ++i) {
    theta -= a * w_prev;
    const double w = theta + (i == 0 ? 1.0 : 0.0);
    y[i] = w - w_prev;
    w_prev = w;
  }
  return y;
}

std::vector<double> impulse(const Rational& r, int n) {
  std::vector<double> y(n), x(n, 0.0);
  x[0] = 1.0;
  for (int i = 0; i < n; ++i) {
    double acc = 0;
    for (std::size_t k = 0; k < r.num.size() && static_cast<int>(k) <= i; ++k) acc += r.num[k] * x[i - k];
    for (std::size_t k = 1; k < r.den.size() && static_cast<int>(k) <= i; ++k) acc -= r.den[k] * y[i - k];
    y[i] = acc / r.den[0];
  }
  return y;
}

}  // namespace

TEST_CASE("rational arithmetic") {
  const Rational a{{1, 1}, {1, -0.5}};
  const Rational b{{2}, {1, 0.25}};
  const auto z = std::complex<double>(0.3, 0.8);
  CHECK(std::abs((a * b).at(z) - a.at(z) * b.at(z)) < 1e-12);
  CHECK(std::abs((a + b).at(z) - (a.at(z) + b.at(z))) < 1e-12);
  CHECK(std::abs((a - b).at(z) - (a.at(z) - b.at(z))) < 1e-12);
  CHECK(std::abs((a / b).at(z) - a.at(z) / b.at(z)) < 1e-12);
  const Rational s{{2, 4, 0}, {2, 1}};
  const Rational n = s.normalized();
  CHECK(n.num == Poly{1, 2});
  CHECK(n.den == Poly{1, 0.5});
}

TEST_CASE("composed loop reduces to the closed-form NTF coefficient by coefficient") {
  for (double k : {0.2 * kFs, 1.2e6, 1.6e6, kFs, 1.5 * kFs}) {
    CAPTURE(k);
    const Rational c = proposed_ntf_composed(k, kFs).normalized();
    const Rational f = proposed_ntf_closed_form(k, kFs).normalized();
    check_same_poly(c.num, f.num);
    check_same_poly(c.den, f.den);
    const Rational expect = Rational{{1, -2, 1}, {1, -(1 - k / kFs)}}.normalized();
    check_same_poly(f.num, expect.num);
    check_same_poly(f.den, expect.den);
  }
}

TEST_CASE("closed form impulse response equals the simulated difference equations") {
  for (double a : {0.39, 0.52, 1.0}) {
    const auto sim = simulated_impulse(a, 64);
    const auto cf = impulse(proposed_ntf_closed_form(a * kFs, kFs), 64);
    for (int i = 0; i < 64; ++i) CHECK(cf[i] == doctest::Approx(sim[i]).epsilon(1e-12).scale(1.0));
  }
}

TEST_CASE("NTF magnitude examples") {
  CHECK(ntf_magnitude(1.6e6, kFs, 0.0) == kDbFloor);
  CHECK(ntf_magnitude(kFs, kFs, kFs / 2) == doctest::Approx(20 * std::log10(4.0)));
  CHECK(ntf_pole(1.2e6, kFs) == doctest::Approx(1 - 1.2e6 / kFs));
  // double zero at DC: +40 dB/dec at low frequency
  const double d = ntf_magnitude(1.6e6, kFs, 1000.0) - ntf_magnitude(1.6e6, kFs, 100.0);
  CHECK(d == doctest::Approx(40.0).epsilon(1e-3));
  CHECK_THROWS_AS(ntf_magnitude(1.6e6, kFs, kFs), ConfigError);
}

TEST_CASE("pole outside the unit circle produces a warning") {
  CHECK_FALSE(ntf_stability_warning(1.6e6, kFs).has_value());
  CHECK(ntf_stability_warning(2.5 * kFs, kFs).has_value());
  CHECK(ntf_stability_warning(0.0, kFs).has_value());
}

TEST_CASE("STF magnitude") {
  const double k = 42e6;
  CHECK(stf_magnitude(k, kFs, 0.0) == doctest::Approx(20 * std::log10(k / kFs)));
  CHECK(stf_magnitude(k, kFs, kFs) == kDbFloor);
  // sinc^2(f/fs) at 20 kHz: closed form -0.00121 dB
  const double x = std::numbers::pi * 20e3 / kFs;
  const double droop = 40 * std::log10(std::sin(x) / x);
  CHECK(stf_magnitude(k, kFs, 20e3) - stf_magnitude(k, kFs, 0.0) == doctest::Approx(droop).epsilon(1e-9));
  CHECK(std::abs(droop) < 0.0013);
  CHECK(sinc(0.0) == 1.0);
  CHECK(std::abs(sinc(1.0)) < 1e-15);
}
