#pragma once
// Discrete-time linear model of the proposed loop: the quantizer is an
// additive error source, oscillators are integrators and the sampler is a
// unit delay. Transfer functions are rational functions in z^-1.

#include <complex>
#include <optional>
#include <string>
#include <vector>

namespace vcoadc {

/// Polynomial in z^-1, coefficient i multiplies z^-i.
using Poly = std::vector<double>;

Poly poly_mul(const Poly& a, const Poly& b);
Poly poly_add(const Poly& a, const Poly& b);

/// num(z^-1) / den(z^-1), den[0] normalised to 1 by normalized().
struct Rational {
  Poly num{0.0};
  Poly den{1.0};

  static Rational constant(double c) { return {{c}, {1.0}}; }

  Rational operator*(const Rational& o) const;
  Rational operator+(const Rational& o) const;
  Rational operator-(const Rational& o) const;
  Rational operator/(const Rational& o) const;
  /// Scales so den[0] = 1 and drops trailing zero coefficients.
  Rational normalized() const;
  std::complex<double> at(std::complex<double> z) const;
  std::complex<double> at_freq(double f_hz, double fs_hz) const;
};

/// a z^-1 / (1 - z^-1): accumulator with gain a per sample (forward Euler).
Rational dt_integrator(double gain);
/// 1 - z^-1
Rational first_difference_tf();
/// G / (1 + G H)
Rational feedback(const Rational& forward, const Rational& loop);

/// E -> y of the proposed loop, composed from its blocks: stage-2
/// integrator with gain k_dco/fs driven by (c1 - w), w = phase + E,
/// y = (1 - z^-1) w.
Rational proposed_ntf_composed(double k_dco_eff_hz, double fs_hz);
/// (1 - z^-1)^2 / (1 - (1 - k/fs) z^-1)
Rational proposed_ntf_closed_form(double k_dco_eff_hz, double fs_hz);

inline constexpr double kDbFloor = -300.0;

/// |NTF| at f in dB, clamped at kDbFloor.
double ntf_magnitude(double k_dco_eff_hz, double fs_hz, double f_hz);
/// Real pole of the NTF, 1 - k/fs.
double ntf_pole(double k_dco_eff_hz, double fs_hz);
/// Message when k/fs is outside (0, 2), i.e. the pole is not inside the
/// unit circle.
std::optional<std::string> ntf_stability_warning(double k_dco_eff_hz, double fs_hz);

/// sin(pi x) / (pi x), 1 at 0.
double sinc(double x);
/// |k_vco/fs sinc^2(f/fs)| in dB (counts per volt), clamped at kDbFloor.
double stf_magnitude(double k_vco_eff_hz_per_v, double fs_hz, double f_hz);

}  // namespace vcoadc
