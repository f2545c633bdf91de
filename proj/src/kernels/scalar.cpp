#include "kernels_impl.hpp"

namespace vcoadc::kernels::detail {

std::size_t tune_scalar(const double* v, double* f, std::size_t n, const double* poly, std::size_t n_poly,
                        double f0, double k, double f_min) {
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = v[i];
    double acc = 0.0;
    for (std::size_t j = n_poly; j-- > 0;) acc = (acc + poly[j]) * x;
    const double y = f0 + k * (x + acc * x);
    if (!(y >= f_min)) {
      f[i] = f_min;
      ++clamped;
    } else {
      f[i] = y;
    }
  }
  return clamped;
}

void window_detrend_scalar(const double* x, const double* w, double mean, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = (x[i] - mean) * w[i];
}

void accumulate_power_scalar(const double* c, double* acc, std::size_t n_bins) {
  for (std::size_t k = 0; k < n_bins; ++k) {
    const double re = c[2 * k];
    const double im = c[2 * k + 1];
    acc[k] += re * re + im * im;
  }
}

double sum_scalar(const double* x, std::size_t n) {
  double lane[4] = {0.0, 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) lane[i & 3] += x[i];
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double lane[4] = {0.0, 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) lane[i & 3] += a[i] * b[i];
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

}  // namespace vcoadc::kernels::detail
