#pragma once

#include <cstddef>

namespace vcoadc::kernels::detail {

std::size_t tune_scalar(const double* v, double* f, std::size_t n, const double* poly, std::size_t n_poly,
                        double f0, double k, double f_min);
void window_detrend_scalar(const double* x, const double* w, double mean, double* out, std::size_t n);
void accumulate_power_scalar(const double* c, double* acc, std::size_t n_bins);
double sum_scalar(const double* x, std::size_t n);
double dot_scalar(const double* a, const double* b, std::size_t n);

#ifdef VCOADC_HAVE_AVX2
std::size_t tune_avx2(const double* v, double* f, std::size_t n, const double* poly, std::size_t n_poly,
                      double f0, double k, double f_min);
void window_detrend_avx2(const double* x, const double* w, double mean, double* out, std::size_t n);
void accumulate_power_avx2(const double* c, double* acc, std::size_t n_bins);
double sum_avx2(const double* x, std::size_t n);
double dot_avx2(const double* a, const double* b, std::size_t n);
#endif

}  // namespace vcoadc::kernels::detail
