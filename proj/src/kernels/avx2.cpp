#include <immintrin.h>

#include "kernels_impl.hpp"

namespace vcoadc::kernels::detail {

std::size_t tune_avx2(const double* v, double* f, std::size_t n, const double* poly, std::size_t n_poly,
                      double f0, double k, double f_min) {
  const __m256d vf0 = _mm256_set1_pd(f0);
  const __m256d vk = _mm256_set1_pd(k);
  const __m256d vmin = _mm256_set1_pd(f_min);
  std::size_t clamped = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d x = _mm256_loadu_pd(v + i);
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t j = n_poly; j-- > 0;) acc = _mm256_mul_pd(_mm256_add_pd(acc, _mm256_set1_pd(poly[j])), x);
    const __m256d y = _mm256_add_pd(vf0, _mm256_mul_pd(vk, _mm256_add_pd(x, _mm256_mul_pd(acc, x))));
    // NaN compares as "not >=", same as the scalar path
    const __m256d low = _mm256_cmp_pd(y, vmin, _CMP_NGE_UQ);
    _mm256_storeu_pd(f + i, _mm256_blendv_pd(y, vmin, low));
    clamped += static_cast<std::size_t>(__builtin_popcount(static_cast<unsigned>(_mm256_movemask_pd(low))));
  }
  return clamped + tune_scalar(v + i, f + i, n - i, poly, n_poly, f0, k, f_min);
}

void window_detrend_avx2(const double* x, const double* w, double mean, double* out, std::size_t n) {
  const __m256d vm = _mm256_set1_pd(mean);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_sub_pd(_mm256_loadu_pd(x + i), vm), _mm256_loadu_pd(w + i)));
  window_detrend_scalar(x + i, w + i, mean, out + i, n - i);
}

void accumulate_power_avx2(const double* c, double* acc, std::size_t n_bins) {
  std::size_t k = 0;
  for (; k + 4 <= n_bins; k += 4) {
    const __m256d a = _mm256_loadu_pd(c + 2 * k);      // re0 im0 re1 im1
    const __m256d b = _mm256_loadu_pd(c + 2 * k + 4);  // re2 im2 re3 im3
    const __m256d p = _mm256_hadd_pd(_mm256_mul_pd(a, a), _mm256_mul_pd(b, b));  // p0 p2 p1 p3
    const __m256d ordered = _mm256_permute4x64_pd(p, 0b11011000);
    _mm256_storeu_pd(acc + k, _mm256_add_pd(_mm256_loadu_pd(acc + k), ordered));
  }
  accumulate_power_scalar(c + 2 * k, acc + k, n_bins - k);
}

namespace {

double finish_lanes(__m256d v, const double* tail_a, const double* tail_b, std::size_t tail) {
  alignas(32) double lane[4];
  _mm256_store_pd(lane, v);
  for (std::size_t i = 0; i < tail; ++i) lane[i] += tail_b ? tail_a[i] * tail_b[i] : tail_a[i];
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

}  // namespace

double sum_avx2(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  return finish_lanes(acc, x + i, nullptr, n - i);
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  return finish_lanes(acc, a + i, b + i, n - i);
}

}  // namespace vcoadc::kernels::detail
