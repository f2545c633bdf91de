#pragma once
// Data-parallel inner loops. Each kernel has a scalar reference and, where
// the CPU supports it, an AVX2 variant selected at runtime. Variants perform
// the same IEEE operations in the same order, so results are bit-identical;
// reductions use four interleaved partial sums in both paths.

#include <cstddef>
#include <span>
#include <string_view>

namespace vcoadc::kernels {

enum class Isa { scalar, avx2 };

std::string_view to_string(Isa isa);

struct KernelTable {
  Isa isa;
  /// f[i] = f0 + k (v + v * horner(poly, v)), clamped below at f_min.
  /// Returns the number of clamped entries.
  std::size_t (*tune)(const double* v, double* f, std::size_t n, const double* poly, std::size_t n_poly,
                      double f0, double k, double f_min);
  /// out[i] = (x[i] - mean) * w[i]
  void (*window_detrend)(const double* x, const double* w, double mean, double* out, std::size_t n);
  /// acc[k] += re_k^2 + im_k^2 for interleaved complex input.
  void (*accumulate_power)(const double* interleaved, double* acc, std::size_t n_bins);
  double (*sum)(const double* x, std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);
};

const KernelTable& scalar_table();
/// nullptr when not compiled in or not supported by this CPU.
const KernelTable* avx2_table();

/// Kernels in use. Picks the widest supported ISA on first call unless the
/// VCOADC_ISA environment variable names one ("scalar", "avx2").
const KernelTable& active();
void select(Isa isa);

}  // namespace vcoadc::kernels
