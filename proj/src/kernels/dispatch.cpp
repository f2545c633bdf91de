#include <atomic>
#include <cstdlib>
#include <string>

#include "kernels_impl.hpp"
#include "vcoadc/kernels.hpp"
#include "vcoadc/types.hpp"

namespace vcoadc::kernels {

std::string_view to_string(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

namespace {

const KernelTable kScalar{Isa::scalar,         detail::tune_scalar, detail::window_detrend_scalar,
                          detail::accumulate_power_scalar, detail::sum_scalar, detail::dot_scalar};

#ifdef VCOADC_HAVE_AVX2
const KernelTable kAvx2{Isa::avx2,         detail::tune_avx2, detail::window_detrend_avx2,
                        detail::accumulate_power_avx2, detail::sum_avx2, detail::dot_avx2};
#endif

const KernelTable* pick_default() {
  if (const char* env = std::getenv("VCOADC_ISA")) {
    const std::string want(env);
    if (want == "scalar") return &kScalar;
    if (want == "avx2" && avx2_table()) return avx2_table();
  }
  if (const KernelTable* t = avx2_table()) return t;
  return &kScalar;
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{pick_default()};
  return table;
}

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

const KernelTable* avx2_table() {
#ifdef VCOADC_HAVE_AVX2
  static const bool supported = __builtin_cpu_supports("avx2");
  return supported ? &kAvx2 : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

void select(Isa isa) {
  if (isa == Isa::scalar) {
    current().store(&kScalar, std::memory_order_release);
    return;
  }
  const KernelTable* t = avx2_table();
  if (!t) throw ConfigError("AVX2 kernels are not available on this CPU");
  current().store(t, std::memory_order_release);
}

}  // namespace vcoadc::kernels
