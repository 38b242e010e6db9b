#include <atomic>
#include <cstdlib>
#include <string_view>

#include "tckin/simd/kernels.hpp"

namespace tckin::simd {

#if defined(TCKIN_HAVE_AVX2)
const Kernels& avx2_table();
#endif

const Kernels* avx2_kernels() {
#if defined(TCKIN_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  return supported ? &avx2_table() : nullptr;
#else
  return nullptr;
#endif
}

namespace {

const Kernels* initial_choice() {
  if (const char* env = std::getenv("TCKIN_SIMD"); env && std::string_view(env) == "scalar") {
    return &scalar_kernels();
  }
  if (const Kernels* k = avx2_kernels()) return k;
  return &scalar_kernels();
}

std::atomic<const Kernels*>& current() {
  static std::atomic<const Kernels*> ptr{initial_choice()};
  return ptr;
}

}  // namespace

const Kernels& active() { return *current().load(std::memory_order_relaxed); }

void select(Isa isa) {
  const Kernels* k = &scalar_kernels();
  if (isa == Isa::kAvx2 && avx2_kernels()) k = avx2_kernels();
  current().store(k, std::memory_order_relaxed);
}

}  // namespace tckin::simd
