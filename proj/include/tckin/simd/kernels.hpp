#pragma once

#include <cstddef>

// Dense double-precision inner loops used by the autodiff tape.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant compiled in its own translation unit. The active table is
// picked once per process from CPUID; TCKIN_SIMD=scalar in the environment
// forces the reference path. The two tables agree to rounding (FMA contracts
// and reassociated sums), which tests/unit/test_simd.cpp pins.

namespace tckin::simd {

enum class Isa { kScalar, kAvx2 };

struct Kernels {
  Isa isa;
  const char* name;

  // C[m×n] (+)= A[m×k] · B[k×n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                  bool accumulate);
  // C[m×n] (+)= A[k×m]ᵀ · B[k×n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                  bool accumulate);
  // C[m×n] (+)= A[m×k] · B[n×k]ᵀ
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                  bool accumulate);

  // y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  double (*dot)(std::size_t n, const double* x, const double* y);
  // out = x op y (out may alias x or y)
  void (*add)(std::size_t n, const double* x, const double* y, double* out);
  void (*sub)(std::size_t n, const double* x, const double* y, double* out);
  void (*mul)(std::size_t n, const double* x, const double* y, double* out);
  // out += x * y
  void (*mul_acc)(std::size_t n, const double* x, const double* y, double* out);
  // out = alpha * x
  void (*scale)(std::size_t n, double alpha, const double* x, double* out);
};

const Kernels& scalar_kernels();
/// AVX2+FMA table, or nullptr when the build or the CPU lacks support.
const Kernels* avx2_kernels();

/// Table used by the library. Chosen on first call.
const Kernels& active();
/// Overrides the runtime choice (tests, benchmarking). Falls back to scalar
/// when the requested ISA is unavailable.
void select(Isa isa);

}  // namespace tckin::simd
