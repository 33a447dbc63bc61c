#pragma once

// Dense vector kernels used by the GAMP, rBP and ERM inner loops. A scalar
// reference implementation always exists; AVX2 (x86-64) or NEON (aarch64)
// variants are picked at runtime when the CPU supports them.

#include <cstddef>
#include <string>
#include <vector>

namespace seqmim {

struct KernelTable {
  const char* name;
  // sum_i x[i] y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  // sum_i x[i] y[i] w[i]
  double (*wdot)(const double* x, const double* y, const double* w, std::size_t n);
  // y[i] += a x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // acc[i] += a x[i] y[i]
  void (*axpy_prod)(double a, const double* x, const double* y, double* acc, std::size_t n);
};

const KernelTable& scalar_kernels();
// nullptr when the variant was not compiled in or the CPU lacks it.
const KernelTable* simd_kernels();

// Active table. SEQMIM_SIMD=scalar in the environment forces the reference.
const KernelTable& kernels();
void use_kernels(const std::string& name);  // "scalar" or "simd"
std::vector<std::string> available_kernels();

namespace detail {
const KernelTable* avx2_table();
const KernelTable* neon_table();
}  // namespace detail

}  // namespace seqmim
