#include <arm_neon.h>

#include "seqmim/kernels.hpp"

namespace seqmim {

namespace {

double dot(const double* x, const double* y, std::size_t n) {
  float64x2_t a0 = vdupq_n_f64(0.0), a1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    a0 = vfmaq_f64(a0, vld1q_f64(x + i), vld1q_f64(y + i));
    a1 = vfmaq_f64(a1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(a0, a1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

double wdot(const double* x, const double* y, const double* w, std::size_t n) {
  float64x2_t a0 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) a0 = vfmaq_f64(a0, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)), vld1q_f64(w + i));
  double s = vaddvq_f64(a0);
  for (; i < n; ++i) s += x[i] * y[i] * w[i];
  return s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void axpy_prod(double a, const double* x, const double* y, double* acc, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(acc + i, vfmaq_f64(vld1q_f64(acc + i), vmulq_f64(va, vld1q_f64(x + i)), vld1q_f64(y + i)));
  for (; i < n; ++i) acc[i] += a * x[i] * y[i];
}

const KernelTable table{"neon", dot, wdot, axpy, axpy_prod};

}  // namespace

namespace detail {
const KernelTable* neon_table() { return &table; }
}  // namespace detail

}  // namespace seqmim
