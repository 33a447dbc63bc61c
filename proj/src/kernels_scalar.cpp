#include "seqmim/kernels.hpp"

namespace seqmim {

namespace {

double dot(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

double wdot(const double* x, const double* y, const double* w, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i] * w[i];
  return s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void axpy_prod(double a, const double* x, const double* y, double* acc, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) acc[i] += a * x[i] * y[i];
}

const KernelTable table{"scalar", dot, wdot, axpy, axpy_prod};

}  // namespace

const KernelTable& scalar_kernels() { return table; }

}  // namespace seqmim
