#include <doctest.h>

#include <random>

#include "seqmim/kernels.hpp"
#include "seqmim/linalg.hpp"

using namespace seqmim;

TEST_SUITE("linalg") {

TEST_CASE("sym_sqrt examples") {
  Matrix A(2, 2);
  A << 4, 0, 0, 9;
  Matrix B(2, 2);
  B << 2, 0, 0, 3;
  CHECK((sym_sqrt(A) - B).norm() <= 1e-14);
  CHECK((sym_sqrt(Matrix::Identity(3, 3)) - Matrix::Identity(3, 3)).norm() <= 1e-14);
}

TEST_CASE("sym_sqrt round trip and commutation") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 20; ++trial) {
    Matrix M(3, 3);
    for (int i = 0; i < 9; ++i) M.data()[i] = n01(rng);
    const Matrix A = M.transpose() * M;
    const Matrix B = sym_sqrt(A);
    CHECK((B * B - A).norm() <= 1e-9 * A.norm());
    CHECK((B * A - A * B).norm() <= 1e-9);
    CHECK(max_asymmetry(B) <= 1e-12);
  }
}

TEST_CASE("sym_sqrt errors") {
  Matrix ns(2, 2);
  ns << 1, 0.5, 0, 1;
  CHECK_THROWS_AS(sym_sqrt(ns), Error);
  Matrix neg(2, 2);
  neg << 1, 0, 0, -1e-3;
  CHECK_THROWS_AS(sym_sqrt(neg), Error);
  Matrix tiny(2, 2);
  tiny << 1, 0, 0, -1e-10;
  CHECK(sym_sqrt(tiny)(1, 1) == 0.0);
}

TEST_CASE("pseudo inverses on singular blocks") {
  Matrix A = Matrix::Zero(2, 2);
  A(0, 0) = 4;
  const Matrix S = sym_inv_sqrt(A);
  CHECK(S(0, 0) == doctest::Approx(0.5));
  CHECK(S(1, 1) == 0.0);
  CHECK((A * sym_pinv(A) * A - A).norm() <= 1e-12);
  CHECK((range_projector(A) - Matrix(Vector::Unit(2, 0) * Vector::Unit(2, 0).transpose())).norm() <= 1e-12);
}

}  // TEST_SUITE

TEST_SUITE("kernels") {

TEST_CASE("simd kernels match the scalar reference") {
  const auto& ref = scalar_kernels();
  const KernelTable* simd = simd_kernels();
  if (!simd) {
    MESSAGE("no SIMD kernels on this machine");
    return;
  }
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n01;
  for (std::size_t n : {0ul, 1ul, 3ul, 4ul, 7ul, 8ul, 17ul, 64ul, 1001ul}) {
    std::vector<double> x(n), y(n), w(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = n01(rng), y[i] = n01(rng), w[i] = n01(rng);
    double scale = 1.0;
    for (std::size_t i = 0; i < n; ++i) scale += std::abs(x[i] * y[i] * (1 + std::abs(w[i])));
    CHECK(std::abs(ref.dot(x.data(), y.data(), n) - simd->dot(x.data(), y.data(), n)) <= 1e-13 * scale);
    CHECK(std::abs(ref.wdot(x.data(), y.data(), w.data(), n) - simd->wdot(x.data(), y.data(), w.data(), n)) <=
          1e-13 * scale);
    std::vector<double> a1(w), a2(w);
    ref.axpy(0.7, x.data(), a1.data(), n);
    simd->axpy(0.7, x.data(), a2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(a1[i] - a2[i]) <= 1e-15 * (1 + std::abs(a1[i])));
    a1 = w;
    a2 = w;
    ref.axpy_prod(-1.3, x.data(), y.data(), a1.data(), n);
    simd->axpy_prod(-1.3, x.data(), y.data(), a2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(a1[i] - a2[i]) <= 1e-14 * (1 + std::abs(a1[i])));
  }
}

TEST_CASE("kernel selection") {
  use_kernels("scalar");
  CHECK(std::string(kernels().name) == scalar_kernels().name);
  if (simd_kernels()) {
    use_kernels("simd");
    CHECK(std::string(kernels().name) == simd_kernels()->name);
  }
  CHECK_THROWS(use_kernels("nope"));
}

}  // TEST_SUITE
