#include <doctest.h>

#include <random>

#include "seqmim/losses.hpp"
#include "seqmim/model.hpp"
#include "seqmim/zoo.hpp"

using namespace seqmim;

namespace {

SpectralAtom atom(double w, double g, double tau, double pi) {
  SpectralAtom a;
  a.weight = w;
  a.gamma = Vector::Constant(1, g);
  a.tau = Vector::Constant(1, tau);
  a.pi = Vector::Constant(1, pi);
  return a;
}

Dimensions scalar_dims() {
  Dimensions d;
  d.K = {1};
  return d;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("fixed statistics of one atom") {
  SpectralMeasure nu{{atom(1.0, 1.0, 0.0, 1.0)}};
  const auto fs = compute_fixed_statistics(nu, scalar_dims());
  CHECK(fs.rho(0, 0)(0, 0) == 1.0);
  CHECK(fs.m_star(0, 0)(0) == 0.0);
}

TEST_CASE("opposite teacher atoms") {
  SpectralMeasure nu{{atom(0.5, 1.0, 0.0, 1.0), atom(0.5, 1.0, 0.0, -1.0)}};
  const auto fs = compute_fixed_statistics(nu, scalar_dims());
  CHECK(fs.rho(0, 0)(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(fs.m_star(0, 0)(0) == 0.0);
}

TEST_CASE("fixed statistics are linear in nu") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  Dimensions dims;
  dims.L = 2;
  dims.t = 2;
  dims.K = {2, 1};
  auto random_measure = [&](int atoms) {
    SpectralMeasure nu;
    for (int i = 0; i < atoms; ++i) {
      SpectralAtom a;
      a.weight = 1.0 / atoms;
      a.gamma = Vector(3);
      a.tau = Vector(3);
      for (int f = 0; f < 3; ++f) {
        a.gamma(f) = std::abs(n01(rng));
        a.tau(f) = n01(rng);
      }
      a.pi = Vector(2);
      a.pi << n01(rng), n01(rng);
      nu.atoms.push_back(a);
    }
    return nu;
  };
  const auto nu1 = random_measure(5), nu2 = random_measure(3);
  SpectralMeasure mix;
  for (auto a : nu1.atoms) {
    a.weight *= 0.5;
    mix.atoms.push_back(a);
  }
  for (auto a : nu2.atoms) {
    a.weight *= 0.5;
    mix.atoms.push_back(a);
  }
  const auto f1 = compute_fixed_statistics(nu1, dims), f2 = compute_fixed_statistics(nu2, dims);
  const auto fm = compute_fixed_statistics(mix, dims);
  for (int f = 0; f < 3; ++f) {
    CHECK((fm.rho.at(f) - 0.5 * (f1.rho.at(f) + f2.rho.at(f))).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((fm.m_star.at(f) - 0.5 * (f1.m_star.at(f) + f2.m_star.at(f))).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(max_asymmetry(fm.rho.at(f)) == 0.0);
  }
}

TEST_CASE("extracted measure reproduces brute-force teacher statistics") {
  const int d = 200;
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01;
  Matrix G(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) G(i, j) = n01(rng);
  const Matrix Q = Eigen::HouseholderQR<Matrix>(G).householderQ();
  ClusterIndex index({2});
  std::vector<Matrix> covs;
  std::vector<Vector> means;
  for (int k = 0; k < 2; ++k) {
    Vector g(d);
    for (int i = 0; i < d; ++i) g(i) = 0.5 + std::abs(n01(rng)) + k * (i % 3);
    covs.push_back(Q * g.asDiagonal() * Q.transpose());
    Vector mu(d);
    for (int i = 0; i < d; ++i) mu(i) = n01(rng) / std::sqrt(double(d));
    means.push_back(mu);
  }
  Matrix w(d, 2);
  for (int i = 0; i < d; ++i) w(i, 0) = n01(rng), w(i, 1) = n01(rng);
  const auto nu = extract_spectral_measure(index, covs, means, w);
  Dimensions dims;
  dims.t = 2;
  dims.K = {2};
  const auto fs = compute_fixed_statistics(nu, dims);
  for (int k = 0; k < 2; ++k) {
    const Matrix rho = w.transpose() * covs[k] * w / d;
    const Vector ms = w.transpose() * means[k] / std::sqrt(double(d));
    CHECK((fs.rho(0, k) - rho).cwiseAbs().maxCoeff() <= 1e-10 * (1 + rho.cwiseAbs().maxCoeff()));
    CHECK((fs.m_star(0, k) - ms).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("cluster maps are total") {
  ClusterIndex index({2, 3});
  CHECK(index.size() == 5);
  CHECK(index.flat(1, 2) == 4);
  CHECK_THROWS_AS(ClusterMap<double>(index, std::vector<double>{1, 2, 3}), Error);
  ClusterMap<double> m(index, 0.0);
  m(1, 1) = 2.0;
  CHECK(m.at(3) == 2.0);
}

TEST_CASE("validate_spec") {
  auto z = ridge_instance(1.0);
  CHECK(validate_spec(z.spec).ok());

  SUBCASE("class law not normalized") {
    z.spec.law.probs = {0.9};
    const auto rep = validate_spec(z.spec);
    REQUIRE(rep.violations.size() == 1);
    CHECK(rep.violations[0].rfind("ClassLaw", 0) == 0);
  }
  SUBCASE("wrong gradient") {
    auto good = z.spec.loss.grad_X;
    z.spec.loss.grad_X = [good](const Matrix& Y, const Matrix& X, const Matrix& v, const ClassTuple& c) {
      return Matrix(1.5 * good(Y, X, v, c));
    };
    z.spec.loss.prox_closed_form = nullptr;
    const auto rep = validate_spec(z.spec);
    REQUIRE(!rep.ok());
    bool named = false;
    for (const auto& s : rep.violations) named |= s.find("grad_X") != std::string::npos;
    CHECK(named);
  }
}

TEST_CASE("pack round trip and lerp") {
  Dimensions dims;
  dims.L = 2;
  dims.r = 2;
  dims.t = 1;
  dims.K = {1, 2};
  auto p = zero_order_parameters(dims);
  p.q(1, 1) = Matrix::Identity(2, 2);
  auto o = zero_order_parameters(dims);
  const auto h = lerp(p, o, 0.25);
  CHECK(h.q(1, 1)(0, 0) == doctest::Approx(0.75));
  CHECK(pack(p).size() == static_cast<long>(pack_labels(p).size()));
}

}  // TEST_SUITE
