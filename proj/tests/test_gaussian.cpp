#include <doctest.h>

#include <cmath>

#include "seqmim/gaussian_measure.hpp"
#include "seqmim/zoo.hpp"

using namespace seqmim;

namespace {

struct Scalar {
  ZooInstance z = ridge_instance(1.0);
  FixedStatistics fixed = compute_fixed_statistics(z.nu, z.spec.dims);
  OrderParameters p = zero_order_parameters(z.spec.dims);

  Scalar(double q, double theta) {
    p.q(0, 0)(0, 0) = q;
    p.theta(0, 0)(0, 0) = theta;
    p.V(0, 0)(0, 0) = 1.0;
  }
};

bool within(double est, double se, double truth, double sigmas = 3.0) {
  return std::abs(est - truth) <= sigmas * se + 1e-14;
}

}  // namespace

TEST_SUITE("gaussian_measure") {

TEST_CASE("conditional channel of the scalar example") {
  Scalar s(1.0, 0.5);
  const auto ch = energetic_channel(s.p, s.fixed, {0});
  CHECK(ch.tokens[0].mean_map(0, 0) == doctest::Approx(0.5));
  CHECK(ch.tokens[0].schur(0, 0) == doctest::Approx(0.75));
}

TEST_CASE("theta zero decouples Y from Xi") {
  Scalar s(0.3, 0.0);
  const auto ch = energetic_channel(s.p, s.fixed, {0});
  CHECK(ch.tokens[0].mean_map(0, 0) == 0.0);
  CHECK(ch.tokens[0].schur(0, 0) == 1.0);
  Scalar zero_q(0.0, 0.0);
  const auto ch0 = energetic_channel(zero_q.p, zero_q.fixed, {0});
  CHECK(ch0.tokens[0].singular_q);
  CHECK(ch0.tokens[0].schur(0, 0) == 1.0);
}

TEST_CASE("singular q with nonzero theta is a degenerate overlap") {
  Scalar s(0.0, 0.2);
  try {
    energetic_channel(s.p, s.fixed, {0});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::degenerate_overlap);
  }
}

TEST_CASE("energetic moments at 3 sigma") {
  Scalar s(1.0, 0.5);
  McPlan plan;
  plan.n_samples = 1000000;
  plan.seed = 77;
  plan.antithetic = false;
  const auto est = expect_over_measure(
      [](int, const EnergeticDraw& dr, double* out) {
        const double xi = dr.xi(0, 0), y = dr.Y(0, 0);
        out[0] = 1.0;
        out[1] = y;
        out[2] = xi * xi;
        out[3] = xi * y;
        out[4] = y * y;
      },
      5, s.z.spec, s.p, s.fixed, plan);
  CHECK(est.mean(0) == 1.0);
  CHECK(est.stderr_(0) == 0.0);
  CHECK(within(est.mean(1), est.stderr_(1), 0.0));
  CHECK(within(est.mean(2), est.stderr_(2), 1.0));
  CHECK(within(est.mean(3), est.stderr_(3), 0.5));
  CHECK(within(est.mean(4), est.stderr_(4), 1.0));
}

TEST_CASE("joint moments at 3 sigma") {
  Scalar s(0.8, 0.6);
  McPlan plan;
  plan.n_samples = 1000000;
  plan.seed = 78;
  const auto est = expect_over_joint(
      [](int, const JointDraw& dr, double* out) {
        out[0] = dr.X(0, 0) * dr.X(0, 0);
        out[1] = dr.X(0, 0) * dr.Y(0, 0);
        out[2] = dr.Y(0, 0) * dr.Y(0, 0);
      },
      3, s.z.spec, s.p, s.fixed, plan);
  CHECK(within(est.mean(0), est.stderr_(0), 0.8));
  CHECK(within(est.mean(1), est.stderr_(1), 0.6));
  CHECK(within(est.mean(2), est.stderr_(2), 1.0));
}

TEST_CASE("joint sampler limiting cases") {
  Scalar un(0.5, 0.0);
  McPlan plan;
  plan.n_samples = 200000;
  const auto est = expect_over_joint([](int, const JointDraw& dr, double* out) { out[0] = dr.X(0, 0) * dr.Y(0, 0); },
                                     1, un.z.spec, un.p, un.fixed, plan);
  CHECK(within(est.mean(0), est.stderr_(0), 0.0));

  Scalar same(1.0, 1.0);
  plan.n_samples = 100;
  for (const auto& dr : sample_joint_xy(same.p, same.fixed, {0}, plan))
    CHECK(std::abs(dr.X(0, 0) - dr.Y(0, 0)) <= 1e-7 * (1 + std::abs(dr.Y(0, 0))));

  Scalar bad(1.0, 2.0);
  CHECK_THROWS_AS(joint_channel(bad.p, bad.fixed, {0}), Error);
}

TEST_CASE("antithetic pairing on raw normals") {
  McPlan plan;
  plan.n_samples = 1000;
  const auto z = core_normals(3, plan, 0, 1000);
  for (std::size_t i = 0; i + 1 < z.size(); i += 2) CHECK((z[i] + z[i + 1]).norm() == 0.0);
}

TEST_CASE("streams are deterministic and independent of the worker count") {
  Scalar s(0.7, 0.3);
  McPlan plan;
  plan.n_samples = 50001;
  plan.seed = 4;
  auto f = [](int, const EnergeticDraw& dr, double* out) {
    out[0] = std::tanh(dr.Y(0, 0) + dr.xi(0, 0) + 0.3);
    out[1] = dr.Y(0, 0) * dr.Y(0, 0) * dr.xi(0, 0);
  };
  const auto a = expect_over_measure(f, 2, s.z.spec, s.p, s.fixed, plan);
  const auto b = expect_over_measure(f, 2, s.z.spec, s.p, s.fixed, plan);
  plan.workers = 3;
  const auto c = expect_over_measure(f, 2, s.z.spec, s.p, s.fixed, plan);
  for (int i = 0; i < 2; ++i) {
    CHECK(a.mean(i) == b.mean(i));
    CHECK(a.mean(i) == c.mean(i));
    CHECK(a.stderr_(i) == c.stderr_(i));
  }
  plan.workers = 1;
  plan.seed = 5;
  const auto e = expect_over_measure(f, 2, s.z.spec, s.p, s.fixed, plan);
  CHECK(a.mean(0) != e.mean(0));
}

TEST_CASE("crn off changes the stream per iteration") {
  McPlan plan;
  plan.n_samples = 4;
  plan.crn = false;
  const auto a = core_normals(2, plan, 0, 4);
  plan.iteration = 1;
  const auto b = core_normals(2, plan, 0, 4);
  CHECK(a[0] != b[0]);
  plan.crn = true;
  const auto c = core_normals(2, plan, 0, 4);
  plan.iteration = 7;
  CHECK(c[0] == core_normals(2, plan, 0, 4)[0]);
}

TEST_CASE("standard error shrinks at the 1/sqrt(n) rate") {
  Scalar s(1.0, 0.5);
  auto f = [](int, const EnergeticDraw& dr, double* out) { out[0] = dr.Y(0, 0) * dr.Y(0, 0) + dr.xi(0, 0); };
  McPlan plan;
  plan.antithetic = false;
  plan.n_samples = 40000;
  const auto a = expect_over_measure(f, 1, s.z.spec, s.p, s.fixed, plan);
  plan.n_samples = 80000;
  const auto b = expect_over_measure(f, 1, s.z.spec, s.p, s.fixed, plan);
  const double ratio = a.stderr_(0) / b.stderr_(0);
  CHECK(ratio >= std::sqrt(2.0) * 0.8);
  CHECK(ratio <= std::sqrt(2.0) * 1.2);
}

TEST_CASE("Gauss-Hermite integrates polynomials exactly") {
  std::vector<double> x, w;
  gauss_hermite_rule(10, x, w);
  double m0 = 0, m2 = 0, m4 = 0, m6 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    m0 += w[i];
    m2 += w[i] * x[i] * x[i];
    m4 += w[i] * std::pow(x[i], 4);
    m6 += w[i] * std::pow(x[i], 6);
  }
  CHECK(m0 == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(m2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m4 == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(m6 == doctest::Approx(15.0).epsilon(1e-12));

  McPlan plan;
  plan.method = QuadratureMethod::gauss_hermite;
  plan.gh_order = 6;
  const auto est = expect_core(2, 1, {0.25, 0.75},
                               [](int c, const double* z, double* out) { out[0] = (c + 1) * z[0] * z[0] * z[1] * z[1]; },
                               plan);
  CHECK(est.mean(0) == doctest::Approx(0.25 + 1.5).epsilon(1e-12));
}

TEST_CASE("non-finite integrands are reported") {
  McPlan plan;
  plan.n_samples = 100;
  try {
    expect_core(1, 1, {1.0}, [](int, const double* z, double* out) { out[0] = z[0] > 1.0 ? NAN : 0.0; }, plan);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::non_finite);
    CHECK(std::string(e.what()).find("sample") != std::string::npos);
  }
}

}  // TEST_SUITE
