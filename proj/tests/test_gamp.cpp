#include <doctest.h>

#include <cmath>
#include <random>

#include "seqmim/erm.hpp"
#include "seqmim/gamp.hpp"
#include "seqmim/io.hpp"
#include "seqmim/losses.hpp"
#include "seqmim/zoo.hpp"

using namespace seqmim;

namespace {

Matrix ridge_normal_equations(const Dataset& ds, double lambda) {
  const int d = ds.d;
  Matrix X(ds.n * ds.L, d);
  Vector y(ds.n * ds.L);
  for (long mu = 0; mu < ds.n; ++mu)
    for (int l = 0; l < ds.L; ++l) {
      X.row(mu * ds.L + l) = Eigen::Map<const Vector>(ds.x(mu, l), d).transpose();
      y(mu * ds.L + l) = ds.labels(mu)(l, 0);
    }
  const Matrix A = X.transpose() * X / d + lambda * Matrix::Identity(d, d);
  return A.ldlt().solve(X.transpose() * y / std::sqrt(double(d)));
}

}  // namespace

TEST_SUITE("gamp") {

TEST_CASE("no samples leaves the regularizer") {
  const auto z = ridge_instance(1.0);
  const auto ds = generate_dataset(z.spec, z.nu, 30, 0, 1);
  GampOptions opts;
  opts.damping = 0.0;
  const auto res = gamp_run(ds, z.spec, z.spec.loss, opts);
  CHECK(res.w_hat.norm() == 0.0);
  CHECK(res.converged);
  CHECK(res.iterations == 1);
  for (const auto& c : res.state.c_hat) CHECK(c(0, 0) == doctest::Approx(1.0 / z.spec.dims.lambda));
  RbpOptions ro;
  CHECK(rbp_run(ds, z.spec, z.spec.loss, ro).w_hat.norm() == 0.0);
}

TEST_CASE("quadratic loss reaches the ridge solution") {
  for (const char* name : {"ridge", "multitoken"}) {
    CAPTURE(name);
    const auto z = make_instance(name, 2.0);
    const auto ds = generate_dataset(z.spec, z.nu, 40, 80, 5);
    GampOptions opts;
    opts.tol = 1e-13;
    opts.max_iters = 3000;
    const auto res = gamp_run(ds, z.spec, z.spec.loss, opts);
    CHECK(res.converged);
    const Matrix w = ridge_normal_equations(ds, z.spec.dims.lambda);
    CHECK((res.w_hat - w).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((ridge_solve_cg(ds, z.spec, 1e-13) - w).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("rBP agrees with GAMP") {
  const auto z = ridge_instance(2.0);
  const int d = 40;
  const auto ds = generate_dataset(z.spec, z.nu, d, 80, 6);
  GampOptions go;
  go.tol = 1e-12;
  go.max_iters = 2000;
  RbpOptions ro;
  ro.max_iters = 2000;
  const auto g = gamp_run(ds, z.spec, z.spec.loss, go);
  const auto b = rbp_run(ds, z.spec, z.spec.loss, ro);
  CHECK(b.converged);
  const double rms = std::sqrt((g.w_hat - b.w_hat).squaredNorm() / d);
  CHECK(rms <= 5.0 / std::sqrt(double(d)));
}

TEST_CASE("rBP on duplicated samples") {
  const auto z = ridge_instance(1.0);
  auto ds = generate_dataset(z.spec, z.nu, 20, 10, 7);
  // make sample 1 a copy of sample 0; the two factors are interchangeable
  std::copy(ds.x(0, 0), ds.x(0, 0) + ds.d, ds.x(1, 0));
  ds.y[1] = ds.y[0];
  ds.c[1] = ds.c[0];
  auto swapped = ds;
  RbpOptions ro;
  ro.max_iters = 50;
  const auto a = rbp_run(ds, z.spec, z.spec.loss, ro);
  CHECK(a.w_hat.allFinite());
  // permuting identical factors leaves the estimate unchanged
  std::swap_ranges(swapped.x(0, 0), swapped.x(0, 0) + ds.d, swapped.x(2, 0));
  std::swap(swapped.y[0], swapped.y[2]);
  std::swap(swapped.c[0], swapped.c[2]);
  const auto b = rbp_run(swapped, z.spec, z.spec.loss, ro);
  CHECK((a.w_hat - b.w_hat).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("risk gradient against finite differences") {
  struct Case {
    std::string instance;
    std::string loss;
  };
  for (const auto& cs : std::vector<Case>{{"ridge", "square_v"}, {"logistic_gmm", "logistic"}, {"multitoken", ""}}) {
    CAPTURE(cs.instance);
    auto z = make_instance(cs.instance, 1.5);
    if (cs.loss == "square_v") {
      z.spec.loss_spec.name = "square_v";
      z.spec.loss_spec.params = {{"kappa", 0.8}};
      z.spec.loss = make_loss(z.spec.loss_spec, z.spec.dims);
    }
    const int d = 30;
    const auto ds = generate_dataset(z.spec, z.nu, d, 45, 8);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n01;
    Matrix w(d, z.spec.dims.r);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = n01(rng);
    const auto risk = empirical_risk(w, ds, z.spec, z.spec.loss);
    Matrix fd(d, z.spec.dims.r);
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      Matrix wp = w, wm = w;
      wp.data()[i] += h;
      wm.data()[i] -= h;
      fd.data()[i] = (empirical_risk(wp, ds, z.spec, z.spec.loss).value -
                      empirical_risk(wm, ds, z.spec, z.spec.loss).value) /
                     (2 * h);
    }
    CHECK((fd - risk.grad).norm() <= 1e-5 * risk.grad.norm());
    CHECK(gd_gradient_norm(w, ds, z.spec, z.spec.loss) == doctest::Approx(risk.grad.cwiseAbs().maxCoeff()));
  }
  auto z = ridge_instance(1.0);
  z.spec.loss_spec.name = "zero";
  z.spec.loss = make_loss(z.spec.loss_spec, z.spec.dims);
  const auto ds = generate_dataset(z.spec, z.nu, 20, 20, 1);
  CHECK(gd_gradient_norm(Matrix::Zero(20, 1), ds, z.spec, z.spec.loss) == 0.0);
}

TEST_CASE("GAMP fixed point is a critical point of the risk") {
  const auto z = gmm_instance("logistic", 2.0);
  const auto ds = generate_dataset(z.spec, z.nu, 200, 400, 11);
  GampOptions opts;
  opts.tol = 1e-12;
  opts.max_iters = 1000;
  const auto res = gamp_run(ds, z.spec, z.spec.loss, opts);
  CHECK(res.converged);
  const double g0 = gd_gradient_norm(Matrix::Zero(200, 1), ds, z.spec, z.spec.loss);
  CHECK(gd_gradient_norm(res.w_hat, ds, z.spec, z.spec.loss) <= 1e-4 * (1 + g0));
}

TEST_CASE("gamp_run is deterministic") {
  const auto z = multitoken_instance(1.0);
  const auto ds = generate_dataset(z.spec, z.nu, 60, 60, 12);
  GampOptions opts;
  opts.max_iters = 10;
  CHECK(gamp_run(ds, z.spec, z.spec.loss, opts).w_hat == gamp_run(ds, z.spec, z.spec.loss, opts).w_hat);
}

TEST_CASE("token covariance blocks concentrate") {
  const auto z = multitoken_instance(1.0);
  const int d = 1000;
  double sum = 0;
  long count = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto ds = generate_dataset(z.spec, z.nu, d, 200, seed);
    GampOptions opts;
    opts.max_iters = 2;
    const auto res = gamp_run(ds, z.spec, z.spec.loss, opts);
    for (const auto& V : res.state.V) {
      sum += V(0, 1) * V(0, 1);
      ++count;
    }
  }
  CHECK(std::sqrt(sum / count) <= 5.0 / std::sqrt(double(d)));
}

TEST_CASE("removing the Onsager terms breaks state evolution") {
  const auto z = ridge_instance(1.0);
  const int d = 500;
  SolverConfig cfg;
  cfg.init = InitKind::gamp;
  cfg.damping = 0.0;
  cfg.max_iters = 10;
  cfg.tol = 1e-300;
  cfg.record_trajectory = true;
  cfg.mc_plan.method = QuadratureMethod::gauss_hermite;
  const auto se = solve_fixed_point(z.spec, z.nu, cfg);
  auto deviation = [&](bool onsager) {
    GampOptions opts;
    opts.damping = 0.0;
    opts.adaptive_damping = false;
    opts.max_iters = 10;
    opts.tol = 0.0;
    opts.onsager_omega = onsager;
    opts.onsager_b = onsager;
    double worst = 0;
    const auto ds = generate_dataset(z.spec, z.nu, d, static_cast<long>(z.spec.dims.alpha * d), 21);
    const auto res = gamp_run(ds, z.spec, z.spec.loss, opts);
    for (std::size_t t = 0; t < res.trajectory.size(); ++t) {
      const auto emp = flatten_stats(res.trajectory[t]);
      const auto ref = flatten_stats(stats_from_overlaps(se.trajectory[t].params));
      for (std::size_t j = 0; j < emp.size(); ++j)
        worst = std::max(worst, std::abs(emp[j] - ref[j]) / std::max(std::abs(ref[j]), 1e-3));
    }
    return worst;
  };
  const double base = deviation(true), broken = deviation(false);
  MESSAGE("baseline " << base << ", without Onsager " << broken);
  CHECK(broken > 5 * base);
}

}  // TEST_SUITE
