// Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned below.
// Usage: seqmim_acceptance [criterion numbers...]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "seqmim/io.hpp"
#include "seqmim/linalg.hpp"
#include "seqmim/losses.hpp"
#include "seqmim/verify.hpp"

using namespace seqmim;

namespace {

// criterion 1
constexpr double kRidgeLambda = 0.1;
constexpr double kRidgeOracleAbs = 1e-4;
constexpr int kRidgeFiniteD = 4000;
constexpr int kRidgeSeeds = 20;
constexpr double kPooledSigmas = 3.0;
// criterion 2 and 7
constexpr int kSeD = 1000;
constexpr int kSeIterations = 20;
constexpr double kSeRelDev = 0.05;
constexpr std::uint64_t kConcentrationSeeds = 10;
constexpr int kConcentrationIteration = 5;
constexpr int kRbpDeskD = 200;
// criterion 3
constexpr int kCriticalD = 500;
constexpr double kCriticalFactor = 1e-4;
// criterion 4
constexpr double kSolverTol = 1e-8;
// criterion 5
constexpr int kErmD = 500;
constexpr int kErmSeeds = 10;
constexpr double kGmmLambda = 0.05;
// criterion 6
constexpr int kRbpD = 40;
constexpr long kRbpN = 80;
// criterion 8
constexpr double kProxResidual = 1e-10;
constexpr double kGradientFd = 1e-5;
constexpr double kSqrtRoundTrip = 1e-9;
constexpr double kLinearity = 1e-12;

struct Criterion {
  std::vector<CheckResult> checks;
  void add(CheckResult c) {
    std::printf("    [%s] %s: %.4g <= %.4g  (%s)\n", c.passed ? "ok" : "x", c.name.c_str(), c.value, c.tolerance,
                c.detail.c_str());
    std::fflush(stdout);
    checks.push_back(std::move(c));
  }
  bool passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return !checks.empty();
  }
};

McPlan gh(int order) {
  McPlan p;
  p.method = QuadratureMethod::gauss_hermite;
  p.gh_order = order;
  return p;
}

std::string str(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

// Ridge minimizers on the nested prefixes n_k of one dataset, by conjugate
// gradients run jointly so every pass over the rows serves all systems.
std::vector<Vector> nested_ridge(const Dataset& ds, const std::vector<long>& n, double lambda, double tol) {
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMat> X(ds.X.data(), ds.n, ds.d);
  const Eigen::Map<const Vector> y(ds.y.data(), ds.n);
  const std::size_t k_count = n.size();
  const double inv_d = 1.0 / ds.d;
  std::vector<Vector> x(k_count, Vector::Zero(ds.d)), r(k_count), p(k_count), Ap(k_count);
  std::vector<double> rr(k_count), stop(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    r[k] = X.topRows(n[k]).transpose() * y.head(n[k]) / std::sqrt(double(ds.d));
    p[k] = r[k];
    rr[k] = r[k].squaredNorm();
    stop[k] = tol * tol * rr[k];
  }
  for (int it = 0; it < 5000; ++it) {
    std::vector<std::size_t> active;
    for (std::size_t k = 0; k < k_count; ++k)
      if (rr[k] > stop[k]) active.push_back(k), Ap[k] = lambda * p[k];
    if (active.empty()) break;
    for (long mu = 0; mu < ds.n; ++mu) {
      const auto row = X.row(mu);
      for (std::size_t k : active)
        if (mu < n[k]) Ap[k].noalias() += (row.dot(p[k]) * inv_d) * row.transpose();
    }
    for (std::size_t k : active) {
      const double step = rr[k] / p[k].dot(Ap[k]);
      x[k] += step * p[k];
      r[k] -= step * Ap[k];
      const double rr_new = r[k].squaredNorm();
      p[k] = r[k] + (rr_new / rr[k]) * p[k];
      rr[k] = rr_new;
    }
  }
  return x;
}

void ridge_oracle(Criterion& out) {
  const std::vector<double> alphas{0.5, 1.0, 2.0};
  for (double alpha : alphas) {
    const auto z = ridge_instance(alpha, kRidgeLambda);
    const auto o = oracle::ridge(alpha, kRidgeLambda);
    SolverConfig cfg;
    cfg.mc_plan = gh(20);
    cfg.tol = 1e-12;
    cfg.max_iters = 5000;
    const auto rep = solve_fixed_point(z.spec, z.nu, cfg);
    CheckResult a{"solver eps_g vs oracle", false, std::abs(rep.test_error.value - o.eg), kRidgeOracleAbs,
                  "alpha=" + str(alpha) + ", solver " + str(rep.test_error.value) + ", oracle " + str(o.eg)};
    a.passed = rep.converged && a.value <= a.tolerance;
    out.add(a);
  }

  // finite d: each alpha uses a prefix of one dataset per seed
  std::vector<long> n;
  for (double alpha : alphas) n.push_back(std::lround(alpha * kRidgeFiniteD));
  std::vector<std::vector<double>> errs(alphas.size());
  const auto z = ridge_instance(alphas.back(), kRidgeLambda);
  for (int seed = 1; seed <= kRidgeSeeds; ++seed) {
    const Dataset ds = generate_dataset(z.spec, z.nu, kRidgeFiniteD, n.back(), static_cast<std::uint64_t>(seed));
    const auto w = nested_ridge(ds, n, kRidgeLambda, 1e-8);
    // Sigma = I and noiseless labels: population error in closed form
    for (std::size_t k = 0; k < alphas.size(); ++k)
      errs[k].push_back(0.5 * (ds.teacher.col(0) - w[k]).squaredNorm() / kRidgeFiniteD);
  }
  for (std::size_t k = 0; k < alphas.size(); ++k) {
    const auto o = oracle::ridge(alphas[k], kRidgeLambda);
    const auto& e = errs[k];
    double mean = 0, var = 0;
    for (double v : e) mean += v / e.size();
    for (double v : e) var += (v - mean) * (v - mean) / (e.size() - 1);
    const double se = std::sqrt(var / e.size());
    out.add(CheckResult{"finite-d ridge eps_g vs oracle (in pooled stderr)", std::abs(mean - o.eg) <= kPooledSigmas * se,
                        std::abs(mean - o.eg), kPooledSigmas * se,
                        "alpha=" + str(alphas[k]) + ", d=" + std::to_string(kRidgeFiniteD) + ", " +
                            std::to_string(kRidgeSeeds) + " seeds, mean " + str(mean) + " +- " + str(se)});
  }
}

void se_tracks_gamp(Criterion& out) {
  SeGampCheck opts;
  opts.d = kSeD;
  opts.iterations = kSeIterations;
  opts.tolerance = kSeRelDev;
  opts.plan = gh(20);
  out.add(check_se_tracks_gamp(ridge_instance(1.0), opts));

  // token-covariance blocks of V at iteration t, across dataset seeds
  {
    const auto z = multitoken_instance(1.0);
    double sum = 0;
    long count = 0;
    for (std::uint64_t seed = 1; seed <= kConcentrationSeeds; ++seed) {
      const auto ds = generate_dataset(z.spec, z.nu, kSeD, kSeD, seed);
      GampOptions g;
      g.max_iters = kConcentrationIteration;
      g.damping = 0.0;
      g.adaptive_damping = false;
      const auto res = gamp_run(ds, z.spec, z.spec.loss, g);
      for (const auto& V : res.state.V)
        for (Eigen::Index i = 0; i < V.rows(); ++i)
          for (Eigen::Index j = 0; j < V.cols(); ++j)
            if (i != j) sum += V(i, j) * V(i, j), ++count;
    }
    const double rms = std::sqrt(sum / static_cast<double>(count));
    const double tol = 5.0 / std::sqrt(static_cast<double>(kSeD));
    out.add({"V off-diagonal RMS", rms <= tol, rms, tol,
             "multitoken, d=1000, alpha=1, iteration " + std::to_string(kConcentrationIteration) + ", " +
                 std::to_string(kConcentrationSeeds) + " seeds"});
  }

  {
    const auto z = ridge_instance(1.0);
    const auto ds = generate_dataset(z.spec, z.nu, kSeD, kSeD, 1);
    GampOptions g;
    g.max_iters = kSeIterations;
    const double gap = (gamp_run(ds, z.spec, z.spec.loss, g).w_hat - gamp_run(ds, z.spec, z.spec.loss, g).w_hat)
                           .cwiseAbs()
                           .maxCoeff();
    out.add({"gamp_run deterministic (max coordinate gap)", gap == 0.0, gap, 0.0, "ridge, d=1000, seed 1, two runs"});
  }

  RbpGampCheck rbp;
  rbp.d = kRbpDeskD;
  rbp.n = kRbpDeskD;
  out.add(check_rbp_matches_gamp(ridge_instance(1.0), rbp));
}

void gamp_critical(Criterion& out) {
  GampCriticalCheck opts;
  opts.d = kCriticalD;
  opts.factor = kCriticalFactor;
  opts.gamp.tol = 1e-12;
  opts.gamp.max_iters = 3000;
  out.add(check_gamp_critical_point(ridge_instance(2.0), opts));
  out.add(check_gamp_critical_point(gmm_instance("logistic", 2.0, kGmmLambda), opts));
}

void free_energy(Criterion& out) {
  for (const auto& name : zoo_names()) {
    for (double alpha : {0.5, 1.0, 2.0}) {
      const auto z = make_instance(name, alpha);
      SolverConfig cfg;
      cfg.tol = kSolverTol;
      cfg.max_iters = 2000;
      cfg.mc_plan.n_samples = 20000;
      const auto rep = solve_fixed_point(z.spec, z.nu, cfg);
      out.add(check_free_energy_identity(name + ", alpha=" + str(alpha) + ", Monte Carlo", rep, kSolverTol));
    }
  }
}

void replica_erm(Criterion& out) {
  for (double alpha : {0.5, 1.0, 2.0, 4.0}) {
    const auto z = gmm_instance("logistic", alpha, kGmmLambda);
    ErmCheck opts;
    opts.d = kErmD;
    opts.seeds.clear();
    for (int s = 1; s <= kErmSeeds; ++s) opts.seeds.push_back(static_cast<std::uint64_t>(s));
    opts.sigmas = kPooledSigmas;
    opts.train.grad_threshold = 1e-7;
    opts.solver.mc_plan = gh(40);
    opts.solver.tol = 1e-10;
    opts.solver.max_iters = 3000;
    opts.test_plan.n_samples = 1000000;
    opts.test_plan.seed = 2024;
    out.add(check_replica_predicts_erm(z, opts));
  }
}

void rbp_gamp(Criterion& out) {
  RbpGampCheck opts;
  opts.d = kRbpD;
  opts.n = kRbpN;
  out.add(check_rbp_matches_gamp(ridge_instance(static_cast<double>(kRbpN) / kRbpD), opts));
}

void multitoken(Criterion& out) {
  const auto z = multitoken_instance(1.0);
  SolverConfig cfg;
  cfg.mc_plan = gh(10);
  cfg.tol = 1e-10;
  cfg.max_iters = 3000;
  const auto rep = solve_fixed_point(z.spec, z.nu, cfg);
  McPlan fresh;
  fresh.n_samples = 200000;
  fresh.seed = 777;
  out.add(check_fixed_point_residual(z, rep, cfg.tol, fresh, cfg.mc_plan));
  out.add(check_invariants_hold(z, rep));
  out.add(check_free_energy_identity("multitoken, alpha=1, Gauss-Hermite", rep, cfg.tol));
  SeGampCheck opts;
  opts.d = kSeD;
  opts.iterations = kSeIterations;
  opts.tolerance = kSeRelDev;
  opts.plan = gh(10);
  out.add(check_se_tracks_gamp(z, opts));
}

void unit_properties(Criterion& out) {
  std::mt19937_64 rng(2718);
  std::normal_distribution<double> n01;
  auto rnd = [&](int rows, int cols, double scale) {
    Matrix A(rows, cols);
    for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = scale * n01(rng);
    return A;
  };
  auto spd = [&](int n) {
    const Matrix M = rnd(n, n, 1.0);
    return Matrix(M * M.transpose() / n + 0.2 * Matrix::Identity(n, n));
  };

  struct LossCase {
    std::string name;
    Dimensions dims;
    std::map<std::string, double> params;
  };
  auto dims = [](int L, int r, int t, std::vector<int> K) {
    Dimensions d;
    d.L = L, d.r = r, d.t = t, d.K = std::move(K);
    return d;
  };
  const std::vector<LossCase> losses = {{"square", dims(2, 2, 2, {1, 1}), {}},
                                        {"square_v", dims(2, 2, 2, {1, 1}), {{"kappa", 0.5}}},
                                        {"logistic", dims(2, 1, 1, {2, 2}), {}},
                                        {"square_label", dims(1, 2, 1, {2}), {}},
                                        {"zero", dims(1, 2, 1, {1}), {}}};

  // prox stationarity on random problems, generic solver
  double worst_prox = 0;
  for (const auto& lc : losses) {
    const LossModel l = make_loss({lc.name, lc.params, ""}, lc.dims);
    for (int trial = 0; trial < 200; ++trial) {
      const Matrix a = rnd(lc.dims.L, lc.dims.r, 2.0), Y = rnd(lc.dims.L, lc.dims.t, 1.0), v = spd(lc.dims.r);
      std::vector<Matrix> P;
      for (int i = 0; i < lc.dims.L; ++i) P.push_back(spd(lc.dims.r));
      ClassTuple c;
      for (int K : lc.dims.K) c.push_back(static_cast<int>(rng() % static_cast<unsigned>(K)));
      ProxOptions po;
      po.use_closed_form = false;
      const auto res = moreau_prox(a, P, Y, v, c, l, po);
      const Vector g = block_diagonal(P) * flatten_rows(res.X - a) + flatten_rows(l.grad_X(Y, res.X, v, c));
      worst_prox = std::max(worst_prox, g.norm() / (1.0 + a.norm()));
    }
  }
  out.add({"prox stationarity residual / (1 + |anchor|)", worst_prox <= kProxResidual, worst_prox, kProxResidual,
           "5 losses x 200 random problems"});

  double worst_grad = 0, worst_d3 = 0;
  for (const auto& lc : losses) {
    const LossModel l = make_loss({lc.name, lc.params, ""}, lc.dims);
    ClassLaw law;
    std::vector<int> c;
    for (int K : lc.dims.K) c.push_back(K - 1);
    law.support = {c, ClassTuple(lc.dims.K.size(), 0)};
    law.probs = {0.5, 0.5};
    const auto chk = check_loss_gradients(l, lc.dims, law, 50, 31);
    worst_grad = std::max(worst_grad, chk.grad_X_rel_error);
    worst_d3 = std::max(worst_d3, chk.d3_rel_error);
  }
  out.add({"loss gradient vs finite differences", worst_grad <= kGradientFd, worst_grad, kGradientFd, "relative"});
  out.add({"d3 vs finite differences", worst_d3 <= kGradientFd, worst_d3, kGradientFd, "relative"});

  double worst_sqrt = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 5;
    const Matrix M = rnd(n, n, 1.0);
    const Matrix A = M.transpose() * M;
    const Matrix B = sym_sqrt(A);
    worst_sqrt = std::max(worst_sqrt, (B * B - A).norm() / std::max(A.norm(), 1e-300));
  }
  out.add({"sym_sqrt round trip (relative Frobenius)", worst_sqrt <= kSqrtRoundTrip, worst_sqrt, kSqrtRoundTrip,
           "200 random PSD matrices up to 5x5"});

  // sampler moments: energetic and joint second moments at 3 sigma
  {
    const auto z = ridge_instance(1.0);
    const auto fixed = compute_fixed_statistics(z.nu, z.spec.dims);
    auto p = zero_order_parameters(z.spec.dims);
    p.q(0, 0)(0, 0) = 1.0;
    p.theta(0, 0)(0, 0) = 0.5;
    p.V(0, 0)(0, 0) = 1.0;
    McPlan plan;
    plan.n_samples = 1000000;
    plan.antithetic = false;
    const auto e = expect_over_measure(
        [](int, const EnergeticDraw& d, double* o) {
          o[0] = d.xi(0, 0) * d.xi(0, 0);
          o[1] = d.xi(0, 0) * d.Y(0, 0);
          o[2] = d.Y(0, 0) * d.Y(0, 0);
          o[3] = d.Y(0, 0);
        },
        4, z.spec, p, fixed, plan);
    const auto j = expect_over_joint(
        [](int, const JointDraw& d, double* o) {
          o[0] = d.X(0, 0) * d.X(0, 0);
          o[1] = d.X(0, 0) * d.Y(0, 0);
          o[2] = d.Y(0, 0) * d.Y(0, 0);
        },
        3, z.spec, p, fixed, plan);
    const double truth_e[4] = {1.0, 0.5, 1.0, 0.0}, truth_j[3] = {1.0, 0.5, 1.0};
    double worst = 0;
    for (int i = 0; i < 4; ++i) worst = std::max(worst, std::abs(e.mean(i) - truth_e[i]) / e.stderr_(i));
    for (int i = 0; i < 3; ++i) worst = std::max(worst, std::abs(j.mean(i) - truth_j[i]) / j.stderr_(i));
    out.add({"sampler moments (deviation in standard errors)", worst <= 3.0, worst, 3.0,
             "q=1, theta=0.5, rho=1, 1e6 draws"});
  }

  // spectral-integral linearity
  {
    const auto z = multitoken_instance(1.0);
    auto h = zero_conjugate_parameters(z.spec.dims);
    for (int f = 0; f < 2; ++f) {
      h.q_hat.at(f)(0, 0) = 0.3 + f;
      h.V_hat.at(f)(0, 0) = 0.7 + 0.1 * f;
      h.m_hat.at(f)(0) = 0.2;
      h.theta_hat.at(f)(0, 0) = 0.4;
    }
    auto nu = z.nu;
    nu.atoms[0].tau << 0.5, -1.0;
    const auto whole = update_overlaps(h, nu, z.spec);
    Vector acc = Vector::Zero(pack(whole).size());
    for (const auto& a : nu.atoms) {
      SpectralAtom unit = a;
      unit.weight = 1.0;
      acc += a.weight * pack(update_overlaps(h, SpectralMeasure{{unit}}, z.spec));
    }
    const double gap = (acc - pack(whole)).cwiseAbs().maxCoeff();
    out.add({"spectral-integral linearity", gap <= kLinearity, gap, kLinearity, "two-token two-atom measure"});
  }
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<void(Criterion&)>>> criteria = {
      {"ridge oracle equivalence", ridge_oracle},
      {"SE tracks GAMP", se_tracks_gamp},
      {"GAMP fixed points are GD critical points", gamp_critical},
      {"free-energy identity", free_energy},
      {"replica predicts ERM", replica_erm},
      {"rBP matches GAMP", rbp_gamp},
      {"multi-token invariants", multitoken},
      {"unit-level property suites", unit_properties},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    std::printf("criterion %d: %s\n", id, criteria[i].first.c_str());
    std::fflush(stdout);
    const auto t0 = std::chrono::steady_clock::now();
    Criterion c;
    std::string error;
    try {
      criteria[i].second(c);
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = error.empty() && c.passed();
    failures += !ok;
    std::printf("%s criterion %d (%s) [%.1f s]%s%s\n", ok ? "PASS" : "FAIL", id, criteria[i].first.c_str(), secs,
                error.empty() ? "" : " error: ", error.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
