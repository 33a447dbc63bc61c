#include "seqmim/verify.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "seqmim/io.hpp"
#include "seqmim/linalg.hpp"

namespace seqmim {

namespace {

CheckResult make(std::string name, double value, double tol, std::string detail) {
  return CheckResult{std::move(name), value <= tol, value, tol, std::move(detail)};
}

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

}  // namespace

std::string format_check(const CheckResult& c) {
  std::ostringstream os;
  os << (c.passed ? "PASS" : "FAIL") << "  " << c.name << ": " << num(c.value) << " <= " << num(c.tolerance);
  if (!c.detail.empty()) os << "  (" << c.detail << ")";
  return os.str();
}

CheckResult check_se_tracks_gamp(const ZooInstance& inst, const SeGampCheck& opts) {
  SolverConfig cfg;
  cfg.init = InitKind::gamp;
  cfg.damping = 0.0;
  cfg.max_iters = opts.iterations;
  cfg.tol = 1e-300;  // run every sweep
  cfg.record_trajectory = true;
  cfg.mc_plan = opts.plan;
  const FixedPointReport se = solve_fixed_point(inst.spec, inst.nu, cfg);

  GampOptions go;
  go.damping = 0.0;
  go.adaptive_damping = false;
  go.max_iters = opts.iterations;
  go.tol = 0.0;
  go.onsager_omega = opts.onsager;
  go.onsager_b = opts.onsager;

  std::vector<std::vector<double>> mean;
  std::vector<int> counts;
  for (std::uint64_t seed : opts.seeds) {
    const long n = std::lround(inst.spec.dims.alpha * opts.d);
    const Dataset ds = generate_dataset(inst.spec, inst.nu, opts.d, n, seed);
    const GampResult res = gamp_run(ds, inst.spec, inst.spec.loss, go);
    for (std::size_t t = 0; t < res.trajectory.size(); ++t) {
      const auto stats = flatten_stats(res.trajectory[t]);
      if (mean.size() <= t) {
        mean.emplace_back(stats.size(), 0.0);
        counts.push_back(0);
      }
      for (std::size_t j = 0; j < stats.size(); ++j) mean[t][j] += stats[j];
      ++counts[t];
    }
  }
  double worst = 0.0;
  std::size_t worst_t = 0, worst_j = 0;
  const std::size_t T = std::min(mean.size(), se.trajectory.size());
  for (std::size_t t = 0; t < T; ++t) {
    const auto ref = flatten_stats(stats_from_overlaps(se.trajectory[t].params));
    for (std::size_t j = 0; j < ref.size(); ++j) {
      const double emp = mean[t][j] / counts[t];
      const double dev = std::abs(emp - ref[j]) / std::max(std::abs(ref[j]), opts.floor);
      if (dev > worst) worst = dev, worst_t = t, worst_j = j;
    }
  }
  std::ostringstream os;
  os << inst.name << ", d=" << opts.d << ", alpha=" << inst.spec.dims.alpha << ", " << opts.seeds.size()
     << " seeds, iterations 1-" << T << ", worst at iteration " << worst_t + 1 << " statistic " << worst_j
     << (opts.onsager ? "" : ", Onsager terms removed");
  if (T < static_cast<std::size_t>(opts.iterations)) os << ", only " << T << " iterations available";
  return make("SE tracks GAMP", worst, opts.tolerance, os.str());
}

CheckResult check_gamp_critical_point(const ZooInstance& inst, const GampCriticalCheck& opts) {
  const long n = std::lround(inst.spec.dims.alpha * opts.d);
  const Dataset ds = generate_dataset(inst.spec, inst.nu, opts.d, n, opts.seed);
  const GampResult res = gamp_run(ds, inst.spec, inst.spec.loss, opts.gamp);
  const double g0 = gd_gradient_norm(Matrix::Zero(opts.d, inst.spec.dims.r), ds, inst.spec, inst.spec.loss);
  const double g = gd_gradient_norm(res.w_hat, ds, inst.spec, inst.spec.loss);
  std::ostringstream os;
  os << inst.name << ", d=" << opts.d << ", n=" << n << ", GAMP " << (res.converged ? "converged" : "not converged")
     << " after " << res.iterations << " iterations, |grad R(0)|=" << num(g0);
  CheckResult c = make("GAMP fixed point is a GD critical point", g, opts.factor * (1.0 + g0), os.str());
  c.passed = c.passed && res.converged;
  return c;
}

CheckResult check_free_energy_identity(const std::string& label, const FixedPointReport& rep, double tol) {
  const double gap = std::abs(rep.train_loss.value + rep.free_entropy.value);
  const double pooled = std::hypot(rep.train_loss.stderr_, rep.free_entropy.stderr_);
  std::ostringstream os;
  os << label << ", eps_t=" << num(rep.train_loss.value) << ", Phi=" << num(rep.free_entropy.value)
     << (rep.converged ? "" : ", NOT converged");
  CheckResult c = make("training loss = -free entropy", gap, 2.0 * (tol + pooled), os.str());
  c.passed = c.passed && rep.converged;
  return c;
}

CheckResult check_fixed_point_residual(const ZooInstance& inst, const FixedPointReport& rep, double tol,
                                       const McPlan& fresh, const McPlan& original) {
  const FixedStatistics fixed = compute_fixed_statistics(inst.nu, inst.spec.dims);
  ConjugateParameters se_fresh, se_orig;
  const ConjugateParameters a = update_hats(rep.params, fixed, inst.spec, fresh, {}, nullptr, &se_fresh);
  update_hats(rep.params, fixed, inst.spec, original, {}, nullptr, &se_orig);
  const Vector x = pack(a), y = pack(rep.conj), s1 = pack(se_fresh), s2 = pack(se_orig);
  const double scale = 1.0 + y.cwiseAbs().maxCoeff();
  // worst ratio of the move to its allowance
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double allowance = tol * scale + 3.0 * std::hypot(s1(i), s2(i));
    worst = std::max(worst, std::abs(x(i) - y(i)) / allowance);
  }
  const OrderParameters again = update_overlaps(rep.conj, inst.nu, inst.spec);
  const double overlap_gap = relative_change(again, rep.params, true);
  std::ostringstream os;
  os << inst.name << ", fresh seed " << fresh.seed << ", overlap consistency " << num(overlap_gap);
  CheckResult c = make("fixed-point residual under fresh samples (move / allowance)", worst, 1.0, os.str());
  c.passed = c.passed && overlap_gap <= tol;
  return c;
}

CheckResult check_invariants_hold(const ZooInstance& inst, const FixedPointReport& rep) {
  const FixedStatistics fixed = compute_fixed_statistics(inst.nu, inst.spec.dims);
  const auto violations = check_invariants(rep.params, rep.conj, fixed);
  double worst = 0.0;
  for (const auto& q : rep.params.q) worst = std::max(worst, max_asymmetry(q));
  for (const auto& V : rep.params.V) worst = std::max(worst, max_asymmetry(V));
  for (const auto& q : rep.conj.q_hat) worst = std::max(worst, max_asymmetry(q));
  worst = std::max({worst, max_asymmetry(rep.params.v), max_asymmetry(rep.conj.v_hat)});
  std::string detail = inst.name + ", max asymmetry shown";
  for (const auto& v : violations) detail += "; " + v;
  CheckResult c = make("symmetry / PSD invariants", worst, kSymmetryTol, detail);
  c.passed = c.passed && violations.empty();
  return c;
}

CheckResult check_rbp_matches_gamp(const ZooInstance& inst, const RbpGampCheck& opts) {
  const Dataset ds = generate_dataset(inst.spec, inst.nu, opts.d, opts.n, opts.seed);
  GampOptions go;
  go.tol = 1e-12;
  go.max_iters = 5000;
  RbpOptions ro;
  ro.max_iters = 5000;
  const GampResult g = gamp_run(ds, inst.spec, inst.spec.loss, go);
  const RbpResult b = rbp_run(ds, inst.spec, inst.spec.loss, ro);
  const double rms = std::sqrt((g.w_hat - b.w_hat).squaredNorm() / static_cast<double>(g.w_hat.size()));
  std::ostringstream os;
  os << inst.name << ", d=" << opts.d << ", n=" << opts.n << ", GAMP " << g.iterations << " iterations"
     << (g.converged ? "" : " (not converged)") << ", rBP " << b.iterations << " iterations"
     << (b.converged ? "" : " (not converged)");
  CheckResult c = make("rBP matches GAMP (coordinate RMS)", rms, 5.0 / std::sqrt(static_cast<double>(opts.d)), os.str());
  c.passed = c.passed && g.converged && b.converged;
  return c;
}

CheckResult check_replica_predicts_erm(const ZooInstance& inst, const ErmCheck& opts) {
  const FixedPointReport rep = solve_fixed_point(inst.spec, inst.nu, opts.solver);
  const FixedStatistics fixed = compute_fixed_statistics(inst.nu, inst.spec.dims);
  const ScalarEstimate eg = test_error(rep.params, fixed, inst.spec, opts.test_plan);

  std::vector<double> errs;
  int unconverged = 0;
  for (std::uint64_t seed : opts.seeds) {
    const long n = std::lround(inst.spec.dims.alpha * opts.d);
    const Dataset ds = generate_dataset(inst.spec, inst.nu, opts.d, n, seed);
    const TrainResult tr = erm_train(ds, inst.spec, inst.spec.loss, opts.train);
    unconverged += !tr.converged;
    errs.push_back(
        empirical_test_error(tr.w_hat, inst.spec, inst.nu, inst.spec.loss.test_eval, opts.n_test, mix_seed(seed, 99))
            .value);
  }
  double mean = 0.0, var = 0.0;
  for (double e : errs) mean += e / static_cast<double>(errs.size());
  for (double e : errs) var += (e - mean) * (e - mean) / static_cast<double>(errs.size() - 1);
  const double se_erm = std::sqrt(var / static_cast<double>(errs.size()));
  const double pooled = std::hypot(se_erm, eg.stderr_);
  const double gap = std::abs(eg.value - mean);
  std::ostringstream os;
  os << inst.name << ", alpha=" << inst.spec.dims.alpha << ", solver eps_g=" << num(eg.value) << " +- "
     << num(eg.stderr_) << (rep.converged ? "" : " (NOT converged)") << ", ERM eps_g=" << num(mean) << " +- "
     << num(se_erm) << " over " << errs.size() << " seeds at d=" << opts.d;
  if (unconverged) os << ", " << unconverged << " GD runs hit the epoch limit";
  CheckResult c = make("replica predicts ERM test error", gap, opts.sigmas * pooled, os.str());
  c.passed = c.passed && rep.converged;
  return c;
}

}  // namespace seqmim
