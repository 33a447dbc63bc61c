#pragma once

// Cross-checks between the solver, GAMP, rBP and gradient descent. Each check
// returns the measured quantity next to the tolerance it was held to.

#include <cstdint>
#include <string>
#include <vector>

#include "seqmim/erm.hpp"
#include "seqmim/zoo.hpp"

namespace seqmim {

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

std::string format_check(const CheckResult& c);

// Relative deviation |gamp - se| / max(|se|, floor) of the seed-averaged
// statistics, worst over iterations 1..iterations.
struct SeGampCheck {
  int d = 1000;
  int iterations = 20;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double tolerance = 0.05;
  double floor = 1e-3;
  bool onsager = true;
  McPlan plan;  // expectation plan of the SE run
};
CheckResult check_se_tracks_gamp(const ZooInstance& inst, const SeGampCheck& opts);

// gd_gradient_norm at the converged GAMP estimate <= factor (1 + |grad R(0)|_inf).
struct GampCriticalCheck {
  int d = 500;
  std::uint64_t seed = 1;
  double factor = 1e-4;
  GampOptions gamp;
};
CheckResult check_gamp_critical_point(const ZooInstance& inst, const GampCriticalCheck& opts);

// |eps_t + Phi| <= 2 (tol + pooled MC stderr) at a converged fixed point.
CheckResult check_free_energy_identity(const std::string& label, const FixedPointReport& rep, double tol);

// One extra hat sweep with a fresh Monte Carlo stream moves every hat entry by
// at most tol (1 + |block|) + 3 pooled stderr, and the overlaps equal
// update_overlaps of the reported hats.
CheckResult check_fixed_point_residual(const ZooInstance& inst, const FixedPointReport& rep, double tol,
                                       const McPlan& fresh, const McPlan& original);

CheckResult check_invariants_hold(const ZooInstance& inst, const FixedPointReport& rep);

// Final rBP and GAMP estimates agree to coordinate RMS <= 5 / sqrt(d).
struct RbpGampCheck {
  int d = 40;
  long n = 80;
  std::uint64_t seed = 1;
};
CheckResult check_rbp_matches_gamp(const ZooInstance& inst, const RbpGampCheck& opts);

// Solver test error within `sigmas` pooled standard errors of gradient descent
// averaged over seeds.
struct ErmCheck {
  int d = 500;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  long n_test = 20000;
  double sigmas = 3.0;
  TrainConfig train;
  SolverConfig solver;
  McPlan test_plan;  // for the solver's test error
};
CheckResult check_replica_predicts_erm(const ZooInstance& inst, const ErmCheck& opts);

}  // namespace seqmim
