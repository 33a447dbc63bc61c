#pragma once

// Saddle-point / state-evolution iteration and the metrics evaluated at its
// fixed points.

#include <optional>

#include "seqmim/gaussian_measure.hpp"
#include "seqmim/prox.hpp"

namespace seqmim {

enum class InitKind {
  cold,      // q = eps I, V = I, m = 0, theta = 0, v = eps I
  warm,      // SolverConfig::warm_start
  informed,  // theta, q, m seeded from the teacher statistics
  gamp,      // the state reached by GAMP's initialization w = 0, c = I
};

// How the V-hat and theta-hat expectations are estimated. stein uses the
// Gaussian-integration-by-parts form (needs q invertible); jacobian uses the
// prox Jacobians. automatic picks jacobian when the loss provides Hessians or
// q is singular.
enum class HatForm { automatic, stein, jacobian };

struct SolverConfig {
  double damping = 0.5;
  InitKind init = InitKind::cold;
  double eps_init = 1e-3;
  double tol = 1e-8;
  int max_iters = 500;
  McPlan mc_plan;
  bool record_trajectory = false;
  HatForm hat_form = HatForm::automatic;
  ProxOptions prox;
  std::optional<OrderParameters> warm_start;
  double divergence_threshold = 1e6;
};

struct ScalarEstimate {
  double value = 0.0;
  double stderr_ = 0.0;
};

struct TrajectoryPoint {
  int iteration = 0;
  OrderParameters params;  // overlaps after this sweep
  ConjugateParameters conj;
  double residual = 0.0;
};

struct FixedPointReport {
  OrderParameters params;
  ConjugateParameters conj;
  std::vector<double> residual_history;
  int iterations = 0;
  bool converged = false;
  double hat_stderr = 0.0;  // largest MC standard error of a hat entry in the last sweep
  ScalarEstimate free_entropy;
  ScalarEstimate test_error;
  ScalarEstimate train_loss;
  std::vector<TrajectoryPoint> trajectory;
};

struct HatOptions {
  HatForm form = HatForm::automatic;
  ProxOptions prox;
};

ConjugateParameters update_hats(const OrderParameters& params, const FixedStatistics& fixed, const ModelSpec& spec,
                                const McPlan& plan, const HatOptions& opts = {}, double* max_stderr = nullptr,
                                ConjugateParameters* stderr_out = nullptr);

OrderParameters update_overlaps(const ConjugateParameters& conj, const SpectralMeasure& nu, const ModelSpec& spec);

// Integrals of Tr[R K] and Tr[R K R^T] over nu.
struct SpectralTraces {
  double tr_RK = 0.0;
  double tr_RKR = 0.0;
};
SpectralTraces spectral_traces(const ConjugateParameters& conj, const SpectralMeasure& nu, const ModelSpec& spec);

// E[M(c, Y, Xi)], the Moreau envelope averaged over the energetic measure.
ScalarEstimate expected_moreau(const OrderParameters& params, const FixedStatistics& fixed, const ModelSpec& spec,
                               const McPlan& plan, const ProxOptions& prox = {});

ScalarEstimate free_entropy(const OrderParameters& params, const ConjugateParameters& conj,
                            const FixedStatistics& fixed, const SpectralMeasure& nu, const ModelSpec& spec,
                            const McPlan& plan);

ScalarEstimate test_error(const OrderParameters& params, const FixedStatistics& fixed, const ModelSpec& spec,
                          const McPlan& plan, const LossEval& loss_ts = nullptr);

ScalarEstimate train_loss(const OrderParameters& params, const ConjugateParameters& conj,
                          const FixedStatistics& fixed, const SpectralMeasure& nu, const ModelSpec& spec,
                          const McPlan& plan);

OrderParameters initial_overlaps(const ModelSpec& spec, const SpectralMeasure& nu, const FixedStatistics& fixed,
                                 const SolverConfig& config);

// Largest relative block change |a - b| / (1 + |a|) over the parameter blocks.
double relative_change(const OrderParameters& a, const OrderParameters& b, bool include_v);
double relative_change(const ConjugateParameters& a, const ConjugateParameters& b, bool include_v);

FixedPointReport solve_fixed_point(const ModelSpec& spec, const SpectralMeasure& nu, const SolverConfig& config);

// Checks the symmetry / PSD invariants of a parameter set; returns violations.
std::vector<std::string> check_invariants(const OrderParameters& params, const ConjugateParameters& conj,
                                          const FixedStatistics& fixed);

}  // namespace seqmim
