#pragma once

// Empirical risk minimization baseline: full-batch gradient descent with
// Armijo backtracking, the ridge normal equations by conjugate gradients, and
// fresh-sample test errors.

#include <optional>

#include "seqmim/gamp.hpp"
#include "seqmim/saddle.hpp"

namespace seqmim {

enum class StepPolicy { fixed, backtracking };
enum class WeightInit { zero, gaussian, warm };

struct TrainConfig {
  StepPolicy step_policy = StepPolicy::backtracking;
  double step = 1.0;
  int max_epochs = 20000;
  double grad_threshold = 1e-8;
  WeightInit init = WeightInit::zero;
  double init_sigma = 1.0;
  std::uint64_t seed = 0;
  std::optional<Matrix> warm_start;
  int stall_limit = 50;
};

struct TrainResult {
  Matrix w_hat;
  double train_loss_per_sample = 0.0;  // R(w) / d, regularizer included
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective;  // R along accepted iterates
};

TrainResult erm_train(const Dataset& data, const ModelSpec& spec, const LossModel& loss, const TrainConfig& config);

// Minimizer of the square-loss risk via conjugate gradients on the normal
// equations; every token contributes to the same system.
Matrix ridge_solve_cg(const Dataset& data, const ModelSpec& spec, double tol = 1e-10, int max_iters = 1000);

ScalarEstimate empirical_test_error(const Matrix& w_hat, const ModelSpec& spec, const SpectralMeasure& nu,
                                    const LossEval& loss_ts, long n_test, std::uint64_t seed);

}  // namespace seqmim
