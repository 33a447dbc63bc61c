#pragma once

// GAMP and rBP on a concrete dataset, the empirical summary statistics they
// are compared against, and the gradient of the empirical risk.

#include "seqmim/dataset.hpp"
#include "seqmim/prox.hpp"

namespace seqmim {

struct GampOptions {
  int max_iters = 200;
  double tol = 1e-10;
  double damping = 0.3;        // x <- (1 - damping) x_new + damping x_old
  bool adaptive_damping = true;  // halve the step when the residual grows
  bool onsager_omega = true;   // -sum_k V_lk f_k in omega
  bool onsager_b = true;       // +A_i w_i in b_i
  ProxOptions prox;
};

struct GampState {
  Matrix w_hat;                // d x r
  std::vector<Matrix> c_hat;   // d of r x r
  std::vector<Matrix> f;       // n of L x r
  std::vector<Matrix> V;       // n of Lr x Lr
  std::vector<Matrix> omega;   // n of L x r
  Matrix Gamma;                // r x r
  std::vector<Matrix> A;       // d of r x r
  Matrix C;                    // r x r
  Matrix b;                    // d x r
  int iteration = 0;
};

// Empirical overlaps of an estimator against the generator's population
// covariances, means and teacher.
struct SummaryStats {
  int iteration = 0;
  ClusterMap<Matrix> q;
  ClusterMap<Vector> m;
  ClusterMap<Matrix> theta;
  Matrix v;
  double residual = 0.0;
};

SummaryStats summary_statistics(const Matrix& w_hat, const Dataset& data);

struct GampResult {
  GampState state;
  Matrix w_hat;
  std::vector<SummaryStats> trajectory;  // entry t holds the statistics of w^{t+1}
  bool converged = false;
  int iterations = 0;
};

GampResult gamp_run(const Dataset& data, const ModelSpec& spec, const LossModel& loss, const GampOptions& opts);

struct RbpOptions {
  int max_iters = 200;
  double tol = 1e-9;
  double damping = 0.3;
  ProxOptions prox;
};

struct RbpResult {
  Matrix w_hat;
  std::vector<SummaryStats> trajectory;
  bool converged = false;
  int iterations = 0;
};

RbpResult rbp_run(const Dataset& data, const ModelSpec& spec, const LossModel& loss, const RbpOptions& opts);

// R(w) = sum_mu l(y_mu, x_mu w / sqrt d, w^T w / d, c_mu) + lambda/2 |w|^2.
struct RiskEval {
  double value = 0.0;
  Matrix grad;  // d x r
};
RiskEval empirical_risk(const Matrix& w, const Dataset& data, const ModelSpec& spec, const LossModel& loss);

// |grad R(w)|_inf.
double gd_gradient_norm(const Matrix& w, const Dataset& data, const ModelSpec& spec, const LossModel& loss);

}  // namespace seqmim
