#pragma once

// Moreau envelope minimizers
//   X* = arginf_X 1/2 (X - anchor)^T P (X - anchor) + l(Y, X, v, c)
// with X flattened row-major and P an Lr x Lr precision. The per-token
// variant takes the diagonal blocks V_l^{-1}; the GAMP variant the full
// matrix.

#include "seqmim/model.hpp"

namespace seqmim {

struct ProxOptions {
  double tol = 1e-10;
  int max_iters = 100;
  bool use_closed_form = true;
};

struct ProxResult {
  Matrix X;
  double value = 0.0;      // objective at X
  double grad_norm = 0.0;  // |P (X - anchor) + grad l|
  int iterations = 0;
  bool closed_form = false;
};

Matrix block_diagonal(const std::vector<Matrix>& blocks);

ProxResult moreau_prox(const Matrix& anchor, const std::vector<Matrix>& token_precisions, const Matrix& Y,
                       const Matrix& v, const ClassTuple& c, const LossModel& loss, const ProxOptions& opts = {});

ProxResult gamp_resolvent(const Matrix& anchor, const Matrix& precision, const Matrix& Y, const Matrix& v,
                          const ClassTuple& c, const LossModel& loss, const ProxOptions& opts = {});

double prox_objective(const Matrix& X, const Matrix& anchor, const Matrix& precision, const Matrix& Y,
                      const Matrix& v, const ClassTuple& c, const LossModel& loss);

struct ProxJacobians {
  Matrix d_omega;  // Lr x Lr
  Matrix d_Y;      // Lr x Lt
  bool finite_difference = false;
};

ProxJacobians prox_jacobians(const Matrix& anchor, const Matrix& precision, const Matrix& Y, const Matrix& v,
                             const ClassTuple& c, const LossModel& loss, const Matrix& X_star,
                             const ProxOptions& opts = {});

}  // namespace seqmim
