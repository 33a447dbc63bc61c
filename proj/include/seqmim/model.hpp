#pragma once

// Problem definition shared by every module: dimensions, the class law,
// the spectral measure, teacher statistics, replica order parameters and
// the pluggable loss interface.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seqmim/error.hpp"

namespace seqmim {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Cluster assignment per token, 0-based (c_l in [0, K_l)).
using ClassTuple = std::vector<int>;

struct Dimensions {
  int L = 1;
  int r = 1;
  int t = 1;
  std::vector<int> K{1};
  double alpha = 1.0;
  double lambda = 0.1;
  int d = 1000;
};

/// Row-major enumeration of the (token, cluster) pairs.
class ClusterIndex {
 public:
  ClusterIndex() = default;
  explicit ClusterIndex(std::vector<int> K);

  int size() const { return static_cast<int>(token_.size()); }
  int tokens() const { return static_cast<int>(K_.size()); }
  int clusters(int l) const { return K_.at(static_cast<std::size_t>(l)); }
  int flat(int l, int k) const;
  int token_of(int flat) const { return token_.at(static_cast<std::size_t>(flat)); }
  int cluster_of(int flat) const { return cluster_.at(static_cast<std::size_t>(flat)); }
  const std::vector<int>& K() const { return K_; }

  bool operator==(const ClusterIndex& o) const { return K_ == o.K_; }

 private:
  std::vector<int> K_;
  std::vector<int> offset_;
  std::vector<int> token_;
  std::vector<int> cluster_;
};

/// Total map over (token, cluster) keys. Built either from a full value list
/// or from a fill value; there is no partial construction.
template <class T>
class ClusterMap {
 public:
  ClusterMap() = default;
  ClusterMap(ClusterIndex index, const T& fill)
      : index_(std::move(index)), values_(static_cast<std::size_t>(index_.size()), fill) {}
  ClusterMap(ClusterIndex index, std::vector<T> values) : index_(std::move(index)), values_(std::move(values)) {
    if (static_cast<int>(values_.size()) != index_.size()) {
      fail(ErrorCode::validation, "cluster map needs " + std::to_string(index_.size()) + " entries, got " +
                                      std::to_string(values_.size()));
    }
  }

  T& operator()(int l, int k) { return values_[static_cast<std::size_t>(index_.flat(l, k))]; }
  const T& operator()(int l, int k) const { return values_[static_cast<std::size_t>(index_.flat(l, k))]; }
  T& at(int flat) { return values_.at(static_cast<std::size_t>(flat)); }
  const T& at(int flat) const { return values_.at(static_cast<std::size_t>(flat)); }

  int size() const { return static_cast<int>(values_.size()); }
  const ClusterIndex& index() const { return index_; }
  auto begin() { return values_.begin(); }
  auto end() { return values_.end(); }
  auto begin() const { return values_.begin(); }
  auto end() const { return values_.end(); }

 private:
  ClusterIndex index_;
  std::vector<T> values_;
};

struct ClassLaw {
  std::vector<ClassTuple> support;
  std::vector<double> probs;
};

/// One weighted atom of the joint law of (gamma, tau, pi). gamma and tau are
/// indexed by the flat (token, cluster) order of ClusterIndex.
struct SpectralAtom {
  double weight = 1.0;
  Vector gamma;
  Vector tau;
  Vector pi;
};

struct SpectralMeasure {
  std::vector<SpectralAtom> atoms;
};

struct FixedStatistics {
  ClusterMap<Matrix> rho;     // t x t
  ClusterMap<Vector> m_star;  // t
};

struct OrderParameters {
  ClusterMap<Matrix> q;      // r x r
  ClusterMap<Matrix> V;      // r x r
  ClusterMap<Vector> m;      // r
  ClusterMap<Matrix> theta;  // r x t
  Matrix v;                  // r x r
};

struct ConjugateParameters {
  ClusterMap<Matrix> q_hat;
  ClusterMap<Matrix> V_hat;
  ClusterMap<Vector> m_hat;
  ClusterMap<Matrix> theta_hat;
  Matrix v_hat;
};

// Loss signature l(Y, X, v, c): Y is L x t (teacher preactivations, means
// included), X is L x r, v is the r x r self-overlap w^T w / d.
using LossEval = std::function<double(const Matrix& Y, const Matrix& X, const Matrix& v, const ClassTuple& c)>;
using LossMatrixFn = std::function<Matrix(const Matrix& Y, const Matrix& X, const Matrix& v, const ClassTuple& c)>;
// Closed-form minimizer of 1/2 (X - anchor)^T P (X - anchor) + l(Y, X, v, c),
// with X flattened row-major (index l * r + a) and P the Lr x Lr precision.
using ProxClosedForm =
    std::function<Matrix(const Matrix& anchor, const Matrix& precision, const Matrix& Y, const Matrix& v,
                         const ClassTuple& c)>;

struct LossModel {
  std::string name;
  LossEval eval;
  LossMatrixFn grad_X;  // L x r
  LossMatrixFn d3;      // r x r, derivative in the v slot
  LossEval test_eval;
  // Optional second derivatives in the flattened layout: d2l/dXdX (Lr x Lr)
  // and d2l/dXdY (Lr x Lt).
  LossMatrixFn hess_XX;
  LossMatrixFn hess_XY;
  ProxClosedForm prox_closed_form;
  bool depends_on_v = false;
  bool strongly_convex = false;
  bool smooth = true;
};

struct LossSpec {
  std::string name = "square";
  std::map<std::string, double> params;
  std::string test_name;  // empty: loss default
};

struct ModelSpec {
  Dimensions dims;
  ClassLaw law;
  SpectralMeasure nu;
  LossSpec loss_spec;
  LossModel loss;

  ClusterIndex index() const { return ClusterIndex(dims.K); }
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

FixedStatistics compute_fixed_statistics(const SpectralMeasure& nu, const Dimensions& dims);

ValidationReport validate_spec(const ModelSpec& spec);

// Finite-difference checks of grad_X and d3 at n_points random points. Returns
// the worst relative error of each.
struct GradientCheck {
  double grad_X_rel_error = 0.0;
  double d3_rel_error = 0.0;
};
GradientCheck check_loss_gradients(const LossModel& loss, const Dimensions& dims, const ClassLaw& law,
                                   int n_points, unsigned long seed);

/// Builds nu exactly from a finite-d instance. covariances are (token,
/// cluster)-indexed d x d symmetric matrices sharing an eigenbasis; means are
/// d-vectors; teacher is d x t. Each eigenvector becomes an atom of weight
/// 1/d.
SpectralMeasure extract_spectral_measure(const ClusterIndex& index, const std::vector<Matrix>& covariances,
                                         const std::vector<Vector>& means, const Matrix& teacher);

// Zero-initialised parameter blocks of the right shapes.
OrderParameters zero_order_parameters(const Dimensions& dims);
ConjugateParameters zero_conjugate_parameters(const Dimensions& dims);

double max_asymmetry(const Matrix& A);
void symmetrize(Matrix& A);

// Row-major flattening of an L x r block.
Vector flatten_rows(const Matrix& X);
Matrix unflatten_rows(const Vector& x, int rows, int cols);

// Concatenated parameter vector, used for residuals and trajectory tables.
Vector pack(const OrderParameters& p);
Vector pack(const ConjugateParameters& p);
std::vector<std::string> pack_labels(const OrderParameters& p);
std::vector<std::string> pack_labels(const ConjugateParameters& p);

OrderParameters lerp(const OrderParameters& proposed, const OrderParameters& old, double damping);
ConjugateParameters lerp(const ConjugateParameters& proposed, const ConjugateParameters& old, double damping);

}  // namespace seqmim
