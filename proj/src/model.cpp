#include "seqmim/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace seqmim {

ClusterIndex::ClusterIndex(std::vector<int> K) : K_(std::move(K)) {
  int running = 0;
  for (std::size_t l = 0; l < K_.size(); ++l) {
    if (K_[l] < 1) fail(ErrorCode::validation, "token " + std::to_string(l + 1) + " has no clusters");
    offset_.push_back(running);
    for (int k = 0; k < K_[l]; ++k) {
      token_.push_back(static_cast<int>(l));
      cluster_.push_back(k);
    }
    running += K_[l];
  }
}

int ClusterIndex::flat(int l, int k) const {
  if (l < 0 || l >= tokens() || k < 0 || k >= K_[static_cast<std::size_t>(l)]) {
    fail(ErrorCode::validation, "cluster key (" + std::to_string(l) + "," + std::to_string(k) + ") out of range");
  }
  return offset_[static_cast<std::size_t>(l)] + k;
}

FixedStatistics compute_fixed_statistics(const SpectralMeasure& nu, const Dimensions& dims) {
  const ClusterIndex index(dims.K);
  FixedStatistics out{ClusterMap<Matrix>(index, Matrix::Zero(dims.t, dims.t)),
                      ClusterMap<Vector>(index, Vector::Zero(dims.t))};
  for (std::size_t a = 0; a < nu.atoms.size(); ++a) {
    const auto& atom = nu.atoms[a];
    if (atom.gamma.size() != index.size() || atom.tau.size() != index.size() || atom.pi.size() != dims.t) {
      fail(ErrorCode::validation, "spectral atom " + std::to_string(a) + " does not match dimensions");
    }
    const Matrix outer = atom.pi * atom.pi.transpose();
    for (int f = 0; f < index.size(); ++f) {
      out.rho.at(f) += atom.weight * atom.gamma(f) * outer;
      out.m_star.at(f) += atom.weight * atom.tau(f) * atom.pi;
    }
  }
  for (auto& rho : out.rho) symmetrize(rho);
  return out;
}

namespace {

Matrix random_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix M(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) M(i, j) = normal(rng);
  return M;
}

double scaled_error(const Matrix& numeric, const Matrix& analytic) {
  const double scale = std::max(1.0, analytic.norm());
  return (numeric - analytic).norm() / scale;
}

}  // namespace

GradientCheck check_loss_gradients(const LossModel& loss, const Dimensions& dims, const ClassLaw& law,
                                   int n_points, unsigned long seed) {
  std::mt19937_64 rng(seed);
  GradientCheck out;
  for (int p = 0; p < n_points; ++p) {
    const ClassTuple c = law.support.empty() ? ClassTuple(static_cast<std::size_t>(dims.L), 0)
                                             : law.support[static_cast<std::size_t>(p) % law.support.size()];
    const Matrix Y = random_matrix(dims.L, dims.t, rng);
    Matrix X = random_matrix(dims.L, dims.r, rng);
    const Matrix A = random_matrix(dims.r, dims.r, rng);
    Matrix v = A.transpose() * A / dims.r + 0.1 * Matrix::Identity(dims.r, dims.r);

    const Matrix g = loss.grad_X(Y, X, v, c);
    Matrix fd(dims.L, dims.r);
    for (int i = 0; i < dims.L; ++i) {
      for (int j = 0; j < dims.r; ++j) {
        const double h = 1e-5 * std::max(1.0, std::abs(X(i, j)));
        const double x0 = X(i, j);
        X(i, j) = x0 + h;
        const double up = loss.eval(Y, X, v, c);
        X(i, j) = x0 - h;
        const double down = loss.eval(Y, X, v, c);
        X(i, j) = x0;
        fd(i, j) = (up - down) / (2 * h);
      }
    }
    out.grad_X_rel_error = std::max(out.grad_X_rel_error, scaled_error(fd, g));

    const Matrix d3 = loss.d3(Y, X, v, c);
    if (!loss.depends_on_v) {
      out.d3_rel_error = std::max(out.d3_rel_error, d3.norm());
      continue;
    }
    Matrix fd3(dims.r, dims.r);
    for (int i = 0; i < dims.r; ++i) {
      for (int j = 0; j < dims.r; ++j) {
        const double h = 1e-5 * std::max(1.0, std::abs(v(i, j)));
        const double v0 = v(i, j);
        v(i, j) = v0 + h;
        const double up = loss.eval(Y, X, v, c);
        v(i, j) = v0 - h;
        const double down = loss.eval(Y, X, v, c);
        v(i, j) = v0;
        fd3(i, j) = (up - down) / (2 * h);
      }
    }
    out.d3_rel_error = std::max(out.d3_rel_error, scaled_error(fd3, d3));
  }
  return out;
}

ValidationReport validate_spec(const ModelSpec& spec) {
  ValidationReport report;
  auto violate = [&](const std::string& what) { report.violations.push_back(what); };
  const auto& dims = spec.dims;

  if (dims.L < 1) violate("Dimensions: L must be positive");
  if (dims.r < 1) violate("Dimensions: r must be positive");
  if (dims.t < 1) violate("Dimensions: t must be positive");
  if (dims.d < 1) violate("Dimensions: d must be positive");
  if (static_cast<int>(dims.K.size()) != dims.L) violate("Dimensions: K must have L entries");
  if (std::any_of(dims.K.begin(), dims.K.end(), [](int k) { return k < 1; }))
    violate("Dimensions: every K entry must be >= 1");
  if (!(dims.alpha >= 0)) violate("Dimensions: alpha must be non-negative");
  if (!(dims.lambda >= 0)) violate("Dimensions: lambda must be nonnegative");
  if (!report.ok()) return report;

  const ClusterIndex index(dims.K);

  // Class law.
  if (spec.law.support.empty()) violate("ClassLaw: empty support");
  if (spec.law.support.size() != spec.law.probs.size()) violate("ClassLaw: support and probs differ in length");
  double total = 0.0;
  for (double p : spec.law.probs) {
    if (!(p >= 0)) violate("ClassLaw: negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    std::ostringstream os;
    os << "ClassLaw: probabilities sum to " << total << ", not 1";
    violate(os.str());
  }
  for (const auto& c : spec.law.support) {
    bool ok = static_cast<int>(c.size()) == dims.L;
    for (int l = 0; ok && l < dims.L; ++l) ok = c[static_cast<std::size_t>(l)] >= 0 && c[static_cast<std::size_t>(l)] < dims.K[static_cast<std::size_t>(l)];
    if (!ok) {
      violate("ClassLaw: class tuple outside per-token ranges");
      break;
    }
  }

  // Spectral measure.
  if (spec.nu.atoms.empty()) violate("SpectralMeasure: no atoms");
  double weight = 0.0;
  for (std::size_t a = 0; a < spec.nu.atoms.size(); ++a) {
    const auto& atom = spec.nu.atoms[a];
    if (!(atom.weight >= 0)) violate("SpectralMeasure: negative weight at atom " + std::to_string(a));
    weight += atom.weight;
    if (atom.gamma.size() != index.size() || atom.tau.size() != index.size() || atom.pi.size() != dims.t) {
      violate("SpectralMeasure: atom " + std::to_string(a) + " has mismatched dimensions");
      continue;
    }
    if ((atom.gamma.array() < 0).any()) violate("SpectralMeasure: negative gamma at atom " + std::to_string(a));
  }
  if (std::abs(weight - 1.0) > 1e-12) violate("SpectralMeasure: weights sum to " + std::to_string(weight));

  // Loss.
  const auto& loss = spec.loss;
  if (!loss.eval || !loss.grad_X || !loss.d3 || !loss.test_eval) {
    violate("LossModel: missing eval, grad_X, d3 or test_eval");
    return report;
  }
  if (dims.lambda == 0 && !loss.strongly_convex)
    violate("LossModel: lambda = 0 requires a loss strongly convex in X");
  if (loss.smooth) {
    const auto check = check_loss_gradients(loss, dims, spec.law, 4, 7);
    if (check.grad_X_rel_error > 1e-5)
      violate("LossModel: grad_X disagrees with finite differences (" + std::to_string(check.grad_X_rel_error) + ")");
    if (check.d3_rel_error > 1e-5)
      violate("LossModel: d3 disagrees with finite differences (" + std::to_string(check.d3_rel_error) + ")");
  }
  return report;
}

SpectralMeasure extract_spectral_measure(const ClusterIndex& index, const std::vector<Matrix>& covariances,
                                         const std::vector<Vector>& means, const Matrix& teacher) {
  if (static_cast<int>(covariances.size()) != index.size() || static_cast<int>(means.size()) != index.size())
    fail(ErrorCode::validation, "one covariance and one mean per (token, cluster) required");
  const Eigen::Index d = teacher.rows();
  // A generic combination separates the shared eigenvectors.
  Matrix mix = Matrix::Zero(d, d);
  for (std::size_t j = 0; j < covariances.size(); ++j) mix += (1.0 + 0.6180339887 * static_cast<double>(j)) * covariances[j];
  Eigen::SelfAdjointEigenSolver<Matrix> eig(mix);
  const Matrix& E = eig.eigenvectors();

  SpectralMeasure nu;
  const double sqrt_d = std::sqrt(static_cast<double>(d));
  for (Eigen::Index i = 0; i < d; ++i) {
    const Vector e = E.col(i);
    SpectralAtom atom;
    atom.weight = 1.0 / static_cast<double>(d);
    atom.gamma.resize(index.size());
    atom.tau.resize(index.size());
    for (int f = 0; f < index.size(); ++f) {
      atom.gamma(f) = e.dot(covariances[static_cast<std::size_t>(f)] * e);
      atom.tau(f) = sqrt_d * e.dot(means[static_cast<std::size_t>(f)]);
    }
    atom.pi = teacher.transpose() * e;
    nu.atoms.push_back(std::move(atom));
  }
  return nu;
}

OrderParameters zero_order_parameters(const Dimensions& dims) {
  const ClusterIndex index(dims.K);
  const Matrix rr = Matrix::Zero(dims.r, dims.r);
  return {ClusterMap<Matrix>(index, rr), ClusterMap<Matrix>(index, rr), ClusterMap<Vector>(index, Vector::Zero(dims.r)),
          ClusterMap<Matrix>(index, Matrix::Zero(dims.r, dims.t)), rr};
}

ConjugateParameters zero_conjugate_parameters(const Dimensions& dims) {
  const ClusterIndex index(dims.K);
  const Matrix rr = Matrix::Zero(dims.r, dims.r);
  return {ClusterMap<Matrix>(index, rr), ClusterMap<Matrix>(index, rr), ClusterMap<Vector>(index, Vector::Zero(dims.r)),
          ClusterMap<Matrix>(index, Matrix::Zero(dims.r, dims.t)), rr};
}

double max_asymmetry(const Matrix& A) {
  if (A.rows() != A.cols()) return INFINITY;
  if (A.size() == 0) return 0.0;
  return (A - A.transpose()).cwiseAbs().maxCoeff();
}

void symmetrize(Matrix& A) { A = 0.5 * (A + A.transpose()).eval(); }

Vector flatten_rows(const Matrix& X) {
  Vector out(X.size());
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = 0; j < X.cols(); ++j) out(i * X.cols() + j) = X(i, j);
  return out;
}

Matrix unflatten_rows(const Vector& x, int rows, int cols) {
  Matrix out(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out(i, j) = x(i * cols + j);
  return out;
}

namespace {

template <class Blocks>
void append(std::vector<double>& out, const Blocks& blocks) {
  for (const auto& b : blocks) {
    const Matrix m = b;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  }
}

void label_block(std::vector<std::string>& out, const std::string& name, const ClusterIndex& index, int rows, int cols) {
  for (int f = 0; f < index.size(); ++f)
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        out.push_back(name + "_" + std::to_string(index.token_of(f) + 1) + "_" + std::to_string(index.cluster_of(f) + 1) +
                      "_" + std::to_string(i + 1) + std::to_string(j + 1));
}

void label_plain(std::vector<std::string>& out, const std::string& name, int rows, int cols) {
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out.push_back(name + "_" + std::to_string(i + 1) + std::to_string(j + 1));
}

Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())); }

}  // namespace

Vector pack(const OrderParameters& p) {
  std::vector<double> out;
  append(out, p.q);
  append(out, p.V);
  append(out, p.m);
  append(out, p.theta);
  append(out, std::vector<Matrix>{p.v});
  return to_vector(out);
}

Vector pack(const ConjugateParameters& p) {
  std::vector<double> out;
  append(out, p.q_hat);
  append(out, p.V_hat);
  append(out, p.m_hat);
  append(out, p.theta_hat);
  append(out, std::vector<Matrix>{p.v_hat});
  return to_vector(out);
}

std::vector<std::string> pack_labels(const OrderParameters& p) {
  std::vector<std::string> out;
  const auto& idx = p.q.index();
  const int r = static_cast<int>(p.v.rows());
  const int t = idx.size() > 0 ? static_cast<int>(p.theta.at(0).cols()) : 0;
  label_block(out, "q", idx, r, r);
  label_block(out, "V", idx, r, r);
  label_block(out, "m", idx, r, 1);
  label_block(out, "theta", idx, r, t);
  label_plain(out, "v", r, r);
  return out;
}

std::vector<std::string> pack_labels(const ConjugateParameters& p) {
  std::vector<std::string> out;
  const auto& idx = p.q_hat.index();
  const int r = static_cast<int>(p.v_hat.rows());
  const int t = idx.size() > 0 ? static_cast<int>(p.theta_hat.at(0).cols()) : 0;
  label_block(out, "qhat", idx, r, r);
  label_block(out, "Vhat", idx, r, r);
  label_block(out, "mhat", idx, r, 1);
  label_block(out, "thetahat", idx, r, t);
  label_plain(out, "vhat", r, r);
  return out;
}

namespace {

template <class T>
ClusterMap<T> mix(const ClusterMap<T>& a, const ClusterMap<T>& b, double damping) {
  ClusterMap<T> out = a;
  for (int f = 0; f < a.size(); ++f) out.at(f) = (1.0 - damping) * a.at(f) + damping * b.at(f);
  return out;
}

}  // namespace

OrderParameters lerp(const OrderParameters& proposed, const OrderParameters& old, double damping) {
  return {mix(proposed.q, old.q, damping), mix(proposed.V, old.V, damping), mix(proposed.m, old.m, damping),
          mix(proposed.theta, old.theta, damping), (1.0 - damping) * proposed.v + damping * old.v};
}

ConjugateParameters lerp(const ConjugateParameters& proposed, const ConjugateParameters& old, double damping) {
  return {mix(proposed.q_hat, old.q_hat, damping), mix(proposed.V_hat, old.V_hat, damping),
          mix(proposed.m_hat, old.m_hat, damping), mix(proposed.theta_hat, old.theta_hat, damping),
          (1.0 - damping) * proposed.v_hat + damping * old.v_hat};
}

}  // namespace seqmim
