#include "seqmim/prox.hpp"

#include <cmath>
#include <deque>
#include <sstream>

namespace seqmim {

Matrix block_diagonal(const std::vector<Matrix>& blocks) {
  Eigen::Index n = 0;
  for (const auto& b : blocks) n += b.rows();
  Matrix out = Matrix::Zero(n, n);
  Eigen::Index off = 0;
  for (const auto& b : blocks) {
    out.block(off, off, b.rows(), b.cols()) = b;
    off += b.rows();
  }
  return out;
}

namespace {

struct Problem {
  const Matrix& anchor;
  const Matrix& P;
  const Matrix& Y;
  const Matrix& v;
  const ClassTuple& c;
  const LossModel& loss;
  int rows, cols;
  Vector a;

  double objective(const Vector& x) const {
    const Vector dx = x - a;
    const double l = loss.eval(Y, unflatten_rows(x, rows, cols), v, c);
    if (!std::isfinite(l)) fail(ErrorCode::loss_blowup, "loss is not finite inside the prox");
    return 0.5 * dx.dot(P * dx) + l;
  }
  Vector gradient(const Vector& x) const {
    return P * (x - a) + flatten_rows(loss.grad_X(Y, unflatten_rows(x, rows, cols), v, c));
  }
};

[[noreturn]] void nonconvergence(const Vector& x, double residual, int iters) {
  std::ostringstream os;
  os << "prox did not converge after " << iters << " steps (residual " << residual << ", last iterate [";
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x(i);
  os << "])";
  fail(ErrorCode::prox_nonconvergence, os.str());
}

ProxResult finish(const Problem& pb, const Vector& x, int iters, bool closed) {
  ProxResult out;
  out.X = unflatten_rows(x, pb.rows, pb.cols);
  out.value = pb.objective(x);
  out.grad_norm = pb.gradient(x).norm();
  out.iterations = iters;
  out.closed_form = closed;
  return out;
}

ProxResult newton(const Problem& pb, Vector x, const ProxOptions& opts, double target) {
  const Eigen::Index n = x.size();
  double f = pb.objective(x);
  double mu = 0.0;
  for (int it = 0; it < opts.max_iters; ++it) {
    const Vector g = pb.gradient(x);
    const double gn = g.norm();
    if (gn <= target) return finish(pb, x, it, false);
    Matrix H = pb.P + pb.loss.hess_XX(pb.Y, unflatten_rows(x, pb.rows, pb.cols), pb.v, pb.c);
    bool accepted = false;
    for (int attempt = 0; attempt < 30 && !accepted; ++attempt) {
      const Matrix Hm = H + mu * Matrix::Identity(n, n);
      Eigen::LDLT<Matrix> ldlt(Hm);
      Vector step = ldlt.solve(-g);
      double slope = g.dot(step);
      if (ldlt.info() != Eigen::Success || !step.allFinite() || slope >= 0) {
        mu = std::max(2 * mu, 1e-8 * (1.0 + H.cwiseAbs().maxCoeff()));
        continue;
      }
      double t = 1.0;
      for (int ls = 0; ls < 60; ++ls) {
        const Vector trial = x + t * step;
        const double ft = pb.objective(trial);
        if (ft <= f + 1e-4 * t * slope + 1e-14 * (1.0 + std::abs(f))) {
          x = trial;
          f = std::min(f, ft);
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) mu = std::max(4 * mu, 1e-8 * (1.0 + H.cwiseAbs().maxCoeff()));
    }
    if (!accepted) nonconvergence(x, gn, it);
    mu *= 0.1;
    if (mu < 1e-14) mu = 0.0;
  }
  const double res = pb.gradient(x).norm();
  if (res <= target) return finish(pb, x, opts.max_iters, false);
  nonconvergence(x, res, opts.max_iters);
}

ProxResult lbfgs(const Problem& pb, Vector x, const ProxOptions& opts, double target) {
  const int memory = 8;
  std::deque<std::pair<Vector, Vector>> hist;
  double f = pb.objective(x);
  Vector g = pb.gradient(x);
  const int max_iters = opts.max_iters * 20;
  for (int it = 0; it < max_iters; ++it) {
    if (g.norm() <= target) return finish(pb, x, it, false);
    // two-loop recursion
    Vector q = g;
    std::vector<double> alpha(hist.size());
    for (int i = static_cast<int>(hist.size()) - 1; i >= 0; --i) {
      const auto& [s, y] = hist[static_cast<std::size_t>(i)];
      alpha[static_cast<std::size_t>(i)] = s.dot(q) / y.dot(s);
      q -= alpha[static_cast<std::size_t>(i)] * y;
    }
    double gamma = 1.0 / std::max(1e-12, pb.P.diagonal().maxCoeff());
    if (!hist.empty()) gamma = hist.back().first.dot(hist.back().second) / hist.back().second.squaredNorm();
    Vector dir = gamma * q;
    for (std::size_t i = 0; i < hist.size(); ++i) {
      const auto& [s, y] = hist[i];
      const double beta = y.dot(dir) / y.dot(s);
      dir += s * (alpha[i] - beta);
    }
    dir = -dir;
    double slope = g.dot(dir);
    if (slope >= 0) {
      hist.clear();
      dir = -g;
      slope = -g.squaredNorm();
    }
    double t = 1.0;
    bool ok = false;
    Vector trial;
    double ft = f;
    for (int ls = 0; ls < 60; ++ls) {
      trial = x + t * dir;
      ft = pb.objective(trial);
      if (ft <= f + 1e-4 * t * slope + 1e-14 * (1.0 + std::abs(f))) {
        ok = true;
        break;
      }
      t *= 0.5;
    }
    if (!ok) nonconvergence(x, g.norm(), it);
    const Vector gt = pb.gradient(trial);
    const Vector s = trial - x, y = gt - g;
    if (s.dot(y) > 1e-16 * s.norm() * y.norm()) {
      hist.emplace_back(s, y);
      if (static_cast<int>(hist.size()) > memory) hist.pop_front();
    }
    x = trial;
    f = std::min(f, ft);
    g = gt;
  }
  if (g.norm() <= target) return finish(pb, x, max_iters, false);
  nonconvergence(x, g.norm(), max_iters);
}

ProxResult solve(const Problem& pb, const ProxOptions& opts) {
  if (pb.P.rows() != pb.a.size()) fail(ErrorCode::validation, "prox precision has the wrong size");
  const double min_eig = pb.P.size() == 1 ? pb.P(0, 0)
                                           : Eigen::SelfAdjointEigenSolver<Matrix>(pb.P, Eigen::EigenvaluesOnly)
                                                 .eigenvalues()
                                                 .minCoeff();
  if (!(min_eig > 1e-12)) {
    std::ostringstream os;
    os << "prox precision is not positive definite (min eigenvalue " << min_eig << ")";
    fail(ErrorCode::validation, os.str());
  }
  const double target = opts.tol * (1.0 + pb.a.norm());
  if (opts.use_closed_form && pb.loss.prox_closed_form) {
    const Matrix X = pb.loss.prox_closed_form(pb.anchor, pb.P, pb.Y, pb.v, pb.c);
    Vector x = flatten_rows(X);
    if (!pb.loss.smooth) return finish(pb, x, 0, true);
    if (pb.gradient(x).norm() <= target) return finish(pb, x, 0, true);
    // polish a closed form that lost digits
    if (pb.loss.hess_XX) return newton(pb, x, opts, target);
    return lbfgs(pb, x, opts, target);
  }
  if (!pb.loss.smooth) fail(ErrorCode::validation, "nonsmooth loss '" + pb.loss.name + "' needs a closed-form prox");
  if (pb.loss.hess_XX) return newton(pb, pb.a, opts, target);
  return lbfgs(pb, pb.a, opts, target);
}

}  // namespace

double prox_objective(const Matrix& X, const Matrix& anchor, const Matrix& precision, const Matrix& Y,
                      const Matrix& v, const ClassTuple& c, const LossModel& loss) {
  const Vector dx = flatten_rows(X) - flatten_rows(anchor);
  return 0.5 * dx.dot(precision * dx) + loss.eval(Y, X, v, c);
}

ProxResult gamp_resolvent(const Matrix& anchor, const Matrix& precision, const Matrix& Y, const Matrix& v,
                          const ClassTuple& c, const LossModel& loss, const ProxOptions& opts) {
  Problem pb{anchor, precision, Y, v, c, loss, static_cast<int>(anchor.rows()), static_cast<int>(anchor.cols()),
             flatten_rows(anchor)};
  return solve(pb, opts);
}

ProxResult moreau_prox(const Matrix& anchor, const std::vector<Matrix>& token_precisions, const Matrix& Y,
                       const Matrix& v, const ClassTuple& c, const LossModel& loss, const ProxOptions& opts) {
  if (static_cast<Eigen::Index>(token_precisions.size()) != anchor.rows())
    fail(ErrorCode::validation, "one precision block per token required");
  return gamp_resolvent(anchor, block_diagonal(token_precisions), Y, v, c, loss, opts);
}

ProxJacobians prox_jacobians(const Matrix& anchor, const Matrix& precision, const Matrix& Y, const Matrix& v,
                             const ClassTuple& c, const LossModel& loss, const Matrix& X_star,
                             const ProxOptions& opts) {
  const Eigen::Index n = anchor.size(), m = Y.size();
  ProxJacobians out;
  bool need_fd_omega = true, need_fd_Y = true;
  if (loss.smooth && loss.hess_XX) {
    const Matrix H = precision + loss.hess_XX(Y, X_star, v, c);
    Eigen::FullPivLU<Matrix> lu(H);
    const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
    if (lu.isInvertible() && Eigen::JacobiSVD<Matrix>(H).singularValues().minCoeff() > 1e-12 * scale) {
      out.d_omega = lu.solve(precision);
      need_fd_omega = false;
      if (loss.hess_XY) {
        out.d_Y = -lu.solve(loss.hess_XY(Y, X_star, v, c));
        need_fd_Y = false;
      }
    }
  }
  if (!need_fd_omega && !need_fd_Y) return out;

  out.finite_difference = true;
  const double h = 1e-5;
  const int rows = static_cast<int>(anchor.rows());
  if (need_fd_omega) {
    out.d_omega.resize(n, n);
    Vector a = flatten_rows(anchor);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double a0 = a(j);
      a(j) = a0 + h;
      const Vector up = flatten_rows(gamp_resolvent(unflatten_rows(a, rows, static_cast<int>(anchor.cols())),
                                                    precision, Y, v, c, loss, opts).X);
      a(j) = a0 - h;
      const Vector down = flatten_rows(gamp_resolvent(unflatten_rows(a, rows, static_cast<int>(anchor.cols())),
                                                      precision, Y, v, c, loss, opts).X);
      a(j) = a0;
      out.d_omega.col(j) = (up - down) / (2 * h);
    }
  }
  if (need_fd_Y) {
    out.d_Y.resize(n, m);
    Vector y = flatten_rows(Y);
    const int t = static_cast<int>(Y.cols());
    for (Eigen::Index j = 0; j < m; ++j) {
      const double y0 = y(j);
      y(j) = y0 + h;
      const Vector up = flatten_rows(gamp_resolvent(anchor, precision, unflatten_rows(y, rows, t), v, c, loss, opts).X);
      y(j) = y0 - h;
      const Vector down =
          flatten_rows(gamp_resolvent(anchor, precision, unflatten_rows(y, rows, t), v, c, loss, opts).X);
      y(j) = y0;
      out.d_Y.col(j) = (up - down) / (2 * h);
    }
  }
  return out;
}

}  // namespace seqmim
