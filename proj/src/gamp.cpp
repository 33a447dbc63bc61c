#include "seqmim/gamp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "seqmim/kernels.hpp"

namespace seqmim {

SummaryStats summary_statistics(const Matrix& w_hat, const Dataset& data) {
  const ClusterIndex index(data.K);
  const int r = static_cast<int>(w_hat.cols());
  const int t = data.t;
  const double d = data.d;
  SummaryStats s{0, ClusterMap<Matrix>(index, Matrix::Zero(r, r)), ClusterMap<Vector>(index, Vector::Zero(r)),
                 ClusterMap<Matrix>(index, Matrix::Zero(r, t)), Matrix::Zero(r, r), 0.0};
  for (int f = 0; f < index.size(); ++f) {
    const Vector& g = data.cov_diag[static_cast<std::size_t>(f)];
    const Vector& mu = data.means[static_cast<std::size_t>(f)];
    s.q.at(f) = w_hat.transpose() * g.asDiagonal() * w_hat / d;
    s.m.at(f) = w_hat.transpose() * mu / std::sqrt(d);
    s.theta.at(f) = w_hat.transpose() * g.asDiagonal() * data.teacher / d;
  }
  s.v = w_hat.transpose() * w_hat / d;
  return s;
}

namespace {

// Column-major copies for the vector kernels: col[a] has length d.
std::vector<Vector> columns(const Matrix& W) {
  std::vector<Vector> out;
  for (Eigen::Index a = 0; a < W.cols(); ++a) out.emplace_back(W.col(a));
  return out;
}

Matrix precision_of(const Matrix& V, long mu) {
  Eigen::LDLT<Matrix> ldlt(V);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0)) {
    fail(ErrorCode::singular_solve, "V_mu is not positive definite at sample " + std::to_string(mu));
  }
  Matrix P = ldlt.solve(Matrix::Identity(V.rows(), V.cols()));
  return 0.5 * (P + P.transpose());
}

Matrix solve_coordinate(const Matrix& M, long i, Matrix* inverse) {
  Eigen::FullPivLU<Matrix> lu(M);
  if (!lu.isInvertible()) fail(ErrorCode::singular_solve, "lambda I + C + A_i is singular at coordinate " + std::to_string(i));
  *inverse = lu.inverse();
  return *inverse;
}

}  // namespace

GampResult gamp_run(const Dataset& data, const ModelSpec& spec, const LossModel& loss, const GampOptions& opts) {
  const int L = data.L, d = data.d, r = spec.dims.r;
  const long n = data.n;
  const double lambda = spec.dims.lambda;
  const double inv_d = 1.0 / d, inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const auto& kern = kernels();
  const std::size_t ud = static_cast<std::size_t>(d);
  if (L != spec.dims.L || data.t != spec.dims.t) fail(ErrorCode::validation, "dataset does not match the spec");

  GampResult res;
  GampState& st = res.state;
  st.w_hat = Matrix::Zero(d, r);
  st.c_hat.assign(ud, Matrix::Identity(r, r));
  st.f.assign(static_cast<std::size_t>(n), Matrix::Zero(L, r));
  st.V.assign(static_cast<std::size_t>(n), Matrix::Zero(L * r, L * r));
  st.omega.assign(static_cast<std::size_t>(n), Matrix::Zero(L, r));
  st.A.assign(ud, Matrix::Zero(r, r));
  st.C = Matrix::Zero(r, r);
  st.b = Matrix::Zero(d, r);

  double step = 1.0 - opts.damping;
  double prev_residual = INFINITY;
  std::vector<Vector> A_flat(static_cast<std::size_t>(r * r)), c_flat(static_cast<std::size_t>(r * r));
  std::vector<Vector> b_cols(static_cast<std::size_t>(r));

  for (int it = 0; it < opts.max_iters; ++it) {
    const std::vector<Vector> w_cols = columns(st.w_hat);
    for (int a = 0; a < r; ++a)
      for (int b = 0; b < r; ++b) {
        Vector& cf = c_flat[static_cast<std::size_t>(a * r + b)];
        cf.resize(d);
        for (int i = 0; i < d; ++i) cf(i) = st.c_hat[static_cast<std::size_t>(i)](a, b);
        A_flat[static_cast<std::size_t>(a * r + b)] = Vector::Zero(d);
      }
    for (int a = 0; a < r; ++a) b_cols[static_cast<std::size_t>(a)] = Vector::Zero(d);
    st.Gamma = st.w_hat.transpose() * st.w_hat * inv_d;
    Matrix eta_sum = Matrix::Zero(r, r);

    for (long mu = 0; mu < n; ++mu) {
      const auto umu = static_cast<std::size_t>(mu);
      const ClassTuple& c = data.c[umu];
      Matrix& V = st.V[umu];
      for (int l = 0; l < L; ++l)
        for (int k = l; k < L; ++k)
          for (int a = 0; a < r; ++a)
            for (int b = 0; b < r; ++b) {
              const double val =
                  kern.wdot(data.x(mu, l), data.x(mu, k), c_flat[static_cast<std::size_t>(a * r + b)].data(), ud) * inv_d;
              V(l * r + a, k * r + b) = val;
              V(k * r + b, l * r + a) = val;
            }
      Matrix omega(L, r);
      for (int l = 0; l < L; ++l)
        for (int a = 0; a < r; ++a)
          omega(l, a) = kern.dot(data.x(mu, l), w_cols[static_cast<std::size_t>(a)].data(), ud) * inv_sqrt_d;
      if (opts.onsager_omega) omega -= unflatten_rows(V * flatten_rows(st.f[umu]), L, r);
      st.omega[umu] = omega;

      const Matrix P = precision_of(V, mu);
      const Matrix Y = data.labels(mu);
      ProxResult pr;
      try {
        pr = gamp_resolvent(omega, P, Y, st.Gamma, c, loss, opts.prox);
      } catch (const Error& e) {
        fail(e.code(), "GAMP iteration " + std::to_string(it) + ", sample " + std::to_string(mu) + ": " + e.what());
      }
      const Vector fvec = P * (flatten_rows(pr.X) - flatten_rows(omega));
      st.f[umu] = unflatten_rows(fvec, L, r);
      const ProxJacobians jac = prox_jacobians(omega, P, Y, st.Gamma, c, loss, pr.X, opts.prox);
      const Matrix g = P * (jac.d_omega - Matrix::Identity(L * r, L * r));
      if (loss.depends_on_v) eta_sum += loss.d3(Y, pr.X, st.Gamma, c);

      for (int l = 0; l < L; ++l) {
        for (int k = 0; k < L; ++k)
          for (int a = 0; a < r; ++a)
            for (int b = 0; b < r; ++b) {
              const double coef = -g(l * r + a, k * r + b) * inv_d;
              if (coef != 0.0)
                kern.axpy_prod(coef, data.x(mu, l), data.x(mu, k), A_flat[static_cast<std::size_t>(a * r + b)].data(), ud);
            }
        for (int a = 0; a < r; ++a)
          kern.axpy(fvec(l * r + a) * inv_sqrt_d, data.x(mu, l), b_cols[static_cast<std::size_t>(a)].data(), ud);
      }
    }
    st.C = 2.0 * inv_d * eta_sum;

    Matrix w_new(d, r);
    std::vector<Matrix> c_new(ud);
    for (int i = 0; i < d; ++i) {
      Matrix& Ai = st.A[static_cast<std::size_t>(i)];
      for (int a = 0; a < r; ++a)
        for (int b = 0; b < r; ++b) Ai(a, b) = A_flat[static_cast<std::size_t>(a * r + b)](i);
      Vector bi(r);
      for (int a = 0; a < r; ++a) bi(a) = b_cols[static_cast<std::size_t>(a)](i);
      if (opts.onsager_b) bi += Ai * st.w_hat.row(i).transpose();
      st.b.row(i) = bi.transpose();
      const Matrix M = lambda * Matrix::Identity(r, r) + st.C + Ai;
      Matrix inv;
      solve_coordinate(M, i, &inv);
      w_new.row(i) = (inv * bi).transpose();
      c_new[static_cast<std::size_t>(i)] = inv;
    }

    const Matrix w_old = st.w_hat;
    st.w_hat = w_old + step * (w_new - w_old);
    for (int i = 0; i < d; ++i) {
      auto& ci = st.c_hat[static_cast<std::size_t>(i)];
      ci = ci + step * (c_new[static_cast<std::size_t>(i)] - ci);
    }
    st.iteration = it + 1;
    const double scale = 1.0 + (w_old.size() ? w_old.cwiseAbs().maxCoeff() : 0.0);
    const double residual = d > 0 ? (st.w_hat - w_old).rowwise().norm().maxCoeff() / scale : 0.0;

    SummaryStats stats = summary_statistics(st.w_hat, data);
    stats.iteration = it + 1;
    stats.residual = residual;
    res.trajectory.push_back(std::move(stats));
    res.iterations = it + 1;
    if (!std::isfinite(residual)) fail(ErrorCode::divergence, "GAMP diverged at iteration " + std::to_string(it + 1));
    if (residual <= opts.tol) {
      res.converged = true;
      break;
    }
    if (opts.adaptive_damping && residual > prev_residual) step = std::max(0.5 * step, 0.01);
    prev_residual = residual;
  }
  res.w_hat = st.w_hat;
  return res;
}

RbpResult rbp_run(const Dataset& data, const ModelSpec& spec, const LossModel& loss, const RbpOptions& opts) {
  const int L = data.L, d = data.d, r = spec.dims.r;
  const long n = data.n;
  if (static_cast<double>(d) * static_cast<double>(n) > 1e7)
    fail(ErrorCode::validation, "rBP needs d * n <= 1e7 message slots");
  const double lambda = spec.dims.lambda;
  const double inv_d = 1.0 / d, inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const Matrix I = Matrix::Identity(r, r);
  const auto slot = [n](int i, long mu) { return static_cast<std::size_t>(i * n + mu); };

  // variable -> factor messages
  std::vector<Vector> w_msg(static_cast<std::size_t>(d * n), Vector::Zero(r));
  std::vector<Matrix> c_msg(static_cast<std::size_t>(d * n), I);
  // factor -> variable
  std::vector<Matrix> f_msg(static_cast<std::size_t>(d * n), Matrix::Zero(L, r));
  std::vector<Matrix> g_msg(static_cast<std::size_t>(d * n), Matrix::Zero(L * r, L * r));
  std::vector<Matrix> eta_msg(static_cast<std::size_t>(d * n), Matrix::Zero(r, r));

  RbpResult res;
  res.w_hat = Matrix::Zero(d, r);
  const double step = 1.0 - opts.damping;

  auto marginal_terms = [&](int i, Matrix& A, Matrix& C, Vector& b) {
    A = Matrix::Zero(r, r);
    C = Matrix::Zero(r, r);
    b = Vector::Zero(r);
    for (long mu = 0; mu < n; ++mu) {
      const auto s = slot(i, mu);
      for (int l = 0; l < L; ++l) {
        const double xl = data.x(mu, l)[i];
        for (int k = 0; k < L; ++k) A -= inv_d * xl * data.x(mu, k)[i] * g_msg[s].block(l * r, k * r, r, r);
        b += inv_sqrt_d * xl * f_msg[s].row(l).transpose();
      }
      C += 2.0 * inv_d * eta_msg[s];
    }
  };

  for (int it = 0; it < opts.max_iters; ++it) {
    // factor side
    for (long mu = 0; mu < n; ++mu) {
      const ClassTuple& c = data.c[static_cast<std::size_t>(mu)];
      const Matrix Y = data.labels(mu);
      Matrix Vtot = Matrix::Zero(L * r, L * r), omega_tot = Matrix::Zero(L, r), Gamma_tot = Matrix::Zero(r, r);
      for (int j = 0; j < d; ++j) {
        const auto s = slot(j, mu);
        for (int l = 0; l < L; ++l) {
          const double xl = data.x(mu, l)[j];
          omega_tot.row(l) += inv_sqrt_d * xl * w_msg[s].transpose();
          for (int k = 0; k < L; ++k) Vtot.block(l * r, k * r, r, r) += inv_d * xl * data.x(mu, k)[j] * c_msg[s];
        }
        Gamma_tot += inv_d * w_msg[s] * w_msg[s].transpose();
      }
      for (int i = 0; i < d; ++i) {
        const auto s = slot(i, mu);
        Matrix V = Vtot, omega = omega_tot;
        for (int l = 0; l < L; ++l) {
          const double xl = data.x(mu, l)[i];
          omega.row(l) -= inv_sqrt_d * xl * w_msg[s].transpose();
          for (int k = 0; k < L; ++k) V.block(l * r, k * r, r, r) -= inv_d * xl * data.x(mu, k)[i] * c_msg[s];
        }
        const Matrix Gamma = Gamma_tot - inv_d * w_msg[s] * w_msg[s].transpose();
        const Matrix P = precision_of(V, mu);
        const ProxResult pr = gamp_resolvent(omega, P, Y, Gamma, c, loss, opts.prox);
        f_msg[s] = unflatten_rows(P * (flatten_rows(pr.X) - flatten_rows(omega)), L, r);
        const ProxJacobians jac = prox_jacobians(omega, P, Y, Gamma, c, loss, pr.X, opts.prox);
        g_msg[s] = P * (jac.d_omega - Matrix::Identity(L * r, L * r));
        eta_msg[s] = loss.depends_on_v ? loss.d3(Y, pr.X, Gamma, c) : Matrix::Zero(r, r);
      }
    }
    // variable side
    double change = 0.0;
    Matrix w_new(d, r);
    for (int i = 0; i < d; ++i) {
      Matrix A, C;
      Vector b;
      marginal_terms(i, A, C, b);
      for (long mu = 0; mu < n; ++mu) {
        const auto s = slot(i, mu);
        Matrix Am = A, Cm = C - 2.0 * inv_d * eta_msg[s];
        Vector bm = b;
        for (int l = 0; l < L; ++l) {
          const double xl = data.x(mu, l)[i];
          for (int k = 0; k < L; ++k) Am += inv_d * xl * data.x(mu, k)[i] * g_msg[s].block(l * r, k * r, r, r);
          bm -= inv_sqrt_d * xl * f_msg[s].row(l).transpose();
        }
        Matrix inv;
        solve_coordinate(lambda * I + Cm + Am, i, &inv);
        const Vector w = inv * bm;
        w_msg[s] += step * (w - w_msg[s]);
        c_msg[s] += step * (inv - c_msg[s]);
      }
      Matrix inv;
      solve_coordinate(lambda * I + C + A, i, &inv);
      w_new.row(i) = (inv * b).transpose();
    }
    const double scale = 1.0 + (res.w_hat.size() ? res.w_hat.cwiseAbs().maxCoeff() : 0.0);
    change = d > 0 ? (w_new - res.w_hat).rowwise().norm().maxCoeff() / scale : 0.0;
    res.w_hat = w_new;
    SummaryStats stats = summary_statistics(res.w_hat, data);
    stats.iteration = it + 1;
    stats.residual = change;
    res.trajectory.push_back(std::move(stats));
    res.iterations = it + 1;
    if (!std::isfinite(change)) fail(ErrorCode::divergence, "rBP diverged at iteration " + std::to_string(it + 1));
    if (it > 0 && change <= opts.tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

RiskEval empirical_risk(const Matrix& w, const Dataset& data, const ModelSpec& spec, const LossModel& loss) {
  const int L = data.L, d = data.d, r = static_cast<int>(w.cols());
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const auto& kern = kernels();
  const std::size_t ud = static_cast<std::size_t>(d);
  const std::vector<Vector> w_cols = columns(w);
  std::vector<Vector> g_cols(static_cast<std::size_t>(r), Vector::Zero(d));
  const Matrix Gamma = w.transpose() * w / d;
  Matrix D = Matrix::Zero(r, r);
  double value = 0.0;
  Matrix Z(L, r);
  for (long mu = 0; mu < data.n; ++mu) {
    const ClassTuple& c = data.c[static_cast<std::size_t>(mu)];
    for (int l = 0; l < L; ++l)
      for (int a = 0; a < r; ++a) Z(l, a) = kern.dot(data.x(mu, l), w_cols[static_cast<std::size_t>(a)].data(), ud) * inv_sqrt_d;
    const Matrix Y = data.labels(mu);
    value += loss.eval(Y, Z, Gamma, c);
    const Matrix G = loss.grad_X(Y, Z, Gamma, c);
    for (int l = 0; l < L; ++l)
      for (int a = 0; a < r; ++a)
        if (G(l, a) != 0.0) kern.axpy(G(l, a) * inv_sqrt_d, data.x(mu, l), g_cols[static_cast<std::size_t>(a)].data(), ud);
    if (loss.depends_on_v) D += loss.d3(Y, Z, Gamma, c);
  }
  RiskEval out;
  out.value = value + 0.5 * spec.dims.lambda * w.squaredNorm();
  out.grad.resize(d, r);
  for (int a = 0; a < r; ++a) out.grad.col(a) = g_cols[static_cast<std::size_t>(a)];
  out.grad += w * (D + D.transpose()) / d + spec.dims.lambda * w;
  return out;
}

double gd_gradient_norm(const Matrix& w, const Dataset& data, const ModelSpec& spec, const LossModel& loss) {
  const RiskEval ev = empirical_risk(w, data, spec, loss);
  return ev.grad.size() ? ev.grad.cwiseAbs().maxCoeff() : 0.0;
}

}  // namespace seqmim
