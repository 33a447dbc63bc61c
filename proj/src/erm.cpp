#include "seqmim/erm.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "seqmim/kernels.hpp"

namespace seqmim {

TrainResult erm_train(const Dataset& data, const ModelSpec& spec, const LossModel& loss, const TrainConfig& config) {
  if (!(config.step > 0)) fail(ErrorCode::validation, "step size must be positive");
  if (!(config.grad_threshold > 0)) fail(ErrorCode::validation, "gradient threshold must be positive");
  const int d = data.d, r = spec.dims.r;
  Matrix w = Matrix::Zero(d, r);
  if (config.init == WeightInit::gaussian) {
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, config.init_sigma);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = normal(rng);
  } else if (config.init == WeightInit::warm) {
    if (!config.warm_start || config.warm_start->rows() != d || config.warm_start->cols() != r)
      fail(ErrorCode::validation, "warm start has the wrong shape");
    w = *config.warm_start;
  }

  TrainResult res;
  RiskEval cur = empirical_risk(w, data, spec, loss);
  res.objective.push_back(cur.value);
  double step = config.step;
  int stalled = 0;
  for (int it = 0; it < config.max_epochs; ++it) {
    const double gnorm = cur.grad.cwiseAbs().maxCoeff();
    if (gnorm <= config.grad_threshold) {
      res.converged = true;
      break;
    }
    const double g2 = cur.grad.squaredNorm();
    bool accepted = false;
    if (config.step_policy == StepPolicy::fixed) {
      RiskEval next = empirical_risk(w - step * cur.grad, data, spec, loss);
      accepted = next.value <= cur.value;
      w -= step * cur.grad;
      cur = std::move(next);
    } else {
      for (int ls = 0; ls < 60; ++ls) {
        const Matrix trial = w - step * cur.grad;
        RiskEval next = empirical_risk(trial, data, spec, loss);
        // Armijo, or (near the optimum, where the decrease drowns in rounding)
        // no increase together with a smaller gradient
        const bool armijo = next.value <= cur.value - 1e-4 * step * g2;
        const bool flat = next.value <= cur.value + 1e-13 * (1.0 + std::abs(cur.value)) &&
                          next.grad.squaredNorm() < g2;
        if (std::isfinite(next.value) && (armijo || flat)) {
          w = trial;
          cur = std::move(next);
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      step *= 2.0;
    }
    res.iterations = it + 1;
    res.objective.push_back(cur.value);
    stalled = accepted ? 0 : stalled + 1;
    if (stalled >= config.stall_limit) {
      std::ostringstream os;
      os << "gradient descent stalled for " << stalled << " steps (objective " << cur.value << ", gradient " << gnorm
         << ")";
      fail(ErrorCode::stalled, os.str());
    }
  }
  res.w_hat = w;
  res.grad_norm = cur.grad.cwiseAbs().maxCoeff();
  res.converged = res.converged || res.grad_norm <= config.grad_threshold;
  res.train_loss_per_sample = cur.value / d;
  return res;
}

Matrix ridge_solve_cg(const Dataset& data, const ModelSpec& spec, double tol, int max_iters) {
  const int L = data.L, d = data.d, t = data.t;
  if (spec.dims.r != t) fail(ErrorCode::validation, "ridge solve needs r = t");
  const double lambda = spec.dims.lambda;
  const auto& kern = kernels();
  const std::size_t ud = static_cast<std::size_t>(d);
  const double inv_d = 1.0 / d, inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  // (sum x x^T / d + lambda) p in one pass over the data
  auto apply = [&](const Vector& p, Vector& out) {
    out = lambda * p;
    for (long mu = 0; mu < data.n; ++mu)
      for (int l = 0; l < L; ++l) {
        const double s = kern.dot(data.x(mu, l), p.data(), ud) * inv_d;
        kern.axpy(s, data.x(mu, l), out.data(), ud);
      }
  };

  Matrix W(d, t);
  for (int j = 0; j < t; ++j) {
    Vector rhs = Vector::Zero(d);
    for (long mu = 0; mu < data.n; ++mu)
      for (int l = 0; l < L; ++l)
        kern.axpy(data.y[static_cast<std::size_t>((mu * L + l) * t + j)] * inv_sqrt_d, data.x(mu, l), rhs.data(), ud);
    Vector x = Vector::Zero(d), res = rhs, p = res, Ap(d);
    double rr = res.squaredNorm();
    const double stop = tol * tol * std::max(rr, 1e-300);
    for (int it = 0; it < max_iters && rr > stop; ++it) {
      apply(p, Ap);
      const double alpha = rr / p.dot(Ap);
      x += alpha * p;
      res -= alpha * Ap;
      const double rr_new = res.squaredNorm();
      p = res + (rr_new / rr) * p;
      rr = rr_new;
    }
    W.col(j) = x;
  }
  return W;
}

ScalarEstimate empirical_test_error(const Matrix& w_hat, const ModelSpec& spec, const SpectralMeasure& nu,
                                    const LossEval& loss_ts, long n_test, std::uint64_t seed) {
  const LossEval& metric = loss_ts ? loss_ts : spec.loss.test_eval;
  const int d = static_cast<int>(w_hat.rows());
  const DatasetGenerator gen(spec, nu, d);
  const Matrix Gamma = w_hat.transpose() * w_hat / d;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const long chunk = 4096;
  double sum = 0.0, sum2 = 0.0;
  for (long start = 0, block = 0; start < n_test; start += chunk, ++block) {
    const Dataset ds = gen.sample(std::min(chunk, n_test - start), mix_seed(seed, static_cast<std::uint64_t>(block)));
    for (long mu = 0; mu < ds.n; ++mu) {
      const Matrix X = ds.sample(mu) * w_hat * inv_sqrt_d;
      const double v = metric(ds.labels(mu), X, Gamma, ds.c[static_cast<std::size_t>(mu)]);
      sum += v;
      sum2 += v * v;
    }
  }
  const double mean = sum / n_test;
  const double var = n_test > 1 ? std::max(0.0, (sum2 - n_test * mean * mean) / (n_test - 1)) : 0.0;
  return {mean, std::sqrt(var / n_test)};
}

}  // namespace seqmim
