#include "seqmim/saddle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "seqmim/linalg.hpp"

namespace seqmim {

namespace {

struct ClassPrecision {
  std::vector<Matrix> v_inv;  // per token, V_{l, c_l}^{-1}
  Matrix P;
};

std::vector<ClassPrecision> class_precisions(const OrderParameters& params, const ModelSpec& spec) {
  const ClusterIndex index = spec.index();
  std::vector<Matrix> inv(static_cast<std::size_t>(index.size()));
  for (int f = 0; f < index.size(); ++f) {
    const Matrix& V = params.V.at(f);
    require_symmetric(V, "V");
    const double low = min_eigenvalue(V);
    if (!(low > kClipTol)) {
      std::ostringstream os;
      os << "V at (token " << index.token_of(f) + 1 << ", cluster " << index.cluster_of(f) + 1
         << ") is not positive definite (min eigenvalue " << low << ")";
      fail(ErrorCode::inconsistent_overlaps, os.str());
    }
    inv[static_cast<std::size_t>(f)] = sym_pinv(V);
  }
  std::vector<ClassPrecision> out;
  for (const auto& c : spec.law.support) {
    ClassPrecision cp;
    for (int l = 0; l < spec.dims.L; ++l) cp.v_inv.push_back(inv[static_cast<std::size_t>(index.flat(l, c[static_cast<std::size_t>(l)]))]);
    cp.P = block_diagonal(cp.v_inv);
    out.push_back(std::move(cp));
  }
  return out;
}

Matrix add_teacher_mean(const Matrix& Y, const FixedStatistics& fixed, const ClassTuple& c) {
  Matrix out = Y;
  for (Eigen::Index l = 0; l < Y.rows(); ++l)
    out.row(l) += fixed.m_star(static_cast<int>(l), c[static_cast<std::size_t>(l)]).transpose();
  return out;
}

bool q_singular(const OrderParameters& params) {
  for (const auto& q : params.q) {
    const double scale = std::max(1.0, q.cwiseAbs().maxCoeff());
    if (min_eigenvalue(q) <= 1e-10 * scale) return true;
  }
  return false;
}

}  // namespace

ConjugateParameters update_hats(const OrderParameters& params, const FixedStatistics& fixed, const ModelSpec& spec,
                                const McPlan& plan, const HatOptions& opts, double* max_stderr,
                                ConjugateParameters* stderr_out) {
  const auto& dims = spec.dims;
  const ClusterIndex index = spec.index();
  const int r = dims.r, t = dims.t, L = dims.L;
  const LossModel& loss = spec.loss;

  HatForm form = opts.form;
  if (form == HatForm::automatic) {
    const bool exact_jacobians = loss.smooth && loss.hess_XX && loss.hess_XY;
    form = (exact_jacobians || q_singular(params)) ? HatForm::jacobian : HatForm::stein;
  }
  if (form == HatForm::stein && q_singular(params))
    fail(ErrorCode::degenerate_overlap, "the Stein form of the hat update needs an invertible q");

  const auto precisions = class_precisions(params, spec);
  std::vector<EnergeticChannel> channels;
  for (const auto& c : spec.law.support) channels.push_back(energetic_channel(params, fixed, c));

  // Teacher channel per class and token: 0 = regular, 1 = rho vanishes, 2 = degenerate.
  std::vector<std::vector<int>> teacher_state(channels.size(), std::vector<int>(static_cast<std::size_t>(L), 0));
  if (form == HatForm::stein) {
    for (std::size_t ci = 0; ci < channels.size(); ++ci) {
      for (int l = 0; l < L; ++l) {
        const auto& tok = channels[ci].tokens[static_cast<std::size_t>(l)];
        const Matrix& rho = fixed.rho(l, channels[ci].c[static_cast<std::size_t>(l)]);
        const double scale = std::max(1.0, rho.cwiseAbs().maxCoeff());
        if (rho.cwiseAbs().maxCoeff() <= 1e-14) {
          teacher_state[ci][static_cast<std::size_t>(l)] = 1;
        } else if (min_eigenvalue(tok.schur) <= 1e-12 * scale) {
          fail(ErrorCode::degenerate_teacher_channel,
               "rho - theta^T q^-1 theta is singular at token " + std::to_string(l + 1) + " with a nonzero teacher");
        }
      }
    }
  }

  const int block = 2 * r * r + r + r * t;
  const int out_dim = index.size() * block + r * r;
  auto fn = [&](int ci, const EnergeticDraw& draw, double* out) {
    const ClassTuple& c = spec.law.support[static_cast<std::size_t>(ci)];
    const auto& cp = precisions[static_cast<std::size_t>(ci)];
    const auto& ch = channels[static_cast<std::size_t>(ci)];
    const Matrix Y = add_teacher_mean(draw.Y, fixed, c);
    const ProxResult pr = gamp_resolvent(draw.anchor, cp.P, Y, params.v, c, loss, opts.prox);
    const Matrix D = pr.X - draw.anchor;
    ProxJacobians jac;
    if (form == HatForm::jacobian) jac = prox_jacobians(draw.anchor, cp.P, Y, params.v, c, loss, pr.X, opts.prox);
    for (int l = 0; l < L; ++l) {
      const int f = index.flat(l, c[static_cast<std::size_t>(l)]);
      double* o = out + f * block;
      const Matrix& Vi = cp.v_inv[static_cast<std::size_t>(l)];
      const Vector g = Vi * D.row(l).transpose();
      Eigen::Map<Matrix>(o, r, r) += g * g.transpose();
      Eigen::Map<Vector>(o + 2 * r * r, r) += g;
      Eigen::Map<Matrix> vhat(o + r * r, r, r);
      Eigen::Map<Matrix> thetahat(o + 2 * r * r + r, r, t);
      if (form == HatForm::jacobian) {
        const Matrix Jw = jac.d_omega.block(l * r, l * r, r, r);
        const Matrix Jy = jac.d_Y.block(l * r, l * t, r, t);
        vhat -= Vi * (Jw - Matrix::Identity(r, r));
        thetahat += Vi * Jy;
      } else {
        const auto& tok = ch.tokens[static_cast<std::size_t>(l)];
        vhat -= g * (tok.inv_sqrt_q * draw.xi.row(l).transpose()).transpose();
        if (teacher_state[static_cast<std::size_t>(ci)][static_cast<std::size_t>(l)] == 0) {
          const Vector noise = tok.schur_sqrt * draw.eta.row(l).transpose();
          thetahat += g * (tok.schur_pinv * noise).transpose();
        }
      }
    }
    if (loss.depends_on_v)
      Eigen::Map<Matrix>(out + index.size() * block, r, r) += loss.d3(Y, pr.X, params.v, c);
  };
  const Estimate est = expect_over_measure(fn, out_dim, spec, params, fixed, plan);

  ConjugateParameters conj = zero_conjugate_parameters(dims);
  const double a = dims.alpha;
  for (int f = 0; f < index.size(); ++f) {
    const double* o = est.mean.data() + f * block;
    conj.q_hat.at(f) = a * Eigen::Map<const Matrix>(o, r, r);
    conj.V_hat.at(f) = a * Eigen::Map<const Matrix>(o + r * r, r, r);
    conj.m_hat.at(f) = a * Eigen::Map<const Vector>(o + 2 * r * r, r);
    conj.theta_hat.at(f) = a * Eigen::Map<const Matrix>(o + 2 * r * r + r, r, t);
    if (form == HatForm::stein) conj.V_hat.at(f) += conj.theta_hat.at(f) * params.theta.at(f).transpose() * sym_pinv(params.q.at(f));
    symmetrize(conj.q_hat.at(f));
    symmetrize(conj.V_hat.at(f));
  }
  if (loss.depends_on_v) {
    conj.v_hat = 2 * a * Eigen::Map<const Matrix>(est.mean.data() + index.size() * block, r, r);
    symmetrize(conj.v_hat);
  }
  if (max_stderr) *max_stderr = a * (est.stderr_.size() ? est.stderr_.maxCoeff() : 0.0);
  if (stderr_out) {
    ConjugateParameters& se = *stderr_out;
    se = zero_conjugate_parameters(dims);
    for (int f = 0; f < index.size(); ++f) {
      const double* o = est.stderr_.data() + f * block;
      se.q_hat.at(f) = a * Eigen::Map<const Matrix>(o, r, r);
      se.V_hat.at(f) = a * Eigen::Map<const Matrix>(o + r * r, r, r);
      se.m_hat.at(f) = a * Eigen::Map<const Vector>(o + 2 * r * r, r);
      se.theta_hat.at(f) = a * Eigen::Map<const Matrix>(o + 2 * r * r + r, r, t);
    }
    if (loss.depends_on_v) se.v_hat = 2 * a * Eigen::Map<const Matrix>(est.stderr_.data() + index.size() * block, r, r);
  }
  return conj;
}

namespace {

struct AtomTerms {
  Matrix R, K;
  Vector S;
};

AtomTerms atom_terms(const ConjugateParameters& conj, const SpectralAtom& atom, const ModelSpec& spec,
                     std::size_t atom_index) {
  const int r = spec.dims.r;
  const int nf = conj.q_hat.size();
  Matrix M = spec.dims.lambda * Matrix::Identity(r, r) + conj.v_hat;
  Vector S = Vector::Zero(r);
  Matrix K = Matrix::Zero(r, r);
  for (int f = 0; f < nf; ++f) {
    const double g = atom.gamma(f);
    M += g * conj.V_hat.at(f);
    S += conj.m_hat.at(f) * atom.tau(f) + g * conj.theta_hat.at(f) * atom.pi;
    K += g * conj.q_hat.at(f);
  }
  K += S * S.transpose();
  const double smin = min_singular_value(M);
  if (!(smin > 1e-12 * std::max(1.0, M.cwiseAbs().maxCoeff()))) {
    std::ostringstream os;
    os << "resolvent is singular at atom " << atom_index << " (min singular value " << smin << ")";
    fail(ErrorCode::singular_resolvent, os.str());
  }
  return {M.inverse(), K, S};
}

}  // namespace

OrderParameters update_overlaps(const ConjugateParameters& conj, const SpectralMeasure& nu, const ModelSpec& spec) {
  OrderParameters out = zero_order_parameters(spec.dims);
  const int nf = conj.q_hat.size();
  for (std::size_t a = 0; a < nu.atoms.size(); ++a) {
    const auto& atom = nu.atoms[a];
    if (atom.weight == 0) continue;
    const AtomTerms at = atom_terms(conj, atom, spec, a);
    const Matrix RKR = at.R * at.K * at.R.transpose();
    const Vector RS = at.R * at.S;
    const double w = atom.weight;
    for (int f = 0; f < nf; ++f) {
      const double g = atom.gamma(f);
      out.V.at(f) += w * g * at.R;
      out.q.at(f) += w * g * RKR;
      out.m.at(f) += w * atom.tau(f) * RS;
      out.theta.at(f) += w * g * RS * atom.pi.transpose();
    }
    out.v += w * RKR;
  }
  for (auto& q : out.q) symmetrize(q);
  for (auto& V : out.V) symmetrize(V);
  symmetrize(out.v);
  return out;
}

SpectralTraces spectral_traces(const ConjugateParameters& conj, const SpectralMeasure& nu, const ModelSpec& spec) {
  SpectralTraces out;
  for (std::size_t a = 0; a < nu.atoms.size(); ++a) {
    const auto& atom = nu.atoms[a];
    if (atom.weight == 0) continue;
    const AtomTerms at = atom_terms(conj, atom, spec, a);
    out.tr_RK += atom.weight * (at.R * at.K).trace();
    out.tr_RKR += atom.weight * (at.R * at.K * at.R.transpose()).trace();
  }
  return out;
}

ScalarEstimate expected_moreau(const OrderParameters& params, const FixedStatistics& fixed, const ModelSpec& spec,
                               const McPlan& plan, const ProxOptions& prox) {
  const auto precisions = class_precisions(params, spec);
  auto fn = [&](int ci, const EnergeticDraw& draw, double* out) {
    const ClassTuple& c = spec.law.support[static_cast<std::size_t>(ci)];
    const Matrix Y = add_teacher_mean(draw.Y, fixed, c);
    out[0] = gamp_resolvent(draw.anchor, precisions[static_cast<std::size_t>(ci)].P, Y, params.v, c, spec.loss, prox)
                 .value;
  };
  const Estimate est = expect_over_measure(fn, 1, spec, params, fixed, plan);
  return {est.mean(0), est.stderr_(0)};
}

ScalarEstimate free_entropy(const OrderParameters& params, const ConjugateParameters& conj,
                            const FixedStatistics& fixed, const SpectralMeasure& nu, const ModelSpec& spec,
                            const McPlan& plan) {
  double phi = 0.0;
  for (int f = 0; f < params.q.size(); ++f) {
    phi += 0.5 * ((params.q.at(f) * conj.V_hat.at(f).transpose()).trace() -
                  (params.V.at(f) * conj.q_hat.at(f).transpose()).trace());
    phi -= (params.theta.at(f) * conj.theta_hat.at(f).transpose()).trace();
    phi -= conj.m_hat.at(f).dot(params.m.at(f));
  }
  phi += 0.5 * (params.v * conj.v_hat).trace();
  phi += 0.5 * spectral_traces(conj, nu, spec).tr_RK;
  // no data: the energetic term drops out
  const ScalarEstimate em = spec.dims.alpha == 0 ? ScalarEstimate{} : expected_moreau(params, fixed, spec, plan);
  phi -= spec.dims.alpha * em.value;
  return {phi, spec.dims.alpha * em.stderr_};
}

ScalarEstimate test_error(const OrderParameters& params, const FixedStatistics& fixed, const ModelSpec& spec,
                          const McPlan& plan, const LossEval& loss_ts) {
  const LossEval& metric = loss_ts ? loss_ts : spec.loss.test_eval;
  if (!metric) fail(ErrorCode::validation, "no test metric configured");
  auto fn = [&](int ci, const JointDraw& draw, double* out) {
    out[0] = metric(draw.Y, draw.X, params.v, spec.law.support[static_cast<std::size_t>(ci)]);
  };
  const Estimate est = expect_over_joint(fn, 1, spec, params, fixed, plan);
  return {est.mean(0), est.stderr_(0)};
}

ScalarEstimate train_loss(const OrderParameters& params, const ConjugateParameters& conj,
                          const FixedStatistics& fixed, const SpectralMeasure& nu, const ModelSpec& spec,
                          const McPlan& plan) {
  double et = 0.5 * spec.dims.lambda * spectral_traces(conj, nu, spec).tr_RKR;
  for (int f = 0; f < params.q.size(); ++f) et -= 0.5 * (conj.q_hat.at(f) * params.V.at(f)).trace();
  // no data: the energetic term drops out
  const ScalarEstimate em = spec.dims.alpha == 0 ? ScalarEstimate{} : expected_moreau(params, fixed, spec, plan);
  et += spec.dims.alpha * em.value;
  return {et, spec.dims.alpha * em.stderr_};
}

OrderParameters initial_overlaps(const ModelSpec& spec, const SpectralMeasure& nu, const FixedStatistics& fixed,
                                 const SolverConfig& config) {
  const auto& dims = spec.dims;
  const int r = dims.r, t = dims.t;
  const Matrix I = Matrix::Identity(r, r);
  OrderParameters p = zero_order_parameters(dims);
  switch (config.init) {
    case InitKind::warm:
      if (!config.warm_start) fail(ErrorCode::validation, "warm init needs warm_start parameters");
      return *config.warm_start;
    case InitKind::cold:
      for (auto& q : p.q) q = config.eps_init * I;
      for (auto& V : p.V) V = I;
      p.v = config.eps_init * I;
      return p;
    case InitKind::informed: {
      const int s = std::min(r, t);
      for (int f = 0; f < p.q.size(); ++f) {
        p.q.at(f) = config.eps_init * I;
        p.q.at(f).topLeftCorner(s, s) += fixed.rho.at(f).topLeftCorner(s, s);
        p.theta.at(f).topLeftCorner(s, s) = fixed.rho.at(f).topLeftCorner(s, s);
        p.m.at(f).head(s) = fixed.m_star.at(f).head(s);
        p.V.at(f) = I;
      }
      p.v = config.eps_init * I;
      return p;
    }
    case InitKind::gamp: {
      // w = 0 and c_i = I: V_l,k = sum_i (Sigma_l,k)_ii / d, everything else zero
      for (int f = 0; f < p.q.size(); ++f) {
        double mean_gamma = 0.0;
        for (const auto& atom : nu.atoms) mean_gamma += atom.weight * atom.gamma(f);
        p.V.at(f) = mean_gamma * I;
      }
      return p;
    }
  }
  return p;
}

namespace {

template <class T>
double block_change(const ClusterMap<T>& a, const ClusterMap<T>& b) {
  double out = 0.0;
  for (int f = 0; f < a.size(); ++f) out = std::max(out, (a.at(f) - b.at(f)).norm() / (1.0 + a.at(f).norm()));
  return out;
}

}  // namespace

double relative_change(const OrderParameters& a, const OrderParameters& b, bool include_v) {
  double out = std::max({block_change(a.q, b.q), block_change(a.V, b.V), block_change(a.m, b.m),
                         block_change(a.theta, b.theta)});
  if (include_v) out = std::max(out, (a.v - b.v).norm() / (1.0 + a.v.norm()));
  return out;
}

double relative_change(const ConjugateParameters& a, const ConjugateParameters& b, bool include_v) {
  double out = std::max({block_change(a.q_hat, b.q_hat), block_change(a.V_hat, b.V_hat),
                         block_change(a.m_hat, b.m_hat), block_change(a.theta_hat, b.theta_hat)});
  if (include_v) out = std::max(out, (a.v_hat - b.v_hat).norm() / (1.0 + a.v_hat.norm()));
  return out;
}

FixedPointReport solve_fixed_point(const ModelSpec& spec, const SpectralMeasure& nu, const SolverConfig& config) {
  if (!(config.damping >= 0 && config.damping < 1)) fail(ErrorCode::validation, "damping must lie in [0, 1)");
  if (!(config.tol > 0)) fail(ErrorCode::validation, "tol must be positive");
  const ValidationReport vr = validate_spec(spec);
  if (!vr.ok()) fail(ErrorCode::validation, "invalid spec: " + vr.violations.front());

  const FixedStatistics fixed = compute_fixed_statistics(nu, spec.dims);
  const bool with_v = spec.loss.depends_on_v;
  HatOptions hat_opts{config.hat_form, config.prox};

  FixedPointReport rep;
  OrderParameters overlaps = initial_overlaps(spec, nu, fixed, config);
  std::optional<ConjugateParameters> hats;
  McPlan plan = config.mc_plan;

  for (int it = 0; it < config.max_iters; ++it) {
    plan.iteration = it;
    double stderr_hat = 0.0;
    const ConjugateParameters hats_prop = update_hats(overlaps, fixed, spec, plan, hat_opts, &stderr_hat);
    double residual = 0.0;
    ConjugateParameters hats_new = hats_prop;
    if (hats) {
      residual = relative_change(hats_prop, *hats, with_v);
      hats_new = lerp(hats_prop, *hats, config.damping);
    }
    // damping acts on the hats only, so the overlaps always equal
    // update_overlaps(hats) exactly
    const OrderParameters overlaps_new = update_overlaps(hats_new, nu, spec);
    residual = std::max(residual, relative_change(overlaps_new, overlaps, with_v));

    rep.residual_history.push_back(residual);
    rep.iterations = it + 1;
    rep.hat_stderr = stderr_hat;
    hats = hats_new;
    overlaps = overlaps_new;
    if (config.record_trajectory) rep.trajectory.push_back({it + 1, overlaps, hats_new, residual});

    if (!std::isfinite(residual) || residual > config.divergence_threshold) {
      std::ostringstream os;
      os << "fixed-point iteration diverged at sweep " << it + 1 << "; residual history:";
      for (double r : rep.residual_history) os << ' ' << r;
      fail(ErrorCode::divergence, os.str());
    }
    if (it > 0 && residual <= config.tol) {
      rep.converged = true;
      break;
    }
  }
  rep.params = overlaps;
  rep.conj = *hats;
  rep.free_entropy = free_entropy(rep.params, rep.conj, fixed, nu, spec, config.mc_plan);
  rep.train_loss = train_loss(rep.params, rep.conj, fixed, nu, spec, config.mc_plan);
  rep.test_error = test_error(rep.params, fixed, spec, config.mc_plan);
  return rep;
}

std::vector<std::string> check_invariants(const OrderParameters& params, const ConjugateParameters& conj,
                                          const FixedStatistics& fixed) {
  std::vector<std::string> out;
  auto sym = [&](const Matrix& A, const std::string& name) {
    if (max_asymmetry(A) > kSymmetryTol) out.push_back(name + " not symmetric");
  };
  for (int f = 0; f < params.q.size(); ++f) {
    const std::string at = "[" + std::to_string(f) + "]";
    sym(params.q.at(f), "q" + at);
    sym(params.V.at(f), "V" + at);
    sym(conj.q_hat.at(f), "q_hat" + at);
    if (min_eigenvalue(params.q.at(f)) < -kNegativeEigTol) out.push_back("q" + at + " not PSD");
    if (min_eigenvalue(params.V.at(f)) <= 0) out.push_back("V" + at + " not positive definite");
    if (min_eigenvalue(conj.q_hat.at(f)) < -kNegativeEigTol) out.push_back("q_hat" + at + " not PSD");
    if (min_eigenvalue(params.q.at(f)) > kClipTol) {
      const Matrix schur = fixed.rho.at(f) - params.theta.at(f).transpose() * sym_pinv(params.q.at(f)) * params.theta.at(f);
      if (min_eigenvalue(0.5 * (schur + schur.transpose())) < -kNegativeEigTol) out.push_back("Schur complement" + at + " not PSD");
    }
  }
  sym(params.v, "v");
  sym(conj.v_hat, "v_hat");
  if (min_eigenvalue(params.v) < -kNegativeEigTol) out.push_back("v not PSD");
  return out;
}

}  // namespace seqmim
