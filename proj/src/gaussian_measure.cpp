#include "seqmim/gaussian_measure.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <thread>

#include "seqmim/linalg.hpp"

namespace seqmim {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined word
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

constexpr long kBlock = 256;

bool is_singular(const Matrix& q) {
  if (q.size() == 0) return false;
  const double scale = std::max(1.0, q.cwiseAbs().maxCoeff());
  return min_eigenvalue(q) <= kClipTol * scale;
}

TokenChannel make_token(const Matrix& q, const Matrix& theta, const Matrix& rho, const Vector& m, const Vector& m_star,
                        int l, int k) {
  TokenChannel tok;
  const std::string where = " at (token " + std::to_string(l + 1) + ", cluster " + std::to_string(k + 1) + ")";
  try {
    tok.sqrt_q = sym_sqrt(q);
    tok.inv_sqrt_q = sym_inv_sqrt(q);
  } catch (const Error& e) {
    fail(ErrorCode::inconsistent_overlaps, std::string("q") + where + ": " + e.what());
  }
  tok.singular_q = is_singular(q);
  if (tok.singular_q) {
    const Matrix P = range_projector(q);
    const double off = (theta - P * theta).norm();
    if (off > 1e-10 * (1.0 + theta.norm())) {
      std::ostringstream os;
      os << "q is singular and theta leaves its range" << where << " (residual " << off << ")";
      fail(ErrorCode::degenerate_overlap, os.str());
    }
  }
  tok.mean_map = theta.transpose() * tok.inv_sqrt_q;
  tok.schur = rho - tok.mean_map * tok.mean_map.transpose();
  symmetrize(tok.schur);
  try {
    tok.schur_sqrt = sym_sqrt(tok.schur);
  } catch (const Error& e) {
    fail(ErrorCode::inconsistent_overlaps, std::string("rho - theta^T q^-1 theta") + where + ": " + e.what());
  }
  tok.schur_pinv = sym_pinv(tok.schur);
  tok.m = m;
  tok.m_star = m_star;
  return tok;
}

}  // namespace

EnergeticChannel energetic_channel(const OrderParameters& params, const FixedStatistics& fixed, const ClassTuple& c) {
  EnergeticChannel ch;
  ch.c = c;
  ch.L = static_cast<int>(c.size());
  ch.r = static_cast<int>(params.v.rows());
  ch.t = fixed.rho.size() > 0 ? static_cast<int>(fixed.rho.at(0).rows()) : 0;
  for (int l = 0; l < ch.L; ++l) {
    const int k = c[static_cast<std::size_t>(l)];
    ch.tokens.push_back(make_token(params.q(l, k), params.theta(l, k), fixed.rho(l, k), params.m(l, k),
                                   fixed.m_star(l, k), l, k));
  }
  return ch;
}

void draw_energetic(const EnergeticChannel& ch, const double* z, EnergeticDraw& out) {
  const int L = ch.L, r = ch.r, t = ch.t;
  out.xi.resize(L, r);
  out.eta.resize(L, t);
  out.Y.resize(L, t);
  out.anchor.resize(L, r);
  for (int l = 0; l < L; ++l) {
    const Eigen::Map<const Vector> xi(z + l * r, r);
    const Eigen::Map<const Vector> eta(z + L * r + l * t, t);
    const auto& tok = ch.tokens[static_cast<std::size_t>(l)];
    out.xi.row(l) = xi.transpose();
    out.eta.row(l) = eta.transpose();
    out.Y.row(l) = (tok.mean_map * xi + tok.schur_sqrt * eta).transpose();
    out.anchor.row(l) = (tok.sqrt_q * xi + tok.m).transpose();
  }
}

std::vector<EnergeticDraw> sample_energetic_measure(const OrderParameters& params, const FixedStatistics& fixed,
                                                    const ClassTuple& c, const McPlan& plan) {
  const auto ch = energetic_channel(params, fixed, c);
  const auto cores = core_normals(ch.core_dim(), plan, 0, plan.n_samples);
  std::vector<EnergeticDraw> out(cores.size());
  for (std::size_t i = 0; i < cores.size(); ++i) draw_energetic(ch, cores[i].data(), out[i]);
  return out;
}

JointChannel joint_channel(const OrderParameters& params, const FixedStatistics& fixed, const ClassTuple& c) {
  JointChannel ch;
  ch.c = c;
  ch.L = static_cast<int>(c.size());
  ch.r = static_cast<int>(params.v.rows());
  ch.t = fixed.rho.size() > 0 ? static_cast<int>(fixed.rho.at(0).rows()) : 0;
  const int r = ch.r, t = ch.t;
  for (int l = 0; l < ch.L; ++l) {
    const int k = c[static_cast<std::size_t>(l)];
    Matrix block(r + t, r + t);
    block.topLeftCorner(r, r) = params.q(l, k);
    block.topRightCorner(r, t) = params.theta(l, k);
    block.bottomLeftCorner(t, r) = params.theta(l, k).transpose();
    block.bottomRightCorner(t, t) = fixed.rho(l, k);
    try {
      require_symmetric(block, "joint (X, Y) covariance");
      ch.factor.push_back(sym_sqrt(block));
    } catch (const Error& e) {
      fail(ErrorCode::inconsistent_overlaps, "token " + std::to_string(l + 1) + ": " + e.what());
    }
    Vector mean(r + t);
    mean << params.m(l, k), fixed.m_star(l, k);
    ch.mean.push_back(mean);
  }
  return ch;
}

void draw_joint(const JointChannel& ch, const double* z, JointDraw& out) {
  const int L = ch.L, r = ch.r, t = ch.t;
  out.X.resize(L, r);
  out.Y.resize(L, t);
  for (int l = 0; l < L; ++l) {
    const Eigen::Map<const Vector> zl(z + l * (r + t), r + t);
    const Vector s = ch.mean[static_cast<std::size_t>(l)] + ch.factor[static_cast<std::size_t>(l)] * zl;
    out.X.row(l) = s.head(r).transpose();
    out.Y.row(l) = s.tail(t).transpose();
  }
}

std::vector<JointDraw> sample_joint_xy(const OrderParameters& params, const FixedStatistics& fixed, const ClassTuple& c,
                                       const McPlan& plan) {
  const auto ch = joint_channel(params, fixed, c);
  const auto cores = core_normals(ch.core_dim(), plan, 0, plan.n_samples);
  std::vector<JointDraw> out(cores.size());
  for (std::size_t i = 0; i < cores.size(); ++i) draw_joint(ch, cores[i].data(), out[i]);
  return out;
}

namespace {

std::mt19937_64 block_stream(const McPlan& plan, int class_index, long block) {
  std::uint64_t s = mix_seed(plan.seed, static_cast<std::uint64_t>(class_index));
  s = mix_seed(s, plan.crn ? 0 : static_cast<std::uint64_t>(plan.iteration) + 1);
  s = mix_seed(s, static_cast<std::uint64_t>(block));
  return std::mt19937_64(s);
}

long effective_samples(const McPlan& plan) {
  if (plan.n_samples < 1) fail(ErrorCode::validation, "McPlan.n_samples must be >= 1");
  long n = plan.n_samples;
  if (plan.antithetic && n % 2) ++n;
  return n;
}

// Running (count, mean, M2) over independent units; merged pairwise.
struct Moments {
  double n = 0;
  Vector mean;
  Vector m2;

  void add(const Vector& x) {
    if (n == 0) {
      mean = Vector::Zero(x.size());
      m2 = Vector::Zero(x.size());
    }
    n += 1;
    const Vector delta = x - mean;
    mean += delta / n;
    m2 += delta.cwiseProduct(x - mean);
  }
};

Moments merge(const Moments& a, const Moments& b) {
  if (a.n == 0) return b;
  if (b.n == 0) return a;
  Moments out;
  out.n = a.n + b.n;
  const Vector delta = b.mean - a.mean;
  out.mean = a.mean + delta * (b.n / out.n);
  out.m2 = a.m2 + b.m2 + delta.cwiseProduct(delta) * (a.n * b.n / out.n);
  return out;
}

template <class T, class Merge>
T tree_reduce(std::vector<T>& parts, Merge merge_fn) {
  if (parts.empty()) return T{};
  std::size_t width = parts.size();
  while (width > 1) {
    const std::size_t half = (width + 1) / 2;
    for (std::size_t i = 0; i + half < width; ++i) parts[i] = merge_fn(parts[i], parts[i + half]);
    width = half;
  }
  return parts[0];
}

template <class Job>
void run_parallel(long count, int workers, const Job& job) {
  workers = std::max(1, std::min<int>(workers, static_cast<int>(std::min<long>(count, 1024))));
  if (workers == 1) {
    for (long i = 0; i < count; ++i) job(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (long i = w; i < count; i += workers) job(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void check_finite(const double* out, int out_dim, int class_index, long sample) {
  for (int j = 0; j < out_dim; ++j) {
    if (!std::isfinite(out[j])) {
      std::ostringstream os;
      os << "integrand returned a non-finite value (class " << class_index << ", sample " << sample << ", entry " << j
         << ")";
      fail(ErrorCode::non_finite, os.str());
    }
  }
}

Moments mc_block(int core_dim, int out_dim, int class_index, long block, long total, const CoreFn& f,
                 const McPlan& plan) {
  auto rng = block_stream(plan, class_index, block);
  std::normal_distribution<double> normal;
  Moments acc;
  const long begin = block * kBlock;
  const long end = std::min(total, begin + kBlock);
  Vector z(core_dim), out(out_dim), out2(out_dim);
  for (long s = begin; s < end; s += plan.antithetic ? 2 : 1) {
    for (int j = 0; j < core_dim; ++j) z(j) = normal(rng);
    out.setZero();
    f(class_index, z.data(), out.data());
    check_finite(out.data(), out_dim, class_index, s);
    if (plan.antithetic) {
      z = -z;
      out2.setZero();
      f(class_index, z.data(), out2.data());
      check_finite(out2.data(), out_dim, class_index, s + 1);
      acc.add(0.5 * (out + out2));
    } else {
      acc.add(out);
    }
  }
  return acc;
}

Estimate monte_carlo(int core_dim, int out_dim, const std::vector<double>& probs, const CoreFn& f, const McPlan& plan) {
  const long total = effective_samples(plan);
  const long blocks = (total + kBlock - 1) / kBlock;
  Estimate est{Vector::Zero(out_dim), Vector::Zero(out_dim)};
  Vector var = Vector::Zero(out_dim);
  for (std::size_t ci = 0; ci < probs.size(); ++ci) {
    const double p = probs[ci];
    if (p <= 0) continue;
    std::vector<Moments> parts(static_cast<std::size_t>(blocks));
    run_parallel(blocks, plan.workers, [&](long b) {
      parts[static_cast<std::size_t>(b)] = mc_block(core_dim, out_dim, static_cast<int>(ci), b, total, f, plan);
    });
    const Moments m = tree_reduce(parts, merge);
    est.mean += p * m.mean;
    if (m.n > 1) var += (p * p / (m.n * (m.n - 1))) * m.m2;
  }
  est.stderr_ = var.cwiseSqrt();
  return est;
}

Estimate gauss_hermite(int core_dim, int out_dim, const std::vector<double>& probs, const CoreFn& f,
                       const McPlan& plan) {
  if (core_dim > 6) {
    fail(ErrorCode::validation,
         "Gauss-Hermite quadrature needs at most 6 Gaussian dimensions, got " + std::to_string(core_dim));
  }
  std::vector<double> nodes, weights;
  gauss_hermite_rule(plan.gh_order, nodes, weights);
  const int o = plan.gh_order;
  long points = 1;
  for (int j = 0; j < core_dim; ++j) points *= o;
  if (points > 20'000'000) fail(ErrorCode::validation, "Gauss-Hermite grid too large");
  const long blocks = (points + kBlock - 1) / kBlock;
  Estimate est{Vector::Zero(out_dim), Vector::Zero(out_dim)};
  for (std::size_t ci = 0; ci < probs.size(); ++ci) {
    const double p = probs[ci];
    if (p <= 0) continue;
    std::vector<Vector> parts(static_cast<std::size_t>(blocks));
    run_parallel(blocks, plan.workers, [&](long b) {
      Vector acc = Vector::Zero(out_dim), out(out_dim), z(core_dim);
      const long end = std::min(points, (b + 1) * kBlock);
      for (long idx = b * kBlock; idx < end; ++idx) {
        long rest = idx;
        double w = 1.0;
        for (int j = 0; j < core_dim; ++j) {
          const int node = static_cast<int>(rest % o);
          rest /= o;
          z(j) = nodes[static_cast<std::size_t>(node)];
          w *= weights[static_cast<std::size_t>(node)];
        }
        out.setZero();
        f(static_cast<int>(ci), z.data(), out.data());
        check_finite(out.data(), out_dim, static_cast<int>(ci), idx);
        acc += w * out;
      }
      parts[static_cast<std::size_t>(b)] = acc;
    });
    est.mean += p * tree_reduce(parts, [](const Vector& a, const Vector& b) { return Vector(a + b); });
  }
  return est;
}

}  // namespace

void gauss_hermite_rule(int order, std::vector<double>& nodes, std::vector<double>& weights) {
  if (order < 1) fail(ErrorCode::validation, "Gauss-Hermite order must be >= 1");
  Matrix J = Matrix::Zero(order, order);
  for (int k = 1; k < order; ++k) J(k - 1, k) = J(k, k - 1) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Matrix> eig(J);
  nodes.assign(static_cast<std::size_t>(order), 0.0);
  weights.assign(static_cast<std::size_t>(order), 0.0);
  for (int i = 0; i < order; ++i) {
    nodes[static_cast<std::size_t>(i)] = eig.eigenvalues()(i);
    const double v0 = eig.eigenvectors()(0, i);
    weights[static_cast<std::size_t>(i)] = v0 * v0;
  }
}

std::vector<Vector> core_normals(int core_dim, const McPlan& plan, int class_index, long count) {
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(count));
  const long total = plan.antithetic && count % 2 ? count + 1 : count;
  for (long b = 0; b * kBlock < total; ++b) {
    auto rng = block_stream(plan, class_index, b);
    std::normal_distribution<double> normal;
    const long end = std::min(total, (b + 1) * kBlock);
    for (long s = b * kBlock; s < end; s += plan.antithetic ? 2 : 1) {
      Vector z(core_dim);
      for (int j = 0; j < core_dim; ++j) z(j) = normal(rng);
      out.push_back(z);
      if (plan.antithetic) out.push_back(-z);
    }
  }
  out.resize(static_cast<std::size_t>(count));
  return out;
}

Estimate expect_core(int core_dim, int out_dim, const std::vector<double>& class_probs, const CoreFn& f,
                     const McPlan& plan) {
  if (plan.method == QuadratureMethod::gauss_hermite) return gauss_hermite(core_dim, out_dim, class_probs, f, plan);
  return monte_carlo(core_dim, out_dim, class_probs, f, plan);
}

Estimate expect_over_measure(const EnergeticFn& f, int out_dim, const ModelSpec& spec, const OrderParameters& params,
                             const FixedStatistics& fixed, const McPlan& plan) {
  std::vector<EnergeticChannel> channels;
  for (const auto& c : spec.law.support) channels.push_back(energetic_channel(params, fixed, c));
  const int core = spec.dims.L * (spec.dims.r + spec.dims.t);
  return expect_core(
      core, out_dim, spec.law.probs,
      [&](int ci, const double* z, double* out) {
        thread_local EnergeticDraw draw;
        draw_energetic(channels[static_cast<std::size_t>(ci)], z, draw);
        f(ci, draw, out);
      },
      plan);
}

Estimate expect_over_joint(const JointFn& f, int out_dim, const ModelSpec& spec, const OrderParameters& params,
                           const FixedStatistics& fixed, const McPlan& plan) {
  std::vector<JointChannel> channels;
  for (const auto& c : spec.law.support) channels.push_back(joint_channel(params, fixed, c));
  const int core = spec.dims.L * (spec.dims.r + spec.dims.t);
  return expect_core(
      core, out_dim, spec.law.probs,
      [&](int ci, const double* z, double* out) {
        thread_local JointDraw draw;
        draw_joint(channels[static_cast<std::size_t>(ci)], z, draw);
        f(ci, draw, out);
      },
      plan);
}

}  // namespace seqmim
