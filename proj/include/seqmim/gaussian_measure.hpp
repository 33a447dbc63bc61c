#pragma once

// Gaussian measures entering the energetic expectation and the test error,
// and the seeded expectation engine (Monte Carlo with antithetic pairs and
// common random numbers, or tensor Gauss-Hermite for small dimensions).

#include <cstdint>
#include <functional>

#include "seqmim/model.hpp"

namespace seqmim {

enum class QuadratureMethod { monte_carlo, gauss_hermite };

struct McPlan {
  long n_samples = 20000;
  std::uint64_t seed = 12345;
  bool antithetic = true;
  bool crn = true;  // same stream at every solver iteration
  QuadratureMethod method = QuadratureMethod::monte_carlo;
  int gh_order = 16;
  int workers = 1;
  long iteration = 0;  // only used when crn is false
};

struct Estimate {
  Vector mean;
  Vector stderr_;
};

// Per-token statistics of the (Xi, Y) measure under one class tuple.
struct TokenChannel {
  Matrix sqrt_q;      // r x r
  Matrix inv_sqrt_q;  // r x r, pseudo-inverse square root
  Matrix mean_map;    // t x r, theta^T q^{-1/2}
  Matrix schur;       // t x t, rho - theta^T q^+ theta
  Matrix schur_sqrt;
  Matrix schur_pinv;
  Vector m;
  Vector m_star;
  bool singular_q = false;
};

struct EnergeticChannel {
  ClassTuple c;
  int L = 0, r = 0, t = 0;
  std::vector<TokenChannel> tokens;
  int core_dim() const { return L * (r + t); }
};

EnergeticChannel energetic_channel(const OrderParameters& params, const FixedStatistics& fixed, const ClassTuple& c);

// One point of the energetic measure. Y excludes the teacher mean m*.
struct EnergeticDraw {
  Matrix xi;      // L x r
  Matrix eta;     // L x t, raw normals of the Schur channel
  Matrix Y;       // L x t
  Matrix anchor;  // L x r, q^{1/2} xi + m
};
void draw_energetic(const EnergeticChannel& ch, const double* z, EnergeticDraw& out);

std::vector<EnergeticDraw> sample_energetic_measure(const OrderParameters& params, const FixedStatistics& fixed,
                                                    const ClassTuple& c, const McPlan& plan);

struct JointChannel {
  ClassTuple c;
  int L = 0, r = 0, t = 0;
  std::vector<Matrix> factor;  // (r+t) x (r+t) square roots of [[q, theta], [theta^T, rho]]
  std::vector<Vector> mean;    // m (+) m*
  int core_dim() const { return L * (r + t); }
};

JointChannel joint_channel(const OrderParameters& params, const FixedStatistics& fixed, const ClassTuple& c);

struct JointDraw {
  Matrix X;  // L x r
  Matrix Y;  // L x t, teacher mean included
};
void draw_joint(const JointChannel& ch, const double* z, JointDraw& out);

std::vector<JointDraw> sample_joint_xy(const OrderParameters& params, const FixedStatistics& fixed,
                                       const ClassTuple& c, const McPlan& plan);

// f(class_index, z, out) on standard normal cores of dimension core_dim.
// Called concurrently when plan.workers > 1.
using CoreFn = std::function<void(int class_index, const double* z, double* out)>;

// sum_c p_c E[f] with per-entry standard errors. Classes with zero
// probability are skipped.
Estimate expect_core(int core_dim, int out_dim, const std::vector<double>& class_probs, const CoreFn& f,
                     const McPlan& plan);

using EnergeticFn = std::function<void(int class_index, const EnergeticDraw& draw, double* out)>;
Estimate expect_over_measure(const EnergeticFn& f, int out_dim, const ModelSpec& spec, const OrderParameters& params,
                             const FixedStatistics& fixed, const McPlan& plan);

using JointFn = std::function<void(int class_index, const JointDraw& draw, double* out)>;
Estimate expect_over_joint(const JointFn& f, int out_dim, const ModelSpec& spec, const OrderParameters& params,
                           const FixedStatistics& fixed, const McPlan& plan);

// Raw standard normal cores exactly as the Monte Carlo engine produces them.
std::vector<Vector> core_normals(int core_dim, const McPlan& plan, int class_index, long count);

// Probabilists' Gauss-Hermite rule (weight exp(-x^2/2)/sqrt(2 pi)).
void gauss_hermite_rule(int order, std::vector<double>& nodes, std::vector<double>& weights);

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace seqmim
