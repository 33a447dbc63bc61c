#include "seqmim/losses.hpp"

#include <cmath>

namespace seqmim {

namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double param(const LossSpec& spec, const std::string& key, double fallback) {
  auto it = spec.params.find(key);
  return it == spec.params.end() ? fallback : it->second;
}

Matrix zero_rr(const Matrix& X) { return Matrix::Zero(X.cols(), X.cols()); }

LossModel square_loss(const Dimensions& dims, double kappa, bool with_v) {
  if (dims.r != dims.t) fail(ErrorCode::validation, "square loss needs r = t");
  LossModel m;
  m.name = with_v ? "square_v" : "square";
  m.eval = [kappa, with_v](const Matrix& Y, const Matrix& X, const Matrix& v, const ClassTuple&) {
    double out = 0.5 * (Y - X).squaredNorm();
    if (with_v) out += 0.25 * kappa * (v * v).trace();
    return out;
  };
  m.grad_X = [](const Matrix& Y, const Matrix& X, const Matrix&, const ClassTuple&) { return Matrix(X - Y); };
  m.d3 = [kappa, with_v](const Matrix&, const Matrix& X, const Matrix& v, const ClassTuple&) {
    return with_v ? Matrix(0.5 * kappa * v.transpose()) : zero_rr(X);
  };
  m.hess_XX = [](const Matrix&, const Matrix& X, const Matrix&, const ClassTuple&) {
    return Matrix(Matrix::Identity(X.size(), X.size()));
  };
  m.hess_XY = [](const Matrix& Y, const Matrix& X, const Matrix&, const ClassTuple&) {
    return Matrix(-Matrix::Identity(X.size(), Y.size()));
  };
  m.prox_closed_form = [](const Matrix& anchor, const Matrix& P, const Matrix& Y, const Matrix&, const ClassTuple&) {
    const Vector rhs = P * flatten_rows(anchor) + flatten_rows(Y);
    const Matrix A = P + Matrix::Identity(P.rows(), P.cols());
    return unflatten_rows(A.ldlt().solve(rhs), static_cast<int>(anchor.rows()), static_cast<int>(anchor.cols()));
  };
  m.test_eval = m.eval;
  m.depends_on_v = with_v;
  m.strongly_convex = true;
  return m;
}

LossModel zero_loss(const Dimensions&) {
  LossModel m;
  m.name = "zero";
  m.eval = [](const Matrix&, const Matrix&, const Matrix&, const ClassTuple&) { return 0.0; };
  m.grad_X = [](const Matrix&, const Matrix& X, const Matrix&, const ClassTuple&) {
    return Matrix(Matrix::Zero(X.rows(), X.cols()));
  };
  m.d3 = [](const Matrix&, const Matrix& X, const Matrix&, const ClassTuple&) { return zero_rr(X); };
  m.hess_XX = [](const Matrix&, const Matrix& X, const Matrix&, const ClassTuple&) {
    return Matrix(Matrix::Zero(X.size(), X.size()));
  };
  m.hess_XY = [](const Matrix& Y, const Matrix& X, const Matrix&, const ClassTuple&) {
    return Matrix(Matrix::Zero(X.size(), Y.size()));
  };
  m.prox_closed_form = [](const Matrix& anchor, const Matrix&, const Matrix&, const Matrix&, const ClassTuple&) {
    return anchor;
  };
  m.test_eval = m.eval;
  return m;
}

// Labels broadcast across the r columns of token l.
template <class Fn>
double sum_labelled(const Matrix& X, const ClassTuple& c, Fn fn) {
  double s = 0.0;
  for (Eigen::Index l = 0; l < X.rows(); ++l) {
    const double y = cluster_label(c[static_cast<std::size_t>(l)]);
    for (Eigen::Index a = 0; a < X.cols(); ++a) s += fn(y, X(l, a));
  }
  return s;
}

template <class Fn>
Matrix map_labelled(const Matrix& X, const ClassTuple& c, Fn fn) {
  Matrix out(X.rows(), X.cols());
  for (Eigen::Index l = 0; l < X.rows(); ++l) {
    const double y = cluster_label(c[static_cast<std::size_t>(l)]);
    for (Eigen::Index a = 0; a < X.cols(); ++a) out(l, a) = fn(y, X(l, a));
  }
  return out;
}

LossModel label_loss_common(const std::string& name) {
  LossModel m;
  m.name = name;
  m.d3 = [](const Matrix&, const Matrix& X, const Matrix&, const ClassTuple&) { return zero_rr(X); };
  m.hess_XY = [](const Matrix& Y, const Matrix& X, const Matrix&, const ClassTuple&) {
    return Matrix(Matrix::Zero(X.size(), Y.size()));
  };
  return m;
}

LossModel logistic_loss() {
  LossModel m = label_loss_common("logistic");
  m.eval = [](const Matrix&, const Matrix& X, const Matrix&, const ClassTuple& c) {
    return sum_labelled(X, c, [](double y, double x) { return softplus(-y * x); });
  };
  m.grad_X = [](const Matrix&, const Matrix& X, const Matrix&, const ClassTuple& c) {
    return map_labelled(X, c, [](double y, double x) { return -y * sigmoid(-y * x); });
  };
  m.hess_XX = [](const Matrix&, const Matrix& X, const Matrix&, const ClassTuple& c) {
    const Matrix h = map_labelled(X, c, [](double y, double x) {
      const double s = sigmoid(y * x);
      return s * (1.0 - s);
    });
    return Matrix(flatten_rows(h).asDiagonal());
  };
  return m;
}

LossModel square_label_loss() {
  LossModel m = label_loss_common("square_label");
  m.eval = [](const Matrix&, const Matrix& X, const Matrix&, const ClassTuple& c) {
    return sum_labelled(X, c, [](double y, double x) { return 0.5 * (y - x) * (y - x); });
  };
  m.grad_X = [](const Matrix&, const Matrix& X, const Matrix&, const ClassTuple& c) {
    return map_labelled(X, c, [](double y, double x) { return x - y; });
  };
  m.hess_XX = [](const Matrix&, const Matrix& X, const Matrix&, const ClassTuple&) {
    return Matrix(Matrix::Identity(X.size(), X.size()));
  };
  m.prox_closed_form = [](const Matrix& anchor, const Matrix& P, const Matrix&, const Matrix&, const ClassTuple& c) {
    const Matrix labels = map_labelled(anchor, c, [](double y, double) { return y; });
    const Vector rhs = P * flatten_rows(anchor) + flatten_rows(labels);
    const Matrix A = P + Matrix::Identity(P.rows(), P.cols());
    return unflatten_rows(A.ldlt().solve(rhs), static_cast<int>(anchor.rows()), static_cast<int>(anchor.cols()));
  };
  m.strongly_convex = true;
  return m;
}

// Exact minimizer of p/2 (x - a)^2 + max(0, 1 - y x) for y = +-1.
double hinge_scalar_prox(double a, double p, double y) {
  const double u = y * a;
  if (u + 1.0 / p < 1.0) return y * (u + 1.0 / p);
  if (u <= 1.0) return y;
  return a;
}

LossModel hinge_loss() {
  LossModel m = label_loss_common("hinge");
  m.eval = [](const Matrix&, const Matrix& X, const Matrix&, const ClassTuple& c) {
    return sum_labelled(X, c, [](double y, double x) { return std::max(0.0, 1.0 - y * x); });
  };
  m.grad_X = [](const Matrix&, const Matrix& X, const Matrix&, const ClassTuple& c) {
    return map_labelled(X, c, [](double y, double x) { return 1.0 - y * x > 0 ? -y : 0.0; });
  };
  m.hess_XY = nullptr;
  // Coordinate descent with exact one-dimensional steps; a single sweep is
  // exact when the precision is diagonal.
  m.prox_closed_form = [](const Matrix& anchor, const Matrix& P, const Matrix&, const Matrix&, const ClassTuple& c) {
    const int rows = static_cast<int>(anchor.rows()), cols = static_cast<int>(anchor.cols());
    const Vector a = flatten_rows(anchor);
    Vector x = a;
    const Eigen::Index n = a.size();
    for (int sweep = 0; sweep < 100000; ++sweep) {
      double change = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double pii = P(i, i);
        // shift from the other coordinates of the quadratic term
        const double off = P.row(i).dot(x - a) - pii * (x(i) - a(i));
        const double target = a(i) - off / pii;
        const double y = cluster_label(c[static_cast<std::size_t>(i / cols)]);
        const double xi = hinge_scalar_prox(target, pii, y);
        change = std::max(change, std::abs(xi - x(i)));
        x(i) = xi;
      }
      if (change <= 1e-15 * (1.0 + x.cwiseAbs().maxCoeff())) break;
    }
    return unflatten_rows(x, rows, cols);
  };
  m.smooth = false;
  return m;
}

}  // namespace

LossEval make_test_metric(const std::string& name, const Dimensions& dims) {
  if (name == "square") {
    if (dims.r != dims.t) fail(ErrorCode::validation, "square test metric needs r = t");
    return [](const Matrix& Y, const Matrix& X, const Matrix&, const ClassTuple&) {
      return 0.5 * (Y - X).squaredNorm();
    };
  }
  if (name == "misclassification" || name == "zero_one_loss") {
    return [](const Matrix&, const Matrix& X, const Matrix&, const ClassTuple& c) {
      return sum_labelled(X, c, [](double y, double x) { return y * x <= 0 ? 1.0 : 0.0; }) /
             static_cast<double>(X.size());
    };
  }
  if (name == "one") return [](const Matrix&, const Matrix&, const Matrix&, const ClassTuple&) { return 1.0; };
  if (name == "zero") return [](const Matrix&, const Matrix&, const Matrix&, const ClassTuple&) { return 0.0; };
  fail(ErrorCode::validation, "unknown test metric '" + name + "'");
}

LossModel make_loss(const LossSpec& spec, const Dimensions& dims) {
  LossModel m;
  std::string default_test;
  if (spec.name == "square") {
    m = square_loss(dims, 0.0, false);
    default_test = "square";
  } else if (spec.name == "square_v") {
    m = square_loss(dims, param(spec, "kappa", 1.0), true);
    default_test = "square";
  } else if (spec.name == "zero") {
    m = zero_loss(dims);
    default_test = "zero";
  } else if (spec.name == "logistic") {
    m = logistic_loss();
    default_test = "misclassification";
  } else if (spec.name == "square_label") {
    m = square_label_loss();
    default_test = "misclassification";
  } else if (spec.name == "hinge") {
    m = hinge_loss();
    default_test = "misclassification";
  } else {
    fail(ErrorCode::validation, "unknown loss '" + spec.name + "'");
  }
  m.test_eval = make_test_metric(spec.test_name.empty() ? default_test : spec.test_name, dims);
  return m;
}

std::vector<std::string> loss_names() { return {"square", "square_v", "zero", "logistic", "square_label", "hinge"}; }

}  // namespace seqmim
