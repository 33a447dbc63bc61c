#include "seqmim/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace seqmim {

void require_symmetric(const Matrix& A, const char* what) {
  if (A.rows() != A.cols()) fail(ErrorCode::validation, std::string(what) + " is not square");
  if (A.size() == 0) return;
  const double asym = max_asymmetry(A);
  const double scale = 1.0 + A.cwiseAbs().maxCoeff();
  if (!(asym <= kSymmetryTol * scale)) {
    std::ostringstream os;
    os << what << " is not symmetric (max asymmetry " << asym << ")";
    fail(ErrorCode::non_symmetric, os.str());
  }
}

namespace {

Eigen::SelfAdjointEigenSolver<Matrix> decompose(const Matrix& A, const char* what) {
  require_symmetric(A, what);
  const Matrix S = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(S);
  if (eig.info() != Eigen::Success) fail(ErrorCode::non_finite, std::string(what) + ": eigendecomposition failed");
  return eig;
}

template <class Fn>
Matrix spectral_map(const Eigen::SelfAdjointEigenSolver<Matrix>& eig, Fn fn) {
  const Matrix& U = eig.eigenvectors();
  Vector f = eig.eigenvalues().unaryExpr(fn);
  Matrix out = U * f.asDiagonal() * U.transpose();
  symmetrize(out);
  return out;
}

}  // namespace

Matrix sym_sqrt(const Matrix& A) {
  if (A.size() == 0) return A;
  const auto eig = decompose(A, "sym_sqrt argument");
  const double low = eig.eigenvalues().minCoeff();
  if (low < -kNegativeEigTol) {
    std::ostringstream os;
    os << "sym_sqrt argument has eigenvalue " << low;
    fail(ErrorCode::indefinite, os.str());
  }
  return spectral_map(eig, [](double x) { return x > 0 ? std::sqrt(x) : 0.0; });
}

Matrix sym_inv_sqrt(const Matrix& A) {
  if (A.size() == 0) return A;
  const auto eig = decompose(A, "sym_inv_sqrt argument");
  const double low = eig.eigenvalues().minCoeff();
  if (low < -kNegativeEigTol) {
    std::ostringstream os;
    os << "sym_inv_sqrt argument has eigenvalue " << low;
    fail(ErrorCode::indefinite, os.str());
  }
  return spectral_map(eig, [](double x) { return x > kClipTol ? 1.0 / std::sqrt(x) : 0.0; });
}

Matrix sym_pinv(const Matrix& A) {
  if (A.size() == 0) return A;
  const auto eig = decompose(A, "sym_pinv argument");
  return spectral_map(eig, [](double x) { return std::abs(x) > kClipTol ? 1.0 / x : 0.0; });
}

double min_eigenvalue(const Matrix& A) {
  if (A.size() == 0) return 0.0;
  return decompose(A, "min_eigenvalue argument").eigenvalues().minCoeff();
}

double min_singular_value(const Matrix& A) {
  if (A.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(A);
  return svd.singularValues().minCoeff();
}

Matrix range_projector(const Matrix& A) {
  if (A.size() == 0) return A;
  const auto eig = decompose(A, "range_projector argument");
  return spectral_map(eig, [](double x) { return x > kClipTol ? 1.0 : 0.0; });
}

}  // namespace seqmim
