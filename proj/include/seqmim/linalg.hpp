#pragma once

// Symmetric-matrix helpers built on eigendecomposition with eigenvalue
// clipping. No Cholesky on near-singular blocks.

#include "seqmim/model.hpp"

namespace seqmim {

inline constexpr double kSymmetryTol = 1e-10;
inline constexpr double kNegativeEigTol = 1e-8;
inline constexpr double kClipTol = 1e-12;

// Throws non_symmetric when max|A - A^T| exceeds tol (scaled by 1 + max|A|).
void require_symmetric(const Matrix& A, const char* what);

// B with B B = A. Eigenvalues in [-1e-8, 0) are clipped, below that throw.
Matrix sym_sqrt(const Matrix& A);

// Pseudo-inverse square root: eigenvalues <= 1e-12 map to 0.
Matrix sym_inv_sqrt(const Matrix& A);

// Pseudo-inverse with the same clipping.
Matrix sym_pinv(const Matrix& A);

double min_eigenvalue(const Matrix& A);
double min_singular_value(const Matrix& A);

// Orthogonal projector onto the range of symmetric PSD A.
Matrix range_projector(const Matrix& A);

}  // namespace seqmim
