#pragma once

#include <Eigen/Dense>

namespace ssmctrl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace linalg {

// Eigenvalues of the symmetric part of m, ascending.
Vector sym_eigenvalues(const Matrix& m);

double min_sym_eigenvalue(const Matrix& m);
double max_sym_eigenvalue(const Matrix& m);

// Largest singular value.
double spectral_norm(const Matrix& m);

double spectral_radius(const Matrix& m);

// 2-norm condition number (inf for singular input).
double condition_number(const Matrix& m);

// Upper-triangular Theta with Theta^T Theta = m. Throws InvalidArgument if m
// is not positive definite.
Matrix upper_cholesky(const Matrix& m);

bool is_positive_definite(const Matrix& m);

// 0.5 (m + m^T)
Matrix symmetrize(const Matrix& m);

}  // namespace linalg
}  // namespace ssmctrl
