#include "ssmctrl/linalg.hpp"

#include <cmath>
#include <limits>

#include "ssmctrl/errors.hpp"

namespace ssmctrl::linalg {

Vector sym_eigenvalues(const Matrix& m) {
  if (m.rows() != m.cols()) {
    throw InvalidArgument("sym_eigenvalues: matrix is not square");
  }
  if (m.size() == 0) return Vector();
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m),
                                           Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

double min_sym_eigenvalue(const Matrix& m) {
  return sym_eigenvalues(m).minCoeff();
}

double max_sym_eigenvalue(const Matrix& m) {
  return sym_eigenvalues(m).maxCoeff();
}

double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

double spectral_radius(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(m, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double condition_number(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 1.0;
  const double smin = s(s.size() - 1);
  if (smin == 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / smin;
}

Matrix upper_cholesky(const Matrix& m) {
  Eigen::LLT<Matrix> llt(symmetrize(m));
  if (llt.info() != Eigen::Success) {
    throw InvalidArgument("upper_cholesky: matrix is not positive definite");
  }
  return llt.matrixU();
}

bool is_positive_definite(const Matrix& m) {
  if (m.rows() != m.cols()) return false;
  Eigen::LLT<Matrix> llt(symmetrize(m));
  return llt.info() == Eigen::Success && min_sym_eigenvalue(m) > 0.0;
}

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace ssmctrl::linalg
