#include "ssmctrl/analysis.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <string>

#include "ssmctrl/errors.hpp"
#include "ssmctrl/seeding.hpp"

namespace ssmctrl::analysis {
namespace {

GramianReport finish(Matrix w, Matrix w_lin, int k1, double mu, double nu) {
  GramianReport r;
  r.gramian = linalg::symmetrize(w);
  r.linear_gramian = linalg::symmetrize(w_lin);
  r.horizon = k1;
  const Vector ev = linalg::sym_eigenvalues(r.gramian);
  r.min_eigenvalue = ev.minCoeff();
  r.max_eigenvalue = ev.maxCoeff();
  r.sandwich_lower = mu * mu * r.linear_gramian;
  r.sandwich_upper = nu * nu * r.linear_gramian;
  r.verdict = r.max_eigenvalue > 0.0 &&
              r.min_eigenvalue > kRankTolerance * r.max_eigenvalue;
  return r;
}

void check_jacobians(const std::vector<Matrix>& js, int k1, Eigen::Index n,
                     const char* who) {
  if (js.empty()) return;
  if (static_cast<int>(js.size()) != k1 + 1) {
    throw InvalidArgument(std::string(who) + ": need k1 + 1 Jacobians");
  }
  for (const auto& j : js) {
    if (j.rows() != n || j.cols() != n) {
      throw InvalidArgument(std::string(who) + ": Jacobian dimension mismatch");
    }
  }
}

}  // namespace

double GramianReport::sandwich_lower_gap() const {
  return linalg::min_sym_eigenvalue(gramian - sandwich_lower);
}

double GramianReport::sandwich_upper_gap() const {
  return linalg::min_sym_eigenvalue(sandwich_upper - gramian);
}

GramianReport controllability_gramian(const Matrix& A, const Matrix& B,
                                      const std::vector<Matrix>& jacobians,
                                      int k1, double mu, double nu) {
  if (A.rows() != A.cols() || B.rows() != A.rows()) {
    throw InvalidArgument("controllability_gramian: dimension mismatch");
  }
  if (k1 < 0) throw InvalidArgument("controllability_gramian: k1 < 0");
  check_jacobians(jacobians, k1, B.cols(), "controllability_gramian");
  const Eigen::Index n = A.rows();
  Matrix w = Matrix::Zero(n, n), w_lin = Matrix::Zero(n, n);
  Matrix AkB = B;
  for (int k = 0; k <= k1; ++k) {
    w_lin += AkB * AkB.transpose();
    if (jacobians.empty()) {
      w += AkB * AkB.transpose();
    } else {
      const Matrix col = AkB * jacobians[k];
      w += col * col.transpose();
    }
    AkB = A * AkB;
  }
  return finish(w, w_lin, k1, mu, nu);
}

GramianReport observability_gramian(const Matrix& A, const Matrix& C,
                                    const std::vector<Matrix>& jacobians,
                                    int k1, double mu, double nu) {
  if (A.rows() != A.cols() || C.cols() != A.rows()) {
    throw InvalidArgument("observability_gramian: dimension mismatch");
  }
  if (k1 < 0) throw InvalidArgument("observability_gramian: k1 < 0");
  check_jacobians(jacobians, k1, C.rows(), "observability_gramian");
  const Eigen::Index n = A.rows();
  Matrix w = Matrix::Zero(n, n), w_lin = Matrix::Zero(n, n);
  Matrix CAk = C;
  for (int k = 0; k <= k1; ++k) {
    w_lin += CAk.transpose() * CAk;
    if (jacobians.empty()) {
      w += CAk.transpose() * CAk;
    } else {
      const Matrix row = jacobians[k] * CAk;
      w += row.transpose() * row;
    }
    CAk = CAk * A;
  }
  return finish(w, w_lin, k1, mu, nu);
}

std::vector<Matrix> random_admissible_jacobians(int n, int k1, double mu,
                                                double nu, std::uint64_t seed) {
  if (n < 1 || k1 < 0 || !(mu > 0.0) || nu < mu) {
    throw InvalidArgument("random_admissible_jacobians: bad arguments");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif(mu, nu);
  auto haar = [&] {
    Matrix g(n, n);
    for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = gauss(rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    const Matrix r = qr.matrixQR();
    for (int j = 0; j < n; ++j) {
      if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    }
    return q;
  };
  std::vector<Matrix> js;
  js.reserve(k1 + 1);
  for (int k = 0; k <= k1; ++k) {
    Vector s(n);
    for (int i = 0; i < n; ++i) s(i) = unif(rng);
    js.push_back(haar() * s.asDiagonal() * haar().transpose());
  }
  return js;
}

namespace {

template <class Gramian>
SandwichSweep sweep_sandwich(const Gramian& gramian, int n, int draws,
                             int k1, double mu, double nu,
                             std::uint64_t seed) {
  if (draws < 1) throw InvalidArgument("sandwich sweep: draws < 1");
  SandwichSweep out;
  out.draws = draws;
  out.worst_lower_gap = out.worst_upper_gap =
      std::numeric_limits<double>::infinity();
  for (int d = 0; d < draws; ++d) {
    const GramianReport r = gramian(random_admissible_jacobians(
        n, k1, mu, nu, derive_seed(seed, "jacobians", d)));
    out.scale = std::max(linalg::max_sym_eigenvalue(r.sandwich_upper),
                         std::numeric_limits<double>::min());
    out.worst_lower_gap = std::min(out.worst_lower_gap, r.sandwich_lower_gap());
    out.worst_upper_gap = std::min(out.worst_upper_gap, r.sandwich_upper_gap());
  }
  return out;
}

}  // namespace

SandwichSweep controllability_sandwich_sweep(const Matrix& A, const Matrix& B,
                                             int k1, double mu, double nu,
                                             int draws, std::uint64_t seed) {
  return sweep_sandwich(
      [&](const std::vector<Matrix>& js) {
        return controllability_gramian(A, B, js, k1, mu, nu);
      },
      static_cast<int>(B.cols()), draws, k1, mu, nu, seed);
}

SandwichSweep observability_sandwich_sweep(const Matrix& A, const Matrix& C,
                                           int k1, double mu, double nu,
                                           int draws, std::uint64_t seed) {
  return sweep_sandwich(
      [&](const std::vector<Matrix>& js) {
        return observability_gramian(A, C, js, k1, mu, nu);
      },
      static_cast<int>(C.rows()), draws, k1, mu, nu, seed);
}

ContractionCheck check_contraction(const Matrix& A, const Matrix& B,
                                   const Matrix& K, const Matrix& M,
                                   const Matrix& M_next, double rho) {
  if (!(rho > 0.0 && rho < 1.0)) {
    throw InvalidArgument("check_contraction: rho must lie in (0, 1)");
  }
  if (!linalg::is_positive_definite(M) ||
      !linalg::is_positive_definite(M_next)) {
    throw InvalidArgument("check_contraction: metric is not positive definite");
  }
  const Matrix Acl = A + B * K;
  const Matrix form = Acl.transpose() * M_next * Acl - (1.0 - rho) * M;
  ContractionCheck out;
  out.max_eigenvalue = linalg::max_sym_eigenvalue(form);
  out.verdict = out.max_eigenvalue < 0.0;
  return out;
}

Metric Metric::from_matrix(const Matrix& M) {
  Metric g;
  g.M = linalg::symmetrize(M);
  g.Theta = linalg::upper_cholesky(g.M);
  g.c_theta = linalg::spectral_norm(g.Theta);
  return g;
}

double riemannian_distance(const Vector& x, const Vector& y, const Metric& g) {
  return (g.Theta * x - g.Theta * y).norm();
}

std::vector<BoundPair> one_step_disturbance_bound(
    const PairedTrace& trace, const Metric& metric, double rho,
    const std::vector<Vector>& w) {
  if (!(rho > 0.0 && rho < 1.0)) {
    throw InvalidArgument("one_step_disturbance_bound: rho must lie in (0, 1)");
  }
  if (trace.perturbed.size() != trace.nominal.size()) {
    throw InvalidArgument("one_step_disturbance_bound: trace length mismatch");
  }
  const std::size_t steps =
      trace.perturbed.empty() ? 0 : trace.perturbed.size() - 1;
  if (w.size() != steps) {
    throw InvalidArgument(
        "one_step_disturbance_bound: need one disturbance per transition");
  }
  std::vector<BoundPair> out;
  out.reserve(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const double d_k =
        riemannian_distance(trace.perturbed[k], trace.nominal[k], metric);
    BoundPair bp;
    bp.lhs = riemannian_distance(trace.perturbed[k + 1], trace.nominal[k + 1],
                                 metric);
    bp.rhs = rho * d_k + metric.c_theta * w[k].norm();
    out.push_back(bp);
  }
  return out;
}

}  // namespace ssmctrl::analysis
