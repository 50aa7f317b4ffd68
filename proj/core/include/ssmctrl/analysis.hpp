#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ssmctrl/linalg.hpp"

namespace ssmctrl::analysis {

// Finite-horizon Gramian of the differential SSM together with the
// Jacobian-free Gramian W' and the sandwich mu^2 W' <= W <= nu^2 W'.
struct GramianReport {
  Matrix gramian;
  Matrix linear_gramian;  // W'
  int horizon = 0;        // k1
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  Matrix sandwich_lower;  // mu^2 W'
  Matrix sandwich_upper;  // nu^2 W'
  bool verdict = false;

  // Smallest eigenvalues of W - mu^2 W' and nu^2 W' - W.
  double sandwich_lower_gap() const;
  double sandwich_upper_gap() const;
};

// Scale-free numerical rank test used for Gramian verdicts.
inline constexpr double kRankTolerance = 1e-9;

// W_d = sum_{k=0}^{k1} A^k B J_k J_k^T B^T (A^T)^k. jacobians must hold k1+1
// square n_u x n_u matrices; an empty sequence means J_k = I.
GramianReport controllability_gramian(const Matrix& A, const Matrix& B,
                                      const std::vector<Matrix>& jacobians,
                                      int k1, double mu = 1.0,
                                      double nu = 1.0);

// Dual: sum (A^T)^k C^T J_k^T J_k C A^k with n_y x n_y Jacobians.
GramianReport observability_gramian(const Matrix& A, const Matrix& C,
                                    const std::vector<Matrix>& jacobians,
                                    int k1, double mu = 1.0, double nu = 1.0);

// Random admissible Jacobian sequence: k1 + 1 matrices U diag(s) V^T with
// U, V Haar orthogonal and s uniform in [mu, nu].
std::vector<Matrix> random_admissible_jacobians(int n, int k1, double mu,
                                                double nu, std::uint64_t seed);

// Worst sandwich gaps over random admissible sequences, each divided by
// lambda_max(nu^2 W') so that the result is scale free.
struct SandwichSweep {
  int draws = 0;
  double worst_lower_gap = 0.0;  // min over draws of lambda_min(W - mu^2 W')
  double worst_upper_gap = 0.0;  // min over draws of lambda_min(nu^2 W' - W)
  double scale = 1.0;

  bool holds(double tol) const {
    return worst_lower_gap / scale >= -tol && worst_upper_gap / scale >= -tol;
  }
};

SandwichSweep controllability_sandwich_sweep(const Matrix& A, const Matrix& B,
                                             int k1, double mu, double nu,
                                             int draws, std::uint64_t seed);
SandwichSweep observability_sandwich_sweep(const Matrix& A, const Matrix& C,
                                           int k1, double mu, double nu,
                                           int draws, std::uint64_t seed);

struct ContractionCheck {
  double max_eigenvalue = 0.0;
  bool verdict = false;
};

// lambda_max((A + B K)^T M_next (A + B K) - (1 - rho) M) < 0.
ContractionCheck check_contraction(const Matrix& A, const Matrix& B,
                                   const Matrix& K, const Matrix& M,
                                   const Matrix& M_next, double rho);

// Constant Riemannian metric M = Theta^T Theta with Theta the upper Cholesky
// factor and c_theta >= ||Theta||.
struct Metric {
  Matrix M;
  Matrix Theta;
  double c_theta = 0.0;

  static Metric from_matrix(const Matrix& M);
};

// Geodesics of a constant metric are straight lines: ||Theta x - Theta y||.
double riemannian_distance(const Vector& x, const Vector& y, const Metric& g);

// Paired trajectories for the one-step disturbance bound: perturbed[k] and
// nominal[k] for k = 0..T.
struct PairedTrace {
  std::vector<Vector> perturbed;
  std::vector<Vector> nominal;
};

struct BoundPair {
  double lhs = 0.0;  // d_{k+1}
  double rhs = 0.0;  // rho d_k + c_theta ||w_k||
};

// Evaluates d_{k+1} <= rho d_k + c_theta ||w_k|| along the trace; w has one
// entry per transition.
std::vector<BoundPair> one_step_disturbance_bound(
    const PairedTrace& trace, const Metric& metric, double rho,
    const std::vector<Vector>& w);

}  // namespace ssmctrl::analysis
