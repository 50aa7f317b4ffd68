#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ssmctrl/linalg.hpp"
#include "ssmctrl/sdp.hpp"

namespace ssmctrl::synthesis {

// Robust state-feedback LMI for x+ = A x + B S_u(K x) with S_u' in
// [mu_u, nu_u]. Variables P (sym), Y, X, sigma; constraints
//
//   [(1-rho)P - sigma B B^T,  A Y + alpha B X,  0          ]
//   [*,                       Y^T + Y - P,      beta X^T   ]  >= 0
//   [*,                       *,                sigma I    ]
//
// plus P >= eps I, sigma >= eps and the normalization P <= I. The gain is
// K = X Y^-1.
sdp::SdpProblem assemble_controller_lmi(const Matrix& A, const Matrix& B,
                                        double mu_u, double nu_u,
                                        double rho_c, double eps);

// Dual observer LMI for F = A + L J C with J in [mu_y, nu_y]. Variables Q
// (sym), U, V, eta; L = U^-1 V.
sdp::SdpProblem assemble_observer_lmi(const Matrix& A, const Matrix& C,
                                      double mu_y, double nu_y, double rho_o,
                                      double eps);

// Default strictness margin, 1e-6 ||A||.
double default_epsilon(const Matrix& A);

struct GainSet {
  Matrix K, L;
  Matrix P, Q;
  Matrix X, Y, U, V;
  double rho_c = 0.0, rho_o = 0.0;
  double sigma = 0.0, eta = 0.0;
  double mu_u = 0.0, nu_u = 0.0;
  double mu_y = 0.0, nu_y = 0.0;
  double cond_Y = 0.0, cond_U = 0.0;

  void validate() const;
};

inline constexpr double kMaxRecoveryCondition = 1e12;

Matrix recover_controller_gain(const sdp::SdpSolution& ctrl, double* cond);
Matrix recover_observer_gain(const sdp::SdpSolution& obs, double* cond);

// K = X Y^-1 and L = U^-1 V. Both solutions must be feasible and carry the
// rho/mu/nu metadata written by the assemblers.
GainSet recover_gains(const sdp::SdpSolution& ctrl,
                      const sdp::SdpSolution& obs);

struct MetricVerdict {
  std::string metric;           // "P", "P^-1", "Q", "Q^-1"
  double worst_eigenvalue = 0;  // max over samples of lambda_max
  bool holds = false;
};

struct CertificateReport {
  std::vector<MetricVerdict> metrics;
  int samples = 0;
  bool holds() const;  // in at least one metric
  const MetricVerdict* certifying() const;  // best metric that holds
};

// Samples J = alpha I + beta Delta with sigma_max(Delta) <= 1 (corners +-I,
// n_random random draws) and evaluates lambda_max(A_cl^T M A_cl - (1-rho) M)
// for A_cl = A + B J K under M = P and M = P^-1.
CertificateReport verify_controller_certificate(const Matrix& A,
                                                const Matrix& B,
                                                const Matrix& K,
                                                const Matrix& P, double mu_u,
                                                double nu_u, double rho_c,
                                                int n_random,
                                                std::uint64_t seed = 0);

// Same sweep for F = A + L J C under M = Q and M = Q^-1.
CertificateReport verify_observer_certificate(const Matrix& A,
                                              const Matrix& C,
                                              const Matrix& L,
                                              const Matrix& Q, double mu_y,
                                              double nu_y, double rho_o,
                                              int n_random,
                                              std::uint64_t seed = 0);

// Random Delta with sigma_max <= 1: orthogonal x diag(s) x orthogonal.
Matrix random_contraction(int rows, int cols, std::uint64_t seed);

struct GridPoint {
  double rho = 0.0;
  sdp::SdpStatus status = sdp::SdpStatus::kNumericalFailure;
  double margin = 0.0;
  bool certified = false;
  std::string note;
};

struct GridSearchResult {
  double rho = 0.0;
  sdp::SdpSolution solution;
  std::vector<GridPoint> points;  // in grid order
};

using Assembler = std::function<sdp::SdpProblem(double rho)>;
// Returns true when the solution's gain passes certificate verification; may
// fill the note.
using Acceptor = std::function<bool(const sdp::SdpSolution&, double rho,
                                    std::string& note)>;

// Solves every grid point and returns the largest rho that is feasible and
// accepted; ties keep the earliest grid entry. Throws Error listing per-rho
// statuses when no point qualifies.
GridSearchResult rho_grid_search(const Assembler& assemble,
                                 const std::vector<double>& grid,
                                 const Acceptor& accept,
                                 const sdp::SolverOptions& opts = {});

struct SynthesisConfig {
  std::vector<double> rho_c_grid = {0.02, 0.05, 0.1, 0.2, 0.3, 0.5};
  std::vector<double> rho_o_grid = {0.02, 0.05, 0.1, 0.2, 0.3, 0.5};
  double epsilon = 0.0;  // <= 0 selects default_epsilon(A)
  int n_random = 1000;
  std::uint64_t seed = 0;
  sdp::SolverOptions solver;

  void validate() const;
};

struct SynthesisResult {
  GainSet gains;
  GridSearchResult controller_search;
  GridSearchResult observer_search;
  CertificateReport controller_certificate;
  CertificateReport observer_certificate;
  sdp::SdpProblem controller_problem;
  sdp::SdpProblem observer_problem;
};

// Grid searches for both LMIs and recovers the verified gain pair.
SynthesisResult synthesize(const Matrix& A, const Matrix& B, const Matrix& C,
                           double mu_u, double nu_u, double mu_y, double nu_y,
                           const SynthesisConfig& cfg);

}  // namespace ssmctrl::synthesis
