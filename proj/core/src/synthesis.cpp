#include "ssmctrl/synthesis.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "ssmctrl/errors.hpp"
#include "ssmctrl/seeding.hpp"

namespace ssmctrl::synthesis {
namespace {

using sdp::AffineMatrix;

void check_bounds(double mu, double nu, double rho, const char* who) {
  if (!(mu > 0.0 && mu <= nu && std::isfinite(nu))) {
    throw InvalidArgument(std::string(who) + ": need 0 < mu <= nu");
  }
  if (!(rho > 0.0 && rho < 1.0)) {
    throw InvalidArgument(std::string(who) + ": rho must lie in (0, 1)");
  }
}

void fill_meta(sdp::SdpProblem& p, double mu, double nu, double rho,
               double eps) {
  p.epsilon = eps;
  p.meta["rho"] = rho;
  p.meta["mu"] = mu;
  p.meta["nu"] = nu;
  p.meta["alpha"] = 0.5 * (nu + mu);
  p.meta["beta"] = 0.5 * (nu - mu);
}

double meta(const sdp::SdpSolution& s, const char* key) {
  auto it = s.meta.find(key);
  if (it == s.meta.end()) {
    throw InvalidArgument(std::string("SdpSolution: missing metadata '") + key +
                          "'");
  }
  return it->second;
}

// Worst lambda_max(F^T M F - (1 - rho) M) over the sampled closed loops.
double worst_form(const std::vector<Matrix>& loops, const Matrix& M,
                  double rho) {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& F : loops) {
    const Matrix form = F.transpose() * M * F - (1.0 - rho) * M;
    worst = std::max(worst, linalg::max_sym_eigenvalue(form));
  }
  return worst;
}

std::vector<Matrix> sample_jacobians(int n, double mu, double nu, int n_random,
                                     std::uint64_t seed) {
  const double alpha = 0.5 * (nu + mu), beta = 0.5 * (nu - mu);
  std::vector<Matrix> js;
  const Matrix I = Matrix::Identity(n, n);
  js.push_back(alpha * I + beta * I);
  js.push_back(alpha * I - beta * I);
  if (beta == 0.0) return js;
  for (int k = 0; k < n_random; ++k) {
    js.push_back(alpha * I + beta * random_contraction(n, n,
                                                       derive_seed(seed, "delta", k)));
  }
  return js;
}

CertificateReport sweep(const std::vector<Matrix>& loops, const Matrix& W,
                        const std::string& name, double rho) {
  CertificateReport r;
  r.samples = static_cast<int>(loops.size());
  MetricVerdict direct{name, worst_form(loops, W, rho), false};
  direct.holds = direct.worst_eigenvalue < 0.0;
  const Matrix Winv = W.inverse();
  MetricVerdict inverse{name + "^-1",
                        worst_form(loops, linalg::symmetrize(Winv), rho), false};
  inverse.holds = inverse.worst_eigenvalue < 0.0;
  r.metrics = {direct, inverse};
  return r;
}

}  // namespace

double default_epsilon(const Matrix& A) {
  return 1e-6 * std::max(linalg::spectral_norm(A), 1e-12);
}

sdp::SdpProblem assemble_controller_lmi(const Matrix& A, const Matrix& B,
                                        double mu_u, double nu_u,
                                        double rho_c, double eps) {
  check_bounds(mu_u, nu_u, rho_c, "assemble_controller_lmi");
  if (A.rows() != A.cols() || B.rows() != A.rows()) {
    throw InvalidArgument("assemble_controller_lmi: dimension mismatch");
  }
  if (!(eps > 0.0)) throw InvalidArgument("assemble_controller_lmi: eps <= 0");
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(B.cols());
  const double alpha = 0.5 * (nu_u + mu_u), beta = 0.5 * (nu_u - mu_u);

  sdp::SdpProblem p;
  p.label = "controller";
  fill_meta(p, mu_u, nu_u, rho_c, eps);
  const AffineMatrix P = p.add_symmetric("P", n);
  const AffineMatrix Y = p.add_rectangular("Y", n, n);
  const AffineMatrix X = p.add_rectangular("X", m, n);
  const AffineMatrix sigma = p.add_scalar("sigma");

  const AffineMatrix b11 = (1.0 - rho_c) * P - sigma.scalar_times(B * B.transpose());
  const AffineMatrix b12 = A * Y + alpha * (B * X);
  const AffineMatrix b22 = Y.transpose() + Y - P;
  const AffineMatrix b23 = beta * X.transpose();
  const AffineMatrix b33 = sigma.scalar_times(Matrix::Identity(m, m));
  const AffineMatrix lmi = AffineMatrix::blocks({
      {b11, b12, AffineMatrix::zero(n, m)},
      {b12.transpose(), b22, b23},
      {AffineMatrix::zero(m, n), b23.transpose(), b33},
  });
  p.add_constraint("controller_lmi", lmi);
  p.add_constraint("P_strict",
                   P - AffineMatrix::constant(eps * Matrix::Identity(n, n)));
  p.add_constraint("sigma_strict",
                   sigma - AffineMatrix::constant(Matrix::Constant(1, 1, eps)));
  p.add_constraint("P_normalization",
                   AffineMatrix::constant(Matrix::Identity(n, n)) - P,
                   /*margin=*/false);
  return p;
}

sdp::SdpProblem assemble_observer_lmi(const Matrix& A, const Matrix& C,
                                      double mu_y, double nu_y, double rho_o,
                                      double eps) {
  check_bounds(mu_y, nu_y, rho_o, "assemble_observer_lmi");
  if (A.rows() != A.cols() || C.cols() != A.rows()) {
    throw InvalidArgument("assemble_observer_lmi: dimension mismatch");
  }
  if (!(eps > 0.0)) throw InvalidArgument("assemble_observer_lmi: eps <= 0");
  const int n = static_cast<int>(A.rows());
  const int ny = static_cast<int>(C.rows());
  const double alpha = 0.5 * (nu_y + mu_y), beta = 0.5 * (nu_y - mu_y);

  sdp::SdpProblem p;
  p.label = "observer";
  fill_meta(p, mu_y, nu_y, rho_o, eps);
  const AffineMatrix Q = p.add_symmetric("Q", n);
  const AffineMatrix U = p.add_rectangular("U", n, n);
  const AffineMatrix V = p.add_rectangular("V", n, ny);
  const AffineMatrix eta = p.add_scalar("eta");

  const AffineMatrix b11 = (1.0 - rho_o) * Q - eta.scalar_times(C.transpose() * C);
  const AffineMatrix b12 = (U * A + alpha * (V * C)).transpose();
  const AffineMatrix b22 = U + U.transpose() - Q;
  const AffineMatrix b23 = beta * V;
  const AffineMatrix b33 = eta.scalar_times(Matrix::Identity(ny, ny));
  const AffineMatrix lmi = AffineMatrix::blocks({
      {b11, b12, AffineMatrix::zero(n, ny)},
      {b12.transpose(), b22, b23},
      {AffineMatrix::zero(ny, n), b23.transpose(), b33},
  });
  p.add_constraint("observer_lmi", lmi);
  p.add_constraint("Q_strict",
                   Q - AffineMatrix::constant(eps * Matrix::Identity(n, n)));
  p.add_constraint("eta_strict",
                   eta - AffineMatrix::constant(Matrix::Constant(1, 1, eps)));
  p.add_constraint("Q_normalization",
                   AffineMatrix::constant(Matrix::Identity(n, n)) - Q,
                   /*margin=*/false);
  return p;
}

void GainSet::validate() const {
  auto req = [](bool ok, const char* what) {
    if (!ok) throw InvalidArgument(std::string("GainSet: ") + what);
  };
  req(linalg::is_positive_definite(P), "P must be positive definite");
  req(linalg::is_positive_definite(Q), "Q must be positive definite");
  req(sigma > 0.0 && eta > 0.0, "sigma and eta must be > 0");
  req(rho_c > 0.0 && rho_c < 1.0 && rho_o > 0.0 && rho_o < 1.0,
      "contraction rates must lie in (0, 1)");
  req(K.cols() == P.rows() && L.rows() == Q.rows(), "gain dimensions");
  req(K.allFinite() && L.allFinite(), "non-finite gains");
}

Matrix recover_controller_gain(const sdp::SdpSolution& ctrl, double* cond) {
  if (!ctrl.feasible()) {
    throw InvalidArgument("recover_gains: controller solution is not feasible");
  }
  const Matrix& Y = ctrl.value("Y");
  const double c = linalg::condition_number(Y);
  if (cond) *cond = c;
  if (!(c <= kMaxRecoveryCondition)) {
    std::ostringstream os;
    os << "recover_gains: Y is numerically singular (cond = " << c
       << "); try a different rho grid point";
    throw Error(os.str());
  }
  // K Y = X  <=>  Y^T K^T = X^T
  return Y.transpose().partialPivLu().solve(ctrl.value("X").transpose())
      .transpose();
}

Matrix recover_observer_gain(const sdp::SdpSolution& obs, double* cond) {
  if (!obs.feasible()) {
    throw InvalidArgument("recover_gains: observer solution is not feasible");
  }
  const Matrix& U = obs.value("U");
  const double c = linalg::condition_number(U);
  if (cond) *cond = c;
  if (!(c <= kMaxRecoveryCondition)) {
    std::ostringstream os;
    os << "recover_gains: U is numerically singular (cond = " << c
       << "); try a different rho grid point";
    throw Error(os.str());
  }
  return U.partialPivLu().solve(obs.value("V"));
}

GainSet recover_gains(const sdp::SdpSolution& ctrl,
                      const sdp::SdpSolution& obs) {
  GainSet g;
  g.K = recover_controller_gain(ctrl, &g.cond_Y);
  g.L = recover_observer_gain(obs, &g.cond_U);
  g.P = ctrl.value("P");
  g.X = ctrl.value("X");
  g.Y = ctrl.value("Y");
  g.sigma = ctrl.value("sigma")(0, 0);
  g.Q = obs.value("Q");
  g.U = obs.value("U");
  g.V = obs.value("V");
  g.eta = obs.value("eta")(0, 0);
  g.rho_c = meta(ctrl, "rho");
  g.mu_u = meta(ctrl, "mu");
  g.nu_u = meta(ctrl, "nu");
  g.rho_o = meta(obs, "rho");
  g.mu_y = meta(obs, "mu");
  g.nu_y = meta(obs, "nu");
  return g;
}

bool CertificateReport::holds() const { return certifying() != nullptr; }

const MetricVerdict* CertificateReport::certifying() const {
  const MetricVerdict* best = nullptr;
  for (const auto& m : metrics) {
    if (m.holds && (!best || m.worst_eigenvalue < best->worst_eigenvalue)) {
      best = &m;
    }
  }
  return best;
}

Matrix random_contraction(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto gaussian = [&](int r, int c) {
    Matrix g(r, c);
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < c; ++j) g(i, j) = normal(rng);
    }
    return g;
  };
  const int k = std::min(rows, cols);
  const Matrix Ul = Eigen::HouseholderQR<Matrix>(gaussian(rows, rows))
                        .householderQ();
  const Matrix Ur = Eigen::HouseholderQR<Matrix>(gaussian(cols, cols))
                        .householderQ();
  Matrix S = Matrix::Zero(rows, cols);
  for (int i = 0; i < k; ++i) S(i, i) = (unif(rng) * 2.0 - 1.0);
  return Ul * S * Ur.transpose();
}

CertificateReport verify_controller_certificate(const Matrix& A,
                                                const Matrix& B,
                                                const Matrix& K,
                                                const Matrix& P, double mu_u,
                                                double nu_u, double rho_c,
                                                int n_random,
                                                std::uint64_t seed) {
  check_bounds(mu_u, nu_u, rho_c, "verify_controller_certificate");
  std::vector<Matrix> loops;
  for (const Matrix& J : sample_jacobians(static_cast<int>(B.cols()), mu_u,
                                          nu_u, n_random, seed)) {
    loops.push_back(A + B * J * K);
  }
  return sweep(loops, linalg::symmetrize(P), "P", rho_c);
}

CertificateReport verify_observer_certificate(const Matrix& A,
                                              const Matrix& C,
                                              const Matrix& L,
                                              const Matrix& Q, double mu_y,
                                              double nu_y, double rho_o,
                                              int n_random,
                                              std::uint64_t seed) {
  check_bounds(mu_y, nu_y, rho_o, "verify_observer_certificate");
  std::vector<Matrix> loops;
  for (const Matrix& J : sample_jacobians(static_cast<int>(C.rows()), mu_y,
                                          nu_y, n_random, seed)) {
    loops.push_back(A + L * J * C);
  }
  return sweep(loops, linalg::symmetrize(Q), "Q", rho_o);
}

GridSearchResult rho_grid_search(const Assembler& assemble,
                                 const std::vector<double>& grid,
                                 const Acceptor& accept,
                                 const sdp::SolverOptions& opts) {
  if (grid.empty()) throw InvalidArgument("rho_grid_search: empty grid");
  for (double r : grid) {
    if (!(r > 0.0 && r < 1.0)) {
      throw InvalidArgument("rho_grid_search: grid values must lie in (0, 1)");
    }
  }
  GridSearchResult result;
  int best = -1;
  std::vector<sdp::SdpSolution> solutions;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    GridPoint gp;
    gp.rho = grid[i];
    sdp::SdpSolution sol = sdp::solve_sdp(assemble(grid[i]), opts);
    gp.status = sol.status;
    gp.margin = sol.margin;
    if (sol.feasible()) {
      try {
        gp.certified = accept(sol, grid[i], gp.note);
      } catch (const Error& e) {
        gp.certified = false;
        gp.note = e.what();
      }
    } else {
      gp.note = sol.diagnostics;
    }
    if (gp.certified && (best < 0 || grid[i] > grid[best])) {
      best = static_cast<int>(i);
    }
    result.points.push_back(gp);
    solutions.push_back(std::move(sol));
  }
  if (best < 0) {
    std::ostringstream os;
    os << "rho_grid_search: no feasible, certified grid point;";
    for (const auto& gp : result.points) {
      os << " rho=" << gp.rho << ':' << sdp::to_string(gp.status)
         << (gp.status == sdp::SdpStatus::kFeasible && !gp.certified
                 ? "(uncertified)"
                 : "");
    }
    throw Error(os.str());
  }
  result.rho = grid[best];
  result.solution = std::move(solutions[best]);
  return result;
}

void SynthesisConfig::validate() const {
  auto check_grid = [](const std::vector<double>& g, const char* name) {
    if (g.empty()) {
      throw InvalidArgument(std::string("SynthesisConfig.") + name +
                            " is empty");
    }
    for (double r : g) {
      if (!(r > 0.0 && r < 1.0)) {
        throw InvalidArgument(std::string("SynthesisConfig.") + name +
                              " values must lie in (0, 1)");
      }
    }
  };
  check_grid(rho_c_grid, "rho_c_grid");
  check_grid(rho_o_grid, "rho_o_grid");
  if (n_random < 0) throw InvalidArgument("SynthesisConfig.n_random < 0");
}

SynthesisResult synthesize(const Matrix& A, const Matrix& B, const Matrix& C,
                           double mu_u, double nu_u, double mu_y, double nu_y,
                           const SynthesisConfig& cfg) {
  cfg.validate();
  const double eps = cfg.epsilon > 0.0 ? cfg.epsilon : default_epsilon(A);
  SynthesisResult out;

  out.controller_search = rho_grid_search(
      [&](double rho) {
        return assemble_controller_lmi(A, B, mu_u, nu_u, rho, eps);
      },
      cfg.rho_c_grid,
      [&](const sdp::SdpSolution& sol, double rho, std::string& note) {
        const Matrix K = recover_controller_gain(sol, nullptr);
        const auto rep = verify_controller_certificate(
            A, B, K, sol.value("P"), mu_u, nu_u, rho, cfg.n_random,
            derive_seed(cfg.seed, "controller_certificate"));
        note = rep.holds() ? "certified in " + rep.certifying()->metric
                           : "certificate sweep failed";
        return rep.holds();
      },
      cfg.solver);

  out.observer_search = rho_grid_search(
      [&](double rho) {
        return assemble_observer_lmi(A, C, mu_y, nu_y, rho, eps);
      },
      cfg.rho_o_grid,
      [&](const sdp::SdpSolution& sol, double rho, std::string& note) {
        const Matrix L = recover_observer_gain(sol, nullptr);
        const auto rep = verify_observer_certificate(
            A, C, L, sol.value("Q"), mu_y, nu_y, rho, cfg.n_random,
            derive_seed(cfg.seed, "observer_certificate"));
        note = rep.holds() ? "certified in " + rep.certifying()->metric
                           : "certificate sweep failed";
        return rep.holds();
      },
      cfg.solver);

  out.gains = recover_gains(out.controller_search.solution,
                            out.observer_search.solution);
  out.gains.validate();
  out.controller_certificate = verify_controller_certificate(
      A, B, out.gains.K, out.gains.P, mu_u, nu_u, out.gains.rho_c,
      cfg.n_random, derive_seed(cfg.seed, "controller_certificate"));
  out.observer_certificate = verify_observer_certificate(
      A, C, out.gains.L, out.gains.Q, mu_y, nu_y, out.gains.rho_o,
      cfg.n_random, derive_seed(cfg.seed, "observer_certificate"));
  out.controller_problem =
      assemble_controller_lmi(A, B, mu_u, nu_u, out.gains.rho_c, eps);
  out.observer_problem =
      assemble_observer_lmi(A, C, mu_y, nu_y, out.gains.rho_o, eps);
  return out;
}

}  // namespace ssmctrl::synthesis
