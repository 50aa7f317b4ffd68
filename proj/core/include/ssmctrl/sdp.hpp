#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "ssmctrl/linalg.hpp"

namespace ssmctrl::sdp {

// Matrix that depends affinely on a flat vector of scalar decision
// variables: constant + sum_i x_i * terms[i].
class AffineMatrix {
 public:
  AffineMatrix() = default;
  AffineMatrix(Eigen::Index rows, Eigen::Index cols);
  static AffineMatrix constant(const Matrix& c);
  static AffineMatrix zero(Eigen::Index rows, Eigen::Index cols);
  // Block matrix from a rectangular grid of blocks with consistent sizes.
  static AffineMatrix blocks(
      const std::vector<std::vector<AffineMatrix>>& grid);

  Eigen::Index rows() const { return constant_.rows(); }
  Eigen::Index cols() const { return constant_.cols(); }
  const Matrix& constant_term() const { return constant_; }
  const std::map<int, Matrix>& terms() const { return terms_; }
  void add_term(int index, const Matrix& coef);

  AffineMatrix transpose() const;
  // Requires a 1x1 expression s; returns s * m.
  AffineMatrix scalar_times(const Matrix& m) const;
  Matrix evaluate(const Vector& x) const;
  bool exactly_symmetric() const;

  AffineMatrix& operator+=(const AffineMatrix& o);
  friend AffineMatrix operator+(AffineMatrix a, const AffineMatrix& b) {
    return a += b;
  }
  friend AffineMatrix operator-(AffineMatrix a, const AffineMatrix& b);
  friend AffineMatrix operator-(const AffineMatrix& a);
  friend AffineMatrix operator*(double s, const AffineMatrix& a);
  friend AffineMatrix operator*(const Matrix& l, const AffineMatrix& a);
  friend AffineMatrix operator*(const AffineMatrix& a, const Matrix& r);

 private:
  Matrix constant_;
  std::map<int, Matrix> terms_;
};

enum class VariableKind { kSymmetric, kRectangular, kScalar };

struct VariableInfo {
  std::string name;
  VariableKind kind = VariableKind::kScalar;
  int rows = 1;
  int cols = 1;
  int offset = 0;  // first flat index
  int count = 1;   // number of flat scalars
};

// F(x) >= 0. Margin constraints are shifted by t I in the solver's
// margin-maximization objective; normalization constraints are not and must
// be strictly satisfied at x = 0.
struct LmiConstraint {
  std::string name;
  AffineMatrix expr;
  bool margin = true;
};

struct SdpProblem {
  std::vector<VariableInfo> variables;
  std::vector<LmiConstraint> constraints;
  double epsilon = 0.0;
  std::map<std::string, double> meta;  // rho, mu, nu, ... for bookkeeping
  std::string label;

  int num_scalars() const;
  AffineMatrix add_symmetric(const std::string& name, int n);
  AffineMatrix add_rectangular(const std::string& name, int rows, int cols);
  AffineMatrix add_scalar(const std::string& name);
  const VariableInfo& variable(const std::string& name) const;

  // Throws InvalidArgument unless expr is square and exactly symmetric.
  void add_constraint(const std::string& name, const AffineMatrix& expr,
                      bool margin = true);
  void validate() const;

  // Reconstructs the named variable from a flat vector.
  Matrix value_of(const std::string& name, const Vector& x) const;
};

enum class SdpStatus { kFeasible, kInfeasible, kNumericalFailure };
std::string to_string(SdpStatus s);
SdpStatus sdp_status_from_string(const std::string& s);

struct ConstraintEig {
  std::string name;
  double min_eigenvalue = 0.0;
  double max_abs_eigenvalue = 0.0;
};

struct SdpSolution {
  SdpStatus status = SdpStatus::kNumericalFailure;
  Vector x;
  std::map<std::string, Matrix> values;
  double margin = 0.0;  // optimal t
  std::vector<ConstraintEig> constraint_eigs;
  int newton_steps = 0;
  std::string diagnostics;
  std::map<std::string, double> meta;

  const Matrix& value(const std::string& name) const;
  bool feasible() const { return status == SdpStatus::kFeasible; }
};

struct SolverOptions {
  double box_bound = 1e4;       // |x_i| <= box_bound
  double gap_tolerance = 1e-9;  // barrier duality-gap bound
  double feasibility_tolerance = 1e-10;  // required margin t for kFeasible
  double barrier_growth = 10.0;
  int max_newton_steps = 2000;
};

// Margin-maximizing barrier method:
//
//   maximize t  s.t.  F_j(x) >= t I  (margin constraints)
//                     G_j(x) >  0    (normalization constraints)
//                     |x_i| <= box_bound
//
// Feasible iff the optimal margin exceeds feasibility_tolerance. Every
// constraint is re-evaluated at the returned point and its eigenvalues
// recorded.
SdpSolution solve_sdp(const SdpProblem& p, const SolverOptions& opts = {});

// Min eigenvalue of every constraint at x, recomputed from scratch.
std::vector<ConstraintEig> constraint_eigenvalues(const SdpProblem& p,
                                                  const Vector& x);

// SDPA sparse format of the solved problem in the variables (x, t): minimize
// -t subject to the margin blocks, normalization blocks and the box bounds
// as one diagonal block.
void write_sdpa(std::ostream& os, const SdpProblem& p,
                const SolverOptions& opts = {});

}  // namespace ssmctrl::sdp
