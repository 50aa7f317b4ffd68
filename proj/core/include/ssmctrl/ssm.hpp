#pragma once

#include <string>
#include <vector>

#include "ssmctrl/linalg.hpp"

namespace ssmctrl::ssm {

// Linear recurrent unit x+ = A x + B ubar, ybar = C x + D ubar.
//
// When the parameterization fields are populated, A is block diagonal with
// 2x2 rotation-scaling blocks r_i [cos t_i, -sin t_i; sin t_i, cos t_i] and
// r_i = exp(-exp(nu_log_i)) in (0, 1), so A is Schur stable for any value of
// the fields. An LRU built from explicit matrices leaves them empty.
struct LruParams {
  Matrix A, B, C, D;
  Vector nu_log;  // one entry per 2x2 block
  Vector theta;   // one entry per 2x2 block

  static LruParams from_parameterization(const Vector& nu_log,
                                         const Vector& theta, Matrix B,
                                         Matrix C, Matrix D);
  static LruParams from_matrices(Matrix A, Matrix B, Matrix C, Matrix D);

  bool parameterized() const { return nu_log.size() > 0; }
  // Rebuilds A from (nu_log, theta).
  void refresh_state_matrix();

  int n_x() const { return static_cast<int>(A.rows()); }
  int n_in() const { return static_cast<int>(B.cols()); }
  int n_out() const { return static_cast<int>(C.rows()); }

  void validate() const;
};

// 2x2 block r [cos t, -sin t; sin t, cos t] for r = exp(-exp(nu_log)).
Matrix rotation_block(double nu_log, double theta);

enum class ScaffoldKind { kMlpScalar, kAffine };

// Static map around the recurrent core.
//
//   kAffine:    S(z) = W1 z + b1  (W2, b2 unused)
//   kMlpScalar: raw(z) = W2 phi(W1 z + b1) + b2 with leaky ReLU phi; when
//               zero_anchored, S(z) = raw(z) - raw(0).
struct Scaffolding {
  ScaffoldKind kind = ScaffoldKind::kAffine;
  Matrix W1;
  Vector b1;
  Matrix W2;
  Vector b2;
  double negative_slope = 0.01;
  bool zero_anchored = false;

  static Scaffolding affine(Matrix weight, Vector bias);
  static Scaffolding affine(double weight, double bias = 0.0);
  static Scaffolding identity(int n);
  static Scaffolding mlp_scalar(Vector w1, Vector b1, Vector w2, double b2,
                                double negative_slope, bool zero_anchored);

  int n_in() const;
  int n_out() const;
  int hidden() const;

  Vector eval(const Vector& z) const;
  Matrix jacobian(const Vector& z) const;
  double eval(double z) const;
  double derivative(double z) const;

  void validate() const;
};

enum class BoundMethod { kExactBreakpoint, kSpectralProduct, kEmpiricalGrid };

std::string to_string(BoundMethod m);
BoundMethod bound_method_from_string(const std::string& s);

struct BiLipBounds {
  double mu = 0.0;
  double nu = 0.0;
  BoundMethod method = BoundMethod::kExactBreakpoint;
};

// Certified (mu, nu). Affine maps use the extreme singular values of the
// weight. Scalar MLPs use an exact sweep over the pieces of the piecewise
// constant derivative. Throws NotBiLipschitz if some piece has zero slope or
// the slope changes sign.
BiLipBounds bilip_bounds(const Scaffolding& s);

// Upper bound nu <= ||W2|| ||W1|| (leaky ReLU is 1-Lipschitz); mu is left at
// zero since weight norms alone certify no lower bound.
BiLipBounds spectral_product_bounds(const Scaffolding& s);

// Min/max |S'| over a uniform grid of n points on [lo, hi]. Not a
// certificate; used to cross-check the exact sweep.
BiLipBounds empirical_grid_bounds(const Scaffolding& s, double lo, double hi,
                                  int n);

struct SsmModel {
  LruParams lru;
  Scaffolding s_u;
  Scaffolding s_y;
  double dt_sample = 1e-3;

  int n_x() const { return lru.n_x(); }
  int n_u() const { return s_u.n_in(); }
  int n_y() const { return s_y.n_out(); }

  Vector next_state(const Vector& x, const Vector& u) const;
  Vector output(const Vector& x, const Vector& u) const;

  void validate() const;
};

struct Rollout {
  Matrix states;   // n_x x (T+1), column k is x_k
  Matrix outputs;  // n_y x T
};

// Iterates the model over the columns of inputs (n_u x T).
Rollout ssm_forward(const SsmModel& m, const Vector& x0, const Matrix& inputs);

// Scalar-input, scalar-output convenience overload.
Rollout ssm_forward(const SsmModel& m, const Vector& x0,
                    const std::vector<double>& inputs);

// Linearization of the one-step map at (x, u):
//   dx+ = A dx + B J^u du,   dy = J^y C dx + J^y D J^u du.
struct Differential {
  Matrix A;
  Matrix BJu;
  Matrix JyC;
  Matrix JyDJu;
  Matrix Ju;
  Matrix Jy;
};

Differential ssm_differential(const SsmModel& m, const Vector& x,
                              const Vector& u);

}  // namespace ssmctrl::ssm
