#include "ssmctrl/ssm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ssmctrl/errors.hpp"

namespace ssmctrl::ssm {
namespace {

double leaky(double a, double slope) { return a >= 0.0 ? a : slope * a; }
double leaky_slope(double a, double slope) { return a >= 0.0 ? 1.0 : slope; }

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

}  // namespace

Matrix rotation_block(double nu_log, double theta) {
  const double r = std::exp(-std::exp(nu_log));
  Matrix blk(2, 2);
  blk << r * std::cos(theta), -r * std::sin(theta),  //
      r * std::sin(theta), r * std::cos(theta);
  return blk;
}

LruParams LruParams::from_parameterization(const Vector& nu_log,
                                           const Vector& theta, Matrix B,
                                           Matrix C, Matrix D) {
  require(nu_log.size() == theta.size() && nu_log.size() > 0,
          "LruParams: nu_log and theta must have equal nonzero length");
  LruParams p;
  p.nu_log = nu_log;
  p.theta = theta;
  p.B = std::move(B);
  p.C = std::move(C);
  p.D = std::move(D);
  p.refresh_state_matrix();
  p.validate();
  return p;
}

LruParams LruParams::from_matrices(Matrix A, Matrix B, Matrix C, Matrix D) {
  LruParams p;
  p.A = std::move(A);
  p.B = std::move(B);
  p.C = std::move(C);
  p.D = std::move(D);
  p.validate();
  return p;
}

void LruParams::refresh_state_matrix() {
  const int nb = static_cast<int>(nu_log.size());
  A = Matrix::Zero(2 * nb, 2 * nb);
  for (int i = 0; i < nb; ++i) {
    A.block(2 * i, 2 * i, 2, 2) = rotation_block(nu_log(i), theta(i));
  }
}

void LruParams::validate() const {
  require(A.rows() == A.cols(), "LruParams: A must be square");
  require(B.rows() == A.rows(), "LruParams: B rows must equal n_x");
  require(C.cols() == A.rows(), "LruParams: C cols must equal n_x");
  require(D.rows() == C.rows() && D.cols() == B.cols(),
          "LruParams: D must be n_y x n_u");
  require(A.allFinite() && B.allFinite() && C.allFinite() && D.allFinite(),
          "LruParams: non-finite entries");
  if (parameterized()) {
    require(theta.size() == nu_log.size() && 2 * nu_log.size() == A.rows(),
            "LruParams: parameterization does not match n_x");
  }
}

Scaffolding Scaffolding::affine(Matrix weight, Vector bias) {
  Scaffolding s;
  s.kind = ScaffoldKind::kAffine;
  s.W1 = std::move(weight);
  s.b1 = std::move(bias);
  s.validate();
  return s;
}

Scaffolding Scaffolding::affine(double weight, double bias) {
  return affine(Matrix::Constant(1, 1, weight), Vector::Constant(1, bias));
}

Scaffolding Scaffolding::identity(int n) {
  return affine(Matrix::Identity(n, n), Vector::Zero(n));
}

Scaffolding Scaffolding::mlp_scalar(Vector w1, Vector b1, Vector w2,
                                    double b2, double negative_slope,
                                    bool zero_anchored) {
  Scaffolding s;
  s.kind = ScaffoldKind::kMlpScalar;
  s.W1 = w1;                                 // hidden x 1
  s.b1 = std::move(b1);
  s.W2 = w2.transpose();                     // 1 x hidden
  s.b2 = Vector::Constant(1, b2);
  s.negative_slope = negative_slope;
  s.zero_anchored = zero_anchored;
  s.validate();
  return s;
}

int Scaffolding::n_in() const { return static_cast<int>(W1.cols()); }

int Scaffolding::n_out() const {
  return kind == ScaffoldKind::kAffine ? static_cast<int>(W1.rows())
                                       : static_cast<int>(W2.rows());
}

int Scaffolding::hidden() const {
  return kind == ScaffoldKind::kAffine ? 0 : static_cast<int>(W1.rows());
}

void Scaffolding::validate() const {
  require(W1.allFinite() && b1.allFinite(), "Scaffolding: non-finite weights");
  require(b1.size() == W1.rows(), "Scaffolding: b1 size must match W1 rows");
  if (kind == ScaffoldKind::kMlpScalar) {
    require(W1.cols() == 1 && W2.rows() == 1,
            "Scaffolding: mlp_scalar must be scalar-in/scalar-out");
    require(W2.cols() == W1.rows(), "Scaffolding: W2 cols must equal hidden");
    require(b2.size() == 1, "Scaffolding: b2 must have one entry");
    require(W2.allFinite() && b2.allFinite(), "Scaffolding: non-finite weights");
    require(negative_slope >= 0.01 && negative_slope <= 1.0,
            "Scaffolding: negative_slope must lie in [0.01, 1]");
  }
}

Vector Scaffolding::eval(const Vector& z) const {
  if (kind == ScaffoldKind::kAffine) return W1 * z + b1;
  return Vector::Constant(1, eval(z(0)));
}

double Scaffolding::eval(double z) const {
  if (kind == ScaffoldKind::kAffine) return W1(0, 0) * z + b1(0);
  double acc = b2(0);
  for (int i = 0; i < W1.rows(); ++i) {
    double h = leaky(W1(i, 0) * z + b1(i), negative_slope);
    if (zero_anchored) h -= leaky(b1(i), negative_slope);
    acc += W2(0, i) * h;
  }
  return zero_anchored ? acc - b2(0) : acc;
}

double Scaffolding::derivative(double z) const {
  if (kind == ScaffoldKind::kAffine) return W1(0, 0);
  double acc = 0.0;
  for (int i = 0; i < W1.rows(); ++i) {
    acc += W2(0, i) * leaky_slope(W1(i, 0) * z + b1(i), negative_slope) *
           W1(i, 0);
  }
  return acc;
}

Matrix Scaffolding::jacobian(const Vector& z) const {
  if (kind == ScaffoldKind::kAffine) return W1;
  return Matrix::Constant(1, 1, derivative(z(0)));
}

std::string to_string(BoundMethod m) {
  switch (m) {
    case BoundMethod::kExactBreakpoint:
      return "exact_breakpoint";
    case BoundMethod::kSpectralProduct:
      return "spectral_product";
    case BoundMethod::kEmpiricalGrid:
      return "empirical_grid";
  }
  return "unknown";
}

BoundMethod bound_method_from_string(const std::string& s) {
  if (s == "exact_breakpoint") return BoundMethod::kExactBreakpoint;
  if (s == "spectral_product") return BoundMethod::kSpectralProduct;
  if (s == "empirical_grid") return BoundMethod::kEmpiricalGrid;
  throw InvalidArgument("unknown bound method '" + s + "'");
}

BiLipBounds bilip_bounds(const Scaffolding& s) {
  s.validate();
  BiLipBounds out;
  out.method = BoundMethod::kExactBreakpoint;
  if (s.kind == ScaffoldKind::kAffine) {
    Eigen::JacobiSVD<Matrix> svd(s.W1);
    const Vector& sv = svd.singularValues();
    const bool square = s.W1.rows() == s.W1.cols();
    out.nu = sv.size() ? sv(0) : 0.0;
    out.mu = (square && sv.size()) ? sv(sv.size() - 1) : 0.0;
    if (!(out.mu > 0.0)) {
      throw NotBiLipschitz("affine scaffolding has a singular weight",
                           -std::numeric_limits<double>::infinity(),
                           std::numeric_limits<double>::infinity());
    }
    return out;
  }

  // The derivative only changes where a unit's pre-activation crosses zero.
  std::vector<double> knots;
  for (int i = 0; i < s.W1.rows(); ++i) {
    if (s.W1(i, 0) != 0.0) knots.push_back(-s.b1(i) / s.W1(i, 0));
  }
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, double>> pieces;  // open intervals
  if (knots.empty()) {
    pieces.emplace_back(-inf, inf);
  } else {
    pieces.emplace_back(-inf, knots.front());
    for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
      pieces.emplace_back(knots[k], knots[k + 1]);
    }
    pieces.emplace_back(knots.back(), inf);
  }

  double lo = inf, hi = 0.0;
  int sign = 0;
  for (const auto& [a, b] : pieces) {
    double probe;
    if (std::isinf(a) && std::isinf(b)) {
      probe = 0.0;
    } else if (std::isinf(a)) {
      probe = b - 1.0 - std::abs(b);
    } else if (std::isinf(b)) {
      probe = a + 1.0 + std::abs(a);
    } else {
      probe = 0.5 * (a + b);
    }
    const double d = s.derivative(probe);
    const int piece_sign = (d > 0.0) - (d < 0.0);
    if (piece_sign == 0 || (sign != 0 && piece_sign != sign)) {
      throw NotBiLipschitz(
          "scaffolding derivative vanishes or changes sign on a piece", a, b);
    }
    sign = piece_sign;
    lo = std::min(lo, std::abs(d));
    hi = std::max(hi, std::abs(d));
  }
  out.mu = lo;
  out.nu = hi;
  return out;
}

BiLipBounds spectral_product_bounds(const Scaffolding& s) {
  BiLipBounds out;
  out.method = BoundMethod::kSpectralProduct;
  if (s.kind == ScaffoldKind::kAffine) {
    out.nu = linalg::spectral_norm(s.W1);
  } else {
    out.nu = linalg::spectral_norm(s.W2) * linalg::spectral_norm(s.W1);
  }
  return out;
}

BiLipBounds empirical_grid_bounds(const Scaffolding& s, double lo, double hi,
                                  int n) {
  require(n >= 2 && hi > lo, "empirical_grid_bounds: invalid grid");
  BiLipBounds out;
  out.method = BoundMethod::kEmpiricalGrid;
  out.mu = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n; ++k) {
    const double z = lo + (hi - lo) * k / (n - 1);
    const double d = std::abs(s.derivative(z));
    out.mu = std::min(out.mu, d);
    out.nu = std::max(out.nu, d);
  }
  return out;
}

Vector SsmModel::next_state(const Vector& x, const Vector& u) const {
  return lru.A * x + lru.B * s_u.eval(u);
}

Vector SsmModel::output(const Vector& x, const Vector& u) const {
  return s_y.eval(lru.C * x + lru.D * s_u.eval(u));
}

void SsmModel::validate() const {
  lru.validate();
  s_u.validate();
  s_y.validate();
  require(s_u.n_out() == lru.n_in(),
          "SsmModel: S_u output dimension must equal LRU input dimension");
  require(s_y.n_in() == lru.n_out(),
          "SsmModel: S_y input dimension must equal LRU output dimension");
  require(dt_sample > 0.0, "SsmModel: dt_sample must be > 0");
}

Rollout ssm_forward(const SsmModel& m, const Vector& x0, const Matrix& inputs) {
  require(x0.size() == m.n_x(), "ssm_forward: x0 has wrong dimension");
  require(inputs.rows() == m.n_u(), "ssm_forward: inputs have wrong dimension");
  const Eigen::Index T = inputs.cols();
  Rollout r;
  r.states.resize(m.n_x(), T + 1);
  r.outputs.resize(m.n_y(), T);
  r.states.col(0) = x0;
  for (Eigen::Index k = 0; k < T; ++k) {
    const Vector ubar = m.s_u.eval(Vector(inputs.col(k)));
    const Vector x = r.states.col(k);
    r.outputs.col(k) = m.s_y.eval(m.lru.C * x + m.lru.D * ubar);
    r.states.col(k + 1) = m.lru.A * x + m.lru.B * ubar;
  }
  return r;
}

Rollout ssm_forward(const SsmModel& m, const Vector& x0,
                    const std::vector<double>& inputs) {
  Matrix u(1, static_cast<Eigen::Index>(inputs.size()));
  for (std::size_t k = 0; k < inputs.size(); ++k) u(0, k) = inputs[k];
  return ssm_forward(m, x0, u);
}

Differential ssm_differential(const SsmModel& m, const Vector& x,
                              const Vector& u) {
  Differential d;
  d.Ju = m.s_u.jacobian(u);
  const Vector ybar = m.lru.C * x + m.lru.D * m.s_u.eval(u);
  d.Jy = m.s_y.jacobian(ybar);
  d.A = m.lru.A;
  d.BJu = m.lru.B * d.Ju;
  d.JyC = d.Jy * m.lru.C;
  d.JyDJu = d.Jy * m.lru.D * d.Ju;
  return d;
}

}  // namespace ssmctrl::ssm
