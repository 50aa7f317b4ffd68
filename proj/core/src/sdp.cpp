#include "ssmctrl/sdp.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "ssmctrl/errors.hpp"

namespace ssmctrl::sdp {

AffineMatrix::AffineMatrix(Eigen::Index rows, Eigen::Index cols)
    : constant_(Matrix::Zero(rows, cols)) {}

AffineMatrix AffineMatrix::constant(const Matrix& c) {
  AffineMatrix a;
  a.constant_ = c;
  return a;
}

AffineMatrix AffineMatrix::zero(Eigen::Index rows, Eigen::Index cols) {
  return AffineMatrix(rows, cols);
}

void AffineMatrix::add_term(int index, const Matrix& coef) {
  if (coef.rows() != rows() || coef.cols() != cols()) {
    throw InvalidArgument("AffineMatrix: term dimension mismatch");
  }
  auto it = terms_.find(index);
  if (it == terms_.end()) {
    terms_.emplace(index, coef);
  } else {
    it->second += coef;
  }
}

AffineMatrix AffineMatrix::blocks(
    const std::vector<std::vector<AffineMatrix>>& grid) {
  if (grid.empty() || grid[0].empty()) {
    throw InvalidArgument("AffineMatrix::blocks: empty grid");
  }
  const std::size_t nr = grid.size(), nc = grid[0].size();
  std::vector<Eigen::Index> heights(nr), widths(nc);
  for (std::size_t i = 0; i < nr; ++i) {
    if (grid[i].size() != nc) {
      throw InvalidArgument("AffineMatrix::blocks: ragged grid");
    }
    heights[i] = grid[i][0].rows();
  }
  for (std::size_t j = 0; j < nc; ++j) widths[j] = grid[0][j].cols();
  Eigen::Index total_r = 0, total_c = 0;
  for (auto h : heights) total_r += h;
  for (auto w : widths) total_c += w;

  AffineMatrix out(total_r, total_c);
  Eigen::Index r0 = 0;
  for (std::size_t i = 0; i < nr; ++i) {
    Eigen::Index c0 = 0;
    for (std::size_t j = 0; j < nc; ++j) {
      const AffineMatrix& b = grid[i][j];
      if (b.rows() != heights[i] || b.cols() != widths[j]) {
        throw InvalidArgument("AffineMatrix::blocks: block size mismatch");
      }
      out.constant_.block(r0, c0, b.rows(), b.cols()) = b.constant_;
      for (const auto& [idx, coef] : b.terms_) {
        auto it = out.terms_.find(idx);
        if (it == out.terms_.end()) {
          it = out.terms_.emplace(idx, Matrix::Zero(total_r, total_c)).first;
        }
        it->second.block(r0, c0, b.rows(), b.cols()) += coef;
      }
      c0 += widths[j];
    }
    r0 += heights[i];
  }
  return out;
}

AffineMatrix AffineMatrix::transpose() const {
  AffineMatrix out;
  out.constant_ = constant_.transpose();
  for (const auto& [idx, coef] : terms_) out.terms_.emplace(idx, coef.transpose());
  return out;
}

AffineMatrix AffineMatrix::scalar_times(const Matrix& m) const {
  if (rows() != 1 || cols() != 1) {
    throw InvalidArgument("AffineMatrix::scalar_times: expression is not 1x1");
  }
  AffineMatrix out;
  out.constant_ = constant_(0, 0) * m;
  for (const auto& [idx, coef] : terms_) out.terms_.emplace(idx, coef(0, 0) * m);
  return out;
}

Matrix AffineMatrix::evaluate(const Vector& x) const {
  Matrix v = constant_;
  for (const auto& [idx, coef] : terms_) {
    if (idx >= x.size()) throw InvalidArgument("AffineMatrix: x too short");
    if (x(idx) != 0.0) v += x(idx) * coef;
  }
  return v;
}

bool AffineMatrix::exactly_symmetric() const {
  if (rows() != cols()) return false;
  if (constant_ != constant_.transpose()) return false;
  for (const auto& [idx, coef] : terms_) {
    if (coef != coef.transpose()) return false;
  }
  return true;
}

AffineMatrix& AffineMatrix::operator+=(const AffineMatrix& o) {
  if (o.rows() != rows() || o.cols() != cols()) {
    throw InvalidArgument("AffineMatrix: dimension mismatch in +");
  }
  constant_ += o.constant_;
  for (const auto& [idx, coef] : o.terms_) add_term(idx, coef);
  return *this;
}

AffineMatrix operator-(const AffineMatrix& a) { return -1.0 * a; }

AffineMatrix operator-(AffineMatrix a, const AffineMatrix& b) {
  return a += (-1.0 * b);
}

AffineMatrix operator*(double s, const AffineMatrix& a) {
  AffineMatrix out;
  out.constant_ = s * a.constant_;
  for (const auto& [idx, coef] : a.terms_) out.terms_.emplace(idx, s * coef);
  return out;
}

AffineMatrix operator*(const Matrix& l, const AffineMatrix& a) {
  if (l.cols() != a.rows()) {
    throw InvalidArgument("AffineMatrix: dimension mismatch in left product");
  }
  AffineMatrix out;
  out.constant_ = l * a.constant_;
  for (const auto& [idx, coef] : a.terms_) out.terms_.emplace(idx, l * coef);
  return out;
}

AffineMatrix operator*(const AffineMatrix& a, const Matrix& r) {
  if (a.cols() != r.rows()) {
    throw InvalidArgument("AffineMatrix: dimension mismatch in right product");
  }
  AffineMatrix out;
  out.constant_ = a.constant_ * r;
  for (const auto& [idx, coef] : a.terms_) out.terms_.emplace(idx, coef * r);
  return out;
}

int SdpProblem::num_scalars() const {
  int n = 0;
  for (const auto& v : variables) n += v.count;
  return n;
}

AffineMatrix SdpProblem::add_symmetric(const std::string& name, int n) {
  VariableInfo v{name, VariableKind::kSymmetric, n, n, num_scalars(),
                 n * (n + 1) / 2};
  variables.push_back(v);
  AffineMatrix m(n, n);
  int idx = v.offset;
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      Matrix e = Matrix::Zero(n, n);
      e(i, j) = 1.0;
      e(j, i) = 1.0;
      m.add_term(idx++, e);
    }
  }
  return m;
}

AffineMatrix SdpProblem::add_rectangular(const std::string& name, int rows,
                                         int cols) {
  VariableInfo v{name, VariableKind::kRectangular, rows, cols, num_scalars(),
                 rows * cols};
  variables.push_back(v);
  AffineMatrix m(rows, cols);
  int idx = v.offset;
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      Matrix e = Matrix::Zero(rows, cols);
      e(i, j) = 1.0;
      m.add_term(idx++, e);
    }
  }
  return m;
}

AffineMatrix SdpProblem::add_scalar(const std::string& name) {
  VariableInfo v{name, VariableKind::kScalar, 1, 1, num_scalars(), 1};
  variables.push_back(v);
  AffineMatrix m(1, 1);
  m.add_term(v.offset, Matrix::Ones(1, 1));
  return m;
}

const VariableInfo& SdpProblem::variable(const std::string& name) const {
  for (const auto& v : variables) {
    if (v.name == name) return v;
  }
  throw InvalidArgument("SdpProblem: unknown variable '" + name + "'");
}

void SdpProblem::add_constraint(const std::string& name,
                                const AffineMatrix& expr, bool margin) {
  if (expr.rows() != expr.cols() || expr.rows() == 0) {
    throw InvalidArgument("constraint '" + name + "' is not square");
  }
  if (!expr.exactly_symmetric()) {
    throw InvalidArgument("constraint '" + name + "' is not exactly symmetric");
  }
  constraints.push_back({name, expr, margin});
}

void SdpProblem::validate() const {
  const int n = num_scalars();
  if (constraints.empty()) throw InvalidArgument("SdpProblem: no constraints");
  for (const auto& c : constraints) {
    if (!c.expr.exactly_symmetric()) {
      throw InvalidArgument("constraint '" + c.name + "' is not symmetric");
    }
    for (const auto& [idx, coef] : c.expr.terms()) {
      if (idx < 0 || idx >= n) {
        throw InvalidArgument("constraint '" + c.name +
                              "' references an unknown variable");
      }
    }
  }
}

Matrix SdpProblem::value_of(const std::string& name, const Vector& x) const {
  const VariableInfo& v = variable(name);
  Matrix m(v.rows, v.cols);
  int idx = v.offset;
  if (v.kind == VariableKind::kSymmetric) {
    for (int i = 0; i < v.rows; ++i) {
      for (int j = i; j < v.cols; ++j) {
        m(i, j) = x(idx);
        m(j, i) = x(idx);
        ++idx;
      }
    }
  } else {
    for (int i = 0; i < v.rows; ++i) {
      for (int j = 0; j < v.cols; ++j) m(i, j) = x(idx++);
    }
  }
  return m;
}

std::string to_string(SdpStatus s) {
  switch (s) {
    case SdpStatus::kFeasible:
      return "feasible";
    case SdpStatus::kInfeasible:
      return "infeasible";
    case SdpStatus::kNumericalFailure:
      return "numerical_failure";
  }
  return "unknown";
}

SdpStatus sdp_status_from_string(const std::string& s) {
  if (s == "feasible") return SdpStatus::kFeasible;
  if (s == "infeasible") return SdpStatus::kInfeasible;
  if (s == "numerical_failure") return SdpStatus::kNumericalFailure;
  throw InvalidArgument("unknown SDP status '" + s + "'");
}

const Matrix& SdpSolution::value(const std::string& name) const {
  auto it = values.find(name);
  if (it == values.end()) {
    throw InvalidArgument("SdpSolution: no value for '" + name + "'");
  }
  return it->second;
}

std::vector<ConstraintEig> constraint_eigenvalues(const SdpProblem& p,
                                                  const Vector& x) {
  std::vector<ConstraintEig> out;
  for (const auto& c : p.constraints) {
    const Vector ev = linalg::sym_eigenvalues(c.expr.evaluate(x));
    out.push_back({c.name, ev.minCoeff(), ev.cwiseAbs().maxCoeff()});
  }
  return out;
}

namespace {

// Variables z = (x, t) with t at index n.
class BarrierSolver {
 public:
  BarrierSolver(const SdpProblem& p, const SolverOptions& o)
      : p_(p), o_(o), n_(p.num_scalars()) {
    degree_ = 2.0 * n_ + 1.0;
    for (const auto& c : p_.constraints) {
      degree_ += static_cast<double>(c.expr.rows());
      std::vector<int> idx;
      for (const auto& [i, coef] : c.expr.terms()) idx.push_back(i);
      support_.push_back(std::move(idx));
    }
  }

  SdpSolution run() {
    SdpSolution sol;
    sol.meta = p_.meta;
    Vector z = Vector::Zero(n_ + 1);
    double t0 = std::numeric_limits<double>::infinity();
    for (const auto& c : p_.constraints) {
      const double lo = linalg::min_sym_eigenvalue(c.expr.evaluate(z.head(n_)));
      if (c.margin) {
        t0 = std::min(t0, lo);
      } else if (!(lo > 0.0)) {
        throw InvalidArgument("normalization constraint '" + c.name +
                              "' must hold strictly at x = 0");
      }
    }
    if (!std::isfinite(t0)) t0 = 0.0;
    z(n_) = std::min(t0 - 1.0, 0.5 * o_.box_bound);

    double tau = 1.0;
    int steps = 0;
    bool ok = true;
    bool early = false;
    Vector z_good = z;
    double tau_good = 0.0;
    std::ostringstream diag;
    while (true) {
      ok = center(z, tau, steps, diag);
      if (!ok) break;
      z_good = z;
      tau_good = tau;
      if (degree_ / tau < o_.gap_tolerance) break;
      tau *= o_.barrier_growth;
    }
    if (!ok && tau_good > 0.0) {
      // Every centered iterate is strictly interior, so a positive margin
      // there already certifies feasibility; t* <= t + degree/tau bounds the
      // optimum for the infeasible verdict.
      const double t_good = z_good(n_);
      if (t_good > o_.feasibility_tolerance ||
          t_good + degree_ / tau_good <= o_.feasibility_tolerance) {
        z = z_good;
        ok = true;
        early = true;
      }
    }
    sol.newton_steps = steps;
    sol.x = z.head(n_);
    sol.margin = z(n_);
    for (const auto& v : p_.variables) sol.values[v.name] = p_.value_of(v.name, sol.x);
    sol.constraint_eigs = constraint_eigenvalues(p_, sol.x);
    if (!ok) {
      sol.status = SdpStatus::kNumericalFailure;
      sol.diagnostics = diag.str();
      return sol;
    }
    sol.status = sol.margin > o_.feasibility_tolerance ? SdpStatus::kFeasible
                                                        : SdpStatus::kInfeasible;
    // The returned point must satisfy every constraint on independent
    // recomputation; otherwise the margin is not trustworthy.
    if (sol.status == SdpStatus::kFeasible) {
      for (const auto& ce : sol.constraint_eigs) {
        if (ce.min_eigenvalue < -1e-8 * std::max(1.0, ce.max_abs_eigenvalue)) {
          sol.status = SdpStatus::kNumericalFailure;
          diag << "constraint '" << ce.name << "' has min eigenvalue "
               << ce.min_eigenvalue << " despite margin " << sol.margin;
        }
      }
    }
    if (early && sol.status != SdpStatus::kNumericalFailure) {
      diag.str("");
      diag << "stopped at tau=" << tau_good << " after " << steps
           << " Newton steps; margin=" << sol.margin;
      sol.diagnostics = diag.str();
      return sol;
    }
    std::ostringstream summary;
    summary << "margin=" << sol.margin << " newton_steps=" << steps;
    sol.diagnostics = diag.str().empty() ? summary.str() : diag.str();
    return sol;
  }

 private:
  Matrix block_value(std::size_t j, const Vector& z) const {
    const auto& c = p_.constraints[j];
    Matrix f = c.expr.evaluate(z.head(n_));
    if (c.margin) f.diagonal().array() -= z(n_);
    return f;
  }

  // Barrier objective; +inf outside the domain.
  double objective(const Vector& z, double tau) const {
    double f = -tau * z(n_);
    for (int i = 0; i <= n_; ++i) {
      const double up = o_.box_bound - z(i);
      const double dn = o_.box_bound + z(i);
      if (i == n_) {
        if (!(up > 0.0)) return std::numeric_limits<double>::infinity();
        f -= std::log(up);
        continue;
      }
      if (!(up > 0.0) || !(dn > 0.0)) {
        return std::numeric_limits<double>::infinity();
      }
      f -= std::log(up) + std::log(dn);
    }
    for (std::size_t j = 0; j < p_.constraints.size(); ++j) {
      Eigen::LLT<Matrix> llt(block_value(j, z));
      if (llt.info() != Eigen::Success) {
        return std::numeric_limits<double>::infinity();
      }
      const Matrix& l = llt.matrixLLT();
      for (Eigen::Index k = 0; k < l.rows(); ++k) {
        if (!(l(k, k) > 0.0)) return std::numeric_limits<double>::infinity();
        f -= 2.0 * std::log(l(k, k));
      }
    }
    return f;
  }

  bool gradient_hessian(const Vector& z, double tau, Vector& g,
                        Matrix& h) const {
    const int m = n_ + 1;
    g = Vector::Zero(m);
    h = Matrix::Zero(m, m);
    g(n_) = -tau;
    for (int i = 0; i <= n_; ++i) {
      const double up = 1.0 / (o_.box_bound - z(i));
      g(i) += up;
      h(i, i) += up * up;
      if (i < n_) {
        const double dn = 1.0 / (o_.box_bound + z(i));
        g(i) -= dn;
        h(i, i) += dn * dn;
      }
    }
    for (std::size_t j = 0; j < p_.constraints.size(); ++j) {
      const auto& c = p_.constraints[j];
      Eigen::LLT<Matrix> llt(block_value(j, z));
      if (llt.info() != Eigen::Success) return false;
      const Eigen::Index s = c.expr.rows();
      std::vector<int> idx = support_[j];
      if (c.margin) idx.push_back(n_);
      // Column q holds vec(L^-1 F_q L^-T); then H += V^T V and
      // g -= trace terms.
      Matrix V(s * s, static_cast<Eigen::Index>(idx.size()));
      for (std::size_t q = 0; q < idx.size(); ++q) {
        Matrix coef = idx[q] == n_ ? Matrix(-Matrix::Identity(s, s))
                                   : c.expr.terms().at(idx[q]);
        Matrix tmp = llt.matrixL().solve(coef);
        Matrix sc = llt.matrixL().solve(tmp.transpose());
        g(idx[q]) -= sc.trace();
        V.col(static_cast<Eigen::Index>(q)) =
            Eigen::Map<const Vector>(sc.data(), s * s);
      }
      const Matrix vtv = V.transpose() * V;
      for (std::size_t a = 0; a < idx.size(); ++a) {
        for (std::size_t b = 0; b < idx.size(); ++b) {
          h(idx[a], idx[b]) += vtv(static_cast<Eigen::Index>(a),
                                   static_cast<Eigen::Index>(b));
        }
      }
    }
    return g.allFinite() && h.allFinite();
  }

  bool center(Vector& z, double tau, int& steps, std::ostringstream& diag) {
    double f = objective(z, tau);
    if (!std::isfinite(f)) {
      diag << "iterate left the domain before centering (tau=" << tau << ")";
      return false;
    }
    for (int it = 0; it < 200; ++it) {
      if (steps >= o_.max_newton_steps) {
        diag << "Newton step limit reached (tau=" << tau << ")";
        return false;
      }
      Vector g;
      Matrix h;
      if (!gradient_hessian(z, tau, g, h)) {
        diag << "non-finite derivatives (tau=" << tau << ")";
        return false;
      }
      Eigen::LDLT<Matrix> ldlt(h);
      if (ldlt.info() != Eigen::Success) {
        diag << "Hessian factorization failed (tau=" << tau << ")";
        return false;
      }
      const Vector dz = -ldlt.solve(g);
      const double decrement = -g.dot(dz);
      ++steps;
      if (!std::isfinite(decrement)) {
        diag << "non-finite Newton decrement (tau=" << tau << ")";
        return false;
      }
      if (decrement < 2e-10) return true;
      double alpha = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 80; ++ls) {
        const Vector trial = z + alpha * dz;
        const double ft = objective(trial, tau);
        if (std::isfinite(ft) && ft <= f - 0.25 * alpha * decrement) {
          z = trial;
          f = ft;
          moved = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!moved) {
        // Stalled at roundoff level; accept the current centering.
        if (decrement < 1e-6) return true;
        diag << "line search failed (tau=" << tau
             << ", decrement=" << decrement << ")";
        return false;
      }
    }
    return true;
  }

  const SdpProblem& p_;
  const SolverOptions& o_;
  int n_;
  double degree_ = 0.0;
  std::vector<std::vector<int>> support_;
};

}  // namespace

SdpSolution solve_sdp(const SdpProblem& p, const SolverOptions& opts) {
  p.validate();
  if (!(opts.box_bound > 0.0) || !(opts.gap_tolerance > 0.0) ||
      !(opts.barrier_growth > 1.0)) {
    throw InvalidArgument("solve_sdp: invalid solver options");
  }
  BarrierSolver solver(p, opts);
  return solver.run();
}

void write_sdpa(std::ostream& os, const SdpProblem& p,
                const SolverOptions& opts) {
  p.validate();
  const int n = p.num_scalars();
  const int m = n + 1;  // last variable is the margin t
  os << "\"" << (p.label.empty() ? "ssmctrl problem" : p.label)
     << ": maximize margin t (variable " << m << ")\n";
  os << m << " = mDIM\n";
  os << p.constraints.size() + 1 << " = nBLOCK\n";
  for (const auto& c : p.constraints) os << c.expr.rows() << ' ';
  os << -(2 * n + 1) << " = bLOCKsTRUCT\n";
  for (int i = 0; i < n; ++i) os << "0 ";
  os << "-1\n";
  os << std::setprecision(17);

  auto emit = [&os](int mat, int blk, const Matrix& a, double scale) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      for (Eigen::Index j = i; j < a.cols(); ++j) {
        const double v = scale * a(i, j);
        if (v != 0.0) {
          os << mat << ' ' << blk << ' ' << i + 1 << ' ' << j + 1 << ' ' << v
             << '\n';
        }
      }
    }
  };
  int blk = 1;
  for (const auto& c : p.constraints) {
    // SDPA: sum_i x_i F_i - F_0 >= 0, so F_0 = -constant.
    emit(0, blk, c.expr.constant_term(), -1.0);
    for (const auto& [idx, coef] : c.expr.terms()) emit(idx + 1, blk, coef, 1.0);
    if (c.margin) {
      emit(m, blk, Matrix::Identity(c.expr.rows(), c.expr.rows()), -1.0);
    }
    ++blk;
  }
  // Box: box - x_i >= 0, box + x_i >= 0, box - t >= 0.
  for (int i = 0; i < n; ++i) {
    os << "0 " << blk << ' ' << 2 * i + 1 << ' ' << 2 * i + 1 << ' '
       << -opts.box_bound << '\n';
    os << "0 " << blk << ' ' << 2 * i + 2 << ' ' << 2 * i + 2 << ' '
       << -opts.box_bound << '\n';
    os << i + 1 << ' ' << blk << ' ' << 2 * i + 1 << ' ' << 2 * i + 1
       << " -1\n";
    os << i + 1 << ' ' << blk << ' ' << 2 * i + 2 << ' ' << 2 * i + 2
       << " 1\n";
  }
  os << "0 " << blk << ' ' << 2 * n + 1 << ' ' << 2 * n + 1 << ' '
     << -opts.box_bound << '\n';
  os << m << ' ' << blk << ' ' << 2 * n + 1 << ' ' << 2 * n + 1 << " -1\n";
}

}  // namespace ssmctrl::sdp
