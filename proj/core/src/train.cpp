#include "ssmctrl/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "ssmctrl/errors.hpp"
#include "ssmctrl/seeding.hpp"

namespace ssmctrl::train {
namespace {

double leaky(double a, double slope) { return a >= 0.0 ? a : slope * a; }
double leaky_slope(double a, double slope) { return a >= 0.0 ? 1.0 : slope; }

// Dense scalar-channel copy of the model used in the inner loops.
struct Flat {
  int n_x = 0, nb = 0, h = 0;
  std::vector<double> a11, a12, a21, a22;  // per block
  std::vector<double> B, C;
  double D = 0.0;
  std::vector<double> w1, w2, b1, anchor;  // anchor_i = phi(b1_i)
  double slope = 0.01;
  double wy = 1.0, by = 0.0;

  explicit Flat(const ssm::SsmModel& m) {
    n_x = m.n_x();
    nb = n_x / 2;
    h = m.s_u.hidden();
    for (int i = 0; i < nb; ++i) {
      a11.push_back(m.lru.A(2 * i, 2 * i));
      a12.push_back(m.lru.A(2 * i, 2 * i + 1));
      a21.push_back(m.lru.A(2 * i + 1, 2 * i));
      a22.push_back(m.lru.A(2 * i + 1, 2 * i + 1));
    }
    for (int i = 0; i < n_x; ++i) {
      B.push_back(m.lru.B(i, 0));
      C.push_back(m.lru.C(0, i));
    }
    D = m.lru.D(0, 0);
    slope = m.s_u.negative_slope;
    for (int i = 0; i < h; ++i) {
      w1.push_back(m.s_u.W1(i, 0));
      w2.push_back(m.s_u.W2(0, i));
      b1.push_back(m.s_u.b1(i));
      anchor.push_back(leaky(m.s_u.b1(i), slope));
    }
    wy = m.s_y.W1(0, 0);
    by = m.s_y.b1(0);
  }

  double lift(double u) const {
    double acc = 0.0;
    for (int i = 0; i < h; ++i) {
      acc += w2[i] * (leaky(w1[i] * u + b1[i], slope) - anchor[i]);
    }
    return acc;
  }
};

// Forward pass storing everything the backward pass needs.
void rollout(const Flat& f, const std::vector<double>& u,
             std::vector<double>& xs, std::vector<double>& ubar,
             std::vector<double>& ybar) {
  const std::size_t T = u.size();
  xs.assign((T + 1) * f.n_x, 0.0);
  ubar.resize(T);
  ybar.resize(T);
  for (std::size_t k = 0; k < T; ++k) {
    const double* x = &xs[k * f.n_x];
    double* xn = &xs[(k + 1) * f.n_x];
    const double ub = f.lift(u[k]);
    ubar[k] = ub;
    double yb = f.D * ub;
    for (int i = 0; i < f.n_x; ++i) yb += f.C[i] * x[i];
    ybar[k] = yb;
    for (int b = 0; b < f.nb; ++b) {
      const double x0 = x[2 * b], x1 = x[2 * b + 1];
      xn[2 * b] = f.a11[b] * x0 + f.a12[b] * x1 + f.B[2 * b] * ub;
      xn[2 * b + 1] = f.a21[b] * x0 + f.a22[b] * x1 + f.B[2 * b + 1] * ub;
    }
  }
}

double traj_loss(const Flat& f, const plant::Trajectory& traj, int washout) {
  const std::size_t T = traj.size();
  std::vector<double> x(f.n_x, 0.0), xn(f.n_x);
  double acc = 0.0;
  for (std::size_t k = 0; k < T; ++k) {
    const double ub = f.lift(traj.inputs[k]);
    double yb = f.D * ub;
    for (int i = 0; i < f.n_x; ++i) yb += f.C[i] * x[i];
    if (static_cast<int>(k) >= washout) {
      const double e = f.wy * yb + f.by - traj.outputs[k];
      acc += e * e;
    }
    for (int b = 0; b < f.nb; ++b) {
      const double x0 = x[2 * b], x1 = x[2 * b + 1];
      xn[2 * b] = f.a11[b] * x0 + f.a12[b] * x1 + f.B[2 * b] * ub;
      xn[2 * b + 1] = f.a21[b] * x0 + f.a22[b] * x1 + f.B[2 * b + 1] * ub;
    }
    x.swap(xn);
  }
  return acc / static_cast<double>(T - washout);
}

void check_washout(const plant::Trajectory& traj, int washout) {
  if (washout < 0 || static_cast<std::size_t>(washout) >= traj.size()) {
    throw InvalidArgument("washout must lie in [0, trajectory length)");
  }
}

// Accumulates scale * d(traj_loss)/d(params) into g.
void accumulate_gradient(const Flat& f, const ssm::SsmModel& m,
                         const ParamLayout& L, const plant::Trajectory& traj,
                         int washout, double scale, Vector& g) {
  const std::size_t T = traj.size();
  std::vector<double> xs, ubar, ybar;
  rollout(f, traj.inputs, xs, ubar, ybar);
  const double inv_n = scale * 2.0 / static_cast<double>(T - washout);

  // Gradients with respect to the dense quantities.
  std::vector<double> gA11(f.nb, 0.0), gA12(f.nb, 0.0), gA21(f.nb, 0.0),
      gA22(f.nb, 0.0);
  std::vector<double> gB(f.n_x, 0.0), gC(f.n_x, 0.0);
  std::vector<double> gW1(f.h, 0.0), gW2(f.h, 0.0), gb1(f.h, 0.0);
  double gD = 0.0, gwy = 0.0, gby = 0.0;

  std::vector<double> lam(f.n_x, 0.0), lam_prev(f.n_x);  // dL/dx_{k+1}
  for (std::size_t kk = T; kk-- > 0;) {
    const double* x = &xs[kk * f.n_x];
    double gy = 0.0;
    if (static_cast<int>(kk) >= washout) {
      gy = inv_n * (f.wy * ybar[kk] + f.by - traj.outputs[kk]);
    }
    gwy += gy * ybar[kk];
    gby += gy;
    const double gyb = f.wy * gy;
    gD += gyb * ubar[kk];
    double gub = f.D * gyb;
    for (int i = 0; i < f.n_x; ++i) {
      gC[i] += gyb * x[i];
      gB[i] += lam[i] * ubar[kk];
      gub += f.B[i] * lam[i];
    }
    for (int b = 0; b < f.nb; ++b) {
      const double l0 = lam[2 * b], l1 = lam[2 * b + 1];
      const double x0 = x[2 * b], x1 = x[2 * b + 1];
      gA11[b] += l0 * x0;
      gA12[b] += l0 * x1;
      gA21[b] += l1 * x0;
      gA22[b] += l1 * x1;
      lam_prev[2 * b] = f.a11[b] * l0 + f.a21[b] * l1 + f.C[2 * b] * gyb;
      lam_prev[2 * b + 1] = f.a12[b] * l0 + f.a22[b] * l1 + f.C[2 * b + 1] * gyb;
    }
    lam.swap(lam_prev);

    if (gub != 0.0) {
      const double u = traj.inputs[kk];
      for (int i = 0; i < f.h; ++i) {
        const double a = f.w1[i] * u + f.b1[i];
        const double d = leaky_slope(a, f.slope);
        gW2[i] += gub * (leaky(a, f.slope) - f.anchor[i]);
        gW1[i] += gub * f.w2[i] * d * u;
        gb1[i] += gub * f.w2[i] * (d - leaky_slope(f.b1[i], f.slope));
      }
    }
  }

  // Chain rule through the parameterization.
  for (int b = 0; b < f.nb; ++b) {
    const double nu = m.lru.nu_log(b);
    const double th = m.lru.theta(b);
    const double r = std::exp(-std::exp(nu));
    const double dr = -r * std::exp(nu);
    const double c = std::cos(th), s = std::sin(th);
    // A_blk = r [c, -s; s, c]
    g(L.nu_log() + b) +=
        dr * (gA11[b] * c - gA12[b] * s + gA21[b] * s + gA22[b] * c);
    // theta = min_angle + exp(tau)
    g(L.theta() + b) += (th - L.min_angle()) * r *
                        (-gA11[b] * s - gA12[b] * c + gA21[b] * c - gA22[b] * s);
  }
  for (int i = 0; i < f.n_x; ++i) {
    g(L.B() + i) += gB[i];
    g(L.C() + i) += gC[i];
  }
  g(L.D()) += gD;
  for (int i = 0; i < f.h; ++i) {
    g(L.log_w1() + i) += gW1[i] * f.w1[i];
    g(L.log_w2() + i) += gW2[i] * f.w2[i];
    g(L.b1() + i) += gb1[i];
  }
  g(L.w_y()) += gwy;
  g(L.b_y()) += gby;
}

}  // namespace

void TrainConfig::validate() const {
  auto req = [](bool ok, const char* what) {
    if (!ok) throw InvalidArgument(std::string("TrainConfig: ") + what);
  };
  req(epochs >= 0, "epochs must be >= 0");
  req(learning_rate > 0.0, "learning_rate must be > 0");
  req(batch_size >= 1, "batch_size must be >= 1");
  req(washout >= 0, "washout must be >= 0");
  req(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
      "betas must lie in [0, 1)");
  req(epsilon > 0.0, "epsilon must be > 0");
  req(train_fraction > 0.0 && train_fraction < 1.0,
      "train_fraction must lie in (0, 1)");
  req(min_angle >= 0.0 && min_angle < 0.5 * M_PI,
      "min_angle must lie in [0, pi/2)");
}

void check_trainable(const ssm::SsmModel& m, double min_angle) {
  m.validate();
  auto req = [](bool ok, const char* what) {
    if (!ok) throw InvalidArgument(std::string("not trainable: ") + what);
  };
  req(m.lru.parameterized(), "A must carry its stable parameterization");
  req(m.n_u() == 1 && m.n_y() == 1 && m.lru.n_in() == 1 && m.lru.n_out() == 1,
      "only scalar channels are supported");
  req(m.s_u.kind == ssm::ScaffoldKind::kMlpScalar && m.s_u.zero_anchored,
      "S_u must be a zero-anchored scalar MLP");
  req(m.s_y.kind == ssm::ScaffoldKind::kAffine, "S_y must be affine");
  req(min_angle >= 0.0 && min_angle < M_PI, "min_angle must lie in [0, pi)");
  for (int b = 0; b < m.lru.theta.size(); ++b) {
    req(m.lru.theta(b) > min_angle, "block angles must exceed min_angle");
  }
  for (int i = 0; i < m.s_u.hidden(); ++i) {
    req(m.s_u.W1(i, 0) * m.s_u.W2(0, i) > 0.0,
        "each hidden unit needs W1_i W2_i > 0");
  }
}

ParamLayout::ParamLayout(const ssm::SsmModel& m, double min_angle)
    : min_angle_(min_angle) {
  check_trainable(m, min_angle);
  n_x_ = m.n_x();
  nb_ = n_x_ / 2;
  hidden_ = m.s_u.hidden();
  size_ = 2 * nb_ + 2 * n_x_ + 1 + 3 * hidden_ + 2;
}

Vector ParamLayout::pack(const ssm::SsmModel& m) const {
  Vector p(size_);
  p.segment(nu_log(), nb_) = m.lru.nu_log;
  p.segment(theta(), nb_) =
      (m.lru.theta.array() - min_angle_).log().matrix();
  p.segment(B(), n_x_) = m.lru.B.col(0);
  p.segment(C(), n_x_) = m.lru.C.row(0).transpose();
  p(D()) = m.lru.D(0, 0);
  for (int i = 0; i < hidden_; ++i) {
    p(log_w1() + i) = std::log(std::abs(m.s_u.W1(i, 0)));
    p(log_w2() + i) = std::log(std::abs(m.s_u.W2(0, i)));
    p(b1() + i) = m.s_u.b1(i);
  }
  p(w_y()) = m.s_y.W1(0, 0);
  p(b_y()) = m.s_y.b1(0);
  return p;
}

ssm::SsmModel ParamLayout::unpack(const Vector& p,
                                  const ssm::SsmModel& like) const {
  if (p.size() != size_) throw InvalidArgument("unpack: wrong vector size");
  ssm::SsmModel m = like;
  m.lru.nu_log = p.segment(nu_log(), nb_);
  m.lru.theta = (p.segment(theta(), nb_).array().exp() + min_angle_).matrix();
  m.lru.B.col(0) = p.segment(B(), n_x_);
  m.lru.C.row(0) = p.segment(C(), n_x_).transpose();
  m.lru.D(0, 0) = p(D());
  m.lru.refresh_state_matrix();
  for (int i = 0; i < hidden_; ++i) {
    const double sign = like.s_u.W1(i, 0) > 0.0 ? 1.0 : -1.0;
    m.s_u.W1(i, 0) = sign * std::exp(p(log_w1() + i));
    m.s_u.W2(0, i) = sign * std::exp(p(log_w2() + i));
    m.s_u.b1(i) = p(b1() + i);
  }
  m.s_y.W1(0, 0) = p(w_y());
  m.s_y.b1(0) = p(b_y());
  return m;
}

ssm::SsmModel initial_model(int n_x, int hidden, double negative_slope,
                            std::uint64_t seed, double u_scale, double y_scale,
                            double dt_sample, double min_angle) {
  if (n_x < 2 || n_x % 2 != 0) {
    throw InvalidArgument("initial_model: n_x must be even and >= 2");
  }
  if (hidden < 1) throw InvalidArgument("initial_model: hidden must be >= 1");
  if (!(u_scale > 0.0) || !(y_scale > 0.0)) {
    throw InvalidArgument("initial_model: scales must be > 0");
  }
  std::mt19937_64 rng(derive_seed(seed, "init"));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  const int nb = n_x / 2;
  Vector nu_log(nb), theta(nb);
  // 1 - r spread log-uniformly over [2e-4, 0.5] so that slow plant modes
  // have a nearby initial pole; phases shrink with 1 - r.
  for (int i = 0; i < nb; ++i) {
    const double frac = nb > 1 ? static_cast<double>(i) / (nb - 1) : 0.5;
    const double gap = 0.5 * std::pow(4e-4, frac) * (0.8 + 0.4 * unif(rng));
    const double r = 1.0 - gap;
    nu_log(i) = std::log(-std::log(r));
    theta(i) = min_angle + std::min(M_PI / 4.0, 2.0 * gap) *
                               (0.5 + 0.5 * unif(rng));
  }
  Matrix B(n_x, 1), C(1, n_x), D(1, 1);
  for (int i = 0; i < nb; ++i) {
    const double r = std::exp(-std::exp(nu_log(i)));
    const double gain = std::sqrt(1.0 - r * r);
    B(2 * i, 0) = normal(rng) * gain;
    B(2 * i + 1, 0) = normal(rng) * gain;
  }
  for (int i = 0; i < n_x; ++i) C(0, i) = normal(rng) / std::sqrt(n_x);
  D(0, 0) = 0.0;

  Vector w1(hidden), b1(hidden), w2(hidden);
  for (int i = 0; i < hidden; ++i) {
    const double sign = (i % 2 == 0) ? 1.0 : -1.0;
    w1(i) = sign * (0.5 + unif(rng)) / u_scale;
    b1(i) = 2.0 * unif(rng) - 1.0;
    w2(i) = sign * (0.5 + unif(rng)) * u_scale / hidden;
  }

  ssm::SsmModel m;
  m.lru = ssm::LruParams::from_parameterization(nu_log, theta, B, C, D);
  m.s_u = ssm::Scaffolding::mlp_scalar(w1, b1, w2, 0.0, negative_slope, true);
  m.s_y = ssm::Scaffolding::affine(y_scale, 0.0);
  m.dt_sample = dt_sample;
  m.validate();
  return m;
}

ssm::SsmModel fit_readout(const ssm::SsmModel& m,
                          std::span<const plant::Trajectory> data,
                          int washout) {
  if (data.empty()) throw InvalidArgument("fit_readout: empty dataset");
  const int n = m.n_x();
  const double w_y = m.s_y.W1(0, 0);
  Matrix G = Matrix::Zero(n + 2, n + 2);
  Vector h = Vector::Zero(n + 2);
  Vector phi(n + 2);
  for (const auto& traj : data) {
    check_washout(traj, washout);
    Vector x = Vector::Zero(n);
    for (std::size_t k = 0; k < traj.size(); ++k) {
      const double s = m.s_u.eval(traj.inputs[k]);
      if (static_cast<int>(k) >= washout) {
        phi << x, s, 1.0;
        G.noalias() += phi * phi.transpose();
        h.noalias() += phi * traj.outputs[k];
      }
      x = m.lru.A * x + m.lru.B.col(0) * s;
    }
  }
  G.diagonal().array() += 1e-10 * G.trace() / (n + 2);
  const Vector theta = G.ldlt().solve(h);
  if (!theta.allFinite()) {
    throw NumericalBlowUp("fit_readout: least-squares readout is not finite");
  }
  ssm::SsmModel out = m;
  out.lru.C = theta.head(n).transpose() / w_y;
  out.lru.D(0, 0) = theta(n) / w_y;
  out.s_y.b1(0) = theta(n + 1);
  out.validate();
  return out;
}

double mse_loss(const ssm::SsmModel& m, const plant::Trajectory& traj,
                int washout) {
  check_washout(traj, washout);
  return traj_loss(Flat(m), traj, washout);
}

double batch_loss(const ssm::SsmModel& m,
                  std::span<const plant::Trajectory> batch, int washout) {
  if (batch.empty()) throw InvalidArgument("batch_loss: empty batch");
  const Flat f(m);
  double acc = 0.0;
  for (const auto& traj : batch) {
    check_washout(traj, washout);
    acc += traj_loss(f, traj, washout);
  }
  return acc / static_cast<double>(batch.size());
}

Vector gradient(const ssm::SsmModel& m,
                std::span<const plant::Trajectory> batch, int washout,
                double loss_scale, double min_angle) {
  if (batch.empty()) throw InvalidArgument("gradient: empty batch");
  const ParamLayout layout(m, min_angle);
  const Flat f(m);
  Vector g = Vector::Zero(layout.size());
  const double scale = loss_scale / static_cast<double>(batch.size());
  for (const auto& traj : batch) {
    check_washout(traj, washout);
    accumulate_gradient(f, m, layout, traj, washout, scale, g);
  }
  return g;
}

double nrmse(std::span<const double> y_pred, std::span<const double> y_ref) {
  if (y_pred.size() != y_ref.size() || y_ref.empty()) {
    throw InvalidArgument("nrmse: length mismatch or empty input");
  }
  const double n = static_cast<double>(y_ref.size());
  const double mean = std::accumulate(y_ref.begin(), y_ref.end(), 0.0) / n;
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < y_ref.size(); ++k) {
    num += (y_pred[k] - y_ref[k]) * (y_pred[k] - y_ref[k]);
    den += (y_ref[k] - mean) * (y_ref[k] - mean);
  }
  if (den <= 0.0) throw InvalidArgument("nrmse: constant reference signal");
  return std::sqrt(num / den);
}

std::vector<double> predict(const ssm::SsmModel& m,
                            const std::vector<double>& inputs) {
  const Flat f(m);
  std::vector<double> xs, ubar, ybar;
  rollout(f, inputs, xs, ubar, ybar);
  for (double& y : ybar) y = f.wy * y + f.by;
  return ybar;
}

double validation_nrmse(const ssm::SsmModel& m,
                        std::span<const plant::Trajectory> data, int washout,
                        bool use_clean) {
  if (data.empty()) throw InvalidArgument("validation_nrmse: no data");
  double acc = 0.0;
  for (const auto& traj : data) {
    check_washout(traj, washout);
    const std::vector<double> pred = predict(m, traj.inputs);
    const auto& ref = use_clean ? traj.outputs_clean : traj.outputs;
    acc += nrmse(std::span(pred).subspan(washout),
                 std::span(ref).subspan(washout));
  }
  return acc / static_cast<double>(data.size());
}

ssm::SsmModel balance_blocks(const ssm::SsmModel& m, int k1) {
  m.validate();
  if (k1 < 0) throw InvalidArgument("balance_blocks: k1 < 0");
  if (m.n_x() % 2 != 0) throw InvalidArgument("balance_blocks: odd n_x");
  const Matrix& A = m.lru.A;
  Matrix wc = Matrix::Zero(m.n_x(), m.n_x()), wo = wc;
  Matrix AkB = m.lru.B, CAk = m.lru.C;
  for (int k = 0; k <= k1; ++k) {
    wc += AkB * AkB.transpose();
    wo += CAk.transpose() * CAk;
    AkB = A * AkB;
    CAk = CAk * A;
  }
  ssm::SsmModel out = m;
  for (int b = 0; b < m.n_x() / 2; ++b) {
    const double tc = wc.block(2 * b, 2 * b, 2, 2).trace();
    const double to = wo.block(2 * b, 2 * b, 2, 2).trace();
    if (!(tc > 0.0 && to > 0.0)) continue;
    const double s = std::pow(to / tc, 0.25);
    out.lru.B.middleRows(2 * b, 2) *= s;
    out.lru.C.middleCols(2 * b, 2) /= s;
  }
  return out;
}

std::pair<std::vector<int>, std::vector<int>> split_dataset(
    int n, double train_fraction, std::uint64_t seed) {
  if (n < 2) throw InvalidArgument("split_dataset: need at least 2 items");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, "split"));
  // Fisher-Yates with an explicit draw so the order does not depend on the
  // standard library's shuffle implementation.
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(idx[i], idx[j]);
  }
  int n_train = static_cast<int>(std::lround(train_fraction * n));
  n_train = std::clamp(n_train, 1, n - 1);
  std::vector<int> tr(idx.begin(), idx.begin() + n_train);
  std::vector<int> va(idx.begin() + n_train, idx.end());
  std::sort(tr.begin(), tr.end());
  std::sort(va.begin(), va.end());
  return {tr, va};
}

std::pair<ssm::SsmModel, TrainReport> train(
    const ssm::SsmModel& m0, const std::vector<plant::Trajectory>& dataset,
    const TrainConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const ParamLayout layout(m0, cfg.min_angle);

  TrainReport report;
  std::tie(report.train_indices, report.val_indices) =
      split_dataset(static_cast<int>(dataset.size()), cfg.train_fraction,
                    cfg.seed);
  std::vector<plant::Trajectory> train_set, val_set;
  for (int i : report.train_indices) train_set.push_back(dataset[i]);
  for (int i : report.val_indices) val_set.push_back(dataset[i]);

  ssm::SsmModel best = m0;
  report.initial_val_nrmse =
      validation_nrmse(m0, val_set, cfg.washout, false);
  double best_val = report.initial_val_nrmse;

  Vector p = layout.pack(m0);
  Vector mom = Vector::Zero(layout.size());
  Vector vel = Vector::Zero(layout.size());
  std::mt19937_64 rng(derive_seed(cfg.seed, "batches"));
  std::vector<int> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  long step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
      std::swap(order[i], order[j]);
    }
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<plant::Trajectory> batch;
      for (std::size_t b = start; b < stop; ++b) {
        batch.push_back(train_set[order[b]]);
      }
      const ssm::SsmModel m = layout.unpack(p, m0);
      const double loss = batch_loss(m, batch, cfg.washout);
      if (!std::isfinite(loss)) {
        throw NumericalBlowUp("train: non-finite loss at epoch " +
                              std::to_string(epoch));
      }
      epoch_loss += loss * static_cast<double>(stop - start);
      if (!(linalg::spectral_radius(m.lru.A) < 1.0)) {
        throw NumericalBlowUp("train: state matrix lost Schur stability");
      }
      const Vector g = gradient(m, batch, cfg.washout, 1.0, cfg.min_angle);
      ++step;
      mom = cfg.beta1 * mom + (1.0 - cfg.beta1) * g;
      vel = cfg.beta2 * vel + (1.0 - cfg.beta2) * g.cwiseProduct(g);
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (int i = 0; i < layout.size(); ++i) {
        p(i) -= cfg.learning_rate * (mom(i) / c1) /
                (std::sqrt(vel(i) / c2) + cfg.epsilon);
      }
    }
    report.loss_curve.push_back(epoch_loss /
                                static_cast<double>(train_set.size()));

    const ssm::SsmModel m = layout.unpack(p, m0);
    const double val = validation_nrmse(m, val_set, cfg.washout, false);
    if (!std::isfinite(val)) {
      throw NumericalBlowUp("train: non-finite validation error at epoch " +
                            std::to_string(epoch));
    }
    report.val_nrmse_curve.push_back(val);
    if (val < best_val) {
      best_val = val;
      best = m;
      report.best_epoch = epoch;
    }
  }
  report.final_val_nrmse = best_val;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return {best, report};
}

}  // namespace ssmctrl::train
