#include "ssmctrl/closedloop.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "ssmctrl/errors.hpp"
#include "ssmctrl/seeding.hpp"

namespace ssmctrl::closedloop {
namespace {

constexpr double kDivergenceNorm = 1e6;

Vector scalar(double v) { return Vector::Constant(1, v); }

void check_scalar(const ssm::SsmModel& m, const synthesis::GainSet& g) {
  if (m.n_u() != 1 || m.n_y() != 1) {
    throw InvalidArgument("closed loop: scalar input and output required");
  }
  if (g.K.rows() != 1 || g.K.cols() != m.n_x() || g.L.rows() != m.n_x() ||
      g.L.cols() != 1) {
    throw InvalidArgument("closed loop: gain dimensions do not match model");
  }
}

void check_divergence(const Vector& v, int k, const char* who) {
  if (!v.allFinite() || v.norm() > kDivergenceNorm) {
    throw NumericalBlowUp(std::string(who) + ": state diverged at step " +
                          std::to_string(k));
  }
}

Vector plant_vector(const plant::PlantState& s) {
  Vector v(4);
  v << s.i_a, s.w_m, s.w_L, s.twist;
  return v;
}

}  // namespace

void ClosedLoopTrace::validate() const {
  const std::size_t n = t.size();
  auto req = [](bool ok, const char* what) {
    if (!ok) throw InvalidArgument(std::string("ClosedLoopTrace: ") + what);
  };
  req(x.size() == n && xhat.size() == n && u.size() == n && y.size() == n &&
          yhat.size() == n,
      "sequences must share one length");
  req(w.empty() || w.size() == n, "disturbance length mismatch");
  req(d.empty() || d.size() == n, "distance length mismatch");
}

int ExperimentConfig::substeps() const {
  const double ratio = dt_sample / dt_sim;
  const long n = std::lround(ratio);
  if (n < 1 || std::abs(ratio - static_cast<double>(n)) > 1e-9 * ratio) {
    throw InvalidArgument(
        "ExperimentConfig: dt_sample must be an integer multiple of dt_sim");
  }
  return static_cast<int>(n);
}

void ExperimentConfig::validate() const {
  auto req = [](bool ok, const char* what) {
    if (!ok) throw InvalidArgument(std::string("ExperimentConfig: ") + what);
  };
  req(n_runs >= 1, "n_runs must be >= 1");
  req(horizon > 0, "horizon must be > 0");
  req(ic_low <= ic_high, "ic_low must not exceed ic_high");
  req(!saturation || *saturation > 0.0, "saturation limit must be > 0");
  req(noise_var >= 0.0, "noise_var must be >= 0");
  req(dt_sim > 0.0 && dt_sample > 0.0, "time steps must be > 0");
  req(disturbance_bound >= 0.0, "disturbance_bound must be >= 0");
  req(settle_threshold > 0.0 && settle_time > 0.0,
      "settling threshold and time must be > 0");
  substeps();
}

Vector observer_step(const ssm::SsmModel& m, const Matrix& L,
                     const Vector& xhat, const Vector& u, const Vector& y) {
  if (L.rows() != m.n_x() || L.cols() != m.n_y() || xhat.size() != m.n_x() ||
      u.size() != m.n_u() || y.size() != m.n_y()) {
    throw InvalidArgument("observer_step: dimension mismatch");
  }
  const Vector yhat = m.output(xhat, u);
  return m.next_state(xhat, u) + L * (yhat - y);
}

ClosedLoopTrace run_output_feedback_ssm(const ssm::SsmModel& m,
                                        const synthesis::GainSet& gains,
                                        const Vector& x0, const Vector& xhat0,
                                        int horizon) {
  check_scalar(m, gains);
  if (horizon <= 0) throw InvalidArgument("run_output_feedback_ssm: horizon");
  if (x0.size() != m.n_x() || xhat0.size() != m.n_x()) {
    throw InvalidArgument("run_output_feedback_ssm: initial state dimension");
  }
  ClosedLoopTrace tr;
  Vector x = x0, xhat = xhat0;
  for (int k = 0; k <= horizon; ++k) {
    const Vector u = gains.K * xhat;
    const Vector y = m.output(x, u);
    tr.t.push_back(k * m.dt_sample);
    tr.x.push_back(x);
    tr.xhat.push_back(xhat);
    tr.u.push_back(u(0));
    tr.y.push_back(y(0));
    tr.yhat.push_back(m.output(xhat, u)(0));
    if (k == horizon) break;
    const Vector x_next = m.next_state(x, u);
    xhat = observer_step(m, gains.L, xhat, u, y);
    x = x_next;
    check_divergence(x, k + 1, "run_output_feedback_ssm");
    check_divergence(xhat, k + 1, "run_output_feedback_ssm");
  }
  return tr;
}

namespace {

// Plant loop shared by the public runner and the experiment. On divergence
// it throws when `stop_at` is null, otherwise it records the step in
// *stop_at and returns the trace so far.
ClosedLoopTrace plant_loop(const plant::PlantParams& p, const ssm::SsmModel& m,
                           const synthesis::GainSet& gains,
                           const plant::PlantState& x0, const Vector& xhat0,
                           const ExperimentConfig& cfg,
                           std::uint64_t noise_seed, int* stop_at) {
  p.validate();
  cfg.validate();
  check_scalar(m, gains);
  if (std::abs(m.dt_sample - cfg.dt_sample) > 1e-12 * cfg.dt_sample) {
    throw InvalidArgument(
        "run_output_feedback_plant: model sample time differs from config");
  }
  if (xhat0.size() != m.n_x()) {
    throw InvalidArgument("run_output_feedback_plant: observer dimension");
  }
  const int sub = cfg.substeps();
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> noise(0.0, std::sqrt(cfg.noise_var));

  ClosedLoopTrace tr;
  plant::PlantState s = x0;
  Vector xhat = xhat0;
  for (int k = 0; k <= cfg.horizon; ++k) {
    double u = (gains.K * xhat)(0);
    if (cfg.saturation) u = std::clamp(u, -*cfg.saturation, *cfg.saturation);
    const double y = s.w_L + (cfg.noise_var > 0.0 ? noise(rng) : 0.0);
    const Vector uv = scalar(u);
    tr.t.push_back(k * cfg.dt_sample);
    tr.x.push_back(plant_vector(s));
    tr.xhat.push_back(xhat);
    tr.u.push_back(u);
    tr.y.push_back(y);
    tr.yhat.push_back(m.output(xhat, uv)(0));
    if (k == cfg.horizon) break;
    try {
      for (int j = 0; j < sub; ++j) {
        s = plant::plant_step(s, u, 0.0, p, cfg.dt_sim);
      }
      xhat = observer_step(m, gains.L, xhat, uv, scalar(y));
      check_divergence(plant_vector(s), k + 1, "run_output_feedback_plant");
      check_divergence(xhat, k + 1, "run_output_feedback_plant");
    } catch (const NumericalBlowUp&) {
      if (!stop_at) throw;
      *stop_at = k + 1;
      return tr;
    }
  }
  return tr;
}

}  // namespace

ClosedLoopTrace run_output_feedback_plant(const plant::PlantParams& p,
                                          const ssm::SsmModel& m,
                                          const synthesis::GainSet& gains,
                                          const plant::PlantState& x0,
                                          const Vector& xhat0,
                                          const ExperimentConfig& cfg,
                                          std::uint64_t noise_seed) {
  return plant_loop(p, m, gains, x0, xhat0, cfg, noise_seed, nullptr);
}

ClosedLoopTrace run_state_feedback_ssm(const ssm::SsmModel& m, const Matrix& K,
                                       const Vector& x0,
                                       const std::vector<Vector>& w,
                                       int horizon) {
  if (horizon <= 0) throw InvalidArgument("run_state_feedback_ssm: horizon");
  if (K.rows() != m.n_u() || K.cols() != m.n_x() || x0.size() != m.n_x()) {
    throw InvalidArgument("run_state_feedback_ssm: dimension mismatch");
  }
  if (!w.empty() && static_cast<int>(w.size()) != horizon + 1) {
    throw InvalidArgument("run_state_feedback_ssm: need horizon + 1 disturbances");
  }
  ClosedLoopTrace tr;
  Vector x = x0;
  for (int k = 0; k <= horizon; ++k) {
    const Vector u = K * x;
    const double y = m.output(x, u)(0);
    tr.t.push_back(k * m.dt_sample);
    tr.x.push_back(x);
    tr.xhat.push_back(x);
    tr.u.push_back(u(0));
    tr.y.push_back(y);
    tr.yhat.push_back(y);
    if (!w.empty()) tr.w.push_back(w[k]);
    if (k == horizon) break;
    x = m.next_state(x, u);
    if (!w.empty()) x += w[k];
    check_divergence(x, k + 1, "run_state_feedback_ssm");
  }
  return tr;
}

analysis::Metric certified_metric(const synthesis::CertificateReport& report,
                                  const Matrix& W) {
  const synthesis::MetricVerdict* best = report.certifying();
  if (!best) throw Error("certified_metric: no metric certifies the gain");
  const bool inverse = best->metric.find("^-1") != std::string::npos;
  return analysis::Metric::from_matrix(
      inverse ? linalg::symmetrize(W.inverse()) : W);
}

double fit_log_rate(const std::vector<double>& v, double floor_ratio) {
  if (v.empty() || !(v[0] > 0.0)) return 0.0;
  const double floor = floor_ratio * v[0];
  std::vector<double> ks, ls;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (!(v[k] > floor) || !(v[k] > 0.0)) break;
    ks.push_back(static_cast<double>(k));
    ls.push_back(std::log(v[k]));
  }
  const std::size_t n = ks.size();
  if (n < 2) return 0.0;
  double km = 0.0, lm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    km += ks[i];
    lm += ls[i];
  }
  km /= static_cast<double>(n);
  lm /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (ks[i] - km) * (ls[i] - lm);
    sxx += (ks[i] - km) * (ks[i] - km);
  }
  return sxy / sxx;
}

Vector sample_ball(int n, double radius, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = normal(rng);
  const double nv = v.norm();
  if (nv == 0.0) return Vector::Zero(n);
  const double r = radius * std::pow(unif(rng), 1.0 / n);
  return v * (r / nv);
}

int SeparationReport::total_envelope_violations() const {
  int n = 0;
  for (const auto& r : runs) n += r.envelope_violations;
  return n;
}

int SeparationReport::total_lemma_violations() const {
  int n = 0;
  for (const auto& r : runs) n += r.lemma_violations;
  return n;
}

double SeparationReport::worst_observer_rate() const {
  double w = -std::numeric_limits<double>::infinity();
  for (const auto& r : runs) w = std::max(w, r.observer_rate);
  return w;
}

double SeparationReport::worst_terminal_ratio() const {
  double w = 0.0;
  for (const auto& r : runs) w = std::max(w, r.terminal_ratio);
  return w;
}

SeparationReport separation_experiment(const ssm::SsmModel& m,
                                       const synthesis::GainSet& gains,
                                       const analysis::Metric& controller,
                                       const analysis::Metric& observer,
                                       const ExperimentConfig& cfg) {
  cfg.validate();
  check_scalar(m, gains);
  SeparationReport rep;
  rep.rho_c_step = std::sqrt(1.0 - gains.rho_c);
  rep.rho_o_step = std::sqrt(1.0 - gains.rho_o);
  const int n = m.n_x();
  const Matrix& B = m.lru.B;
  const double gain_c = linalg::spectral_norm(controller.Theta * B) *
                        gains.nu_u *
                        linalg::spectral_norm(
                            gains.K * observer.Theta.inverse());

  for (int run = 0; run < cfg.n_runs; ++run) {
    SeparationRun r;
    r.x0 = sample_ball(n, 1.0, derive_seed(cfg.seed, "separation_x0", run));
    r.xhat0 =
        sample_ball(n, 1.0, derive_seed(cfg.seed, "separation_xhat0", run));
    r.trace = run_output_feedback_ssm(m, gains, r.x0, r.xhat0, cfg.horizon);
    auto& tr = r.trace;
    const std::size_t T = tr.size();
    tr.d.resize(T);
    tr.w.resize(T);
    r.observer_distance.resize(T);
    for (std::size_t k = 0; k < T; ++k) {
      tr.d[k] = analysis::riemannian_distance(tr.x[k], Vector::Zero(n),
                                              controller);
      r.observer_distance[k] =
          analysis::riemannian_distance(tr.xhat[k], tr.x[k], observer);
      const double uh = (gains.K * tr.xhat[k])(0);
      const double ux = (gains.K * tr.x[k])(0);
      tr.w[k] = B * (m.s_u.eval(uh) - m.s_u.eval(ux));
    }
    r.c = gain_c * r.observer_distance[0];

    // envelope_k = r_c^k d_0 + c S_k,  S_{k+1} = r_c S_k + r_o^k
    r.envelope.resize(T);
    double pc = 1.0, po = 1.0, sum = 0.0;
    r.worst_envelope_slack = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < T; ++k) {
      r.envelope[k] = pc * tr.d[0] + r.c * sum;
      const double slack = tr.d[k] - r.envelope[k];
      r.worst_envelope_slack = std::max(r.worst_envelope_slack, slack);
      if (slack > kEnvelopeSlack) ++r.envelope_violations;
      sum = rep.rho_c_step * sum + po;
      pc *= rep.rho_c_step;
      po *= rep.rho_o_step;
      if (k + 1 < T) {
        const double rhs = rep.rho_c_step * tr.d[k] +
                           (controller.Theta * tr.w[k]).norm();
        if (tr.d[k + 1] > rhs + kEnvelopeSlack) ++r.lemma_violations;
      }
    }
    r.observer_rate = fit_log_rate(r.observer_distance);
    r.state_rate = fit_log_rate(tr.d);
    const double n0 = tr.x.front().norm();
    r.terminal_ratio = n0 > 0.0 ? tr.x.back().norm() / n0 : 0.0;
    rep.runs.push_back(std::move(r));
  }
  return rep;
}

DisturbanceReport disturbance_experiment(const ssm::SsmModel& m,
                                         const synthesis::GainSet& gains,
                                         const analysis::Metric& controller,
                                         const ExperimentConfig& cfg) {
  cfg.validate();
  check_scalar(m, gains);
  DisturbanceReport rep;
  rep.rho_step = std::sqrt(1.0 - gains.rho_c);
  rep.c_theta = controller.c_theta;
  rep.worst_slack = -std::numeric_limits<double>::infinity();
  const int n = m.n_x();
  for (int run = 0; run < cfg.n_runs; ++run) {
    std::vector<Vector> w(cfg.horizon + 1);
    for (int k = 0; k <= cfg.horizon; ++k) {
      w[k] = sample_ball(n, cfg.disturbance_bound,
                         derive_seed(cfg.seed, "disturbance_w",
                                     static_cast<std::uint64_t>(run) *
                                             (cfg.horizon + 1) + k));
    }
    const Vector x0 =
        sample_ball(n, 1.0, derive_seed(cfg.seed, "disturbance_x0", run));
    const Vector z0 =
        sample_ball(n, 1.0, derive_seed(cfg.seed, "disturbance_z0", run));
    const auto pert = run_state_feedback_ssm(m, gains.K, x0, w, cfg.horizon);
    const auto nom = run_state_feedback_ssm(m, gains.K, z0, {}, cfg.horizon);
    analysis::PairedTrace pt{pert.x, nom.x};
    w.pop_back();
    for (const auto& bp :
         analysis::one_step_disturbance_bound(pt, controller, rep.rho_step, w)) {
      ++rep.checks;
      const double slack = bp.lhs - bp.rhs;
      rep.worst_slack = std::max(rep.worst_slack, slack);
      if (slack > kEnvelopeSlack) ++rep.violations;
    }
    ++rep.runs;
  }
  return rep;
}

int PlantReport::settled_count() const {
  return static_cast<int>(std::count_if(
      runs.begin(), runs.end(), [](const PlantRun& r) { return r.settled; }));
}

PlantReport plant_experiment(const plant::PlantParams& p,
                             const ssm::SsmModel& m,
                             const synthesis::GainSet& gains,
                             const ExperimentConfig& cfg) {
  cfg.validate();
  PlantReport rep;
  for (int run = 0; run < cfg.n_runs; ++run) {
    std::mt19937_64 rng(derive_seed(cfg.seed, "plant_ic", run));
    std::uniform_real_distribution<double> unif(cfg.ic_low, cfg.ic_high);
    PlantRun r;
    r.initial_speed = unif(rng);
    plant::PlantState s0;
    s0.w_m = s0.w_L = r.initial_speed;
    r.trace = plant_loop(p, m, gains, s0, Vector::Zero(m.n_x()), cfg,
                         derive_seed(cfg.seed, "plant_noise", run),
                         &r.diverged_at);
    // Settled at the first sample after which |w_L| stays below threshold.
    const auto& x = r.trace.x;
    std::size_t first = x.size();
    for (std::size_t k = x.size(); k-- > 0;) {
      if (std::abs(x[k](2)) < cfg.settle_threshold) {
        first = k;
      } else {
        break;
      }
    }
    r.terminal_speed = x.back()(2);
    if (r.diverged_at > 0) {
      r.settle_time = std::numeric_limits<double>::infinity();
    } else if (first < x.size()) {
      r.settle_time = r.trace.t[first];
      r.settled = r.settle_time <= cfg.settle_time + 1e-12;
    } else {
      r.settle_time = std::numeric_limits<double>::infinity();
    }
    rep.runs.push_back(std::move(r));
  }
  return rep;
}

}  // namespace ssmctrl::closedloop
