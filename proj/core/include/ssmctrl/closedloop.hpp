#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ssmctrl/analysis.hpp"
#include "ssmctrl/linalg.hpp"
#include "ssmctrl/plant.hpp"
#include "ssmctrl/ssm.hpp"
#include "ssmctrl/synthesis.hpp"

namespace ssmctrl::closedloop {

// Scalar-channel closed-loop record. Every sequence has horizon + 1 entries;
// w is empty unless a disturbance was injected.
struct ClosedLoopTrace {
  std::vector<double> t;
  std::vector<Vector> x;     // SSM state or plant state (i_a, w_m, w_L, twist)
  std::vector<Vector> xhat;
  std::vector<double> u;     // applied input, K xhat unless saturated
  std::vector<double> y;
  std::vector<double> yhat;
  std::vector<Vector> w;
  std::vector<double> d;     // metric distance to the origin, if computed

  std::size_t size() const { return t.size(); }
  void validate() const;
};

struct ExperimentConfig {
  int n_runs = 10;
  int horizon = 2000;              // controller steps
  std::uint64_t seed = 0;
  double ic_low = -4.0;            // rad/s, plant load-speed sampler
  double ic_high = 4.0;
  std::optional<double> saturation;  // V, symmetric, plant only
  double noise_var = 0.0;          // measurement noise on the plant
  double dt_sim = 5e-5;
  double dt_sample = 1e-3;
  double disturbance_bound = 0.1;  // ||w_k|| bound for the Lemma runs
  double settle_threshold = 0.2;   // rad/s
  double settle_time = 2.0;        // s

  int substeps() const;
  void validate() const;
};

// xhat+ = A xhat + B S_u(u) + L (yhat - y), yhat = S_y(C xhat + D S_u(u)).
Vector observer_step(const ssm::SsmModel& m, const Matrix& L,
                     const Vector& xhat, const Vector& u, const Vector& y);

// SSM plays the plant; u_k = K xhat_k. Throws NumericalBlowUp once a state
// norm exceeds 1e6.
ClosedLoopTrace run_output_feedback_ssm(const ssm::SsmModel& m,
                                        const synthesis::GainSet& gains,
                                        const Vector& x0, const Vector& xhat0,
                                        int horizon);

// Nonlinear plant under sampled output feedback with zero-order hold on u.
// y = w_L plus optional noise drawn from noise_seed.
ClosedLoopTrace run_output_feedback_plant(const plant::PlantParams& p,
                                          const ssm::SsmModel& m,
                                          const synthesis::GainSet& gains,
                                          const plant::PlantState& x0,
                                          const Vector& xhat0,
                                          const ExperimentConfig& cfg,
                                          std::uint64_t noise_seed = 0);

// State feedback u = K x on the SSM with x+ = A x + B S_u(u) + w_k.
ClosedLoopTrace run_state_feedback_ssm(const ssm::SsmModel& m, const Matrix& K,
                                       const Vector& x0,
                                       const std::vector<Vector>& w,
                                       int horizon);

// Metric that carries a certificate: W or W^-1 as named by the report.
analysis::Metric certified_metric(const synthesis::CertificateReport& report,
                                  const Matrix& W);

// Slope of the least-squares line through (k, log v_k) over the prefix where
// v_k > floor_ratio v_0. Returns 0 when fewer than two points qualify.
double fit_log_rate(const std::vector<double>& v, double floor_ratio = 1e-10);

struct SeparationRun {
  Vector x0, xhat0;
  ClosedLoopTrace trace;
  std::vector<double> envelope;  // per k
  std::vector<double> observer_distance;
  double c = 0.0;
  int envelope_violations = 0;
  int lemma_violations = 0;
  double worst_envelope_slack = 0.0;  // max d_k - envelope_k
  double observer_rate = 0.0;         // fitted log rate of the observer error
  double state_rate = 0.0;
  double terminal_ratio = 0.0;        // ||x_N|| / ||x_0||
};

struct SeparationReport {
  double rho_c_step = 0.0;  // sqrt(1 - rho_c)
  double rho_o_step = 0.0;
  std::string controller_metric, observer_metric;
  std::vector<SeparationRun> runs;
  int total_envelope_violations() const;
  int total_lemma_violations() const;
  double worst_observer_rate() const;
  double worst_terminal_ratio() const;
};

inline constexpr double kEnvelopeSlack = 1e-9;

// n_runs output-feedback runs from (x0, xhat0) drawn uniformly in the unit
// ball. The envelope is
//   d_k <= r_c^k d_0 + c sum_{i<k} r_c^{k-1-i} r_o^i,   r = sqrt(1 - rho)
// with c = ||Theta_c B|| nu_u ||K Theta_o^-1|| d^o_0 bounding the disturbance
// B (S_u(K xhat) - S_u(K x)) in the controller metric.
SeparationReport separation_experiment(const ssm::SsmModel& m,
                                       const synthesis::GainSet& gains,
                                       const analysis::Metric& controller,
                                       const analysis::Metric& observer,
                                       const ExperimentConfig& cfg);

struct DisturbanceReport {
  double rho_step = 0.0;
  double c_theta = 0.0;
  int runs = 0;
  int checks = 0;
  int violations = 0;
  double worst_slack = 0.0;  // max lhs - rhs
};

// Perturbed and undisturbed state-feedback runs from independent initial
// points in the unit ball; w_k is uniform in the ball of radius
// disturbance_bound. Checks d_{k+1} <= sqrt(1 - rho_c) d_k + c_theta ||w_k||.
DisturbanceReport disturbance_experiment(const ssm::SsmModel& m,
                                         const synthesis::GainSet& gains,
                                         const analysis::Metric& controller,
                                         const ExperimentConfig& cfg);

struct PlantRun {
  double initial_speed = 0.0;
  ClosedLoopTrace trace;
  bool settled = false;
  double settle_time = 0.0;  // first time after which |w_L| stays below
  double terminal_speed = 0.0;
  int diverged_at = 0;       // step at which the loop blew up, 0 if never
};

struct PlantReport {
  std::vector<PlantRun> runs;
  int settled_count() const;
};

// n_runs plant runs with w_m = w_L drawn uniformly from [ic_low, ic_high],
// i_a = twist = 0 and xhat0 = 0. A diverging run keeps its trace up to the
// blow-up and counts as not settled.
PlantReport plant_experiment(const plant::PlantParams& p,
                             const ssm::SsmModel& m,
                             const synthesis::GainSet& gains,
                             const ExperimentConfig& cfg);

// Point drawn uniformly from the ball of the given radius.
Vector sample_ball(int n, double radius, std::uint64_t seed);

}  // namespace ssmctrl::closedloop
