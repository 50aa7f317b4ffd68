#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ssmctrl/closedloop.hpp"
#include "ssmctrl/errors.hpp"
#include "test_helpers.hpp"

using namespace ssmctrl;
using namespace ssmctrl::closedloop;
using testing_helpers::random_matrix;
using testing_helpers::random_model;

namespace {

struct Fixture {
  ssm::SsmModel model;
  synthesis::SynthesisResult synth;
};

// Small nonlinear SSM with certified gains, shared across tests.
const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture f;
    f.model = random_model(4, 16, 17);
    const auto bu = ssm::bilip_bounds(f.model.s_u);
    const auto by = ssm::bilip_bounds(f.model.s_y);
    synthesis::SynthesisConfig cfg;
    cfg.n_random = 200;
    f.synth = synthesis::synthesize(f.model.lru.A, f.model.lru.B,
                                    f.model.lru.C, bu.mu, bu.nu, by.mu, by.nu,
                                    cfg);
    return f;
  }();
  return f;
}

synthesis::GainSet manual_gains(int n_x, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  synthesis::GainSet g;
  g.K = random_matrix(1, n_x, rng, scale);
  g.L = random_matrix(n_x, 1, rng, scale);
  return g;
}

}  // namespace

TEST(Observer, CorrectWhenInitializedAtState) {
  const auto m = random_model(6, 16, 3);
  std::mt19937_64 lrng(3);
  const Matrix L = random_matrix(6, 1, lrng);
  std::mt19937_64 rng(4);
  Vector x = random_matrix(6, 1, rng);
  for (int k = 0; k < 100; ++k) {
    const Vector u = random_matrix(1, 1, rng, 3.0);
    const Vector y = m.output(x, u);
    const Vector xhat = observer_step(m, L, x, u, y);
    x = m.next_state(x, u);
    EXPECT_EQ(xhat, x);
  }
}

TEST(Observer, ZeroGainCopiesModel) {
  const auto m = random_model(4, 16, 5);
  const Vector xhat = Vector::LinSpaced(4, -1.0, 1.0);
  const Vector u = Vector::Constant(1, 0.7);
  EXPECT_EQ(observer_step(m, Matrix::Zero(4, 1), xhat, u, Vector::Constant(1, 9.0)),
            m.next_state(xhat, u));
}

TEST(Observer, LinearLuenbergerOracle) {
  auto m = random_model(4, 16, 6);
  m.s_u = ssm::Scaffolding::identity(1);
  m.s_y = ssm::Scaffolding::identity(1);
  std::mt19937_64 rng(6);
  const Matrix L = random_matrix(4, 1, rng);
  const Vector xhat = random_matrix(4, 1, rng);
  const Vector u = random_matrix(1, 1, rng), y = random_matrix(1, 1, rng);
  const Matrix& A = m.lru.A;
  const Matrix& B = m.lru.B;
  const Matrix& C = m.lru.C;
  const Matrix& D = m.lru.D;
  const Vector oracle = A * xhat + B * u + L * (C * xhat + D * u - y);
  EXPECT_LT((observer_step(m, L, xhat, u, y) - oracle).norm(), 1e-14);
}

TEST(OutputFeedback, OriginIsEquilibrium) {
  const auto& f = fixture();
  auto m = f.model;
  m.s_y = ssm::Scaffolding::affine(1.7, 0.0);
  const auto tr = run_output_feedback_ssm(m, f.synth.gains, Vector::Zero(4),
                                          Vector::Zero(4), 100);
  for (std::size_t k = 0; k < tr.size(); ++k) {
    EXPECT_EQ(tr.x[k].norm(), 0.0);
    EXPECT_EQ(tr.xhat[k].norm(), 0.0);
    EXPECT_EQ(tr.u[k], 0.0);
  }
}

TEST(OutputFeedback, MatchedObserverEqualsStateFeedback) {
  const auto& f = fixture();
  const Vector x0 = sample_ball(4, 1.0, 9);
  const auto of = run_output_feedback_ssm(f.model, f.synth.gains, x0, x0, 300);
  const auto sf = run_state_feedback_ssm(f.model, f.synth.gains.K, x0, {}, 300);
  for (std::size_t k = 0; k < of.size(); ++k) {
    EXPECT_EQ(of.x[k], sf.x[k]);
    EXPECT_EQ(of.xhat[k], of.x[k]);
  }
}

TEST(OutputFeedback, CertifiedLoopConverges) {
  const auto& f = fixture();
  ExperimentConfig cfg;
  cfg.n_runs = 5;
  cfg.horizon = 3000;
  cfg.seed = 2;
  const auto& g = f.synth.gains;
  const auto ctrl = certified_metric(f.synth.controller_certificate, g.P);
  const auto obs = certified_metric(f.synth.observer_certificate, g.Q);
  const auto rep = separation_experiment(f.model, g, ctrl, obs, cfg);
  ASSERT_EQ(rep.runs.size(), 5u);
  EXPECT_EQ(rep.total_envelope_violations(), 0);
  EXPECT_LT(rep.worst_terminal_ratio(), 1e-3);
  EXPECT_LE(rep.worst_observer_rate(), 0.5 * std::log(1.0 - g.rho_o) + 0.05);
}

TEST(StateFeedback, ContractsInCertifiedMetric) {
  const auto& f = fixture();
  const auto& g = f.synth.gains;
  const auto ctrl = certified_metric(f.synth.controller_certificate, g.P);
  const double r = std::sqrt(1.0 - g.rho_c);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto tr = run_state_feedback_ssm(f.model, g.K, sample_ball(4, 1.0, s),
                                           {}, 500);
    const auto nom = run_state_feedback_ssm(f.model, g.K, Vector::Zero(4), {},
                                            500);
    for (std::size_t k = 0; k + 1 < tr.size(); ++k) {
      const double d0 = analysis::riemannian_distance(tr.x[k], nom.x[k], ctrl);
      const double d1 =
          analysis::riemannian_distance(tr.x[k + 1], nom.x[k + 1], ctrl);
      EXPECT_LE(d1, r * d0 + 1e-9);
    }
  }
}

TEST(Disturbance, BoundHolds) {
  const auto& f = fixture();
  const auto& g = f.synth.gains;
  ExperimentConfig cfg;
  cfg.n_runs = 10;
  cfg.horizon = 500;
  cfg.seed = 3;
  const auto ctrl = certified_metric(f.synth.controller_certificate, g.P);
  const auto rep = disturbance_experiment(f.model, g, ctrl, cfg);
  EXPECT_EQ(rep.violations, 0);
  EXPECT_EQ(rep.checks, 10 * 500);
  cfg.disturbance_bound = 0.0;
  EXPECT_EQ(disturbance_experiment(f.model, g, ctrl, cfg).violations, 0);
}

TEST(Disturbance, SteadyDisturbanceLimit) {
  const auto& f = fixture();
  const auto& g = f.synth.gains;
  const auto ctrl = certified_metric(f.synth.controller_certificate, g.P);
  const double r = std::sqrt(1.0 - g.rho_c);
  const double wbar = 0.05;
  const int horizon = 4000;
  const std::vector<Vector> w(horizon + 1, Vector::Constant(4, wbar / 2.0));
  const auto pert = run_state_feedback_ssm(f.model, g.K, Vector::Zero(4), w,
                                           horizon);
  const auto nom = run_state_feedback_ssm(f.model, g.K, Vector::Zero(4), {},
                                          horizon);
  const double limit = ctrl.c_theta * wbar / (1.0 - r);
  for (int k = horizon - 100; k <= horizon; ++k) {
    EXPECT_LE(analysis::riemannian_distance(pert.x[k], nom.x[k], ctrl),
              limit + 1e-9);
  }
}

TEST(FitLogRate, GeometricSequence) {
  std::vector<double> v;
  for (int k = 0; k < 50; ++k) v.push_back(3.0 * std::pow(0.9, k));
  EXPECT_NEAR(fit_log_rate(v), std::log(0.9), 1e-12);
  EXPECT_EQ(fit_log_rate({1.0}), 0.0);
}

TEST(SampleBall, InsideRadius) {
  for (std::uint64_t s = 0; s < 200; ++s) {
    EXPECT_LE(sample_ball(5, 2.0, s).norm(), 2.0);
  }
  EXPECT_EQ(sample_ball(5, 2.0, 7), sample_ball(5, 2.0, 7));
}

TEST(Plant, RestStaysAtRest) {
  auto m = random_model(4, 16, 8);
  m.s_y = ssm::Scaffolding::affine(2.0, 0.0);
  ExperimentConfig cfg;
  cfg.horizon = 300;
  const auto tr = run_output_feedback_plant(plant::PlantParams{}, m,
                                            manual_gains(4, 1, 0.5),
                                            plant::PlantState{},
                                            Vector::Zero(4), cfg);
  for (std::size_t k = 0; k < tr.size(); ++k) {
    EXPECT_EQ(tr.u[k], 0.0);
    EXPECT_EQ(tr.x[k].norm(), 0.0);
  }
}

TEST(Plant, OddSymmetryForOddController) {
  auto m = random_model(4, 16, 9);
  m.s_u = ssm::Scaffolding::affine(0.8, 0.0);
  m.s_y = ssm::Scaffolding::affine(2.0, 0.0);
  ExperimentConfig cfg;
  cfg.horizon = 400;
  const auto g = manual_gains(4, 2, 0.3);
  plant::PlantState pos, neg;
  pos.w_m = pos.w_L = 4.0;
  neg.w_m = neg.w_L = -4.0;
  const auto a = run_output_feedback_plant(plant::PlantParams{}, m, g, pos,
                                           Vector::Zero(4), cfg);
  const auto b = run_output_feedback_plant(plant::PlantParams{}, m, g, neg,
                                           Vector::Zero(4), cfg);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_NEAR(a.y[k], -b.y[k], 1e-9 * (1.0 + std::abs(a.y[k])));
    EXPECT_NEAR(a.u[k], -b.u[k], 1e-9 * (1.0 + std::abs(a.u[k])));
  }
}

TEST(Plant, DeterministicWithoutNoise) {
  const auto m = random_model(4, 16, 10);
  ExperimentConfig cfg;
  cfg.horizon = 200;
  plant::PlantState s;
  s.w_m = s.w_L = 2.0;
  const auto g = manual_gains(4, 3, 0.01);
  const auto a = run_output_feedback_plant(plant::PlantParams{}, m, g, s,
                                           Vector::Zero(4), cfg, 1);
  const auto b = run_output_feedback_plant(plant::PlantParams{}, m, g, s,
                                           Vector::Zero(4), cfg, 99);
  EXPECT_EQ(a.y, b.y);
  EXPECT_EQ(a.u, b.u);
}

TEST(Plant, SampleTimeMismatchRejected) {
  auto m = random_model(4, 16, 11);
  m.dt_sample = 2e-3;
  EXPECT_THROW(run_output_feedback_plant(plant::PlantParams{}, m,
                                         manual_gains(4, 4, 0.1),
                                         plant::PlantState{}, Vector::Zero(4),
                                         ExperimentConfig{}),
               InvalidArgument);
}
