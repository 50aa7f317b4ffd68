#include <benchmark/benchmark.h>

#include <random>

#include "ssmctrl/analysis.hpp"
#include "ssmctrl/plant.hpp"
#include "ssmctrl/ssm.hpp"
#include "ssmctrl/synthesis.hpp"
#include "ssmctrl/train.hpp"

using namespace ssmctrl;

namespace {

std::vector<double> prbs_inputs(int n) {
  plant::ExcitationConfig cfg;
  cfg.n_samples = n;
  cfg.seed = 3;
  return plant::generate_prbs(cfg);
}

plant::Trajectory sample_trajectory(int n) {
  const plant::PlantParams p;
  return plant::simulate_open_loop(p, prbs_inputs(n), 5e-5, 1e-3);
}

}  // namespace

static void BM_PlantStep(benchmark::State& state) {
  const plant::PlantParams p;
  plant::PlantState s;
  s.w_m = s.w_L = 1.0;
  for (auto _ : state) {
    s = plant::plant_step(s, 5.0, 0.0, p, 5e-5);
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_PlantStep);

static void BM_OpenLoopTrajectory(benchmark::State& state) {
  const plant::PlantParams p;
  const auto u = prbs_inputs(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(plant::simulate_open_loop(p, u, 5e-5, 1e-3));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_OpenLoopTrajectory)->Arg(2000)->Unit(benchmark::kMillisecond);

static void BM_SsmForward(benchmark::State& state) {
  const auto m = train::initial_model(8, 32, 0.01, 1);
  const auto u = prbs_inputs(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(ssm::ssm_forward(m, Vector::Zero(8), u));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SsmForward)->Arg(2000)->Unit(benchmark::kMicrosecond);

static void BM_Gradient(benchmark::State& state) {
  const auto m = train::initial_model(8, 32, 0.01, 1);
  std::vector<plant::Trajectory> batch(4, sample_trajectory(2000));
  for (auto _ : state) {
    benchmark::DoNotOptimize(train::gradient(m, batch, 50));
  }
}
BENCHMARK(BM_Gradient)->Unit(benchmark::kMillisecond);

static void BM_BiLipBounds(benchmark::State& state) {
  const auto m = train::initial_model(8, 32, 0.01, 1);
  for (auto _ : state) benchmark::DoNotOptimize(ssm::bilip_bounds(m.s_u));
}
BENCHMARK(BM_BiLipBounds);

static void BM_ControllerLmiSolve(benchmark::State& state) {
  const auto m = train::initial_model(static_cast<int>(state.range(0)), 32,
                                      0.01, 1);
  const auto b = ssm::bilip_bounds(m.s_u);
  const auto p = synthesis::assemble_controller_lmi(
      m.lru.A, m.lru.B, b.mu, b.nu, 0.005, synthesis::default_epsilon(m.lru.A));
  for (auto _ : state) benchmark::DoNotOptimize(sdp::solve_sdp(p));
}
BENCHMARK(BM_ControllerLmiSolve)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

static void BM_CertificateSweep(benchmark::State& state) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 0.2);
  Matrix A = Matrix::Zero(8, 8), B(8, 1), K(1, 8);
  for (int i = 0; i < 8; ++i) A(i, i) = 0.9;
  for (int i = 0; i < 8; ++i) {
    B(i, 0) = g(rng);
    K(0, i) = g(rng);
  }
  const Matrix P = Matrix::Identity(8, 8);
  for (auto _ : state) {
    benchmark::DoNotOptimize(synthesis::verify_controller_certificate(
        A, B, K, P, 0.4, 0.7, 0.005, 1000, 1));
  }
}
BENCHMARK(BM_CertificateSweep)->Unit(benchmark::kMillisecond);

static void BM_Gramian(benchmark::State& state) {
  const auto m = train::initial_model(8, 32, 0.01, 1);
  const auto jac = analysis::random_admissible_jacobians(1, 16, 0.4, 0.7, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(analysis::controllability_gramian(
        m.lru.A, m.lru.B, jac, 16, 0.4, 0.7));
  }
}
BENCHMARK(BM_Gramian);
BENCHMARK_MAIN();
