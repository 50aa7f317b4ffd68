#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ssmctrl/errors.hpp"
#include "ssmctrl/train.hpp"

using namespace ssmctrl;
using namespace ssmctrl::train;
using plant::Trajectory;

namespace {

Trajectory synthetic(int length, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Trajectory t;
  for (int k = 0; k < length; ++k) {
    t.inputs.push_back(2.0 * g(rng));
    t.outputs.push_back(g(rng));
  }
  t.outputs_clean = t.outputs;
  return t;
}

// Data generated by a known model, so that training has something to fit.
std::vector<Trajectory> teacher_data(int n, int length, std::uint64_t seed) {
  const auto teacher = initial_model(4, 6, 0.01, seed + 1000);
  std::vector<Trajectory> out;
  for (int i = 0; i < n; ++i) {
    Trajectory t = synthetic(length, seed + i);
    t.outputs = predict(teacher, t.inputs);
    t.outputs_clean = t.outputs;
    out.push_back(t);
  }
  return out;
}

}  // namespace

TEST(Gradient, MatchesCentralDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto m = initial_model(2, 3, 0.01, seed);
    const std::vector<Trajectory> batch{synthetic(20, 100 + seed)};
    const ParamLayout layout(m);
    const Vector p = layout.pack(m);
    const Vector g = gradient(m, batch, 0);
    Vector fd(p.size());
    const double h = 1e-6;
    for (int i = 0; i < p.size(); ++i) {
      Vector pp = p, pm = p;
      pp(i) += h;
      pm(i) -= h;
      fd(i) = (batch_loss(layout.unpack(pp, m), batch, 0) -
               batch_loss(layout.unpack(pm, m), batch, 0)) /
              (2 * h);
    }
    EXPECT_LT((g - fd).norm() / fd.norm(), 1e-4) << "seed " << seed;
  }
}

TEST(Gradient, WashoutSamplesDoNotContribute) {
  const auto m = initial_model(4, 5, 0.01, 3);
  Trajectory a = synthetic(60, 7);
  Trajectory b = a;
  for (int k = 0; k < 10; ++k) b.outputs[k] += 100.0;
  const std::vector<Trajectory> ba{a}, bb{b};
  EXPECT_EQ(batch_loss(m, ba, 10), batch_loss(m, bb, 10));
  EXPECT_LT((gradient(m, ba, 10) - gradient(m, bb, 10)).norm(), 1e-12);
}

TEST(Gradient, LinearInLossScale) {
  const auto m = initial_model(4, 5, 0.01, 4);
  const std::vector<Trajectory> batch{synthetic(40, 9)};
  const Vector g1 = gradient(m, batch, 5, 1.0);
  const Vector g3 = gradient(m, batch, 5, 3.0);
  EXPECT_LT((g3 - 3.0 * g1).norm(), 1e-12 * g3.norm());
}

TEST(ParamLayout, PackUnpackRoundTrip) {
  const auto m = initial_model(8, 32, 0.01, 11);
  const ParamLayout layout(m);
  const Vector p = layout.pack(m);
  EXPECT_EQ(p.size(), layout.size());
  const Vector q = layout.pack(layout.unpack(p, m));
  EXPECT_LT((p - q).norm(), 1e-12 * p.norm());
}

TEST(ParamLayout, EveryParameterVectorIsAdmissible) {
  const auto m = initial_model(8, 32, 0.01, 12);
  const ParamLayout layout(m);
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    Vector p(layout.size());
    for (int i = 0; i < p.size(); ++i) p(i) = g(rng);
    const auto q = layout.unpack(p, m);
    EXPECT_LT(linalg::spectral_radius(q.lru.A), 1.0);
    const auto b = ssm::bilip_bounds(q.s_u);
    EXPECT_GT(b.mu, 0.0);
    EXPECT_NO_THROW(check_trainable(q));
  }
}

TEST(Nrmse, Properties) {
  const std::vector<double> ref{1.0, 2.0, 3.0, 4.0};
  EXPECT_EQ(nrmse(ref, ref), 0.0);
  const std::vector<double> mean(4, 2.5);
  EXPECT_NEAR(nrmse(mean, ref), 1.0, 1e-15);
  const std::vector<double> const_ref(4, 1.0);
  EXPECT_THROW(nrmse(ref, const_ref), InvalidArgument);
  const std::vector<double> short_pred(3, 0.0);
  EXPECT_THROW(nrmse(short_pred, ref), InvalidArgument);
}

TEST(Split, DisjointCoverAndSeeded) {
  const auto [tr, va] = split_dataset(25, 0.8, 5);
  EXPECT_EQ(tr.size(), 20u);
  EXPECT_EQ(va.size(), 5u);
  std::vector<int> all(tr);
  all.insert(all.end(), va.begin(), va.end());
  std::sort(all.begin(), all.end());
  for (int i = 0; i < 25; ++i) EXPECT_EQ(all[i], i);
  EXPECT_EQ(split_dataset(25, 0.8, 5), split_dataset(25, 0.8, 5));
}

TEST(Train, ZeroEpochsReturnsInitialModel) {
  const auto data = teacher_data(5, 80, 1);
  const auto m0 = initial_model(4, 6, 0.01, 2);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.washout = 10;
  const auto [m, rep] = train::train(m0, data, cfg);
  const ParamLayout layout(m0);
  EXPECT_EQ(layout.pack(m), layout.pack(m0));
  EXPECT_EQ(rep.best_epoch, 0);
  EXPECT_EQ(rep.final_val_nrmse, rep.initial_val_nrmse);
}

TEST(Train, DeterministicAndNeverWorseThanInitial) {
  const auto data = teacher_data(6, 120, 2);
  const auto m0 = initial_model(4, 6, 0.01, 3);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.washout = 10;
  cfg.learning_rate = 1e-2;
  cfg.seed = 9;
  const auto [m1, r1] = train::train(m0, data, cfg);
  const auto [m2, r2] = train::train(m0, data, cfg);
  const ParamLayout layout(m0);
  EXPECT_EQ(layout.pack(m1), layout.pack(m2));
  EXPECT_EQ(r1.loss_curve, r2.loss_curve);
  EXPECT_LE(r1.final_val_nrmse, r1.initial_val_nrmse);
  EXPECT_EQ(r1.loss_curve.size(), 30u);
  EXPECT_LT(linalg::spectral_radius(m1.lru.A), 1.0);
}

TEST(Train, RejectsInvalidConfig) {
  TrainConfig cfg;
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = TrainConfig{};
  cfg.train_fraction = 1.0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
}

TEST(FitReadout, RecoversLinearReadout) {
  const auto data = teacher_data(4, 150, 4);
  const auto m0 = initial_model(4, 6, 0.01, 4 + 1000);
  // Same recurrent and input parts as the teacher; perturb the readout.
  auto m = m0;
  m.lru.C *= 0.3;
  m.lru.D(0, 0) += 0.5;
  m.s_y.b1(0) += 1.0;
  const auto fit = fit_readout(m, data, 0);
  EXPECT_LT(validation_nrmse(fit, data, 0, true), 1e-8);
}

TEST(BalanceBlocks, PreservesInputOutputMap) {
  const auto m = initial_model(8, 32, 0.01, 5);
  const auto b = balance_blocks(m, 16);
  EXPECT_EQ(b.lru.A, m.lru.A);
  const Trajectory t = synthetic(200, 6);
  const auto y0 = predict(m, t.inputs);
  const auto y1 = predict(b, t.inputs);
  for (std::size_t k = 0; k < y0.size(); ++k) {
    EXPECT_NEAR(y0[k], y1[k], 1e-10 * (1.0 + std::abs(y0[k])));
  }
}

TEST(Gradient, VanishesAtPerfectFit) {
  const auto m = initial_model(4, 6, 0.01, 21);
  Trajectory t = synthetic(80, 22);
  t.outputs = predict(m, t.inputs);
  const std::vector<Trajectory> batch{t};
  EXPECT_LT(gradient(m, batch, 5).norm(), 1e-12);
}

TEST(Nrmse, ScaleInvariant) {
  const std::vector<double> ref{1.0, -2.0, 0.5, 3.0}, pred{0.8, -1.5, 0.7, 2.0};
  std::vector<double> ref2, pred2;
  for (double v : ref) ref2.push_back(2.0 * v);
  for (double v : pred) pred2.push_back(2.0 * v);
  EXPECT_NEAR(nrmse(pred2, ref2), nrmse(pred, ref), 1e-15);
}

TEST(Train, RecoversKnownModel) {
  // Teacher and student share dimensions; only the seeds differ.
  const auto data = teacher_data(10, 300, 31);
  auto m0 = initial_model(4, 6, 0.01, 77);
  m0 = fit_readout(m0, data, 20);
  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.washout = 20;
  cfg.learning_rate = 1e-2;
  cfg.seed = 5;
  const auto [m, rep] = train::train(m0, data, cfg);
  EXPECT_LT(rep.final_val_nrmse, 0.05) << "initial " << rep.initial_val_nrmse;
}
