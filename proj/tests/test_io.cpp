#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "ssmctrl/errors.hpp"
#include "ssmctrl/io.hpp"
#include "ssmctrl/train.hpp"
#include "test_helpers.hpp"

using namespace ssmctrl;
using testing_helpers::random_matrix;
using nlohmann::json;

namespace {

synthesis::GainSet sample_gains() {
  std::mt19937_64 rng(1);
  synthesis::GainSet g;
  g.K = random_matrix(1, 4, rng);
  g.L = random_matrix(4, 1, rng);
  g.P = Matrix::Identity(4, 4) * 0.5;
  g.Q = Matrix::Identity(4, 4) * 0.25;
  g.X = random_matrix(1, 4, rng);
  g.Y = Matrix::Identity(4, 4);
  g.U = Matrix::Identity(4, 4);
  g.V = random_matrix(4, 1, rng);
  g.rho_c = 0.01;
  g.rho_o = 0.02;
  g.sigma = 0.3;
  g.eta = 0.4;
  g.mu_u = 0.1;
  g.nu_u = 0.9;
  g.mu_y = g.nu_y = 2.0;
  g.cond_Y = g.cond_U = 1.0;
  return g;
}

}  // namespace

TEST(ModelJson, RoundTripIsExact) {
  const auto m = train::initial_model(8, 32, 0.01, 3);
  const auto text = io::model_to_json(m);
  const auto back = io::model_from_json(text);
  EXPECT_EQ(back.lru.A, m.lru.A);
  EXPECT_EQ(back.lru.B, m.lru.B);
  EXPECT_EQ(back.lru.C, m.lru.C);
  EXPECT_EQ(back.lru.D, m.lru.D);
  EXPECT_EQ(back.s_u.W1, m.s_u.W1);
  EXPECT_EQ(back.s_u.b1, m.s_u.b1);
  EXPECT_EQ(back.s_u.W2, m.s_u.W2);
  EXPECT_EQ(back.s_y.W1, m.s_y.W1);
  EXPECT_EQ(io::model_to_json(back), text);
}

TEST(ModelJson, TamperedDocumentsRejected) {
  const auto m = train::initial_model(4, 8, 0.01, 4);
  const json good = json::parse(io::model_to_json(m));

  json j = good;
  j["format"] = "something-else";
  EXPECT_THROW(io::model_from_json(j.dump()), IntegrityError);

  j = good;
  j["lru"]["A"]["data"][0] = 0.123456;
  EXPECT_THROW(io::model_from_json(j.dump()), IntegrityError);

  j = good;
  j["bilip"]["u"]["nu"] = 100.0;
  EXPECT_THROW(io::model_from_json(j.dump()), IntegrityError);

  j = good;
  j["n_x"] = 6;
  EXPECT_THROW(io::model_from_json(j.dump()), IntegrityError);

  j = good;
  j.erase("s_u");
  EXPECT_THROW(io::model_from_json(j.dump()), IntegrityError);

  const std::string text = good.dump();
  EXPECT_THROW(io::model_from_json(text.substr(0, text.size() / 2)),
               IntegrityError);
}

TEST(GainsJson, RoundTripIsExact) {
  const auto g = sample_gains();
  const auto back = io::gains_from_json(io::gains_to_json(g));
  EXPECT_EQ(back.K, g.K);
  EXPECT_EQ(back.L, g.L);
  EXPECT_EQ(back.P, g.P);
  EXPECT_EQ(back.Q, g.Q);
  EXPECT_EQ(back.rho_c, g.rho_c);
  EXPECT_EQ(back.nu_u, g.nu_u);
}

TEST(GainsJson, InvalidValuesRejected) {
  json j = json::parse(io::gains_to_json(sample_gains()));
  j["rho_c"] = 1.5;
  EXPECT_THROW(io::gains_from_json(j.dump()), IntegrityError);
  j = json::parse(io::gains_to_json(sample_gains()));
  j["P"]["data"][0] = -1.0;
  EXPECT_THROW(io::gains_from_json(j.dump()), IntegrityError);
}

TEST(TrajectoryCsv, RoundTripIsExact) {
  plant::Trajectory t;
  t.dt_sample = 1e-3;
  for (int k = 0; k < 50; ++k) {
    t.inputs.push_back(k % 2 ? 5.0 : -5.0);
    t.outputs.push_back(0.1 * k + 1.0 / 3.0);
    t.outputs_clean.push_back(0.1 * k);
  }
  const auto text = io::trajectory_csv(t);
  const auto back = io::trajectory_from_csv(text, 1e-3);
  EXPECT_EQ(back.inputs, t.inputs);
  EXPECT_EQ(back.outputs, t.outputs);
  EXPECT_EQ(back.outputs_clean, t.outputs_clean);
  EXPECT_EQ(io::trajectory_csv(back), text);
}

TEST(TrajectoryCsv, MalformedRejected) {
  EXPECT_THROW(io::trajectory_from_csv("a,b\n1,2\n", 1e-3), IntegrityError);
  EXPECT_THROW(io::trajectory_from_csv("t,u,y,y_clean\n0,1,2\n", 1e-3),
               IntegrityError);
  EXPECT_THROW(io::trajectory_from_csv("t,u,y,y_clean\n0,1,x,3\n", 1e-3),
               IntegrityError);
}

TEST(Format, ShortestExactDoubles) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 1e300, 0.0}) {
    EXPECT_EQ(std::stod(io::format_double(v)), v);
  }
}
