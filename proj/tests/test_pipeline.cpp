#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "ssmctrl/errors.hpp"
#include "ssmctrl/io.hpp"
#include "ssmctrl/pipeline.hpp"

using namespace ssmctrl;
using namespace ssmctrl::pipeline;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kDefaultConfig = SSMCTRL_SOURCE_DIR "/configs/default.json";

json default_json() { return json::parse(io::read_text(kDefaultConfig)); }

// Small problem that runs every stage in seconds.
json smoke_json(const fs::path& out) {
  json j = default_json();
  j["output_dir"] = out.string();
  j["excitation"]["n_samples"] = 600;
  j["excitation"]["n_trajectories"] = 6;
  j["training"]["n_x"] = 4;
  j["training"]["hidden"] = 8;
  j["training"]["epochs"] = 40;
  j["training"]["learning_rate"] = 1e-2;
  j["analysis"]["k1"] = 8;
  j["analysis"]["jacobian_draws"] = 10;
  j["synthesis"]["n_random"] = 50;
  j["experiment"]["n_runs"] = 2;
  j["experiment"]["disturbance_runs"] = 2;
  j["experiment"]["horizon"] = 300;
  return j;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ssmctrl_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, EmptyDocumentListsRequiredBlocks) {
  const std::string msg = error_of([] { parse_config("{}"); });
  for (const auto& b : required_blocks()) {
    EXPECT_NE(msg.find(b), std::string::npos) << msg;
  }
  EXPECT_THROW(parse_config(""), ConfigError);
}

TEST(Config, DefaultHasPlantTableValues) {
  const auto cfg = validate_config(kDefaultConfig);
  EXPECT_EQ(cfg.plant.R_a, 3.3);
  EXPECT_EQ(cfg.plant.L_a, 2.75e-3);
  EXPECT_EQ(cfg.plant.K_m, 3.24e-2);
  EXPECT_EQ(cfg.plant.J_m, 1.16e-4);
  EXPECT_EQ(cfg.plant.J_L, 4e-4);
  EXPECT_EQ(cfg.plant.k_s, 1.35);
  EXPECT_EQ(cfg.plant.B_m, 1e-4);
  EXPECT_EQ(cfg.plant.B_L, 1e-4);
  EXPECT_EQ(cfg.plant.v_dz, 0.4);
  EXPECT_EQ(cfg.model.n_x, 8);
  EXPECT_EQ(cfg.model.hidden, 32);
  EXPECT_EQ(cfg.dataset.n_trajectories, 25);
  EXPECT_EQ(cfg.dataset.noise_var, 0.02);
}

TEST(Config, InvalidValueRejected) {
  json j = default_json();
  j["plant"]["v_dz"] = -1.0;
  const std::string msg = error_of([&] { parse_config(j.dump()); });
  EXPECT_NE(msg.find("plant"), std::string::npos) << msg;
  EXPECT_THROW(parse_config(j.dump()), ConfigError);
}

TEST(Config, UnknownKeyRejected) {
  json j = default_json();
  j["training"]["learnig_rate"] = 1e-3;
  const std::string msg = error_of([&] { parse_config(j.dump()); });
  EXPECT_NE(msg.find("training.learnig_rate"), std::string::npos) << msg;
}

TEST(Config, WrongTypeRejected) {
  json j = default_json();
  j["training"]["epochs"] = "many";
  EXPECT_THROW(parse_config(j.dump()), ConfigError);
}

TEST(Config, ParseErrorNamesLineAndColumn) {
  const std::string msg =
      error_of([] { parse_config("{\n  \"plant\": {,\n}", "x.json"); });
  EXPECT_NE(msg.find("x.json:2:"), std::string::npos) << msg;
}

TEST(Config, CanonicalJsonRoundTrip) {
  const auto cfg = validate_config(kDefaultConfig);
  const auto text = config_to_json(cfg);
  EXPECT_EQ(config_to_json(parse_config(text)), text);
}

TEST(Stages, NamesRoundTrip) {
  for (Stage s : all_stages()) EXPECT_EQ(stage_from_string(to_string(s)), s);
  EXPECT_THROW(stage_from_string("deploy"), InvalidArgument);
}

TEST(Stages, MissingInputNamesPriorStage) {
  auto cfg = parse_config(smoke_json(scratch("missing")).dump());
  const std::string msg = error_of([&] { run_stage(Stage::kSimulate, cfg); });
  EXPECT_NE(msg.find("run '"), std::string::npos) << msg;
  EXPECT_THROW(run_stage(Stage::kTrain, cfg), StageError);
}

TEST(Stages, GateBlocksSynthesis) {
  // A one-trajectory, zero-epoch model from a tiny horizon with the gate
  // enforced; if the Gramian verdict fails, synthesis must refuse to run.
  const fs::path out = scratch("gate");
  json j = smoke_json(out);
  j["analysis"]["enforce_gate"] = true;
  j["analysis"]["k1"] = 0;
  j["training"]["epochs"] = 0;
  auto cfg = parse_config(j.dump());
  run_stage(Stage::kGenerate, cfg);
  run_stage(Stage::kTrain, cfg);
  // k1 = 0 gives a rank-one Gramian, which fails for n_x = 4.
  EXPECT_THROW(run_stage(Stage::kAnalyze, cfg), StageError);
  EXPECT_THROW(run_stage(Stage::kSynthesize, cfg), StageError);
  fs::remove_all(out);
}

TEST(Stages, EndToEndSmoke) {
  const fs::path out = scratch("smoke");
  auto cfg = parse_config(smoke_json(out).dump());
  std::ostringstream log;
  const auto results = run_all(cfg, &log);
  ASSERT_EQ(results.size(), all_stages().size());
  for (const char* f : {"data/dataset.json", "model.json", "train_report.json",
                        "analysis.json", "gains.json", "synthesis.json",
                        "simulate.json", "report.json", "fig_validation.svg",
                        "fig_plant.svg"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const json report = json::parse(io::read_text(out / "report.json"));
  EXPECT_TRUE(report.contains("certificates"));
  // Timing stays out of artifacts.
  EXPECT_EQ(io::read_text(out / "report.json").find("seconds"), std::string::npos);
  // Rerunning a stage reproduces its artifact.
  const std::string gains = io::read_text(out / "gains.json");
  run_stage(Stage::kSynthesize, cfg);
  EXPECT_EQ(io::read_text(out / "gains.json"), gains);
  fs::remove_all(out);
}

TEST(Stages, TrainRejectsDatasetFromOtherConfig) {
  const fs::path out = scratch("identity");
  json j = smoke_json(out);
  auto cfg = parse_config(j.dump());
  run_stage(Stage::kGenerate, cfg);
  j["seed"] = 2;
  auto other = parse_config(j.dump());
  EXPECT_THROW(run_stage(Stage::kTrain, other), StageError);
  fs::remove_all(out);
}
