#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ssmctrl/closedloop.hpp"
#include "ssmctrl/plant.hpp"
#include "ssmctrl/synthesis.hpp"
#include "ssmctrl/train.hpp"

namespace ssmctrl::pipeline {

struct DatasetBlock {
  int n_trajectories = 25;
  double noise_var = 0.02;
};

struct ModelBlock {
  int n_x = 8;
  int hidden = 32;
  double negative_slope = 0.01;
};

struct AnalysisBlock {
  int k1 = 16;
  int jacobian_draws = 100;
  // When false, a failed Gramian verdict is recorded but does not stop the
  // pipeline.
  bool enforce_gate = true;
};

struct PipelineConfig {
  plant::PlantParams plant;
  plant::ExcitationConfig excitation;  // seed is derived from `seed`
  DatasetBlock dataset;
  ModelBlock model;
  train::TrainConfig training;  // seed is derived from `seed`
  AnalysisBlock analysis;
  synthesis::SynthesisConfig synthesis;
  closedloop::ExperimentConfig experiment;  // seed and time steps derived
  int disturbance_runs = 100;
  std::filesystem::path output_dir = "ssmctrl_out";
  std::uint64_t seed = 1;

  // Per-block and cross-block checks; throws ConfigError.
  void validate() const;
};

// Blocks that must appear in every config document.
const std::vector<std::string>& required_blocks();

// Parses a JSON document. Missing keys inside a block take their defaults,
// unknown keys and wrong types are rejected with a ConfigError naming the
// key path. `origin` prefixes diagnostics.
PipelineConfig parse_config(const std::string& text,
                            const std::string& origin = "config");

// Reads, parses and validates a config file.
PipelineConfig validate_config(const std::filesystem::path& path);

// Canonical JSON form of a config (every key present).
std::string config_to_json(const PipelineConfig& cfg);

enum class Stage { kGenerate, kTrain, kAnalyze, kSynthesize, kSimulate, kReport };

std::string to_string(Stage s);
// Throws InvalidArgument for an unknown name.
Stage stage_from_string(const std::string& s);
// In dependency order.
const std::vector<Stage>& all_stages();

struct StageResult {
  Stage stage = Stage::kGenerate;
  std::vector<std::string> artifacts;  // relative to the output directory
  double seconds = 0.0;
};

// Runs one stage against the artifacts in cfg.output_dir. Throws StageError
// naming the stage to run first when an input is missing, IntegrityError for
// a corrupt input and StageError when a gate fails. Progress and timing go
// to `log` when given; timing never reaches an artifact.
StageResult run_stage(Stage stage, const PipelineConfig& cfg,
                      std::ostream* log = nullptr);

// Every stage in order; stops at the first failure.
std::vector<StageResult> run_all(const PipelineConfig& cfg,
                                 std::ostream* log = nullptr);

// Sub-seed for a named pipeline component.
std::uint64_t component_seed(const PipelineConfig& cfg, const char* name);

}  // namespace ssmctrl::pipeline
