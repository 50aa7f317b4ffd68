// Command-line driver for the identification and synthesis pipeline.
//
//   ssmctrl generate|train|analyze|synthesize|simulate|report|all
//           --config <path> [--seed N] [--out DIR]
//
// Exit status: 0 on success, 1 when a stage fails, 2 for configuration or
// usage errors.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ssmctrl/errors.hpp"
#include "ssmctrl/pipeline.hpp"

namespace {

constexpr int kStageFailure = 1;
constexpr int kConfigError = 2;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

int run(const std::string& verb, const Options& opt) {
  using namespace ssmctrl;
  pipeline::PipelineConfig cfg;
  try {
    cfg = pipeline::validate_config(opt.config);
    if (opt.seed) cfg.seed = *opt.seed;
    if (opt.out) cfg.output_dir = *opt.out;
    cfg.validate();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    if (verb == "all") {
      pipeline::run_all(cfg, &std::cerr);
    } else {
      pipeline::run_stage(pipeline::stage_from_string(verb), cfg, &std::cerr);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << verb << " failed: " << e.what() << "\n";
    return kStageFailure;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Identification, contraction-based synthesis and simulation "
               "for structured state-space models"};
  app.require_subcommand(1);

  Options opt;
  std::string verb;
  for (const char* name : {"generate", "train", "analyze", "synthesize",
                           "simulate", "report", "all"}) {
    CLI::App* sub = app.add_subcommand(
        name, std::string(name) == "all" ? "run every stage in order"
                                         : std::string("run the ") + name +
                                               " stage");
    sub->add_option("--config", opt.config, "pipeline config (JSON)")
        ->required();
    sub->add_option("--seed", opt.seed, "override the global seed");
    sub->add_option("--out", opt.out, "override the output directory");
    sub->callback([&verb, name] { verb = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }
  return run(verb, opt);
}
