#include "ssmctrl/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "json_util.hpp"
#include "ssmctrl/analysis.hpp"
#include "ssmctrl/errors.hpp"
#include "ssmctrl/io.hpp"
#include "ssmctrl/plot.hpp"
#include "ssmctrl/seeding.hpp"

namespace ssmctrl::pipeline {
namespace fs = std::filesystem;
using io::detail::Json;

namespace {

// ---------------------------------------------------------------------------
// Config reading

// Reads typed keys from one JSON object and remembers which ones it saw, so
// that leftovers can be reported as unknown.
class BlockReader {
 public:
  BlockReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("", "must be an object");
  }

  void get(const char* key, double& out) {
    if (const Json* v = take(key)) {
      if (!v->is_number()) fail(key, "must be a number");
      out = v->get<double>();
    }
  }
  void get(const char* key, int& out) {
    if (const Json* v = take(key)) {
      if (!v->is_number_integer()) fail(key, "must be an integer");
      const auto n = v->get<long long>();
      if (n < std::numeric_limits<int>::min() ||
          n > std::numeric_limits<int>::max()) fail(key, "is out of range");
      out = static_cast<int>(n);
    }
  }
  void get(const char* key, std::uint64_t& out) {
    if (const Json* v = take(key)) {
      if (!v->is_number_unsigned()) {
        fail(key, "must be a non-negative integer");
      }
      out = v->get<std::uint64_t>();
    }
  }
  void get(const char* key, bool& out) {
    if (const Json* v = take(key)) {
      if (!v->is_boolean()) fail(key, "must be true or false");
      out = v->get<bool>();
    }
  }
  void get(const char* key, std::string& out) {
    if (const Json* v = take(key)) {
      if (!v->is_string()) fail(key, "must be a string");
      out = v->get<std::string>();
    }
  }
  void get(const char* key, std::vector<double>& out) {
    if (const Json* v = take(key)) {
      if (!v->is_array()) fail(key, "must be an array of numbers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number()) fail(key, "must be an array of numbers");
        out.push_back(e.get<double>());
      }
    }
  }
  void get(const char* key, std::vector<int>& out) {
    if (const Json* v = take(key)) {
      if (!v->is_array()) fail(key, "must be an array of integers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_integer()) fail(key, "must be an array of integers");
        out.push_back(e.get<int>());
      }
    }
  }
  // null disables the option.
  void get(const char* key, std::optional<double>& out) {
    if (const Json* v = take(key)) {
      if (v->is_null()) {
        out.reset();
      } else if (v->is_number()) {
        out = v->get<double>();
      } else {
        fail(key, "must be a number or null");
      }
    }
  }

  BlockReader child(const char* key) {
    static const Json empty = Json::object();
    const Json* v = take(key);
    return BlockReader(v ? *v : empty, join(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) {
        throw ConfigError("unknown key '" + join(k.c_str()) + "'");
      }
    }
  }

 private:
  const Json* take(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  std::string join(const char* key) const {
    return path_.empty() ? key : path_ + "." + key;
  }
  [[noreturn]] void fail(const char* key, const char* what) const {
    const std::string where = *key ? join(key) : path_;
    throw ConfigError("'" + where + "' " + what);
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Rethrows a module invariant violation as a config error for `block`.
template <class F>
void check_block(const char* block, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("block '") + block + "': " + e.what());
  }
}

Json plant_json(const plant::PlantParams& p) {
  return Json{{"R_a", p.R_a}, {"L_a", p.L_a}, {"K_m", p.K_m},
              {"J_m", p.J_m}, {"J_L", p.J_L}, {"k_s", p.k_s},
              {"B_s", p.B_s}, {"B_m", p.B_m}, {"B_L", p.B_L},
              {"v_dz", p.v_dz}, {"a0", p.a0}, {"b0", p.b0}};
}

Json excitation_json(const PipelineConfig& c) {
  const auto& e = c.excitation;
  return Json{{"lfsr_order", e.lfsr_order},
              {"lfsr_taps", e.lfsr_taps},
              {"amplitude", e.amplitude},
              {"hold_samples", e.hold_samples},
              {"n_samples", e.n_samples},
              {"dt_sim", e.dt_sim},
              {"dt_sample", e.dt_sample},
              {"n_trajectories", c.dataset.n_trajectories},
              {"noise_var", c.dataset.noise_var}};
}

Json training_json(const PipelineConfig& c) {
  const auto& t = c.training;
  return Json{{"n_x", c.model.n_x},
              {"hidden", c.model.hidden},
              {"negative_slope", c.model.negative_slope},
              {"epochs", t.epochs},
              {"learning_rate", t.learning_rate},
              {"batch_size", t.batch_size},
              {"washout", t.washout},
              {"beta1", t.beta1},
              {"beta2", t.beta2},
              {"epsilon", t.epsilon},
              {"train_fraction", t.train_fraction},
              {"min_angle", t.min_angle}};
}

Json analysis_json(const AnalysisBlock& a) {
  return Json{{"k1", a.k1},
              {"jacobian_draws", a.jacobian_draws},
              {"enforce_gate", a.enforce_gate}};
}

Json synthesis_json(const synthesis::SynthesisConfig& s) {
  return Json{{"rho_c_grid", s.rho_c_grid},
              {"rho_o_grid", s.rho_o_grid},
              {"epsilon", s.epsilon},
              {"n_random", s.n_random},
              {"solver",
               {{"box_bound", s.solver.box_bound},
                {"gap_tolerance", s.solver.gap_tolerance},
                {"feasibility_tolerance", s.solver.feasibility_tolerance},
                {"barrier_growth", s.solver.barrier_growth},
                {"max_newton_steps", s.solver.max_newton_steps}}}};
}

Json experiment_json(const PipelineConfig& c) {
  const auto& e = c.experiment;
  return Json{{"n_runs", e.n_runs},
              {"disturbance_runs", c.disturbance_runs},
              {"horizon", e.horizon},
              {"ic_low", e.ic_low},
              {"ic_high", e.ic_high},
              {"saturation", e.saturation ? Json(*e.saturation) : Json()},
              {"noise_var", e.noise_var},
              {"disturbance_bound", e.disturbance_bound},
              {"settle_threshold", e.settle_threshold},
              {"settle_time", e.settle_time}};
}

// ---------------------------------------------------------------------------
// Artifacts

constexpr const char* kDatasetMeta = "data/dataset.json";
constexpr const char* kModel = "model.json";
constexpr const char* kTrainReport = "train_report.json";
constexpr const char* kTrainCurve = "train_curve.csv";
constexpr const char* kAnalysis = "analysis.json";
constexpr const char* kGains = "gains.json";
constexpr const char* kSynthesis = "synthesis.json";
constexpr const char* kControllerSdpa = "controller.sdpa";
constexpr const char* kObserverSdpa = "observer.sdpa";
constexpr const char* kSimulate = "simulate.json";
constexpr const char* kReport = "report.json";
constexpr const char* kFigValidation = "fig_validation.svg";
constexpr const char* kFigPlant = "fig_plant.svg";

std::string indexed(const char* pattern, int i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, i);
  return buf;
}

std::string traj_file(int i) { return indexed("data/traj_%03d.csv", i); }
std::string ssm_run_file(int i) { return indexed("sim/ssm_run_%02d.csv", i); }
std::string plant_run_file(int i) {
  return indexed("sim/plant_run_%02d.csv", i);
}

class Workspace {
 public:
  explicit Workspace(const fs::path& root) : root_(root) {}

  fs::path path(const std::string& rel) const { return root_ / rel; }
  bool exists(const std::string& rel) const { return fs::exists(path(rel)); }

  // Throws StageError naming `producer` when the artifact is absent.
  std::string require(const std::string& rel, Stage producer) const {
    if (!exists(rel)) {
      throw StageError("missing input '" + rel + "'; run '" +
                       to_string(producer) + "' first");
    }
    return io::read_text(path(rel));
  }

  Json require_json(const std::string& rel, Stage producer) const {
    const std::string text = require(rel, producer);
    try {
      return Json::parse(text);
    } catch (const Json::parse_error& e) {
      throw IntegrityError(rel + ": " + e.what());
    }
  }

  void write(StageResult& r, const std::string& rel, const std::string& text) {
    io::write_text(path(rel), text);
    r.artifacts.push_back(rel);
  }
  void write_json(StageResult& r, const std::string& rel, const Json& j) {
    write(r, rel, j.dump(2) + "\n");
  }

 private:
  fs::path root_;
};

class Logger {
 public:
  Logger(std::ostream* os, Stage s) : os_(os), stage_(to_string(s)) {}
  template <class... Args>
  void operator()(const Args&... args) const {
    if (!os_) return;
    std::ostringstream line;
    line << "[" << stage_ << "] ";
    (line << ... << args);
    *os_ << line.str() << std::endl;
  }

 private:
  std::ostream* os_;
  std::string stage_;
};

ssm::SsmModel load_model(const Workspace& ws) {
  return io::model_from_json(ws.require(kModel, Stage::kTrain));
}

synthesis::GainSet load_gains(const Workspace& ws) {
  return io::gains_from_json(ws.require(kGains, Stage::kSynthesize));
}

// Configuration slice that determines the dataset.
Json dataset_identity(const PipelineConfig& cfg) {
  return Json{{"plant", plant_json(cfg.plant)},
              {"excitation", excitation_json(cfg)},
              {"seed", cfg.seed}};
}

std::vector<plant::Trajectory> load_dataset(const Workspace& ws,
                                            const PipelineConfig& cfg) {
  const Json meta = ws.require_json(kDatasetMeta, Stage::kGenerate);
  if (!meta.contains("identity") || meta["identity"] != dataset_identity(cfg)) {
    throw StageError(std::string(kDatasetMeta) +
                     " was generated with a different configuration; run "
                     "'generate' first");
  }
  std::vector<plant::Trajectory> data;
  for (const auto& f : io::detail::field(meta, "files", kDatasetMeta)) {
    data.push_back(io::trajectory_from_csv(
        ws.require(f.get<std::string>(), Stage::kGenerate),
        cfg.excitation.dt_sample));
  }
  if (static_cast<int>(data.size()) != cfg.dataset.n_trajectories) {
    throw IntegrityError(std::string(kDatasetMeta) +
                         ": trajectory count disagrees with the config");
  }
  return data;
}

Json bounds_json(const ssm::BiLipBounds& b) {
  return Json{{"mu", b.mu}, {"nu", b.nu}, {"method", ssm::to_string(b.method)}};
}

Json gramian_json(const analysis::GramianReport& g,
                  const analysis::SandwichSweep& s) {
  return Json{
      {"min_eigenvalue", g.min_eigenvalue},
      {"max_eigenvalue", g.max_eigenvalue},
      {"scale_free_min_eigenvalue",
       g.max_eigenvalue > 0.0 ? g.min_eigenvalue / g.max_eigenvalue : 0.0},
      {"rank_tolerance", analysis::kRankTolerance},
      {"verdict", g.verdict},
      {"gramian", io::detail::matrix_json(g.gramian)},
      {"sandwich",
       {{"draws", s.draws},
        {"worst_lower_gap", s.worst_lower_gap},
        {"worst_upper_gap", s.worst_upper_gap},
        {"scale", s.scale},
        {"holds", s.holds(1e-9)}}}};
}

Json certificate_json(const synthesis::CertificateReport& r) {
  Json metrics = Json::array();
  for (const auto& m : r.metrics) {
    metrics.push_back(Json{{"metric", m.metric},
                           {"worst_eigenvalue", m.worst_eigenvalue},
                           {"holds", m.holds}});
  }
  const auto* c = r.certifying();
  return Json{{"samples", r.samples},
              {"metrics", metrics},
              {"holds", r.holds()},
              {"certifying_metric", c ? Json(c->metric) : Json()}};
}

Json search_json(const synthesis::GridSearchResult& s) {
  Json points = Json::array();
  for (const auto& p : s.points) {
    points.push_back(Json{{"rho", p.rho},
                          {"status", sdp::to_string(p.status)},
                          {"margin", p.margin},
                          {"certified", p.certified},
                          {"note", p.note}});
  }
  Json eigs = Json::array();
  for (const auto& e : s.solution.constraint_eigs) {
    eigs.push_back(Json{{"name", e.name},
                        {"min_eigenvalue", e.min_eigenvalue},
                        {"max_abs_eigenvalue", e.max_abs_eigenvalue}});
  }
  return Json{{"rho", s.rho},
              {"grid", points},
              {"margin", s.solution.margin},
              {"newton_steps", s.solution.newton_steps},
              {"constraint_eigenvalues", eigs}};
}

double relative_residual(const Matrix& lhs, const Matrix& rhs) {
  return (lhs - rhs).norm() / std::max(rhs.norm(), 1e-300);
}

// Input range of the slope grid check on S_u.
constexpr double kSlopeGridLo = -10.0;
constexpr double kSlopeGridHi = 10.0;
constexpr int kSlopeGridPoints = 10000;

// Column of a CSV file with a header row.
std::vector<double> csv_column(const std::string& text,
                               const std::string& name) {
  std::istringstream in(text);
  std::string line, cell;
  if (!std::getline(in, line)) throw IntegrityError("empty CSV");
  int col = -1, c = 0;
  {
    std::istringstream hs(line);
    while (std::getline(hs, cell, ',')) {
      if (cell == name) col = c;
      ++c;
    }
  }
  if (col < 0) throw IntegrityError("CSV has no column '" + name + "'");
  std::vector<double> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    for (int k = 0; k <= col; ++k) std::getline(ls, cell, ',');
    out.push_back(std::strtod(cell.c_str(), nullptr));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stages

void stage_generate(const PipelineConfig& cfg, Workspace& ws, StageResult& r,
                    const Logger& log) {
  const auto data = plant::generate_dataset(
      cfg.plant, cfg.excitation, cfg.dataset.noise_var,
      cfg.dataset.n_trajectories, component_seed(cfg, "dataset"));
  Json files = Json::array();
  for (int i = 0; i < static_cast<int>(data.size()); ++i) {
    ws.write(r, traj_file(i), io::trajectory_csv(data[i]));
    files.push_back(traj_file(i));
  }
  ws.write_json(r, kDatasetMeta,
                Json{{"format", "ssmctrl.dataset"},
                     {"version", 1},
                     {"identity", dataset_identity(cfg)},
                     {"dataset_seed", component_seed(cfg, "dataset")},
                     {"files", files}});
  log(data.size(), " trajectories of ", cfg.excitation.n_samples, " samples");
}

void stage_train(const PipelineConfig& cfg, Workspace& ws, StageResult& r,
                 const Logger& log) {
  const auto data = load_dataset(ws, cfg);
  double y2 = 0.0;
  std::size_t n = 0;
  for (const auto& t : data) {
    for (double y : t.outputs) y2 += y * y;
    n += t.size();
  }
  const double y_scale = std::sqrt(y2 / static_cast<double>(n));

  train::TrainConfig tc = cfg.training;
  tc.seed = component_seed(cfg, "train");
  ssm::SsmModel m0 = train::initial_model(
      cfg.model.n_x, cfg.model.hidden, cfg.model.negative_slope,
      component_seed(cfg, "init"), cfg.excitation.amplitude, y_scale,
      cfg.excitation.dt_sample, tc.min_angle);
  const auto [train_idx, val_idx] = train::split_dataset(
      static_cast<int>(data.size()), tc.train_fraction, tc.seed);
  std::vector<plant::Trajectory> train_set, val_set;
  for (int i : train_idx) train_set.push_back(data[i]);
  for (int i : val_idx) val_set.push_back(data[i]);
  m0 = train::fit_readout(m0, train_set, tc.washout);

  auto [trained, rep] = train::train(m0, data, tc);
  const ssm::SsmModel model = train::balance_blocks(trained, cfg.analysis.k1);
  log("trained ", tc.epochs, " epochs in ", rep.wall_seconds, " s");
  const double clean =
      train::validation_nrmse(model, val_set, tc.washout, true);
  log("validation NRMSE ", rep.final_val_nrmse, " (noisy), ", clean,
      " (clean)");

  ws.write(r, kModel, io::model_to_json(model));
  ws.write_json(
      r, kTrainReport,
      Json{{"epochs", tc.epochs},
           {"best_epoch", rep.best_epoch},
           {"initial_val_nrmse", rep.initial_val_nrmse},
           {"final_val_nrmse", rep.final_val_nrmse},
           {"final_val_nrmse_clean", clean},
           {"train_indices", rep.train_indices},
           {"val_indices", rep.val_indices},
           {"spectral_radius", linalg::spectral_radius(model.lru.A)},
           {"bilip",
            {{"u", bounds_json(ssm::bilip_bounds(model.s_u))},
             {"y", bounds_json(ssm::bilip_bounds(model.s_y))}}}});
  std::string curve = "epoch,loss,val_nrmse\n";
  for (std::size_t e = 0; e < rep.loss_curve.size(); ++e) {
    curve += std::to_string(e + 1) + "," + io::format_double(rep.loss_curve[e]) +
             "," + io::format_double(rep.val_nrmse_curve[e]) + "\n";
  }
  ws.write(r, kTrainCurve, curve);
}

void stage_analyze(const PipelineConfig& cfg, Workspace& ws, StageResult& r,
                   const Logger& log) {
  const ssm::SsmModel m = load_model(ws);
  const auto bu = ssm::bilip_bounds(m.s_u);
  const auto by = ssm::bilip_bounds(m.s_y);
  const auto grid = ssm::empirical_grid_bounds(m.s_u, kSlopeGridLo,
                                               kSlopeGridHi, kSlopeGridPoints);
  const int k1 = cfg.analysis.k1;
  const auto gc = analysis::controllability_gramian(m.lru.A, m.lru.B, {}, k1,
                                                    bu.mu, bu.nu);
  const auto go = analysis::observability_gramian(m.lru.A, m.lru.C, {}, k1,
                                                  by.mu, by.nu);
  const std::uint64_t seed = component_seed(cfg, "analysis");
  const auto sc = analysis::controllability_sandwich_sweep(
      m.lru.A, m.lru.B, k1, bu.mu, bu.nu, cfg.analysis.jacobian_draws,
      derive_seed(seed, "controllability"));
  const auto so = analysis::observability_sandwich_sweep(
      m.lru.A, m.lru.C, k1, by.mu, by.nu, cfg.analysis.jacobian_draws,
      derive_seed(seed, "observability"));

  const bool passed = gc.verdict && go.verdict;
  ws.write_json(
      r, kAnalysis,
      Json{{"k1", k1},
           {"bilip",
            {{"u",
              {{"bounds", bounds_json(bu)},
               {"grid",
                {{"lo", kSlopeGridLo},
                 {"hi", kSlopeGridHi},
                 {"points", kSlopeGridPoints},
                 {"min_slope", grid.mu},
                 {"max_slope", grid.nu}}}}},
             {"y", {{"bounds", bounds_json(by)}}}}},
           {"spectral_radius", linalg::spectral_radius(m.lru.A)},
           {"controllability", gramian_json(gc, sc)},
           {"observability", gramian_json(go, so)},
           {"gate",
            {{"controllable", gc.verdict},
             {"observable", go.verdict},
             {"passed", passed},
             {"enforced", cfg.analysis.enforce_gate}}}});
  log("controllability scale-free min eigenvalue ",
      gc.min_eigenvalue / gc.max_eigenvalue, ", observability ",
      go.min_eigenvalue / go.max_eigenvalue);
  if (!passed) {
    const std::string what = !gc.verdict ? "recurrent unit not controllable"
                                         : "recurrent unit not observable";
    if (cfg.analysis.enforce_gate) throw StageError(what);
    log("warning: ", what, " (gate not enforced)");
  }
}

void stage_synthesize(const PipelineConfig& cfg, Workspace& ws,
                      StageResult& r, const Logger& log) {
  const ssm::SsmModel m = load_model(ws);
  const Json an = ws.require_json(kAnalysis, Stage::kAnalyze);
  const Json& gate = io::detail::field(an, "gate", kAnalysis);
  if (cfg.analysis.enforce_gate && !gate.value("passed", false)) {
    throw StageError(gate.value("controllable", false)
                         ? "recurrent unit not observable; synthesis blocked"
                         : "recurrent unit not controllable; synthesis blocked");
  }
  const auto bu = ssm::bilip_bounds(m.s_u);
  const auto by = ssm::bilip_bounds(m.s_y);
  synthesis::SynthesisConfig sc = cfg.synthesis;
  sc.seed = component_seed(cfg, "synthesis");
  const auto res = synthesis::synthesize(m.lru.A, m.lru.B, m.lru.C, bu.mu,
                                         bu.nu, by.mu, by.nu, sc);
  const auto& g = res.gains;
  log("rho_c ", g.rho_c, ", rho_o ", g.rho_o);

  ws.write(r, kGains, io::gains_to_json(g));
  const double eps =
      sc.epsilon > 0.0 ? sc.epsilon : synthesis::default_epsilon(m.lru.A);
  Json ctrl = search_json(res.controller_search);
  ctrl["certificate"] = certificate_json(res.controller_certificate);
  ctrl["recovery"] = Json{{"cond_Y", g.cond_Y},
                          {"residual_KY_X", relative_residual(g.K * g.Y, g.X)}};
  Json obs = search_json(res.observer_search);
  obs["certificate"] = certificate_json(res.observer_certificate);
  obs["recovery"] = Json{{"cond_U", g.cond_U},
                         {"residual_UL_V", relative_residual(g.U * g.L, g.V)}};
  ws.write_json(r, kSynthesis,
                Json{{"epsilon", eps},
                     {"bilip", {{"u", bounds_json(bu)}, {"y", bounds_json(by)}}},
                     {"controller", ctrl},
                     {"observer", obs}});
  std::ostringstream c_sdpa, o_sdpa;
  sdp::write_sdpa(c_sdpa, res.controller_problem, sc.solver);
  sdp::write_sdpa(o_sdpa, res.observer_problem, sc.solver);
  ws.write(r, kControllerSdpa, c_sdpa.str());
  ws.write(r, kObserverSdpa, o_sdpa.str());
}

void stage_simulate(const PipelineConfig& cfg, Workspace& ws, StageResult& r,
                    const Logger& log) {
  const ssm::SsmModel m = load_model(ws);
  const synthesis::GainSet g = load_gains(ws);
  const std::uint64_t seed = component_seed(cfg, "experiment");

  const auto cc = synthesis::verify_controller_certificate(
      m.lru.A, m.lru.B, g.K, g.P, g.mu_u, g.nu_u, g.rho_c,
      cfg.synthesis.n_random, derive_seed(seed, "controller_certificate"));
  const auto oc = synthesis::verify_observer_certificate(
      m.lru.A, m.lru.C, g.L, g.Q, g.mu_y, g.nu_y, g.rho_o,
      cfg.synthesis.n_random, derive_seed(seed, "observer_certificate"));
  if (!cc.holds() || !oc.holds()) {
    throw IntegrityError(std::string(kGains) +
                         ": gains fail certificate verification");
  }
  const auto cmetric = closedloop::certified_metric(cc, g.P);
  const auto ometric = closedloop::certified_metric(oc, g.Q);

  closedloop::ExperimentConfig ec = cfg.experiment;
  ec.seed = seed;
  const auto sep =
      closedloop::separation_experiment(m, g, cmetric, ometric, ec);
  Json sep_runs = Json::array();
  for (int i = 0; i < static_cast<int>(sep.runs.size()); ++i) {
    const auto& run = sep.runs[i];
    ws.write(r, ssm_run_file(i), io::closedloop_csv(run.trace));
    sep_runs.push_back(Json{{"c", run.c},
                            {"envelope_violations", run.envelope_violations},
                            {"lemma_violations", run.lemma_violations},
                            {"worst_envelope_slack", run.worst_envelope_slack},
                            {"observer_rate", run.observer_rate},
                            {"state_rate", run.state_rate},
                            {"initial_norm", run.x0.norm()},
                            {"terminal_norm", run.trace.x.back().norm()},
                            {"terminal_ratio", run.terminal_ratio}});
  }
  log("separation: ", sep.total_envelope_violations(),
      " envelope violations, worst terminal ratio ",
      sep.worst_terminal_ratio());

  closedloop::ExperimentConfig dc = ec;
  dc.n_runs = cfg.disturbance_runs;
  const auto dist = closedloop::disturbance_experiment(m, g, cmetric, dc);
  log("disturbance: ", dist.violations, " violations in ", dist.checks,
      " checks");

  // Observer started on the true state must never leave it.
  const Vector x0 = closedloop::sample_ball(m.n_x(), 1.0,
                                            derive_seed(seed, "correctness"));
  const auto exact = closedloop::run_output_feedback_ssm(m, g, x0, x0,
                                                         ec.horizon);
  double max_err = 0.0;
  for (std::size_t k = 0; k < exact.size(); ++k) {
    max_err = std::max(max_err, (exact.x[k] - exact.xhat[k]).norm());
  }

  const auto pr = closedloop::plant_experiment(cfg.plant, m, g, ec);
  Json plant_runs = Json::array();
  for (int i = 0; i < static_cast<int>(pr.runs.size()); ++i) {
    const auto& run = pr.runs[i];
    ws.write(r, plant_run_file(i), io::closedloop_csv(run.trace));
    plant_runs.push_back(Json{{"initial_speed", run.initial_speed},
                              {"settled", run.settled},
                              {"settle_time", run.settle_time},
                              {"terminal_speed", run.terminal_speed},
                              {"diverged_at", run.diverged_at}});
  }
  log("plant: ", pr.settled_count(), "/", pr.runs.size(), " runs settled");

  ws.write_json(
      r, kSimulate,
      Json{{"certificates",
            {{"controller", certificate_json(cc)},
             {"observer", certificate_json(oc)}}},
           {"separation",
            {{"rho_c_step", sep.rho_c_step},
             {"rho_o_step", sep.rho_o_step},
             {"controller_metric", sep.controller_metric},
             {"observer_metric", sep.observer_metric},
             {"envelope_violations", sep.total_envelope_violations()},
             {"lemma_violations", sep.total_lemma_violations()},
             {"worst_observer_rate", sep.worst_observer_rate()},
             {"worst_terminal_ratio", sep.worst_terminal_ratio()},
             {"runs", sep_runs}}},
           {"disturbance",
            {{"rho_step", dist.rho_step},
             {"c_theta", dist.c_theta},
             {"runs", dist.runs},
             {"checks", dist.checks},
             {"violations", dist.violations},
             {"worst_slack", dist.worst_slack}}},
           {"observer_correctness", {{"max_error", max_err}}},
           {"plant",
            {{"settled_count", pr.settled_count()},
             {"runs", plant_runs}}}});
}

void stage_report(const PipelineConfig& cfg, Workspace& ws, StageResult& r,
                  const Logger& log) {
  const Json sim = ws.require_json(kSimulate, Stage::kSimulate);
  const Json an = ws.require_json(kAnalysis, Stage::kAnalyze);
  const Json syn = ws.require_json(kSynthesis, Stage::kSynthesize);
  const Json tr = ws.require_json(kTrainReport, Stage::kTrain);
  const ssm::SsmModel m = load_model(ws);

  // Validation overlay on the first held-out trajectory.
  const auto& val = io::detail::field(tr, "val_indices", kTrainReport);
  if (!val.is_array() || val.empty()) {
    throw IntegrityError(std::string(kTrainReport) + ": no validation split");
  }
  const int vi = val[0].get<int>();
  const plant::Trajectory traj = io::trajectory_from_csv(
      ws.require(traj_file(vi), Stage::kGenerate), cfg.excitation.dt_sample);
  const auto pred = train::predict(m, traj.inputs);
  plot::Figure fv;
  fv.title = "Validation trajectory " + std::to_string(vi);
  fv.x_label = "time [s]";
  fv.y_label = "load speed [rad/s]";
  plot::Series meas{"measured", {}, traj.outputs, "#bbbbbb", false};
  plot::Series clean{"noise-free", {}, traj.outputs_clean, "#1f77b4", false};
  plot::Series model{"SSM", {}, pred, "#d62728", true};
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const double t = static_cast<double>(k) * traj.dt_sample;
    meas.x.push_back(t);
    clean.x.push_back(t);
    model.x.push_back(t);
  }
  fv.series = {meas, clean, model};
  ws.write(r, kFigValidation, plot::render_svg(fv));

  plot::Figure fp;
  fp.title = "Output feedback on the nonlinear plant";
  fp.x_label = "time [s]";
  fp.y_label = "load speed [rad/s]";
  fp.legend = false;
  fp.reference_lines = {-cfg.experiment.settle_threshold,
                        cfg.experiment.settle_threshold};
  const int n_plant =
      static_cast<int>(sim.at("plant").at("runs").size());
  for (int i = 0; i < n_plant; ++i) {
    const std::string text = ws.require(plant_run_file(i), Stage::kSimulate);
    fp.series.push_back(
        {"run " + std::to_string(i), csv_column(text, "t"),
         csv_column(text, "y"), "", false});
  }
  ws.write(r, kFigPlant, plot::render_svg(fp));

  // Stage inventory from what is on disk now.
  struct Produces {
    Stage stage;
    std::vector<std::string> files;
  };
  std::vector<Produces> inventory = {
      {Stage::kGenerate, {kDatasetMeta}},
      {Stage::kTrain, {kModel, kTrainReport, kTrainCurve}},
      {Stage::kAnalyze, {kAnalysis}},
      {Stage::kSynthesize, {kGains, kSynthesis, kControllerSdpa, kObserverSdpa}},
      {Stage::kSimulate, {kSimulate}},
      {Stage::kReport, {kFigValidation, kFigPlant}}};
  for (int i = 0; i < cfg.dataset.n_trajectories; ++i) {
    inventory[0].files.push_back(traj_file(i));
  }
  for (int i = 0; i < cfg.experiment.n_runs; ++i) {
    inventory[4].files.push_back(ssm_run_file(i));
    inventory[4].files.push_back(plant_run_file(i));
  }
  Json stages = Json::array();
  for (const auto& p : inventory) {
    Json files = Json::array();
    bool complete = true;
    for (const auto& f : p.files) {
      if (ws.exists(f)) {
        files.push_back(f);
      } else {
        complete = false;
      }
    }
    std::string status = complete ? "complete" : "incomplete";
    if (p.stage == Stage::kAnalyze && complete &&
        !an.at("gate").at("passed").get<bool>()) {
      status = "gate_failed";
    }
    stages.push_back(Json{{"stage", to_string(p.stage)},
                          {"status", status},
                          {"artifacts", files}});
  }

  Json terminal = Json::array(), rates = Json::array();
  for (const auto& run : sim.at("separation").at("runs")) {
    terminal.push_back(run.at("terminal_norm"));
    rates.push_back(Json{{"observer", run.at("observer_rate")},
                         {"state", run.at("state_rate")}});
  }
  ws.write_json(
      r, kReport,
      Json{{"format", "ssmctrl.report"},
           {"version", 1},
           {"seed", cfg.seed},
           {"stages", stages},
           {"identification",
            {{"val_nrmse", tr.at("final_val_nrmse")},
             {"val_nrmse_clean", tr.at("final_val_nrmse_clean")}}},
           {"gramian_verdicts",
            {{"controllable", an.at("gate").at("controllable")},
             {"observable", an.at("gate").at("observable")},
             {"controllability_scale_free_min",
              an.at("controllability").at("scale_free_min_eigenvalue")},
             {"observability_scale_free_min",
              an.at("observability").at("scale_free_min_eigenvalue")}}},
           {"rho",
            {{"controller", syn.at("controller").at("rho")},
             {"observer", syn.at("observer").at("rho")}}},
           {"certificates",
            {{"controller", syn.at("controller").at("certificate")},
             {"observer", syn.at("observer").at("certificate")}}},
           {"closed_loop",
            {{"terminal_norms", terminal},
             {"fitted_rates", rates},
             {"envelope_violations",
              sim.at("separation").at("envelope_violations")},
             {"disturbance_violations",
              sim.at("disturbance").at("violations")},
             {"observer_correctness_error",
              sim.at("observer_correctness").at("max_error")},
             {"plant_settled", sim.at("plant").at("settled_count")},
             {"plant_runs", n_plant}}},
           {"figures", {kFigValidation, kFigPlant}}});
  log("report written to ", ws.path(kReport).string());
}

}  // namespace

// ---------------------------------------------------------------------------

const std::vector<std::string>& required_blocks() {
  static const std::vector<std::string> blocks = {
      "plant", "excitation", "training", "synthesis", "experiment"};
  return blocks;
}

void PipelineConfig::validate() const {
  check_block("plant", [&] { plant.validate(); });
  check_block("excitation", [&] {
    excitation.validate();
    if (dataset.n_trajectories < 2) {
      throw InvalidArgument("n_trajectories must be >= 2");
    }
    if (!(dataset.noise_var >= 0.0)) {
      throw InvalidArgument("noise_var must be >= 0");
    }
  });
  check_block("training", [&] {
    training.validate();
    if (model.n_x < 2 || model.n_x % 2 != 0) {
      throw InvalidArgument("n_x must be a positive even number");
    }
    if (model.hidden < 1) throw InvalidArgument("hidden must be >= 1");
    if (!(model.negative_slope > 0.0 && model.negative_slope < 1.0)) {
      throw InvalidArgument("negative_slope must lie in (0, 1)");
    }
    if (training.washout >= excitation.n_samples) {
      throw InvalidArgument("washout must be shorter than a trajectory");
    }
  });
  check_block("analysis", [&] {
    if (analysis.k1 < 0) throw InvalidArgument("k1 must be >= 0");
    if (analysis.jacobian_draws < 1) {
      throw InvalidArgument("jacobian_draws must be >= 1");
    }
  });
  check_block("synthesis", [&] { synthesis.validate(); });
  check_block("experiment", [&] {
    experiment.validate();
    if (disturbance_runs < 1) {
      throw InvalidArgument("disturbance_runs must be >= 1");
    }
    if (experiment.dt_sample != excitation.dt_sample ||
        experiment.dt_sim != excitation.dt_sim) {
      throw InvalidArgument(
          "time steps must match the excitation block");
    }
  });
  if (output_dir.empty()) throw ConfigError("'output_dir' must not be empty");
}

PipelineConfig parse_config(const std::string& text,
                            const std::string& origin) {
  Json root;
  const bool blank = text.find_first_not_of(" \t\r\n") == std::string::npos;
  if (blank) {
    root = Json::object();
  } else {
    try {
      root = Json::parse(text);
    } catch (const Json::parse_error& e) {
      // Translate the byte offset into a line and column.
      std::size_t line = 1, col = 1;
      for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
          ++line;
          col = 1;
        } else {
          ++col;
        }
      }
      throw ConfigError(origin + ":" + std::to_string(line) + ":" +
                        std::to_string(col) + ": parse error: " + e.what());
    }
  }
  if (!root.is_object()) {
    throw ConfigError(origin + ": top level must be a JSON object");
  }
  std::vector<std::string> missing;
  for (const auto& b : required_blocks()) {
    if (!root.contains(b)) missing.push_back(b);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& b : missing) list += (list.empty() ? "" : ", ") + b;
    throw ConfigError(origin + ": missing required blocks: " + list);
  }

  PipelineConfig cfg;
  try {
    BlockReader top(root, "");
    top.get("seed", cfg.seed);
    std::string out = cfg.output_dir.string();
    top.get("output_dir", out);
    cfg.output_dir = out;

    BlockReader p = top.child("plant");
    auto& pp = cfg.plant;
    p.get("R_a", pp.R_a);
    p.get("L_a", pp.L_a);
    p.get("K_m", pp.K_m);
    p.get("J_m", pp.J_m);
    p.get("J_L", pp.J_L);
    p.get("k_s", pp.k_s);
    p.get("B_s", pp.B_s);
    p.get("B_m", pp.B_m);
    p.get("B_L", pp.B_L);
    p.get("v_dz", pp.v_dz);
    p.get("a0", pp.a0);
    p.get("b0", pp.b0);
    p.finish();

    BlockReader e = top.child("excitation");
    auto& ex = cfg.excitation;
    e.get("lfsr_order", ex.lfsr_order);
    e.get("lfsr_taps", ex.lfsr_taps);
    e.get("amplitude", ex.amplitude);
    e.get("hold_samples", ex.hold_samples);
    e.get("n_samples", ex.n_samples);
    e.get("dt_sim", ex.dt_sim);
    e.get("dt_sample", ex.dt_sample);
    e.get("n_trajectories", cfg.dataset.n_trajectories);
    e.get("noise_var", cfg.dataset.noise_var);
    e.finish();

    BlockReader t = top.child("training");
    auto& tc = cfg.training;
    t.get("n_x", cfg.model.n_x);
    t.get("hidden", cfg.model.hidden);
    t.get("negative_slope", cfg.model.negative_slope);
    t.get("epochs", tc.epochs);
    t.get("learning_rate", tc.learning_rate);
    t.get("batch_size", tc.batch_size);
    t.get("washout", tc.washout);
    t.get("beta1", tc.beta1);
    t.get("beta2", tc.beta2);
    t.get("epsilon", tc.epsilon);
    t.get("train_fraction", tc.train_fraction);
    t.get("min_angle", tc.min_angle);
    t.finish();

    BlockReader a = top.child("analysis");
    a.get("k1", cfg.analysis.k1);
    a.get("jacobian_draws", cfg.analysis.jacobian_draws);
    a.get("enforce_gate", cfg.analysis.enforce_gate);
    a.finish();

    BlockReader s = top.child("synthesis");
    auto& sc = cfg.synthesis;
    s.get("rho_c_grid", sc.rho_c_grid);
    s.get("rho_o_grid", sc.rho_o_grid);
    s.get("epsilon", sc.epsilon);
    s.get("n_random", sc.n_random);
    BlockReader so = s.child("solver");
    so.get("box_bound", sc.solver.box_bound);
    so.get("gap_tolerance", sc.solver.gap_tolerance);
    so.get("feasibility_tolerance", sc.solver.feasibility_tolerance);
    so.get("barrier_growth", sc.solver.barrier_growth);
    so.get("max_newton_steps", sc.solver.max_newton_steps);
    so.finish();
    s.finish();

    BlockReader x = top.child("experiment");
    auto& ec = cfg.experiment;
    x.get("n_runs", ec.n_runs);
    x.get("disturbance_runs", cfg.disturbance_runs);
    x.get("horizon", ec.horizon);
    x.get("ic_low", ec.ic_low);
    x.get("ic_high", ec.ic_high);
    x.get("saturation", ec.saturation);
    x.get("noise_var", ec.noise_var);
    x.get("disturbance_bound", ec.disturbance_bound);
    x.get("settle_threshold", ec.settle_threshold);
    x.get("settle_time", ec.settle_time);
    x.finish();
    ec.dt_sim = ex.dt_sim;
    ec.dt_sample = ex.dt_sample;

    top.finish();
  } catch (const ConfigError& err) {
    throw ConfigError(origin + ": " + err.what());
  }
  try {
    cfg.validate();
  } catch (const ConfigError& err) {
    throw ConfigError(origin + ": " + err.what());
  }
  return cfg;
}

PipelineConfig validate_config(const fs::path& path) {
  if (!fs::exists(path)) {
    throw ConfigError("config file '" + path.string() + "' does not exist");
  }
  std::string text;
  try {
    text = io::read_text(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text, path.string());
}

std::string config_to_json(const PipelineConfig& cfg) {
  const Json j{{"seed", cfg.seed},
               {"output_dir", cfg.output_dir.string()},
               {"plant", plant_json(cfg.plant)},
               {"excitation", excitation_json(cfg)},
               {"training", training_json(cfg)},
               {"analysis", analysis_json(cfg.analysis)},
               {"synthesis", synthesis_json(cfg.synthesis)},
               {"experiment", experiment_json(cfg)}};
  return j.dump(2) + "\n";
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::kGenerate: return "generate";
    case Stage::kTrain: return "train";
    case Stage::kAnalyze: return "analyze";
    case Stage::kSynthesize: return "synthesize";
    case Stage::kSimulate: return "simulate";
    case Stage::kReport: return "report";
  }
  return "unknown";
}

Stage stage_from_string(const std::string& s) {
  for (Stage st : all_stages()) {
    if (to_string(st) == s) return st;
  }
  throw InvalidArgument("unknown stage '" + s + "'");
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> stages = {
      Stage::kGenerate, Stage::kTrain,    Stage::kAnalyze,
      Stage::kSynthesize, Stage::kSimulate, Stage::kReport};
  return stages;
}

std::uint64_t component_seed(const PipelineConfig& cfg, const char* name) {
  return derive_seed(cfg.seed, name);
}

StageResult run_stage(Stage stage, const PipelineConfig& cfg,
                      std::ostream* log) {
  cfg.validate();
  Workspace ws(cfg.output_dir);
  const Logger logger(log, stage);
  StageResult r;
  r.stage = stage;
  const auto t0 = std::chrono::steady_clock::now();
  switch (stage) {
    case Stage::kGenerate: stage_generate(cfg, ws, r, logger); break;
    case Stage::kTrain: stage_train(cfg, ws, r, logger); break;
    case Stage::kAnalyze: stage_analyze(cfg, ws, r, logger); break;
    case Stage::kSynthesize: stage_synthesize(cfg, ws, r, logger); break;
    case Stage::kSimulate: stage_simulate(cfg, ws, r, logger); break;
    case Stage::kReport: stage_report(cfg, ws, r, logger); break;
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                            t0)
                  .count();
  logger("done in ", r.seconds, " s, ", r.artifacts.size(), " artifacts");
  return r;
}

std::vector<StageResult> run_all(const PipelineConfig& cfg,
                                 std::ostream* log) {
  std::vector<StageResult> out;
  for (Stage s : all_stages()) out.push_back(run_stage(s, cfg, log));
  return out;
}

}  // namespace ssmctrl::pipeline
