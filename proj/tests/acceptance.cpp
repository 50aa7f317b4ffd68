// End-to-end acceptance run. Executes the full pipeline twice on one config
// and checks the twelve acceptance criteria, printing one PASS/FAIL line per
// criterion. Tolerances are fixed below.
//
//   ssmctrl_acceptance --config configs/default.json --work DIR
//                      [--known-unattainable N ...]
//
// Exit status is 0 when every failing criterion is listed as known
// unattainable, 1 otherwise.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ssmctrl/analysis.hpp"
#include "ssmctrl/closedloop.hpp"
#include "ssmctrl/errors.hpp"
#include "ssmctrl/io.hpp"
#include "ssmctrl/pipeline.hpp"
#include "ssmctrl/plant.hpp"
#include "ssmctrl/seeding.hpp"
#include "ssmctrl/ssm.hpp"
#include "ssmctrl/synthesis.hpp"
#include "ssmctrl/train.hpp"

namespace {

using namespace ssmctrl;
namespace fs = std::filesystem;
using Json = nlohmann::json;
using Clock = std::chrono::steady_clock;

// Pinned tolerances and limits.
constexpr double kNonlinearityRuntime = 1.0;       // s
constexpr double kIdentificationNrmse = 0.20;
constexpr double kTrainingRuntime = 15.0 * 60.0;   // s
constexpr double kSlopeGridTol = 1e-12;
constexpr int kSlopeGridPoints = 10000;
constexpr double kSlopeGridLo = -10.0;
constexpr double kSlopeGridHi = 10.0;
constexpr int kGramianHorizon = 16;
constexpr double kGramianRank = 1e-9;
constexpr int kSandwichDraws = 100;
constexpr double kSandwichTol = 1e-9;
constexpr double kLmiEigTol = 1e-8;
constexpr double kRecoveryTol = 1e-10;
constexpr int kCertificateDraws = 1000;
constexpr double kCertificateRuntime = 30.0;       // s
constexpr int kOracleGridPoints = 100000;
constexpr double kRateAllowance = 0.05;
constexpr double kCorrectnessTol = 1e-12;
constexpr int kSeparationRuns = 10;
constexpr double kEnvelopeSlack = 1e-9;
constexpr double kTerminalRatio = 1e-3;
constexpr int kDisturbanceRuns = 100;
constexpr double kDisturbanceBound = 0.1;
constexpr double kLemmaSlack = 1e-9;
constexpr int kPlantRuns = 10;
constexpr int kPlantRequired = 9;
constexpr double kSettleThreshold = 0.2;           // rad/s
constexpr double kSettleTime = 2.0;                // s
constexpr double kPlantRuntime = 120.0;            // s

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Json read_json(const fs::path& p) { return Json::parse(io::read_text(p)); }

// Everything the criteria need from one finished pipeline run.
struct Run {
  pipeline::PipelineConfig cfg;
  fs::path dir;
  std::map<pipeline::Stage, double> seconds;
  ssm::SsmModel model;
  synthesis::GainSet gains;
};

Run run_pipeline(const pipeline::PipelineConfig& base, const fs::path& dir) {
  Run r;
  r.cfg = base;
  r.cfg.output_dir = dir;
  r.dir = dir;
  fs::remove_all(dir);
  std::cerr << "running pipeline in " << dir << "\n";
  for (const auto& s : pipeline::run_all(r.cfg, &std::cerr)) {
    r.seconds[s.stage] = s.seconds;
  }
  r.model = io::model_from_json(io::read_text(dir / "model.json"));
  r.gains = io::gains_from_json(io::read_text(dir / "gains.json"));
  return r;
}

// Least-squares slope of log v_k against k over the prefix with
// v_k > 1e-10 v_0.
double log_slope(const std::vector<double>& v) {
  if (v.empty() || !(v[0] > 0.0)) return 0.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t k = 0; k < v.size() && v[k] > 1e-10 * v[0]; ++k) {
    const double x = static_cast<double>(k), y = std::log(v[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 2) return 0.0;
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

double relative(const Matrix& a, const Matrix& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

Outcome criterion_nonlinearity() {
  const auto t0 = Clock::now();
  bool ok = plant::dead_zone(0.3, 0.4) == 0.0 &&
            plant::dead_zone(1.0, 0.4) == 0.6 &&
            plant::dead_zone(-1.0, 0.4) == -0.6;
  ok = ok && plant::coulomb_friction(0.0, 1e-3, 1.0) == 0.0;
  for (double w : {1e-9, 0.5, 3.0, 250.0}) {
    ok = ok && plant::coulomb_friction(-w, 1e-3, 1.0) ==
                   -plant::coulomb_friction(w, 1e-3, 1.0);
  }
  const double dt = seconds_since(t0);
  return {ok && dt < kNonlinearityRuntime,
          std::string(ok ? "exact values" : "value mismatch") + ", " +
              num(dt) + " s"};
}

Outcome criterion_identification(const Run& r) {
  const Json rep = read_json(r.dir / "train_report.json");
  const auto& val = rep.at("val_indices");
  const auto& tc = r.cfg.training;
  double sum = 0.0, worst = 0.0;
  for (const auto& idx : val) {
    char name[64];
    std::snprintf(name, sizeof(name), "data/traj_%03d.csv", idx.get<int>());
    const auto traj = io::trajectory_from_csv(io::read_text(r.dir / name),
                                              r.cfg.excitation.dt_sample);
    const auto pred = train::predict(r.model, traj.inputs);
    const std::vector<double> p(pred.begin() + tc.washout, pred.end());
    const std::vector<double> y(traj.outputs_clean.begin() + tc.washout,
                                traj.outputs_clean.end());
    const double e = train::nrmse(p, y);
    sum += e;
    worst = std::max(worst, e);
  }
  const double mean = sum / static_cast<double>(val.size());
  const double secs = r.seconds.at(pipeline::Stage::kTrain);
  const int n_train = static_cast<int>(rep.at("train_indices").size());
  const bool setup = n_train == 20 && val.size() == 5 &&
                     r.cfg.excitation.n_samples == 2000 &&
                     r.cfg.dataset.noise_var == 0.02 && r.model.n_x() == 8 &&
                     r.model.s_u.hidden() == 32;
  return {setup && mean <= kIdentificationNrmse && secs <= kTrainingRuntime,
          "clean validation NRMSE mean " + num(mean) + " (worst " +
              num(worst) + ") on " + std::to_string(n_train) + "+" +
              std::to_string(val.size()) + " trajectories, training " +
              num(secs) + " s"};
}

Outcome criterion_bilipschitz(const Run& r) {
  const auto b = ssm::bilip_bounds(r.model.s_u);
  double lo = 1e300, hi = 0.0;
  int outside = 0;
  for (int i = 0; i < kSlopeGridPoints; ++i) {
    const double z = kSlopeGridLo + (kSlopeGridHi - kSlopeGridLo) * i /
                                        (kSlopeGridPoints - 1);
    const double d = std::abs(r.model.s_u.derivative(z));
    lo = std::min(lo, d);
    hi = std::max(hi, d);
    if (d < b.mu - kSlopeGridTol || d > b.nu + kSlopeGridTol) ++outside;
  }
  return {b.mu > 0.0 && b.mu <= b.nu && outside == 0,
          "mu_u " + num(b.mu) + ", nu_u " + num(b.nu) + ", grid slopes [" +
              num(lo) + ", " + num(hi) + "], " + std::to_string(outside) +
              " outside"};
}

Outcome criterion_gramians(const Run& r) {
  const auto& m = r.model;
  const auto bu = ssm::bilip_bounds(m.s_u);
  const auto by = ssm::bilip_bounds(m.s_y);
  auto scale_free = [](const Matrix& W) {
    const Vector ev = linalg::sym_eigenvalues(W);
    return ev.minCoeff() / ev.maxCoeff();
  };
  const auto wc = analysis::controllability_gramian(m.lru.A, m.lru.B, {},
                                                    kGramianHorizon);
  const auto wo = analysis::observability_gramian(m.lru.A, m.lru.C, {},
                                                  kGramianHorizon);
  const double rc = scale_free(wc.gramian), ro = scale_free(wo.gramian);
  const std::uint64_t seed = derive_seed(r.cfg.seed, "acceptance_sandwich");
  const auto sc = analysis::controllability_sandwich_sweep(
      m.lru.A, m.lru.B, kGramianHorizon, bu.mu, bu.nu, kSandwichDraws, seed);
  const auto so = analysis::observability_sandwich_sweep(
      m.lru.A, m.lru.C, kGramianHorizon, by.mu, by.nu, kSandwichDraws, seed);
  const bool sandwich = sc.holds(kSandwichTol) && so.holds(kSandwichTol);
  return {rc > kGramianRank && ro > kGramianRank && sandwich,
          "scale-free min eigenvalue controllability " + num(rc) +
              ", observability " + num(ro) + " (need > " + num(kGramianRank) +
              "); sandwich over " + std::to_string(kSandwichDraws) +
              " draws " + (sandwich ? "holds" : "violated")};
}

double worst_constraint_ratio(const sdp::SdpProblem& p, const Vector& x) {
  double worst = 1e300;
  for (const auto& c : p.constraints) {
    const Matrix F = c.expr.evaluate(x);
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (F + F.transpose()),
                                             Eigen::EigenvaluesOnly);
    const Vector ev = es.eigenvalues();
    const double scale = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    worst = std::min(worst, ev.minCoeff() / scale);
  }
  return worst;
}

Outcome criterion_synthesis(const Run& r) {
  const auto& m = r.model;
  const auto bu = ssm::bilip_bounds(m.s_u);
  const auto by = ssm::bilip_bounds(m.s_y);
  synthesis::SynthesisConfig sc = r.cfg.synthesis;
  sc.seed = pipeline::component_seed(r.cfg, "synthesis");
  synthesis::SynthesisResult res;
  try {
    res = synthesis::synthesize(m.lru.A, m.lru.B, m.lru.C, bu.mu, bu.nu, by.mu,
                                by.nu, sc);
  } catch (const Error& e) {
    return {false, std::string("synthesis failed: ") + e.what()};
  }
  const double wc = worst_constraint_ratio(res.controller_problem,
                                           res.controller_search.solution.x);
  const double wo = worst_constraint_ratio(res.observer_problem,
                                           res.observer_search.solution.x);
  const auto& g = res.gains;
  const double rk = relative(g.K * g.Y, g.X);
  const double rl = relative(g.U * g.L, g.V);
  const bool shipped = g.K == r.gains.K && g.L == r.gains.L;
  const bool ok = res.controller_search.solution.feasible() &&
                  res.observer_search.solution.feasible() &&
                  wc >= -kLmiEigTol && wo >= -kLmiEigTol &&
                  rk <= kRecoveryTol && rl <= kRecoveryTol && shipped;
  return {ok, "rho_c " + num(g.rho_c) + ", rho_o " + num(g.rho_o) +
                  ", worst relative constraint eigenvalue " +
                  num(std::min(wc, wo)) + ", residuals KY-X " + num(rk) +
                  ", UL-V " + num(rl) +
                  (shipped ? "" : ", shipped gains differ")};
}

struct Certificates {
  synthesis::CertificateReport controller, observer;
};

Outcome criterion_certificates(const Run& r, Certificates& out) {
  const auto& m = r.model;
  const auto& g = r.gains;
  const std::uint64_t seed = pipeline::component_seed(r.cfg, "experiment");
  const auto t0 = Clock::now();
  out.controller = synthesis::verify_controller_certificate(
      m.lru.A, m.lru.B, g.K, g.P, g.mu_u, g.nu_u, g.rho_c, kCertificateDraws,
      derive_seed(seed, "controller_certificate"));
  out.observer = synthesis::verify_observer_certificate(
      m.lru.A, m.lru.C, g.L, g.Q, g.mu_y, g.nu_y, g.rho_o, kCertificateDraws,
      derive_seed(seed, "observer_certificate"));
  const double dt = seconds_since(t0);
  auto describe = [](const synthesis::CertificateReport& c) {
    std::string s;
    for (const auto& v : c.metrics) {
      if (!s.empty()) s += ", ";
      s += v.metric + " " + num(v.worst_eigenvalue);
    }
    return s;
  };
  return {out.controller.holds() && out.observer.holds() &&
              dt < kCertificateRuntime,
          "controller {" + describe(out.controller) + "}, observer {" +
              describe(out.observer) + "}, " +
              std::to_string(out.controller.samples) + " samples, " + num(dt) +
              " s"};
}

Outcome criterion_scalar_oracle() {
  // Spans open-loop stable and unstable a, with and without actuation.
  const std::vector<double> as{-1.6, -0.97, -0.5, 0.0, 0.3, 0.75, 0.9,
                               0.985, 1.2, 2.5};
  const std::vector<double> bs{0.0, 0.4, 1.0, -2.0};
  const std::vector<double> grid = synthesis::SynthesisConfig{}.rho_c_grid;
  int disagreements = 0, cases = 0;
  for (double a : as) {
    for (double b : bs) {
      // min over a uniform k-grid on [-10, 10] of (a + b k)^2.
      double best = 1e300;
      for (int i = 0; i < kOracleGridPoints; ++i) {
        const double k = -10.0 + 20.0 * i / (kOracleGridPoints - 1);
        best = std::min(best, (a + b * k) * (a + b * k));
      }
      for (double rho : grid) {
        const bool oracle = best <= 1.0 - rho;
        const Matrix A = Matrix::Constant(1, 1, a);
        const Matrix B = Matrix::Constant(1, 1, b);
        const auto sol = sdp::solve_sdp(synthesis::assemble_controller_lmi(
            A, B, 1.0, 1.0, rho, std::max(synthesis::default_epsilon(A), 1e-6)));
        if (sol.feasible() != oracle) {
          ++disagreements;
          std::cerr << "oracle disagreement a=" << a << " b=" << b
                    << " rho=" << rho << " oracle=" << oracle << "\n";
        }
        ++cases;
      }
    }
  }
  return {disagreements == 0, std::to_string(cases) + " cases, " +
                                  std::to_string(disagreements) +
                                  " disagreements"};
}

closedloop::ExperimentConfig experiment_config(const Run& r) {
  closedloop::ExperimentConfig ec = r.cfg.experiment;
  ec.seed = pipeline::component_seed(r.cfg, "experiment");
  return ec;
}

struct SeparationData {
  closedloop::SeparationReport report;
  analysis::Metric controller, observer;
};

Outcome criterion_observer(const Run& r, const SeparationData& s) {
  const auto& m = r.model;
  const double bound = 0.5 * std::log(1.0 - r.gains.rho_o) + kRateAllowance;
  double worst = -1e300;
  for (const auto& run : s.report.runs) {
    std::vector<double> e;
    for (std::size_t k = 0; k < run.trace.size(); ++k) {
      e.push_back(analysis::riemannian_distance(run.trace.xhat[k],
                                                run.trace.x[k], s.observer));
    }
    worst = std::max(worst, log_slope(e));
  }
  const auto ec = experiment_config(r);
  double max_err = 0.0;
  for (int i = 0; i < kSeparationRuns; ++i) {
    const Vector x0 = closedloop::sample_ball(
        m.n_x(), 1.0, derive_seed(ec.seed, "acceptance_correctness", i));
    const auto tr = closedloop::run_output_feedback_ssm(m, r.gains, x0, x0,
                                                        ec.horizon);
    for (std::size_t k = 0; k < tr.size(); ++k) {
      max_err = std::max(max_err, (tr.x[k] - tr.xhat[k]).norm());
    }
  }
  return {static_cast<int>(s.report.runs.size()) == kSeparationRuns &&
              worst <= bound && max_err <= kCorrectnessTol,
          "worst fitted rate " + num(worst) + " (bound " + num(bound) +
              "), matched-start error " + num(max_err)};
}

Outcome criterion_separation(const Run& r, const SeparationData& s) {
  const double rc = std::sqrt(1.0 - r.gains.rho_c);
  const double ro = std::sqrt(1.0 - r.gains.rho_o);
  int violations = 0;
  double worst_terminal = 0.0;
  for (const auto& run : s.report.runs) {
    const auto& tr = run.trace;
    const double d0 = analysis::riemannian_distance(
        tr.x[0], Vector::Zero(tr.x[0].size()), s.controller);
    double pc = 1.0, po = 1.0, sum = 0.0;
    for (std::size_t k = 0; k < tr.size(); ++k) {
      const double d = analysis::riemannian_distance(
          tr.x[k], Vector::Zero(tr.x[k].size()), s.controller);
      if (d > pc * d0 + run.c * sum + kEnvelopeSlack) ++violations;
      sum = rc * sum + po;
      pc *= rc;
      po *= ro;
    }
    worst_terminal = std::max(worst_terminal,
                              tr.x.back().norm() / tr.x.front().norm());
  }
  return {static_cast<int>(s.report.runs.size()) == kSeparationRuns &&
              violations == 0 && worst_terminal <= kTerminalRatio,
          std::to_string(s.report.runs.size()) + " runs, " +
              std::to_string(violations) +
              " envelope violations, worst terminal ratio " +
              num(worst_terminal)};
}

Outcome criterion_disturbance(const Run& r, const analysis::Metric& g) {
  const auto& m = r.model;
  const auto ec = experiment_config(r);
  const double rc = std::sqrt(1.0 - r.gains.rho_c);
  const int n = m.n_x();
  int violations = 0;
  long checks = 0;
  double worst = -1e300;
  for (int run = 0; run < kDisturbanceRuns; ++run) {
    std::vector<Vector> w;
    for (int k = 0; k <= ec.horizon; ++k) {
      w.push_back(closedloop::sample_ball(
          n, kDisturbanceBound,
          derive_seed(derive_seed(ec.seed, "acceptance_w", run), "k", k)));
    }
    const Vector x0 = closedloop::sample_ball(
        n, 1.0, derive_seed(ec.seed, "acceptance_dx0", run));
    const Vector z0 = closedloop::sample_ball(
        n, 1.0, derive_seed(ec.seed, "acceptance_dz0", run));
    const auto pert =
        closedloop::run_state_feedback_ssm(m, r.gains.K, x0, w, ec.horizon);
    const auto nom =
        closedloop::run_state_feedback_ssm(m, r.gains.K, z0, {}, ec.horizon);
    for (int k = 0; k < ec.horizon; ++k) {
      const double d0 = analysis::riemannian_distance(pert.x[k], nom.x[k], g);
      const double d1 =
          analysis::riemannian_distance(pert.x[k + 1], nom.x[k + 1], g);
      const double slack = d1 - (rc * d0 + g.c_theta * w[k].norm());
      worst = std::max(worst, slack);
      if (slack > kLemmaSlack) ++violations;
      ++checks;
    }
  }
  return {violations == 0,
          std::to_string(kDisturbanceRuns) + " runs, " +
              std::to_string(checks) + " steps, " +
              std::to_string(violations) + " violations, worst slack " +
              num(worst)};
}

Outcome criterion_plant(const Run& r) {
  auto ec = experiment_config(r);
  ec.n_runs = kPlantRuns;
  const auto t0 = Clock::now();
  const auto rep = closedloop::plant_experiment(r.cfg.plant, r.model, r.gains,
                                                ec);
  const double dt = seconds_since(t0);
  int settled = 0;
  double latest = 0.0;
  std::string speeds;
  for (const auto& run : rep.runs) {
    const auto& tr = run.trace;
    // First sample after which |w_L| stays below the threshold.
    std::size_t first = tr.size();
    while (first > 0 && std::abs(tr.x[first - 1](2)) < kSettleThreshold) {
      --first;
    }
    const bool ok = run.diverged_at == 0 && first < tr.size() &&
                    tr.t[first] <= kSettleTime + 1e-12;
    if (ok) {
      ++settled;
      latest = std::max(latest, tr.t[first]);
    }
    if (!speeds.empty()) speeds += " ";
    speeds += num(run.initial_speed);
  }
  const bool params = r.cfg.plant.R_a == 3.3 && r.cfg.plant.L_a == 2.75e-3 &&
                      r.cfg.plant.K_m == 3.24e-2 && r.cfg.plant.J_m == 1.16e-4 &&
                      r.cfg.plant.J_L == 4e-4 && r.cfg.plant.k_s == 1.35 &&
                      r.cfg.plant.B_m == 1e-4 && r.cfg.plant.B_L == 1e-4 &&
                      r.cfg.plant.v_dz == 0.4 && ec.ic_low == -4.0 &&
                      ec.ic_high == 4.0;
  return {params && settled >= kPlantRequired && dt < kPlantRuntime,
          std::to_string(settled) + "/" + std::to_string(rep.runs.size()) +
              " settled, latest settle " + num(latest) + " s, initial speeds [" +
              speeds + "], " + num(dt) + " s"};
}

std::map<std::string, std::string> artifacts(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension();
    if (ext != ".csv" && ext != ".json") continue;
    out[fs::relative(e.path(), dir).generic_string()] = io::read_text(e.path());
  }
  return out;
}

Outcome criterion_reproducibility(const Run& a, const Run& b) {
  const auto fa = artifacts(a.dir), fb = artifacts(b.dir);
  int differ = 0;
  std::string first;
  for (const auto& [name, text] : fa) {
    const auto it = fb.find(name);
    if (it == fb.end() || it->second != text) {
      if (first.empty()) first = name;
      ++differ;
    }
  }
  for (const auto& [name, text] : fb) {
    if (!fa.count(name)) {
      if (first.empty()) first = name;
      ++differ;
    }
  }
  return {differ == 0 && !fa.empty(),
          std::to_string(fa.size()) + " CSV/JSON artifacts compared, " +
              std::to_string(differ) + " differ" +
              (first.empty() ? "" : " (first: " + first + ")")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ssmctrl acceptance criteria"};
  std::string config_path;
  std::string work = "acceptance_work";
  std::vector<int> known;
  app.add_option("--config", config_path, "pipeline config")->required();
  app.add_option("--work", work, "scratch directory for the two runs");
  app.add_option("--known-unattainable", known,
                 "criteria whose failure does not fail the exit status");
  CLI11_PARSE(app, argc, argv);

  std::vector<std::pair<int, Outcome>> results;
  auto record = [&](int id, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    results.emplace_back(id, o);
  };

  pipeline::PipelineConfig cfg;
  try {
    cfg = pipeline::validate_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  record(1, criterion_nonlinearity);

  Run a, b;
  bool have_a = false, have_b = false;
  std::string run_error;
  try {
    a = run_pipeline(cfg, fs::path(work) / "run_a");
    have_a = true;
    b = run_pipeline(cfg, fs::path(work) / "run_b");
    have_b = true;
  } catch (const std::exception& e) {
    run_error = e.what();
    std::cerr << "pipeline failed: " << run_error << "\n";
  }
  auto need_a = [&](const std::function<Outcome()>& f) {
    return [&, f]() -> Outcome {
      if (!have_a) return {false, "pipeline failed: " + run_error};
      return f();
    };
  };

  Certificates certs;
  SeparationData sep;
  bool have_sep = false;

  record(2, need_a([&] { return criterion_identification(a); }));
  record(3, need_a([&] { return criterion_bilipschitz(a); }));
  record(4, need_a([&] { return criterion_gramians(a); }));
  record(5, need_a([&] { return criterion_synthesis(a); }));
  record(6, need_a([&] { return criterion_certificates(a, certs); }));
  record(7, criterion_scalar_oracle);
  if (have_a && !certs.controller.metrics.empty()) {
    try {
      sep.controller = closedloop::certified_metric(certs.controller, a.gains.P);
      sep.observer = closedloop::certified_metric(certs.observer, a.gains.Q);
      auto ec = experiment_config(a);
      ec.n_runs = kSeparationRuns;
      sep.report = closedloop::separation_experiment(a.model, a.gains,
                                                     sep.controller,
                                                     sep.observer, ec);
      have_sep = true;
    } catch (const std::exception& e) {
      std::cerr << "separation experiment failed: " << e.what() << "\n";
    }
  }
  auto need_sep = [&](const std::function<Outcome()>& f) {
    return [&, f]() -> Outcome {
      if (!have_sep) return {false, "no certified metric for the shipped gains"};
      return f();
    };
  };
  record(8, need_sep([&] { return criterion_observer(a, sep); }));
  record(9, need_sep([&] { return criterion_separation(a, sep); }));
  record(10, need_sep([&] { return criterion_disturbance(a, sep.controller); }));
  record(11, need_a([&] { return criterion_plant(a); }));
  record(12, [&]() -> Outcome {
    if (!have_a || !have_b) return {false, "pipeline failed: " + run_error};
    return criterion_reproducibility(a, b);
  });

  const std::map<int, std::string> names = {
      {1, "nonlinearity units"},      {2, "identification"},
      {3, "bi-Lipschitz extraction"}, {4, "Gramian rank and sandwich"},
      {5, "LMI synthesis"},           {6, "certificate sweep"},
      {7, "scalar oracle"},           {8, "observer convergence"},
      {9, "separation envelope"},     {10, "disturbance bound"},
      {11, "plant regulation"},       {12, "reproducibility"}};
  const std::set<int> allowed(known.begin(), known.end());
  int unexpected = 0, passed = 0;
  for (const auto& [id, o] : results) {
    std::string tag = o.pass ? "PASS" : "FAIL";
    if (!o.pass && allowed.count(id)) tag = "FAIL (known unattainable)";
    if (o.pass) ++passed;
    if (!o.pass && !allowed.count(id)) ++unexpected;
    std::cout << "[" << tag << "] " << id << ". " << names.at(id) << ": "
              << o.detail << "\n";
  }
  std::cout << passed << "/" << results.size() << " criteria passed";
  if (unexpected > 0) std::cout << ", " << unexpected << " unexpected failures";
  std::cout << "\n";
  return unexpected == 0 ? 0 : 1;
}
