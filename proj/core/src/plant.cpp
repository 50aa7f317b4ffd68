#include "ssmctrl/plant.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "ssmctrl/errors.hpp"
#include "ssmctrl/seeding.hpp"

namespace ssmctrl::plant {
namespace {

double sgn(double x) { return (x > 0.0) - (x < 0.0); }

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

}  // namespace

void PlantParams::validate() const {
  auto positive = [](double v, const char* name) {
    require(std::isfinite(v) && v > 0.0,
            std::string("PlantParams.") + name + " must be > 0");
  };
  auto nonneg = [](double v, const char* name) {
    require(std::isfinite(v) && v >= 0.0,
            std::string("PlantParams.") + name + " must be >= 0");
  };
  positive(R_a, "R_a");
  positive(L_a, "L_a");
  positive(K_m, "K_m");
  positive(J_m, "J_m");
  positive(J_L, "J_L");
  positive(k_s, "k_s");
  nonneg(B_m, "B_m");
  nonneg(B_L, "B_L");
  nonneg(B_s, "B_s");
  nonneg(v_dz, "v_dz");
  nonneg(a0, "a0");
  require(std::isfinite(b0), "PlantParams.b0 must be finite");
}

PlantState& PlantState::operator+=(const PlantState& o) {
  i_a += o.i_a;
  w_m += o.w_m;
  w_L += o.w_L;
  twist += o.twist;
  return *this;
}

bool PlantState::is_finite() const {
  return std::isfinite(i_a) && std::isfinite(w_m) && std::isfinite(w_L) &&
         std::isfinite(twist);
}

double dead_zone(double v, double v_dz) {
  if (std::abs(v) < v_dz) return 0.0;
  return v - sgn(v) * v_dz;
}

double coulomb_friction(double w, double a0, double b0) {
  return a0 * sgn(b0 * w);
}

PlantState plant_derivative(const PlantState& s, double v_a, double T_d,
                            const PlantParams& p) {
  const double v_eff = dead_zone(v_a, p.v_dz);
  const double back_emf = p.K_m * s.w_m;
  const double T_m = p.K_m * s.i_a;
  const double T_s = p.k_s * s.twist + p.B_s * (s.w_m - s.w_L);

  PlantState d;
  d.i_a = (v_eff - p.R_a * s.i_a - back_emf) / p.L_a;
  d.w_m = (T_m - T_s - p.B_m * s.w_m - coulomb_friction(s.w_m, p.a0, p.b0)) /
          p.J_m;
  d.w_L = (T_s - p.B_L * s.w_L - T_d - coulomb_friction(s.w_L, p.a0, p.b0)) /
          p.J_L;
  d.twist = s.w_m - s.w_L;
  return d;
}

PlantState plant_step(const PlantState& s, double v_a, double T_d,
                      const PlantParams& p, double dt_sim) {
  if (!(dt_sim > 0.0)) throw InvalidArgument("plant_step: dt_sim must be > 0");
  const PlantState k1 = plant_derivative(s, v_a, T_d, p);
  const PlantState k2 = plant_derivative(s + (0.5 * dt_sim) * k1, v_a, T_d, p);
  const PlantState k3 = plant_derivative(s + (0.5 * dt_sim) * k2, v_a, T_d, p);
  const PlantState k4 = plant_derivative(s + dt_sim * k3, v_a, T_d, p);
  PlantState next = s + (dt_sim / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.is_finite()) {
    throw NumericalBlowUp("plant_step: non-finite state");
  }
  return next;
}

double stored_energy(const PlantState& s, const PlantParams& p) {
  return 0.5 * (p.L_a * s.i_a * s.i_a + p.J_m * s.w_m * s.w_m +
                p.J_L * s.w_L * s.w_L + p.k_s * s.twist * s.twist);
}

int ExcitationConfig::substeps() const {
  require(dt_sim > 0.0 && dt_sample > 0.0,
          "ExcitationConfig: time steps must be > 0");
  const double ratio = dt_sample / dt_sim;
  const double rounded = std::round(ratio);
  require(rounded >= 1.0 && std::abs(ratio - rounded) < 1e-9 * ratio,
          "ExcitationConfig: dt_sample must be an integer multiple of dt_sim");
  return static_cast<int>(rounded);
}

void ExcitationConfig::validate() const {
  require(lfsr_order >= 2 && lfsr_order <= 32,
          "ExcitationConfig.lfsr_order must be in [2, 32]");
  require(!lfsr_taps.empty(), "ExcitationConfig.lfsr_taps is empty");
  require(std::isfinite(amplitude) && amplitude > 0.0,
          "ExcitationConfig.amplitude must be > 0");
  require(hold_samples >= 1, "ExcitationConfig.hold_samples must be >= 1");
  require(n_samples >= 1, "ExcitationConfig.n_samples must be >= 1");
  substeps();
}

Lfsr::Lfsr(int order, std::vector<int> taps, std::uint64_t seed)
    : order_(order), taps_(std::move(taps)) {
  require(order_ >= 2 && order_ <= 63, "Lfsr: order out of range");
  require(!taps_.empty(), "Lfsr: no taps");
  for (int t : taps_) {
    require(t >= 1 && t <= order_, "Lfsr: tap outside [1, order]");
  }
  require(*std::max_element(taps_.begin(), taps_.end()) == order_,
          "Lfsr: highest tap must equal the order");
  const std::uint64_t mask = (std::uint64_t{1} << order_) - 1;
  state_ = seed & mask;
  if (state_ == 0) throw InvalidArgument("Lfsr: all-zero seed");
}

int Lfsr::next_bit() {
  // Stage k (1-based) lives in bit k-1; the output is the last stage.
  const int out = static_cast<int>((state_ >> (order_ - 1)) & 1U);
  std::uint64_t fb = 0;
  for (int t : taps_) fb ^= (state_ >> (t - 1)) & 1U;
  const std::uint64_t mask = (std::uint64_t{1} << order_) - 1;
  state_ = ((state_ << 1) | fb) & mask;
  return out;
}

std::uint64_t lfsr_period(int order, const std::vector<int>& taps) {
  Lfsr lfsr(order, taps, 1);
  const std::uint64_t start = lfsr.state();
  const std::uint64_t limit = std::uint64_t{1} << order;
  for (std::uint64_t n = 1; n <= limit; ++n) {
    lfsr.next_bit();
    if (lfsr.state() == start) return n;
  }
  return 0;
}

std::vector<double> generate_prbs(const ExcitationConfig& cfg) {
  cfg.validate();
  if (cfg.lfsr_order <= 24) {
    const std::uint64_t full = (std::uint64_t{1} << cfg.lfsr_order) - 1;
    if (lfsr_period(cfg.lfsr_order, cfg.lfsr_taps) != full) {
      throw InvalidArgument("generate_prbs: taps are not maximal-length");
    }
  }
  Lfsr lfsr(cfg.lfsr_order, cfg.lfsr_taps, cfg.seed);
  std::vector<double> out;
  out.reserve(cfg.n_samples);
  int bit = 0;
  for (int k = 0; k < cfg.n_samples; ++k) {
    if (k % cfg.hold_samples == 0) bit = lfsr.next_bit();
    out.push_back(bit ? cfg.amplitude : -cfg.amplitude);
  }
  return out;
}

void Trajectory::validate() const {
  require(outputs.size() == inputs.size() &&
              outputs_clean.size() == inputs.size(),
          "Trajectory: inputs/outputs/outputs_clean lengths differ");
  require(states.empty() || states.size() == inputs.size(),
          "Trajectory: states length differs from inputs");
  require(dt_sample > 0.0, "Trajectory: dt_sample must be > 0");
}

Trajectory simulate_open_loop(const PlantParams& p,
                              const std::vector<double>& inputs,
                              double dt_sim, double dt_sample,
                              bool record_states) {
  p.validate();
  ExcitationConfig timing;
  timing.dt_sim = dt_sim;
  timing.dt_sample = dt_sample;
  const int substeps = timing.substeps();

  Trajectory traj;
  traj.dt_sample = dt_sample;
  traj.inputs = inputs;
  traj.outputs_clean.reserve(inputs.size());
  PlantState s;
  for (double v : inputs) {
    traj.outputs_clean.push_back(s.w_L);
    if (record_states) traj.states.push_back(s);
    for (int j = 0; j < substeps; ++j) s = plant_step(s, v, 0.0, p, dt_sim);
  }
  traj.outputs = traj.outputs_clean;
  return traj;
}

std::vector<Trajectory> generate_dataset(const PlantParams& p,
                                         const ExcitationConfig& cfg,
                                         double noise_var, int n_traj,
                                         std::uint64_t rng_seed,
                                         bool record_states) {
  if (!(noise_var >= 0.0) || !std::isfinite(noise_var)) {
    throw InvalidArgument("generate_dataset: noise_var must be >= 0");
  }
  if (n_traj < 1) throw InvalidArgument("generate_dataset: n_traj must be >= 1");
  p.validate();
  cfg.validate();

  const std::uint64_t period = (std::uint64_t{1} << cfg.lfsr_order) - 1;
  std::vector<Trajectory> out;
  out.reserve(n_traj);
  for (int i = 0; i < n_traj; ++i) {
    ExcitationConfig c = cfg;
    c.seed = 1 + derive_seed(rng_seed, "prbs", i) % period;
    Trajectory traj = simulate_open_loop(p, generate_prbs(c), cfg.dt_sim,
                                         cfg.dt_sample, record_states);
    if (noise_var > 0.0) {
      std::mt19937_64 rng(derive_seed(rng_seed, "noise", i));
      std::normal_distribution<double> noise(0.0, std::sqrt(noise_var));
      for (double& y : traj.outputs) y += noise(rng);
    }
    out.push_back(std::move(traj));
  }
  return out;
}

}  // namespace ssmctrl::plant
