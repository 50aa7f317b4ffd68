#pragma once

#include <cstdint>
#include <vector>

namespace ssmctrl::plant {

// Nonlinear DC motor driving an elastically coupled load.
//
//   L_a di_a/dt = dz(v_a) - R_a i_a - K_m w_m
//   J_m dw_m/dt = K_m i_a - T_s - B_m w_m - T_f(w_m)
//   J_L dw_L/dt = T_s - B_L w_L - T_d - T_f(w_L)
//   d(twist)/dt = w_m - w_L,    T_s = k_s twist + B_s (w_m - w_L)
struct PlantParams {
  double R_a = 3.3;        // Ohm
  double L_a = 2.75e-3;    // H
  double K_m = 3.24e-2;    // N m / A
  double J_m = 1.16e-4;    // kg m^2
  double J_L = 4.0e-4;     // kg m^2
  double k_s = 1.35;       // N m / rad
  double B_s = 1e-4;       // N m s / rad
  double B_m = 1e-4;       // N m s / rad
  double B_L = 1e-4;       // N m s / rad
  double v_dz = 0.4;       // V
  double a0 = 1e-3;        // N m
  double b0 = 1.0;         // 1 / (rad/s)

  // Throws InvalidArgument naming the offending field.
  void validate() const;
};

struct PlantState {
  double i_a = 0.0;    // A
  double w_m = 0.0;    // rad/s
  double w_L = 0.0;    // rad/s
  double twist = 0.0;  // theta_m - theta_L, rad

  PlantState& operator+=(const PlantState& o);
  friend PlantState operator+(PlantState a, const PlantState& b) {
    return a += b;
  }
  friend PlantState operator*(double s, PlantState a) {
    a.i_a *= s;
    a.w_m *= s;
    a.w_L *= s;
    a.twist *= s;
    return a;
  }
  bool operator==(const PlantState&) const = default;
  bool is_finite() const;
};

double dead_zone(double v, double v_dz);

// a0 sgn(b0 w), sgn(0) = 0.
double coulomb_friction(double w, double a0, double b0);

// Time derivative of the state. The dead zone is applied to v_a.
PlantState plant_derivative(const PlantState& s, double v_a, double T_d,
                            const PlantParams& p);

// One classical RK4 step with v_a and T_d held constant. Throws
// NumericalBlowUp if the result is not finite.
PlantState plant_step(const PlantState& s, double v_a, double T_d,
                      const PlantParams& p, double dt_sim);

// Stored electrical + kinetic + elastic energy.
double stored_energy(const PlantState& s, const PlantParams& p);

struct ExcitationConfig {
  int lfsr_order = 10;
  std::vector<int> lfsr_taps = {10, 7};
  std::uint64_t seed = 1;
  double amplitude = 5.0;      // V
  int hold_samples = 5;
  int n_samples = 2000;
  double dt_sim = 5e-5;        // s
  double dt_sample = 1e-3;     // s

  // Number of integration substeps per sample; throws if dt_sample is not an
  // integer multiple of dt_sim.
  int substeps() const;
  void validate() const;
};

// Fibonacci LFSR over GF(2). Taps are 1-based stage indices; the highest tap
// must equal the order.
class Lfsr {
 public:
  Lfsr(int order, std::vector<int> taps, std::uint64_t seed);
  int next_bit();
  std::uint64_t state() const { return state_; }
  int order() const { return order_; }

 private:
  int order_;
  std::vector<int> taps_;
  std::uint64_t state_;
};

// Period of the LFSR started from state 1 (bounded by 2^order).
std::uint64_t lfsr_period(int order, const std::vector<int>& taps);

// +/- amplitude sequence of length n_samples, each LFSR bit held for
// hold_samples samples. Rejects a zero seed and non-maximal taps.
std::vector<double> generate_prbs(const ExcitationConfig& cfg);

struct Trajectory {
  std::vector<double> inputs;
  std::vector<double> outputs;
  std::vector<double> outputs_clean;
  std::vector<PlantState> states;  // empty unless recorded
  double dt_sample = 1e-3;

  std::size_t size() const { return inputs.size(); }
  void validate() const;
};

// Simulates the plant from rest under a known input sequence, sampling
// y = w_L at the start of every hold interval.
Trajectory simulate_open_loop(const PlantParams& p,
                              const std::vector<double>& inputs,
                              double dt_sim, double dt_sample,
                              bool record_states = false);

// n_traj PRBS experiments. Trajectory i uses an LFSR seed and a noise stream
// derived from (rng_seed, i) only.
std::vector<Trajectory> generate_dataset(const PlantParams& p,
                                         const ExcitationConfig& cfg,
                                         double noise_var, int n_traj,
                                         std::uint64_t rng_seed,
                                         bool record_states = false);

}  // namespace ssmctrl::plant
