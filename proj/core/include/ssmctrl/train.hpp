#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "ssmctrl/linalg.hpp"
#include "ssmctrl/plant.hpp"
#include "ssmctrl/ssm.hpp"

namespace ssmctrl::train {

// Lower bound on the rotation angle of every 2x2 block during training. A
// block with a vanishing angle is r I, which a single input cannot steer in
// both directions.
inline constexpr double kDefaultMinAngle = 3e-3;

struct TrainConfig {
  int epochs = 2000;
  double learning_rate = 1e-3;
  int batch_size = 4;
  int washout = 50;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double train_fraction = 0.8;
  double min_angle = kDefaultMinAngle;  // rad

  void validate() const;
};

struct TrainReport {
  std::vector<double> loss_curve;       // mean training loss per epoch
  std::vector<double> val_nrmse_curve;  // after each epoch
  double initial_val_nrmse = 0.0;
  double final_val_nrmse = 0.0;         // of the returned model
  int best_epoch = 0;                   // 0 means the initial model
  double wall_seconds = 0.0;
  std::vector<int> train_indices;
  std::vector<int> val_indices;
};

// Flat vector of trainable quantities for a scalar SSM with an
// LRU-parameterized A, a zero-anchored monotone scalar MLP S_u and an affine
// S_y. Layout:
//
//   nu_log[nb] tau[nb] B[n_x] C[n_x] D
//   log|W1|[h] log|W2|[h] b1[h] w_y b_y
//
// with theta_i = min_angle + exp(tau_i). Each hidden unit keeps a fixed sign
// s_i with W1_i = s_i exp(p_i) and W2_i = s_i exp(q_i), so every unit is
// nondecreasing and S_u' >= 0.01 sum |W1_i W2_i| > 0 holds for every
// parameter value.
class ParamLayout {
 public:
  explicit ParamLayout(const ssm::SsmModel& m,
                       double min_angle = kDefaultMinAngle);

  int size() const { return size_; }
  int n_x() const { return n_x_; }
  int hidden() const { return hidden_; }
  double min_angle() const { return min_angle_; }

  Vector pack(const ssm::SsmModel& m) const;
  // Writes p into a copy of `like`.
  ssm::SsmModel unpack(const Vector& p, const ssm::SsmModel& like) const;

  int nu_log() const { return 0; }
  int theta() const { return nb_; }
  int B() const { return 2 * nb_; }
  int C() const { return 2 * nb_ + n_x_; }
  int D() const { return 2 * nb_ + 2 * n_x_; }
  int log_w1() const { return D() + 1; }
  int log_w2() const { return log_w1() + hidden_; }
  int b1() const { return log_w2() + hidden_; }
  int w_y() const { return b1() + hidden_; }
  int b_y() const { return w_y() + 1; }

 private:
  int n_x_ = 0;
  int nb_ = 0;
  int hidden_ = 0;
  int size_ = 0;
  double min_angle_ = kDefaultMinAngle;
};

// Throws InvalidArgument unless m is a trainable scalar model (see
// ParamLayout).
void check_trainable(const ssm::SsmModel& m,
                     double min_angle = kDefaultMinAngle);

// Random trainable model. Output scaffolding is initialized to the sample
// standard deviation of y_scale so that predictions start at data scale.
ssm::SsmModel initial_model(int n_x, int hidden, double negative_slope,
                            std::uint64_t seed, double u_scale = 1.0,
                            double y_scale = 1.0, double dt_sample = 1e-3,
                            double min_angle = kDefaultMinAngle);

// Least-squares fit of C, D and the output bias for fixed recurrent and input
// parts, over samples k >= washout. The output weight is kept.
ssm::SsmModel fit_readout(const ssm::SsmModel& m,
                          std::span<const plant::Trajectory> data,
                          int washout);

// Rescales the state coordinates of each 2x2 block by a scalar so that the
// block's k1-step controllability and observability Gramian traces agree. A,
// the parameterization and the input-output map are unchanged.
ssm::SsmModel balance_blocks(const ssm::SsmModel& m, int k1);

// Mean of (y_pred - y_meas)^2 over samples k >= washout, from x0 = 0.
double mse_loss(const ssm::SsmModel& m, const plant::Trajectory& traj,
                int washout);

// Mean of mse_loss over the batch.
double batch_loss(const ssm::SsmModel& m,
                  std::span<const plant::Trajectory> batch, int washout);

// Exact gradient of loss_scale * batch_loss with respect to the ParamLayout
// vector, by backpropagation through time.
Vector gradient(const ssm::SsmModel& m,
                std::span<const plant::Trajectory> batch, int washout,
                double loss_scale = 1.0,
                double min_angle = kDefaultMinAngle);

// RMS(y_pred - y_ref) / RMS(y_ref - mean(y_ref)). Throws on length mismatch
// or a constant reference.
double nrmse(std::span<const double> y_pred, std::span<const double> y_ref);

// Prediction from x0 = 0 over a trajectory's inputs.
std::vector<double> predict(const ssm::SsmModel& m,
                            const std::vector<double>& inputs);

// NRMSE over samples k >= washout, averaged over trajectories. Uses the clean
// outputs when use_clean is set.
double validation_nrmse(const ssm::SsmModel& m,
                        std::span<const plant::Trajectory> data, int washout,
                        bool use_clean);

// Seeded split by whole trajectories: first = training, second = validation.
std::pair<std::vector<int>, std::vector<int>> split_dataset(
    int n, double train_fraction, std::uint64_t seed);

// Adam on the split dataset; returns the best-validation model (the initial
// model included). Throws NumericalBlowUp on a non-finite loss.
std::pair<ssm::SsmModel, TrainReport> train(
    const ssm::SsmModel& m0, const std::vector<plant::Trajectory>& dataset,
    const TrainConfig& cfg);

}  // namespace ssmctrl::train
