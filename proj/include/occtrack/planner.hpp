// Copyright 2026 The occtrack Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Conditional denoising diffusion planner over tracker-frame waypoints.
//
// Trajectories are T_p x 2 matrices; the network sees them flattened
// row-major as [x0, y0, x1, y1, ...]. Step indices k run 1..K.

#ifndef OCCTRACK_PLANNER_HPP_
#define OCCTRACK_PLANNER_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "occtrack/common.hpp"
#include "occtrack/dataset.hpp"
#include "occtrack/sim.hpp"

namespace occtrack {

// Arrays are indexed by k with a dummy entry at 0.
struct NoiseSchedule {
  int K = 0;
  Eigen::VectorXd beta;
  Eigen::VectorXd alpha_bar;  // alpha_bar[0] = 1
  Eigen::VectorXd alpha;      // 1 / sqrt(1 - beta[k])
  Eigen::VectorXd phi;        // beta[k] / sqrt(1 - alpha_bar[k])
  Eigen::VectorXd sigma;      // posterior std, sigma[1] = 0

  double signal(int k) const { return std::sqrt(alpha_bar[k]); }
  double noise(int k) const { return std::sqrt(1.0 - alpha_bar[k]); }
};

// Cosine variance schedule with offset s; beta clipped at 0.999.
NoiseSchedule build_schedule(int K, double s = 0.008);

// Same schedule with every sigma set to zero.
NoiseSchedule deterministic(NoiseSchedule schedule);

Eigen::MatrixXd forward_noise(const Eigen::MatrixXd& a0, int k, const Eigen::MatrixXd& eps,
                              const NoiseSchedule& schedule);

struct Condition {
  Eigen::VectorXd obs;   // occupancy crop
  Eigen::Vector4d bbox;  // normalized [cx, cy, w, h]

  Eigen::VectorXd encode() const;
};

Condition condition_of(const PlanSample& sample);

Eigen::VectorXd flatten(const Eigen::MatrixXd& traj);
Eigen::MatrixXd unflatten(const Eigen::VectorXd& v, int horizon);

// Anything that predicts the added noise; tests supply exact oracles.
class NoiseModel {
 public:
  virtual ~NoiseModel() = default;
  virtual int horizon() const = 0;
  // Returns a horizon x 2 noise estimate.
  virtual Eigen::MatrixXd predict(const Eigen::MatrixXd& noisy, const Condition& cond,
                                  int k) const = 0;
};

struct PredictorConfig {
  int horizon = 16;
  int cond_dim = 260;
  int embed_dim = 16;
  int hidden = 256;
  int layers = 2;
};

// sin/cos features of k at geometric frequencies; embed_dim must be even.
Eigen::VectorXd step_embedding(int k, int embed_dim);

// Fully connected SiLU network with hand-written batched backprop. All
// parameters live in one flat vector in declaration order: for each layer
// its weight matrix (column-major) then its bias.
class NoisePredictor : public NoiseModel {
 public:
  explicit NoisePredictor(const PredictorConfig& config = {});
  NoisePredictor(const PredictorConfig& config, std::uint64_t seed);

  const PredictorConfig& config() const { return config_; }
  int horizon() const override { return config_.horizon; }
  int input_dim() const;
  int output_dim() const { return 2 * config_.horizon; }

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  Eigen::MatrixXd predict(const Eigen::MatrixXd& noisy, const Condition& cond,
                          int k) const override;

  // Network input for one example.
  Eigen::VectorXd input(const Eigen::MatrixXd& noisy, const Condition& cond, int k) const;

  // Columns of `inputs` are network inputs; returns flattened noise estimates.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs) const;

  // Mean over columns of ||target - forward||^2; writes d/dparams into `grad`.
  double loss_and_grad(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                       Eigen::VectorXd& grad) const;

 private:
  struct Layer {
    Eigen::Index weight = 0;  // offset into params_
    Eigen::Index bias = 0;
    int rows = 0;
    int cols = 0;
  };
  Eigen::Map<const Eigen::MatrixXd> weight(const Layer& l) const;
  Eigen::Map<const Eigen::VectorXd> bias(const Layer& l) const;

  PredictorConfig config_;
  std::vector<Layer> layers_;
  Eigen::VectorXd params_;
};

// One denoising example with its (k, eps) draw.
struct NoisedExample {
  const PlanSample* sample = nullptr;
  int k = 1;
  Eigen::MatrixXd eps;
};

// Mean squared noise-prediction error over the examples.
double loss(const NoiseModel& model, const std::vector<NoisedExample>& batch,
            const NoiseSchedule& schedule);

// Draws k uniform in 1..K and standard-normal eps for each sample.
std::vector<NoisedExample> draw_examples(const std::vector<const PlanSample*>& samples,
                                         const NoiseSchedule& schedule, int horizon, Rng& rng);

struct GradCheckResult {
  double max_relative_error = 0.0;
  int checked = 0;
};

// Central differences on `n_params` randomly chosen parameters for a single
// fixed (k, eps) example. Throws Usage unless h is in [1e-6, 1e-3].
GradCheckResult grad_check(const NoisePredictor& predictor, const PlanSample& sample,
                           const NoiseSchedule& schedule, double h, std::uint64_t seed,
                           int n_params = 200);

// Momentum SGD. The step size follows a cosine decay from lr to 0 over the
// run and each batch gradient is rescaled to at most clip_norm.
struct TrainConfig {
  int epochs = 60;
  int batch = 64;
  double lr = 5e-2;
  double momentum = 0.9;
  double clip_norm = 5.0;  // <= 0 disables
  bool cosine_decay = true;
  std::uint64_t seed = 0;
};

struct TrainResult {
  // Entry 0 is the loss before training, entry e the loss after epoch e.
  // Each entry is evaluated on the full dataset with one fixed (k, eps) draw
  // per sample so epochs are compared on the same noise.
  std::vector<double> loss_curve;
};

// Throws NonFiniteLoss naming the offending batch.
TrainResult train(NoisePredictor& predictor, const std::vector<PlanSample>& dataset,
                  const NoiseSchedule& schedule, const TrainConfig& config);

// Reverse process from A^K ~ N(0, I). `raw` receives the unclamped result.
Eigen::MatrixXd sample_plan(const NoiseModel& model, const Condition& cond,
                            const NoiseSchedule& schedule, std::uint64_t seed,
                            Eigen::MatrixXd* raw = nullptr);

// Least-squares fit of each coordinate by a polynomial of the given degree in
// the waypoint index with no constant term, so the fit starts at the origin.
// Removes the per-waypoint jitter left by sampling.
Eigen::MatrixXd smooth_trajectory(const Eigen::MatrixXd& traj, int degree = 3);

struct PursuitParams {
  int lookahead = 2;
  double plan_radius = 4.0;
  double yaw_gain = 1.0;
  ActionLimits limits;
  // When set, the heading turns toward this plan-frame point (metres,
  // forward/right) instead of along the path; translation uses v_f and v_l.
  std::optional<Eigen::Vector2d> look_at;
};

// Open-loop pure pursuit. The tracker pose is dead-reckoned with the
// simulator's kinematics and tick i steers toward waypoint
// min(i + lookahead, T_p - 1). Returns T_p actions.
std::vector<Action> trajectory_to_actions(const Eigen::MatrixXd& traj,
                                          const PursuitParams& params = {});

// Layout: "OAVPLAN1", int32 cond_dim, embed_dim, hidden, layers, K, T_p,
// uint64 parameter count, then the parameters as float64. All little-endian.
void save_checkpoint(const NoisePredictor& predictor, const NoiseSchedule& schedule,
                     const std::string& path);
void save_checkpoint(const NoisePredictor& predictor, const NoiseSchedule& schedule,
                     std::ostream& out);

struct Checkpoint {
  NoisePredictor predictor;
  NoiseSchedule schedule;
};

Checkpoint load_checkpoint(const std::string& path);
Checkpoint load_checkpoint(std::istream& in);

void write_loss_csv(const std::vector<double>& curve, std::ostream& out);

}  // namespace occtrack

#endif  // OCCTRACK_PLANNER_HPP_
