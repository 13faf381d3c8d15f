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

// The tracking policy: prototype matching, confidence-aware filtering,
// prototype enhancement, PID pursuit and planner-driven recovery.

#ifndef OCCTRACK_AGENT_HPP_
#define OCCTRACK_AGENT_HPP_

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "occtrack/estimator.hpp"
#include "occtrack/features.hpp"
#include "occtrack/planner.hpp"
#include "occtrack/sim.hpp"

namespace occtrack {

enum class Variant {
  kFull,
  kNoEma,         // prototype frozen after initialization
  kAvgUpdate,     // running mean instead of EMA
  kNoKf,          // raw matched box, no confidence gate
  kLinearKf,      // fixed measurement noise
  kNoPlannerPid,  // PID only, no recovery planning
  kPlannerNoBbox  // planner conditioned on occupancy alone
};

const char* to_string(Variant v);
Variant variant_from_string(const std::string& name);
std::vector<Variant> all_variants();

struct AgentConfig {
  double eta_s = 0.5;
  double eta_c = 0.5;
  double beta = 0.8;
  double lambda = 15.0;
  double gamma = 0.4;
  int trigger_len = 10;  // L
  double kp_yaw = 0.6;
  double kp_fwd = 0.8;
  double kd_yaw = 0.1;
  double kd_fwd = 0.1;
  double height_setpoint = 54.4;  // box height in px at the follow distance
  double follow_distance = 2.5;   // metres matching height_setpoint
  double focal_px = 80.0;
  int plan_exec_len = 16;
  int plan_candidates = 8;  // plans sampled per trigger, best one executed
  int replan_budget = 3;
  double search_rate = 0.1;  // rad per step while searching
  int lookahead = 2;
  Variant variant = Variant::kFull;
  std::uint64_t seed = 0;
};

// key=value serialization; keys are the field names above.
std::vector<std::string> agent_config_keys();
void set_agent_field(AgentConfig& config, const std::string& key, const std::string& value);
std::string get_agent_field(const AgentConfig& config, const std::string& key);
// Blank lines and lines starting with '#' are ignored.
AgentConfig parse_agent_config(std::istream& in, AgentConfig base = {});
AgentConfig load_agent_config(const std::string& path, AgentConfig base = {});
void write_agent_config(const AgentConfig& config, std::ostream& out);
// Throws Usage when a threshold leaves (0, 1), a count is out of range or a
// camera constant is not positive.
void validate(const AgentConfig& config);

enum class Mode { kDetect, kTrack, kPlan };
const char* to_string(Mode m);

struct ActivePlan {
  Eigen::MatrixXd trajectory;
  std::vector<Action> actions;
  int cursor = 0;
  Eigen::Vector4d condition_bbox = Eigen::Vector4d::Zero();
  // Estimated target position in the plan frame (forward, right), metres.
  std::optional<Eigen::Vector2d> target_estimate;
};

struct AgentState {
  Mode mode = Mode::kDetect;
  Prototype prototype;
  std::optional<KfState<double>> kf;
  int lost_count = 0;
  std::optional<ActivePlan> plan;
  std::optional<Box> last_box;  // last accepted measurement
  int replans_left = 0;
  int plans_sampled = 0;
  // PID derivative memory; cleared whenever the pursued box changes source.
  std::optional<Eigen::Vector2d> prev_error;
  double search_dir = 1.0;  // +1 turns right
  std::optional<std::size_t> matched;  // candidate index used this step
  std::optional<Action> last_action;   // for ego-motion compensation
  std::vector<std::pair<Mode, Mode>> transitions;
  std::vector<std::pair<int, std::string>> errors;  // (step, message)
  int steps = 0;
};

// Prototype from the reference view plus its augmentations; mode DETECT.
AgentState initialize(const std::vector<FeatureVector>& ref_views, const AgentConfig& config);

struct PidMemory {
  std::optional<Eigen::Vector2d> prev_error;  // (yaw, forward) errors
};

// omega_y = kp_yaw e_yaw + kd_yaw de_yaw with e_yaw = (u - W/2) / (W/2);
// v_f = kp_fwd e_fwd + kd_fwd de_fwd with e_fwd = (h* - h) / H. Clamped.
Action pid_control(const Box& box, int image_w, int image_h, const AgentConfig& config,
                   PidMemory* memory = nullptr, const ActionLimits& limits = {});

// Target position in the tracker frame (forward, right) implied by a
// normalized box: bearing from its centre, range from its height.
std::optional<Eigen::Vector2d> box_to_point(const Eigen::Vector4d& bbox, int image_w, int image_h,
                                            const AgentConfig& config);
// Inverse of box_to_point; width scales with the height. Points behind the
// camera land on the image edge on their side.
Eigen::Vector4d point_to_box(const Eigen::Vector2d& point, const Eigen::Vector4d& reference,
                             int image_w, int image_h, const AgentConfig& config);

// Moves a pixel box through the tracker's own motion for one tick: the box
// is lifted to a tracker-frame point with box_to_point's model, the motion
// applied, and the point projected back. Boxes behind the camera after the
// motion are returned unchanged.
Box ego_compensate(const Box& box, const Action& action, int image_w, int image_h,
                   const AgentConfig& config);

// Ranks a plan against the occupancy crop (rows far-to-near, columns
// left-to-right, side 2 * crop_radius). Lower is better: a collision adds
// T_p + 1, then comes the first waypoint index with a clear line of sight
// to within 0.5 m of `target` plus path length / 100. Without any sight
// line the second term is T_p plus the end point's distance to the target
// over plan_radius. Crop cells within one cell of the tracker are ignored.
double plan_cost(const Eigen::MatrixXd& traj, const Eigen::VectorXd& crop,
                 const std::optional<Eigen::Vector2d>& target, double plan_radius = 4.0,
                 double crop_radius = 4.0);

// Advances the mode machine by one observation. Internal errors yield a zero
// action and an entry in state.errors.
Action policy_step(const Observation& obs, AgentState& state, const AgentConfig& config,
                   const NoiseModel* planner, const NoiseSchedule* schedule);

// Adapter for run_episode.
class TrackingPolicy : public Policy {
 public:
  TrackingPolicy(AgentState state, AgentConfig config,
                 std::shared_ptr<const NoiseModel> planner = nullptr,
                 std::shared_ptr<const NoiseSchedule> schedule = nullptr);
  Action act(const Observation& obs) override;
  const AgentState& state() const { return state_; }

 private:
  AgentState state_;
  AgentConfig config_;
  std::shared_ptr<const NoiseModel> planner_;
  std::shared_ptr<const NoiseSchedule> schedule_;
};

// Reference views of the world's target rendered as the agent would receive
// them, then initialize().
AgentState initialize_for(const World& world, const AgentConfig& config, int n_views = 8,
                          double noise = 0.05);

}  // namespace occtrack

#endif  // OCCTRACK_AGENT_HPP_
