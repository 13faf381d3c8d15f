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

// Planar world, pinhole box projection, ray-cast occlusion, entity
// behaviours, and the episode loop with its metrics.
//
// Frames: world x/y with yaw counter-clockwise from +x. The body frame is
// (forward, right). Positive omega_y turns right (yaw decreases) and
// positive v_l moves right, so a target right of the image centre needs
// positive omega_y.

#ifndef OCCTRACK_SIM_HPP_
#define OCCTRACK_SIM_HPP_

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "occtrack/common.hpp"
#include "occtrack/features.hpp"
#include "occtrack/occupancy.hpp"

namespace occtrack {

struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;

  Eigen::Vector2d position() const { return {x, y}; }
};

// World point expressed in the body frame of `pose` as (forward, right).
Eigen::Vector2d to_body(const Pose2& pose, const Eigen::Vector2d& world_point);
Eigen::Vector2d from_body(const Pose2& pose, const Eigen::Vector2d& body_point);

struct Action {
  double v_f = 0.0;
  double v_l = 0.0;
  double v_v = 0.0;
  double omega_y = 0.0;
};

struct ActionLimits {
  double linear = 0.4;  // m/step
  double yaw = 0.2;     // rad/step
};

// Clamps every component and zeroes v_v.
Action clamp_action(const Action& a, const ActionLimits& limits);

enum class Behavior { kStatic, kWanderer, kEvader, kScripted };

const char* to_string(Behavior b);
Behavior behavior_from_string(const std::string& name);

struct Entity {
  Pose2 pose;
  double radius = 0.3;
  double height = 1.7;
  int instance_id = 0;
  std::string category = "person";
  Behavior behavior = Behavior::kStatic;
  double speed = 0.1;  // m/step

  // Slow appearance change: feature += amplitude * (cos, sin) of a phase
  // advancing 2*pi per drift_period steps, in a private 2D subspace.
  Eigen::MatrixXd drift_basis;  // dim x 2, empty for none
  double drift_amplitude = 0.0;
  double drift_period = 600.0;
  double drift_phase = 0.0;

  // Behaviour state.
  std::vector<Eigen::Vector2d> route;
  std::size_t route_cursor = 0;
  int phase_steps = 0;
  int dwell = 0;
  bool hiding = false;
  // kEvader: steps between hides, steps spent hidden, hide-spot search radius.
  int hide_interval_min = 80;
  int hide_interval_max = 160;
  int dwell_min = 60;
  int dwell_max = 120;
  double hide_radius = 6.0;
  std::vector<Pose2> script;  // kScripted: pose per time step
};

struct World {
  Rect bounds;
  std::vector<Obstacle> obstacles;
  std::vector<Entity> entities;
  std::size_t target_index = 0;
  Pose2 tracker;
  double tracker_radius = 0.25;
  int time_step = 0;

  std::shared_ptr<const ManifoldSet> manifolds;
  OccupancyGrid map;       // raw footprint raster
  OccupancyGrid nav_grid;  // inflated for entity routing
  Rng rng;                 // behaviour randomness

  const Entity& target() const { return entities.at(target_index); }
  Entity& target() { return entities.at(target_index); }

  // Rebuilds both rasters from the obstacle list.
  void rebuild_grids(double resolution = 0.25, double nav_inflation = 0.35);
};

struct CameraIntrinsics {
  double fov_h = kPi / 2.0;
  int image_w = 160;
  int image_h = 120;
  double cam_height = 1.5;
  double near = 0.1;
};

struct Camera {
  Pose2 pose;
  double fov_h = kPi / 2.0;
  int image_w = 160;
  int image_h = 120;
  double focal = 80.0;
  double cam_height = 1.5;
  double near = 0.1;
};

// focal = (image_w / 2) / tan(fov_h / 2).
Camera make_camera(const Pose2& pose, const CameraIntrinsics& intrinsics = {});

// Boxes are [cx, cy, w, h] in pixels.
using Box = Eigen::Vector4d;

// Projects the bounding cylinder of `entity` and clips to the image.
std::optional<Box> project_bbox(const Camera& camera, const Entity& entity);

// Fraction of silhouette rays not blocked by an obstacle taller than the ray
// at the crossing. Ignores the field of view.
double visibility(const World& world, const Camera& camera,
                  const Entity& entity, int n_rays);

struct Candidate {
  Box bbox = Box::Zero();
  int instance_id = -1;  // hidden from the agent, kept for evaluation
  std::string category;
  double visibility = 0.0;
  FeatureVector feature;
  double confidence = 0.0;
};

struct Observation {
  int step = 0;
  int image_w = 160;
  int image_h = 120;
  std::vector<Candidate> candidates;
  Eigen::VectorXd occupancy;  // egocentric crop, see egocentric_crop
};

struct RenderConfig {
  CameraIntrinsics camera;
  int n_rays = 32;
  double feature_noise = 0.05;
  double bbox_noise_px = 1.0;
  double confidence_sigma = 0.05;
  double max_range = 10.0;
  // Probability scale for a corrupted box under occlusion: a candidate with
  // visibility v gets a spurious box with probability corrupt_prob * (1 - v).
  // Its confidence is scaled by a quality factor drawn from the range below.
  double corrupt_prob = 0.0;
  double corrupt_quality_min = 0.0;
  double corrupt_quality_max = 0.5;
  double crop_radius = 4.0;
  int crop_cells = 16;
};

// Appearance of `entity` seen from view angle `angle` in its own frame,
// including drift at the current world time.
FeatureVector appearance(const World& world, const Entity& entity, double angle,
                         double noise, Rng& rng);

// Reference view of the target from the current tracker position followed by
// `n_views` evenly spaced augmentations.
std::vector<FeatureVector> reference_views(const World& world, int n_views,
                                           double noise, Rng& rng);

Observation render(const World& world, const Camera& camera,
                   const RenderConfig& config, Rng& rng);

// Moves a circle by `delta` without entering obstacles or leaving the bounds.
// Returns the reached position (sliding along axes after contact).
Eigen::Vector2d move_circle(const World& world, const Eigen::Vector2d& from,
                            double radius, const Eigen::Vector2d& delta);

bool circle_free(const World& world, const Eigen::Vector2d& p, double radius);

// Integrates the tracker action (already clamped) in the body frame and
// advances every entity by its behaviour.
void step_world(World& world, const Action& action, double dt = 1.0);

struct RewardParams {
  double d_star = 2.5;
  double d_max = 5.0;
  double theta_max = kPi / 4.0;
};

double reward(const Pose2& tracker, const Pose2& target,
              const RewardParams& params = {});

struct EpisodeStep {
  int step = 0;
  Pose2 tracker;
  Pose2 target;
  Action action;
  double reward = 0.0;
  bool target_visible = false;
  std::optional<Box> bbox;
  double confidence = 0.0;
};

struct EpisodeLog {
  std::vector<EpisodeStep> steps;
  int max_steps = 0;
  bool terminated_early = false;
  bool aborted = false;
  std::string error;

  int length() const { return static_cast<int>(steps.size()); }
  double total_reward() const;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual Action act(const Observation& obs) = 0;
};

struct EpisodeConfig {
  int max_steps = 500;
  int lost_limit = 50;
  RenderConfig render;
  ActionLimits limits;
  RewardParams reward;
};

// render -> policy -> step_world until max_steps or until the target has been
// invisible for more than lost_limit consecutive steps.
EpisodeLog run_episode(World world, Policy& policy, const EpisodeConfig& config,
                       std::uint64_t seed);

struct Metrics {
  double ar = 0.0;
  double el = 0.0;
  double sr = 0.0;
  double tsr = 0.0;  // NaN when no episode allows 1500 steps
  double car = 0.0;  // NaN when no episode has eligible steps
  int episodes = 0;
};

Metrics compute_metrics(const std::vector<EpisodeLog>& logs, int horizon);

double correct_action_rate(const EpisodeLog& log, int dead_zone_px,
                           int image_w = 160, double lateral_weight = 0.2);

struct MetricsRow {
  std::string scenario;
  Metrics metrics;
  std::uint64_t seed = 0;
};

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows);
void write_episode_jsonl(std::ostream& os, const EpisodeLog& log);

struct WorldPreset {
  std::string name = "default";
  double room = 12.0;
  int min_obstacles = 3;
  int max_obstacles = 5;
  double min_side = 0.6;
  double max_side = 2.0;
  double min_height = 2.0;
  double max_height = 3.0;
  int distractors = 0;
  Behavior target_behavior = Behavior::kWanderer;
  Behavior distractor_behavior = Behavior::kWanderer;
  double target_speed = 0.1;
  double distractor_speed = 0.1;
  double drift_amplitude = 0.8;
  double drift_period = 600.0;
  int feature_dim = 64;
  double cohesion_delta = 0.8;
  double separation_eta = 0.2;
  int view_dirs = 2;
  // Evader timing, see Entity.
  int hide_interval_min = 80;
  int hide_interval_max = 160;
  int dwell_min = 60;
  int dwell_max = 120;
  double hide_radius = 6.0;
  // Rendering: spurious-box rate under partial occlusion.
  double corrupt_prob = 0.0;
};

// Default render settings with the preset's corruption rate.
RenderConfig render_config_for(const WorldPreset& preset);

// Known names: default, occlusion_heavy, distractor4.
WorldPreset preset_by_name(const std::string& name);

World make_world(const WorldPreset& preset, std::uint64_t seed);

}  // namespace occtrack

#endif  // OCCTRACK_SIM_HPP_
