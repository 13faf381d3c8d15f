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

// Occlusion scenarios, A* expert trajectories and the JSONL dataset.
//
// Trajectories live in the tracker frame (forward, right) divided by the
// plan radius. Each persisted sample carries a tracker-frame occupancy grid
// covering [-plan_radius, plan_radius]^2 so the trajectory can be replayed
// against it without any world state.

#ifndef OCCTRACK_DATASET_HPP_
#define OCCTRACK_DATASET_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "occtrack/occupancy.hpp"
#include "occtrack/sim.hpp"

namespace occtrack {

enum class Archetype { kSingleSide, kDoubleSide, kCorridor };

const char* to_string(Archetype a);
Archetype archetype_from_string(const std::string& name);

struct ScenarioParams {
  double room = 12.0;
  int min_obstacles = 3;
  int max_obstacles = 6;
  double min_side = 0.8;
  double max_side = 2.0;
  double min_height = 2.0;
  double max_height = 3.0;
  double size_jitter = 0.0;  // relative, applied to every footprint
  double min_standoff = 1.5;  // tracker distance out from the occluder edge
  double max_standoff = 3.5;
  int max_retries = 1000;
};

struct Scenario {
  Archetype archetype = Archetype::kSingleSide;
  World world;  // obstacles plus the target as entity 0
  std::size_t chosen_obstacle = 0;
  int target_edge = 0;  // 0:+x 1:+y 2:-x 3:-y
  Pose2 tracker_pose;
  Pose2 target_pose;
};

// Throws SamplingExhausted after params.max_retries rejected draws.
Scenario sample_scenario(Archetype archetype, Rng& rng, const ScenarioParams& params);

struct PlanParams {
  double resolution = 0.25;
  double plan_radius = 4.0;
  int horizon = 16;              // T_p
  double goal_visibility = 0.9;
  double inflation = 0.375;      // expert clearance from footprints
  double crop_radius = 4.0;
  int crop_cells = 16;
  double flip_prob = 0.0;        // occupancy bit-flip noise
  double follow_distance = 2.5;  // degenerate straight-line case
  CameraIntrinsics camera;
  int n_rays = 32;
};

struct PlanSample {
  int id = 0;
  Archetype archetype = Archetype::kSingleSide;
  bool randomized = false;
  Eigen::VectorXd obs;        // crop_cells^2 occupancy crop
  Eigen::Vector4d bbox;       // [cx, cy, w, h] / image dims
  Eigen::MatrixXd traj;       // horizon x 2, normalized tracker frame
  OccupancyGrid grid;         // tracker-frame grid, origin (-R, -R)
};

// Tracker-frame occupancy over [-radius, radius]^2. A cell is occupied when
// its (rotated) square overlaps a footprint or leaves the room.
OccupancyGrid local_grid(const World& world, const Pose2& pose, double radius,
                         double resolution);

// Samples every segment at a quarter cell and checks the grid. Waypoints are
// normalized by plan_radius and the grid origin is (-plan_radius, -plan_radius).
bool trajectory_collision_free(const OccupancyGrid& grid,
                               const Eigen::MatrixXd& traj, double plan_radius);

// Equal arc-length resampling of a polyline to `count` points.
Eigen::MatrixXd resample_polyline(const std::vector<Eigen::Vector2d>& pts, int count);

// Straight line toward the target stopping short of it, normalized.
Eigen::MatrixXd straight_line_trajectory(const Pose2& tracker, const Pose2& target,
                                         const PlanParams& params, double stop_short = 0.5);

PlanSample make_sample(const Scenario& scenario, const PlanParams& params,
                       Rng* noise_rng = nullptr);

std::string sample_to_json(const PlanSample& sample);
PlanSample sample_from_json(const std::string& line);

struct DatasetSummary {
  int samples = 0;
  int randomized = 0;
  int rejected = 0;  // NoPath or exhausted draws that were resampled
};

// Sample i uses stream derive_seed(seed, i); archetype is i mod 3.
DatasetSummary generate_dataset(int n, double randomized_fraction, std::uint64_t seed,
                                std::ostream& out, const ScenarioParams& scenario = {},
                                const PlanParams& plan = {});
DatasetSummary generate_dataset(int n, double randomized_fraction, std::uint64_t seed,
                                const std::string& out_path,
                                const ScenarioParams& scenario = {},
                                const PlanParams& plan = {});

std::vector<PlanSample> read_dataset(const std::string& path);
std::vector<PlanSample> read_dataset(std::istream& in);

}  // namespace occtrack

#endif  // OCCTRACK_DATASET_HPP_
