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

// Command-line entry points and the evaluation helpers behind them.

#ifndef OCCTRACK_CLI_HPP_
#define OCCTRACK_CLI_HPP_

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "occtrack/agent.hpp"
#include "occtrack/dataset.hpp"
#include "occtrack/planner.hpp"
#include "occtrack/sim.hpp"

namespace occtrack {

// Everything an eval run depends on besides the planners.
struct RunConfig {
  std::string preset = "default";
  int episodes = 100;
  int max_steps = 500;
  int lost_limit = 50;
  std::vector<Variant> variants{Variant::kFull};
  std::uint64_t seed = 0;
  int workers = 1;
  AgentConfig agent;
};

// Episode i of every variant shares world seed `seed + i`, so variants are
// compared on the same maps and target routes.
std::uint64_t episode_world_seed(const RunConfig& config, int episode);

struct PlannerSet {
  std::shared_ptr<const NoisePredictor> planner;
  std::shared_ptr<const NoisePredictor> planner_no_bbox;  // may be null
  std::shared_ptr<const NoiseSchedule> schedule;

  // Planner the given variant runs with; null for no_planner_pid.
  std::shared_ptr<const NoisePredictor> for_variant(Variant v) const;
};

struct PlannerTraining {
  int samples = 2000;
  double randomized = 0.6;
  int diffusion_steps = 50;  // K
  PredictorConfig predictor;
  TrainConfig train;
};

// Generates a dataset and trains on it. With `zero_bbox` every condition box
// is zeroed first, giving the occupancy-only planner.
NoisePredictor train_planner(const PlannerTraining& config, std::uint64_t seed,
                             bool zero_bbox, std::vector<double>* loss_curve = nullptr);

// Episodes of one variant, returned in episode order regardless of `workers`.
std::vector<EpisodeLog> run_variant(const RunConfig& config, Variant variant,
                                    const PlannerSet& planners);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

// `git describe --always --dirty` of the source tree, or "unknown".
std::string git_describe();

// Parses argv, runs the subcommand and returns the process exit code: 0 on
// success, otherwise the ErrorCode value of the failure.
int run_cli(int argc, char** argv);

}  // namespace occtrack

#endif  // OCCTRACK_CLI_HPP_
