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

#include "occtrack/agent.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <limits>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace occtrack {

namespace {

constexpr std::pair<Variant, const char*> kVariantNames[] = {
    {Variant::kFull, "full"},
    {Variant::kNoEma, "no_ema"},
    {Variant::kAvgUpdate, "avg_update"},
    {Variant::kNoKf, "no_kf"},
    {Variant::kLinearKf, "linear_kf"},
    {Variant::kNoPlannerPid, "no_planner_pid"},
    {Variant::kPlannerNoBbox, "planner_no_bbox"},
};

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size() || !std::isfinite(v)) {
    throw Error(ErrorCode::kUsage, key + ": not a number: " + value);
  }
  return v;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& value) {
  Int v{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw Error(ErrorCode::kUsage, key + ": not an integer: " + value);
  }
  return v;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Field {
  std::function<void(AgentConfig&, const std::string&)> set;
  std::function<std::string(const AgentConfig&)> get;
};

template <typename T>
Field make_field(const char* key, T AgentConfig::*member) {
  Field f;
  f.set = [key, member](AgentConfig& c, const std::string& v) {
    if constexpr (std::is_same_v<T, double>) {
      c.*member = parse_double(key, v);
    } else if constexpr (std::is_same_v<T, Variant>) {
      c.*member = variant_from_string(v);
    } else {
      c.*member = parse_int<T>(key, v);
    }
  };
  f.get = [member](const AgentConfig& c) {
    if constexpr (std::is_same_v<T, double>) {
      return format_double(c.*member);
    } else if constexpr (std::is_same_v<T, Variant>) {
      return std::string(to_string(c.*member));
    } else {
      return std::to_string(c.*member);
    }
  };
  return f;
}

// Declaration order; the key=value file lists fields in this order.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"eta_s", make_field("eta_s", &AgentConfig::eta_s)},
      {"eta_c", make_field("eta_c", &AgentConfig::eta_c)},
      {"beta", make_field("beta", &AgentConfig::beta)},
      {"lambda", make_field("lambda", &AgentConfig::lambda)},
      {"gamma", make_field("gamma", &AgentConfig::gamma)},
      {"trigger_len", make_field("trigger_len", &AgentConfig::trigger_len)},
      {"kp_yaw", make_field("kp_yaw", &AgentConfig::kp_yaw)},
      {"kp_fwd", make_field("kp_fwd", &AgentConfig::kp_fwd)},
      {"kd_yaw", make_field("kd_yaw", &AgentConfig::kd_yaw)},
      {"kd_fwd", make_field("kd_fwd", &AgentConfig::kd_fwd)},
      {"height_setpoint", make_field("height_setpoint", &AgentConfig::height_setpoint)},
      {"follow_distance", make_field("follow_distance", &AgentConfig::follow_distance)},
      {"focal_px", make_field("focal_px", &AgentConfig::focal_px)},
      {"plan_exec_len", make_field("plan_exec_len", &AgentConfig::plan_exec_len)},
      {"plan_candidates", make_field("plan_candidates", &AgentConfig::plan_candidates)},
      {"replan_budget", make_field("replan_budget", &AgentConfig::replan_budget)},
      {"search_rate", make_field("search_rate", &AgentConfig::search_rate)},
      {"lookahead", make_field("lookahead", &AgentConfig::lookahead)},
      {"variant", make_field("variant", &AgentConfig::variant)},
      {"seed", make_field("seed", &AgentConfig::seed)},
  };
  return table;
}

const Field& field(const std::string& key) {
  for (const auto& [k, f] : fields()) {
    if (k == key) return f;
  }
  throw Error(ErrorCode::kUsage, "unknown agent config key: " + key);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

KfConfig<double> kf_config(const AgentConfig& c) {
  KfConfig<double> k;
  k.lambda = c.lambda;
  k.gamma = c.gamma;
  k.eta_c = c.eta_c;
  if (c.variant == Variant::kLinearKf) k.confidence_aware = false;
  return k;
}

std::vector<FeatureVector> features_of(const Observation& obs) {
  std::vector<FeatureVector> f;
  f.reserve(obs.candidates.size());
  for (const auto& c : obs.candidates) f.push_back(c.feature);
  return f;
}

void enhance(AgentState& s, const FeatureVector& feature, const AgentConfig& c) {
  switch (c.variant) {
    case Variant::kNoEma: return;
    case Variant::kAvgUpdate: s.prototype = average_update(s.prototype, feature); return;
    default: s.prototype = ema_update(s.prototype, feature, c.beta); return;
  }
}

Action search(const AgentState& s, const AgentConfig& c) {
  Action a;
  a.omega_y = c.search_rate * s.search_dir;
  return a;
}

Action pursue(AgentState& s, const Box& box, const Observation& obs, const AgentConfig& c) {
  PidMemory mem{s.prev_error};
  const Action a = pid_control(box, obs.image_w, obs.image_h, c, &mem);
  s.prev_error = mem.prev_error;
  return a;
}

void remember_side(AgentState& s, const Box& box, int image_w) {
  const double offset = box[0] - 0.5 * image_w;
  if (offset != 0.0) s.search_dir = offset > 0.0 ? 1.0 : -1.0;
}

// Shared by DETECT and PLAN: lock on to a matched candidate.
Action acquire(AgentState& s, const Observation& obs, std::size_t idx, const AgentConfig& c) {
  const Box& box = obs.candidates[idx].bbox;
  s.kf = initial_state<double>(box);
  s.mode = Mode::kTrack;
  s.lost_count = 0;
  s.plan.reset();
  s.last_box = box;
  s.matched = idx;
  s.prev_error.reset();
  remember_side(s, box, obs.image_w);
  return pursue(s, box, obs, c);
}

Eigen::Vector4d normalized(const Box& b, const Observation& obs) {
  Eigen::Vector4d n(b[0] / obs.image_w, b[1] / obs.image_h, b[2] / obs.image_w,
                    b[3] / obs.image_h);
  return n.cwiseMax(0.0).cwiseMin(1.0);
}

// Plan-frame pose after replaying the first `count` actions.
Pose2 dead_reckon(const std::vector<Action>& actions, int count) {
  Pose2 pose;
  for (int i = 0; i < count && i < static_cast<int>(actions.size()); ++i) {
    const Action& a = actions[static_cast<std::size_t>(i)];
    const Eigen::Vector2d p =
        pose.position() + a.v_f * forward_axis(pose.yaw) + a.v_l * right_axis(pose.yaw);
    pose = {p.x(), p.y(), wrap_angle(pose.yaw - a.omega_y)};
  }
  return pose;
}

void sample_new_plan(AgentState& s, const Observation& obs, const Eigen::Vector4d& bbox,
                     std::optional<Eigen::Vector2d> estimate, const AgentConfig& c,
                     const NoiseModel& planner, const NoiseSchedule& schedule) {
  Condition cond;
  cond.obs = obs.occupancy;
  cond.bbox = c.variant == Variant::kPlannerNoBbox ? Eigen::Vector4d::Zero() : bbox;
  const std::uint64_t base = derive_seed(c.seed, static_cast<std::uint64_t>(s.plans_sampled));
  ++s.plans_sampled;
  Eigen::MatrixXd best;
  double best_cost = std::numeric_limits<double>::infinity();
  for (int j = 0; j < c.plan_candidates; ++j) {
    Eigen::MatrixXd traj =
        smooth_trajectory(sample_plan(planner, cond, schedule, derive_seed(base, j)))
            .cwiseMax(-1.0)
            .cwiseMin(1.0);
    const double cost = plan_cost(traj, obs.occupancy, estimate);
    if (cost < best_cost) {
      best_cost = cost;
      best = std::move(traj);
    }
  }
  ActivePlan plan;
  plan.trajectory = best;
  PursuitParams pp;
  pp.lookahead = c.lookahead;
  pp.look_at = estimate;
  plan.actions = trajectory_to_actions(plan.trajectory, pp);
  plan.condition_bbox = bbox;
  plan.target_estimate = estimate;
  s.plan = std::move(plan);
}

Action step_detect(const Observation& obs, AgentState& s, const AgentConfig& c) {
  const auto feats = features_of(obs);
  if (const auto idx = match_candidates(s.prototype, feats, c.eta_s)) {
    return acquire(s, obs, *idx, c);
  }
  return search(s, c);
}

Action step_track(const Observation& obs, AgentState& s, const AgentConfig& c,
                  const NoiseModel* planner, const NoiseSchedule* schedule) {
  if (s.last_action) {
    const Action& a = *s.last_action;
    if (s.kf) s.kf->x.head<4>() = ego_compensate(s.kf->x.head<4>(), a, obs.image_w, obs.image_h, c);
    if (s.last_box) s.last_box = ego_compensate(*s.last_box, a, obs.image_w, obs.image_h, c);
  }
  const auto feats = features_of(obs);
  const auto idx = match_candidates(s.prototype, feats, c.eta_s);
  Box target;
  bool accepted = false;
  if (c.variant == Variant::kNoKf) {
    // Raw matched box without any gate; hold the last box otherwise.
    if (idx) {
      s.last_box = obs.candidates[*idx].bbox;
      s.matched = idx;
      accepted = obs.candidates[*idx].confidence >= c.eta_c;
    }
    target = *s.last_box;
  } else {
    std::optional<Measurement<double>> m;
    if (idx) m = Measurement<double>{obs.candidates[*idx].bbox, obs.candidates[*idx].confidence};
    const auto r = step(*s.kf, m, kf_config(c));
    s.kf = r.state;
    accepted = r.measurement_used;
    if (accepted) {
      s.last_box = obs.candidates[*idx].bbox;
      s.matched = idx;
    }
    target = r.predicted_box;
  }
  if (accepted) {
    enhance(s, feats[*idx], c);
    s.lost_count = 0;
    remember_side(s, target, obs.image_w);
    return pursue(s, target, obs, c);
  }
  ++s.lost_count;
  if (s.lost_count > c.trigger_len && planner && schedule &&
      c.variant != Variant::kNoPlannerPid) {
    const Box cond_box =
        c.variant == Variant::kNoKf ? *s.last_box : Box(kf_config(c).H * s.kf->x);
    const Eigen::Vector4d box = normalized(cond_box, obs);
    sample_new_plan(s, obs, box, box_to_point(box, obs.image_w, obs.image_h, c), c, *planner,
                    *schedule);
    s.replans_left = c.replan_budget;
    s.mode = Mode::kPlan;
    s.prev_error.reset();
    return s.plan->actions[static_cast<std::size_t>(s.plan->cursor++)];
  }
  return pursue(s, target, obs, c);
}

Action step_plan(const Observation& obs, AgentState& s, const AgentConfig& c,
                 const NoiseModel* planner, const NoiseSchedule* schedule) {
  const auto feats = features_of(obs);
  if (const auto idx = match_candidates(s.prototype, feats, c.eta_s)) {
    return acquire(s, obs, *idx, c);
  }
  const int limit = std::min<int>(c.plan_exec_len, static_cast<int>(s.plan->actions.size()));
  if (s.plan->cursor >= limit) {
    if (s.replans_left <= 0 || !planner || !schedule) {
      s.mode = Mode::kDetect;
      s.kf.reset();
      s.plan.reset();
      s.lost_count = 0;
      return search(s, c);
    }
    --s.replans_left;
    // Carry the target estimate into the frame the executed plan ended in.
    Eigen::Vector4d box = s.plan->condition_bbox;
    std::optional<Eigen::Vector2d> estimate;
    if (s.plan->target_estimate) {
      const Pose2 end = dead_reckon(s.plan->actions, s.plan->cursor);
      const Eigen::Vector2d& e = *s.plan->target_estimate;
      estimate = to_body(end, {e.x(), -e.y()});
      box = point_to_box(*estimate, box, obs.image_w, obs.image_h, c);
    }
    sample_new_plan(s, obs, box, estimate, c, *planner, *schedule);
  }
  return s.plan->actions[static_cast<std::size_t>(s.plan->cursor++)];
}

}  // namespace

const char* to_string(Variant v) {
  for (const auto& [k, name] : kVariantNames) {
    if (k == v) return name;
  }
  return "unknown";
}

Variant variant_from_string(const std::string& name) {
  for (const auto& [k, n] : kVariantNames) {
    if (name == n) return k;
  }
  throw Error(ErrorCode::kUsage, "unknown variant: " + name);
}

std::vector<Variant> all_variants() {
  std::vector<Variant> v;
  for (const auto& [k, name] : kVariantNames) v.push_back(k);
  return v;
}

const char* to_string(Mode m) {
  switch (m) {
    case Mode::kDetect: return "DETECT";
    case Mode::kTrack: return "TRACK";
    case Mode::kPlan: return "PLAN";
  }
  return "unknown";
}

std::vector<std::string> agent_config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, f] : fields()) keys.push_back(k);
  return keys;
}

void set_agent_field(AgentConfig& config, const std::string& key, const std::string& value) {
  field(key).set(config, trim(value));
}

std::string get_agent_field(const AgentConfig& config, const std::string& key) {
  return field(key).get(config);
}

AgentConfig parse_agent_config(std::istream& in, AgentConfig base) {
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kFormat, "line " + std::to_string(number) + ": expected key=value");
    }
    set_agent_field(base, trim(t.substr(0, eq)), t.substr(eq + 1));
  }
  validate(base);
  return base;
}

AgentConfig load_agent_config(const std::string& path, AgentConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return parse_agent_config(in, std::move(base));
}

void write_agent_config(const AgentConfig& config, std::ostream& out) {
  for (const auto& [k, f] : fields()) out << k << '=' << f.get(config) << '\n';
}

void validate(const AgentConfig& c) {
  const auto unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (!unit(c.eta_s) || !unit(c.eta_c) || !unit(c.beta) || !unit(c.gamma)) {
    throw Error(ErrorCode::kUsage, "eta_s, eta_c, beta and gamma must lie in (0, 1)");
  }
  if (c.trigger_len < 1) throw Error(ErrorCode::kUsage, "trigger_len must be >= 1");
  if (c.plan_exec_len < 1 || c.replan_budget < 0 || c.lookahead < 1) {
    throw Error(ErrorCode::kUsage, "plan_exec_len and lookahead must be >= 1, replan_budget >= 0");
  }
  if (c.plan_candidates < 1) throw Error(ErrorCode::kUsage, "plan_candidates must be >= 1");
  if (!(c.focal_px > 0.0) || !(c.follow_distance > 0.0) || !(c.height_setpoint > 0.0)) {
    throw Error(ErrorCode::kUsage, "focal_px, follow_distance and height_setpoint must be > 0");
  }
}

AgentState initialize(const std::vector<FeatureVector>& ref_views, const AgentConfig& config) {
  if (ref_views.empty()) throw Error(ErrorCode::kUsage, "initialize needs at least one view");
  validate(config);
  AgentState s;
  if (ref_views.size() == 1) {
    s.prototype = init_prototype(ref_views[0], std::span<const FeatureVector>(ref_views));
  } else {
    s.prototype = init_prototype(
        ref_views[0], std::span<const FeatureVector>(ref_views.data() + 1, ref_views.size() - 1));
  }
  return s;
}

AgentState initialize_for(const World& world, const AgentConfig& config, int n_views,
                          double noise) {
  Rng rng(derive_seed(config.seed, 0x7ef));
  AgentState s = initialize(reference_views(world, n_views, noise, rng), config);
  s.prototype.source_instance = world.target().instance_id;
  return s;
}

namespace {

// Unknown space outside the crop counts as free.
bool crop_blocked(const Eigen::VectorXd& crop, double radius, const Eigen::Vector2d& p) {
  const int cells = static_cast<int>(std::lround(std::sqrt(static_cast<double>(crop.size()))));
  const double cell = 2.0 * radius / cells;
  const int r = static_cast<int>(std::floor((radius - p.x()) / cell));
  const int col = static_cast<int>(std::floor((p.y() + radius) / cell));
  if (r < 0 || col < 0 || r >= cells || col >= cells) return false;
  return crop[r * cells + col] > 0.5;
}

// Points within `skip` of the origin are ignored: the tracker stands there, so
// an occupied cell at that spot is a rasterization artifact.
bool segment_blocked(const Eigen::VectorXd& crop, double radius, const Eigen::Vector2d& a,
                     const Eigen::Vector2d& b, double step, double skip) {
  const int n = std::max(1, static_cast<int>(std::ceil((b - a).norm() / step)));
  for (int i = 0; i <= n; ++i) {
    const Eigen::Vector2d p = a + (b - a) * (static_cast<double>(i) / n);
    if (p.norm() >= skip && crop_blocked(crop, radius, p)) return true;
  }
  return false;
}

}  // namespace

Box ego_compensate(const Box& box, const Action& action, int image_w, int image_h,
                   const AgentConfig& c) {
  const Eigen::Vector4d n(box[0] / image_w, box[1] / image_h, box[2] / image_w, box[3] / image_h);
  const auto p = box_to_point(n, image_w, image_h, c);
  if (!p) return box;
  const Eigen::Vector2d moved = action.v_f * forward_axis(0.0) + action.v_l * right_axis(0.0);
  const Pose2 after{moved.x(), moved.y(), -action.omega_y};
  const Eigen::Vector2d q = to_body(after, from_body(Pose2{}, *p));
  if (q.x() <= 1e-3) return box;
  Box out = box;
  const double scale = p->norm() / q.norm();
  out[0] = 0.5 * image_w + c.focal_px * q.y() / q.x();
  out[2] *= scale;
  out[3] *= scale;
  return out;
}

double plan_cost(const Eigen::MatrixXd& traj, const Eigen::VectorXd& crop,
                 const std::optional<Eigen::Vector2d>& target, double plan_radius,
                 double crop_radius) {
  const auto T = static_cast<int>(traj.rows());
  const double step = 0.25 * crop_radius / 8.0;
  const double cell = 2.0 * crop_radius / std::sqrt(static_cast<double>(crop.size()));
  double length = 0.0;
  bool collides = false;
  Eigen::Vector2d prev = Eigen::Vector2d::Zero();
  for (int i = 0; i < T; ++i) {
    const Eigen::Vector2d p = plan_radius * traj.row(i).transpose();
    collides = collides || segment_blocked(crop, crop_radius, prev, p, step, cell);
    length += (p - prev).norm();
    prev = p;
  }
  double cost = collides ? T + 1.0 : 0.0;
  if (!target) return cost + T + length / 100.0;
  // The estimate can land inside an occupied cell, so sight lines stop short.
  constexpr double kShort = 0.5;
  for (int i = 0; i < T; ++i) {
    const Eigen::Vector2d p = plan_radius * traj.row(i).transpose();
    const Eigen::Vector2d to = *target - p;
    const double d = to.norm();
    const Eigen::Vector2d near = d > kShort ? Eigen::Vector2d(p + to * ((d - kShort) / d)) : p;
    if (!segment_blocked(crop, crop_radius, p, near, step, cell)) return cost + i + length / 100.0;
  }
  // No sight line: prefer ending closer to the target.
  const Eigen::Vector2d end = plan_radius * traj.row(T - 1).transpose();
  return cost + T + (end - *target).norm() / plan_radius;
}

std::optional<Eigen::Vector2d> box_to_point(const Eigen::Vector4d& bbox, int image_w, int image_h,
                                            const AgentConfig& c) {
  const double h = bbox[3] * image_h;
  if (h <= 0.0) return std::nullopt;
  const double bearing = std::atan((bbox[0] - 0.5) * image_w / c.focal_px);
  const double range = c.follow_distance * c.height_setpoint / h;
  return Eigen::Vector2d(range * std::cos(bearing), range * std::sin(bearing));
}

Eigen::Vector4d point_to_box(const Eigen::Vector2d& point, const Eigen::Vector4d& reference,
                             int image_w, int image_h, const AgentConfig& c) {
  const double range = std::max(point.norm(), 1e-3);
  const double h = c.follow_distance * c.height_setpoint / range / image_h;
  const double scale = reference[3] > 0.0 ? h / reference[3] : 1.0;
  double u = 0.0;
  if (point.x() > 1e-3) {
    u = 0.5 + c.focal_px * point.y() / point.x() / image_w;
  } else {
    u = point.y() >= 0.0 ? 1.0 : 0.0;
  }
  Eigen::Vector4d box(u, reference[1], reference[2] * scale, h);
  return box.cwiseMax(0.0).cwiseMin(1.0);
}

Action pid_control(const Box& box, int image_w, int image_h, const AgentConfig& config,
                   PidMemory* memory, const ActionLimits& limits) {
  const Eigen::Vector2d error((box[0] - 0.5 * image_w) / (0.5 * image_w),
                              (config.height_setpoint - box[3]) / image_h);
  Eigen::Vector2d delta = Eigen::Vector2d::Zero();
  if (memory && memory->prev_error) delta = error - *memory->prev_error;
  if (memory) memory->prev_error = error;
  Action a;
  a.omega_y = config.kp_yaw * error[0] + config.kd_yaw * delta[0];
  a.v_f = config.kp_fwd * error[1] + config.kd_fwd * delta[1];
  return clamp_action(a, limits);
}

Action policy_step(const Observation& obs, AgentState& state, const AgentConfig& config,
                   const NoiseModel* planner, const NoiseSchedule* schedule) {
  state.matched.reset();
  const Mode before = state.mode;
  Action a;
  try {
    switch (state.mode) {
      case Mode::kDetect: a = step_detect(obs, state, config); break;
      case Mode::kTrack: a = step_track(obs, state, config, planner, schedule); break;
      case Mode::kPlan: a = step_plan(obs, state, config, planner, schedule); break;
    }
  } catch (const std::exception& e) {
    state.errors.emplace_back(obs.step, e.what());
    a = Action{};
  }
  if (state.mode != before) state.transitions.emplace_back(before, state.mode);
  state.last_action = clamp_action(a, ActionLimits{});
  ++state.steps;
  return a;
}

TrackingPolicy::TrackingPolicy(AgentState state, AgentConfig config,
                               std::shared_ptr<const NoiseModel> planner,
                               std::shared_ptr<const NoiseSchedule> schedule)
    : state_(std::move(state)),
      config_(std::move(config)),
      planner_(std::move(planner)),
      schedule_(std::move(schedule)) {}

Action TrackingPolicy::act(const Observation& obs) {
  return policy_step(obs, state_, config_, planner_.get(), schedule_.get());
}

}  // namespace occtrack
