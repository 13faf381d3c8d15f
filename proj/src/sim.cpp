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

#include "occtrack/sim.hpp"

#include <algorithm>
#include <iomanip>
#include <limits>
#include <ostream>

#include <json.hpp>

namespace occtrack {

namespace {

constexpr double kGolden = 0.6180339887498949;

std::optional<std::pair<double, double>> segment_rect_interval(
    const Eigen::Vector2d& p0, const Eigen::Vector2d& p1, const Rect& r) {
  double t0 = 0.0;
  double t1 = 1.0;
  const Eigen::Vector2d d = p1 - p0;
  const double lo[2] = {r.min_x, r.min_y};
  const double hi[2] = {r.max_x, r.max_y};
  for (int axis = 0; axis < 2; ++axis) {
    if (std::abs(d[axis]) < 1e-15) {
      if (p0[axis] < lo[axis] || p0[axis] > hi[axis]) return std::nullopt;
      continue;
    }
    double a = (lo[axis] - p0[axis]) / d[axis];
    double b = (hi[axis] - p0[axis]) / d[axis];
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
    if (t0 > t1) return std::nullopt;
  }
  return std::make_pair(t0, t1);
}

Box clip_box(double x0, double y0, double x1, double y1, int w, int h) {
  x0 = std::clamp(x0, 0.0, static_cast<double>(w));
  x1 = std::clamp(x1, 0.0, static_cast<double>(w));
  y0 = std::clamp(y0, 0.0, static_cast<double>(h));
  y1 = std::clamp(y1, 0.0, static_cast<double>(h));
  return {0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0};
}

double view_angle_of(const Entity& e, const Eigen::Vector2d& viewer) {
  const Eigen::Vector2d d = viewer - e.pose.position();
  return wrap_angle(std::atan2(d.y(), d.x()) - e.pose.yaw);
}

int uniform_int(Rng& rng, int lo, int hi) {
  std::uniform_int_distribution<int> u(lo, hi);
  return u(rng);
}

std::optional<Cell> nearest_free(const OccupancyGrid& grid, const Cell& start,
                                 int max_radius = 8) {
  if (!grid.blocked(start)) return start;
  for (int r = 1; r <= max_radius; ++r) {
    std::optional<Cell> best;
    double best_d = std::numeric_limits<double>::infinity();
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        if (std::max(std::abs(dx), std::abs(dy)) != r) continue;
        const Cell c{start.x + dx, start.y + dy};
        if (grid.blocked(c)) continue;
        const double d = std::hypot(dx, dy);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
    }
    if (best) return best;
  }
  return std::nullopt;
}

bool plan_route(const World& world, Entity& e, const Eigen::Vector2d& goal) {
  const auto& g = world.nav_grid;
  const auto s = nearest_free(g, g.cell_of(e.pose.position()));
  const auto t = nearest_free(g, g.cell_of(goal));
  if (!s || !t) return false;
  std::vector<Cell> cells;
  try {
    cells = astar(g, *s, *t);
  } catch (const Error&) {
    return false;
  }
  e.route.clear();
  for (std::size_t i = 1; i < cells.size(); ++i) e.route.push_back(g.center_of(cells[i]));
  if (e.route.empty()) e.route.push_back(g.center_of(*t));
  e.route_cursor = 0;
  return true;
}

void random_goal_route(World& world, Entity& e) {
  const auto& g = world.nav_grid;
  for (int attempt = 0; attempt < 100; ++attempt) {
    const Cell c{uniform_int(world.rng, 0, g.width() - 1), uniform_int(world.rng, 0, g.height() - 1)};
    if (g.blocked(c)) continue;
    const Eigen::Vector2d p = g.center_of(c);
    if ((p - e.pose.position()).norm() < 2.0) continue;
    if (plan_route(world, e, p)) return;
  }
  e.route.clear();
  e.route_cursor = 0;
}

// Returns true once the route is exhausted.
bool follow_route(World& world, Entity& e, double dt) {
  if (e.route_cursor >= e.route.size()) return true;
  double budget = e.speed * dt;
  while (budget > 1e-12 && e.route_cursor < e.route.size()) {
    const Eigen::Vector2d pos = e.pose.position();
    const Eigen::Vector2d dir = e.route[e.route_cursor] - pos;
    const double dist = dir.norm();
    if (dist < 1e-9) {
      ++e.route_cursor;
      continue;
    }
    const double step = std::min(budget, dist);
    const Eigen::Vector2d next = move_circle(world, pos, e.radius, dir / dist * step);
    const double moved = (next - pos).norm();
    e.pose.x = next.x();
    e.pose.y = next.y();
    e.pose.yaw = std::atan2(dir.y(), dir.x());
    if (moved < 1e-6) {
      e.route.clear();
      e.route_cursor = 0;
      return true;
    }
    budget -= moved;
    if (step >= dist - 1e-9) ++e.route_cursor;
  }
  return e.route_cursor >= e.route.size();
}

// Nearest obstacle-hugging point with no line of sight from the tracker.
bool plan_hide(World& world, Entity& e) {
  const auto& g = world.nav_grid;
  const Camera cam = make_camera(world.tracker);
  struct Spot {
    double dist;
    Eigen::Vector2d p;
  };
  std::vector<Spot> spots;
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) {
      if (g.blocked({x, y})) continue;
      const Eigen::Vector2d p = g.center_of({x, y});
      const double d = (p - e.pose.position()).norm();
      if (d < 1.0 || d > e.hide_radius) continue;
      double clearance = std::numeric_limits<double>::infinity();
      for (const auto& ob : world.obstacles) {
        clearance = std::min(clearance, distance_to_rect(p, ob.footprint));
      }
      if (clearance > e.radius + 0.35) continue;
      spots.push_back({d, p});
    }
  }
  std::stable_sort(spots.begin(), spots.end(),
                   [](const Spot& a, const Spot& b) { return a.dist < b.dist; });
  int checked = 0;
  for (const auto& s : spots) {
    if (++checked > 300) break;
    Entity phantom = e;
    phantom.pose.x = s.p.x();
    phantom.pose.y = s.p.y();
    if (visibility(world, cam, phantom, 16) > 0.0) continue;
    if (plan_route(world, e, s.p)) return true;
  }
  return false;
}

void update_entity(World& world, Entity& e, double dt) {
  switch (e.behavior) {
    case Behavior::kStatic:
      return;
    case Behavior::kScripted:
      if (!e.script.empty()) {
        const auto idx = std::min<std::size_t>(static_cast<std::size_t>(world.time_step + 1),
                                               e.script.size() - 1);
        e.pose = e.script[idx];
      }
      return;
    case Behavior::kWanderer:
      if (follow_route(world, e, dt)) random_goal_route(world, e);
      return;
    case Behavior::kEvader:
      if (e.dwell > 0) {
        if (--e.dwell == 0) {
          e.hiding = false;
          e.phase_steps = uniform_int(world.rng, e.hide_interval_min, e.hide_interval_max);
          e.route.clear();
          e.route_cursor = 0;
        }
        return;
      }
      if (e.hiding) {
        if (follow_route(world, e, dt)) e.dwell = uniform_int(world.rng, e.dwell_min, e.dwell_max);
        return;
      }
      if (--e.phase_steps <= 0 && plan_hide(world, e)) {
        e.hiding = true;
        return;
      }
      if (follow_route(world, e, dt)) random_goal_route(world, e);
      return;
  }
}

}  // namespace

Eigen::Vector2d to_body(const Pose2& pose, const Eigen::Vector2d& world_point) {
  const Eigen::Vector2d d = world_point - pose.position();
  return {d.dot(forward_axis(pose.yaw)), d.dot(right_axis(pose.yaw))};
}

Eigen::Vector2d from_body(const Pose2& pose, const Eigen::Vector2d& body_point) {
  return pose.position() + body_point.x() * forward_axis(pose.yaw) +
         body_point.y() * right_axis(pose.yaw);
}

Action clamp_action(const Action& a, const ActionLimits& limits) {
  return {std::clamp(a.v_f, -limits.linear, limits.linear),
          std::clamp(a.v_l, -limits.linear, limits.linear), 0.0,
          std::clamp(a.omega_y, -limits.yaw, limits.yaw)};
}

const char* to_string(Behavior b) {
  switch (b) {
    case Behavior::kStatic: return "static";
    case Behavior::kWanderer: return "wanderer";
    case Behavior::kEvader: return "evader";
    case Behavior::kScripted: return "scripted";
  }
  return "static";
}

Behavior behavior_from_string(const std::string& name) {
  if (name == "static") return Behavior::kStatic;
  if (name == "wanderer") return Behavior::kWanderer;
  if (name == "evader") return Behavior::kEvader;
  if (name == "scripted") return Behavior::kScripted;
  throw Error(ErrorCode::kUsage, "unknown behavior '" + name + "'");
}

void World::rebuild_grids(double resolution, double nav_inflation) {
  map = rasterize(bounds, obstacles, resolution, 0.0);
  nav_grid = rasterize(bounds, obstacles, resolution, nav_inflation);
}

Camera make_camera(const Pose2& pose, const CameraIntrinsics& in) {
  Camera c;
  c.pose = pose;
  c.fov_h = in.fov_h;
  c.image_w = in.image_w;
  c.image_h = in.image_h;
  c.focal = 0.5 * in.image_w / std::tan(0.5 * in.fov_h);
  c.cam_height = in.cam_height;
  c.near = in.near;
  return c;
}

std::optional<Box> project_bbox(const Camera& camera, const Entity& entity) {
  const Eigen::Vector2d rel = to_body(camera.pose, entity.pose.position());
  const double d = rel.x();
  if (d <= camera.near) return std::nullopt;
  const double f = camera.focal;
  const double u = 0.5 * camera.image_w + f * rel.y() / d;
  const double half_w = f * entity.radius / d;
  const double v_top = 0.5 * camera.image_h - f * (entity.height - camera.cam_height) / d;
  const double v_bot = 0.5 * camera.image_h + f * camera.cam_height / d;
  if (u + half_w <= 0.0 || u - half_w >= camera.image_w || v_bot <= 0.0 ||
      v_top >= camera.image_h) {
    return std::nullopt;
  }
  return clip_box(u - half_w, v_top, u + half_w, v_bot, camera.image_w, camera.image_h);
}

double visibility(const World& world, const Camera& camera,
                  const Entity& entity, int n_rays) {
  if (n_rays < 1) throw Error(ErrorCode::kUsage, "n_rays must be >= 1");
  const Eigen::Vector2d c = camera.pose.position();
  const Eigen::Vector2d e = entity.pose.position();
  const Eigen::Vector2d dir = e - c;
  const double dist = dir.norm();
  if (dist < 1e-9) return 1.0;
  const Eigen::Vector2d perp(-dir.y() / dist, dir.x() / dist);
  int clear = 0;
  for (int i = 0; i < n_rays; ++i) {
    const double s = entity.radius * (2.0 * (i + 0.5) / n_rays - 1.0);
    const double frac = (i + 0.5) * kGolden;
    const double z1 = (frac - std::floor(frac)) * entity.height;
    const Eigen::Vector2d p1 = e + s * perp;
    bool blocked = false;
    for (const auto& ob : world.obstacles) {
      const auto hit = segment_rect_interval(c, p1, ob.footprint);
      if (!hit) continue;
      const double z_in = camera.cam_height + hit->first * (z1 - camera.cam_height);
      const double z_out = camera.cam_height + hit->second * (z1 - camera.cam_height);
      if (ob.height > std::min(z_in, z_out)) {
        blocked = true;
        break;
      }
    }
    if (!blocked) ++clear;
  }
  return static_cast<double>(clear) / n_rays;
}

FeatureVector appearance(const World& world, const Entity& entity, double angle,
                         double noise, Rng& rng) {
  if (!world.manifolds) throw Error(ErrorCode::kUsage, "world has no manifolds");
  FeatureVector f = describe(world.manifolds->by_instance(entity.instance_id), angle, noise, rng);
  if (entity.drift_amplitude > 0.0 && entity.drift_basis.cols() == 2) {
    const double phase = entity.drift_phase + 2.0 * kPi * world.time_step / entity.drift_period;
    f += entity.drift_amplitude *
         (std::cos(phase) * entity.drift_basis.col(0) + std::sin(phase) * entity.drift_basis.col(1));
    f /= f.norm();
  }
  return f;
}

std::vector<FeatureVector> reference_views(const World& world, int n_views,
                                           double noise, Rng& rng) {
  const Entity& t = world.target();
  const double angle = view_angle_of(t, world.tracker.position());
  std::vector<FeatureVector> views{appearance(world, t, angle, noise, rng)};
  for (int i = 0; i < n_views; ++i) {
    views.push_back(appearance(world, t, angle + 2.0 * kPi * i / n_views, noise, rng));
  }
  return views;
}

Observation render(const World& world, const Camera& camera,
                   const RenderConfig& config, Rng& rng) {
  Observation obs;
  obs.step = world.time_step;
  obs.image_w = camera.image_w;
  obs.image_h = camera.image_h;
  for (const auto& e : world.entities) {
    const auto box = project_bbox(camera, e);
    if (!box) continue;
    if ((e.pose.position() - camera.pose.position()).norm() > config.max_range) continue;
    const double vis = visibility(world, camera, e, config.n_rays);
    if (vis <= 0.0) continue;
    Candidate c;
    c.instance_id = e.instance_id;
    c.category = e.category;
    c.visibility = vis;
    c.feature = appearance(world, e, view_angle_of(e, camera.pose.position()),
                           config.feature_noise, rng);
    Box b = *box;
    if (config.bbox_noise_px > 0.0) {
      for (int i = 0; i < 4; ++i) b[i] += config.bbox_noise_px * standard_normal(rng);
    }
    double quality = 1.0;
    if (config.corrupt_prob > 0.0 && uniform(rng, 0.0, 1.0) < config.corrupt_prob * (1.0 - vis)) {
      quality = uniform(rng, config.corrupt_quality_min, config.corrupt_quality_max);
      b[0] = uniform(rng, 0.0, camera.image_w);
      b[1] = uniform(rng, 0.3, 0.7) * camera.image_h;
      b[2] *= uniform(rng, 0.5, 1.5);
      b[3] *= uniform(rng, 0.5, 1.5);
    }
    b[2] = std::max(b[2], 1.0);
    b[3] = std::max(b[3], 1.0);
    c.bbox = clip_box(b[0] - 0.5 * b[2], b[1] - 0.5 * b[3], b[0] + 0.5 * b[2],
                      b[1] + 0.5 * b[3], camera.image_w, camera.image_h);
    c.bbox[2] = std::max(c.bbox[2], 1e-3);
    c.bbox[3] = std::max(c.bbox[3], 1e-3);
    c.confidence =
        std::clamp(quality * vis + config.confidence_sigma * standard_normal(rng), 0.0, 1.0);
    obs.candidates.push_back(std::move(c));
  }
  obs.occupancy = egocentric_crop(world.map, camera.pose.position(), camera.pose.yaw,
                                  config.crop_radius, config.crop_cells);
  return obs;
}

bool circle_free(const World& world, const Eigen::Vector2d& p, double radius) {
  const Rect& b = world.bounds;
  if (p.x() - radius < b.min_x || p.x() + radius > b.max_x || p.y() - radius < b.min_y ||
      p.y() + radius > b.max_y) {
    return false;
  }
  for (const auto& ob : world.obstacles) {
    if (distance_to_rect(p, ob.footprint) < radius) return false;
  }
  return true;
}

namespace {

// Largest feasible fraction of `delta`, found by substepping then bisection.
double sweep_fraction(const World& world, const Eigen::Vector2d& from, double radius,
                      const Eigen::Vector2d& delta) {
  const double len = delta.norm();
  if (len < 1e-12) return 0.0;
  const int n = std::max(1, static_cast<int>(std::ceil(len / (0.25 * radius))));
  double ok = 0.0;
  for (int k = 1; k <= n; ++k) {
    const double t = static_cast<double>(k) / n;
    if (circle_free(world, from + t * delta, radius)) {
      ok = t;
      continue;
    }
    double lo = ok;
    double hi = t;
    for (int it = 0; it < 40; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (circle_free(world, from + mid * delta, radius)) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return lo;
  }
  return 1.0;
}

}  // namespace

Eigen::Vector2d move_circle(const World& world, const Eigen::Vector2d& from,
                            double radius, const Eigen::Vector2d& delta) {
  if (!circle_free(world, from, radius)) {
    // Already in contact: accept only moves that end free.
    const Eigen::Vector2d to = from + delta;
    return circle_free(world, to, radius) ? to : from;
  }
  const double t = sweep_fraction(world, from, radius, delta);
  Eigen::Vector2d p = from + t * delta;
  if (t >= 1.0) return p;
  const Eigen::Vector2d rest = (1.0 - t) * delta;
  const Eigen::Vector2d ax(rest.x(), 0.0);
  p += sweep_fraction(world, p, radius, ax) * ax;
  const Eigen::Vector2d ay(0.0, rest.y());
  p += sweep_fraction(world, p, radius, ay) * ay;
  return p;
}

void step_world(World& world, const Action& action, double dt) {
  Pose2& tr = world.tracker;
  const Eigen::Vector2d delta =
      (action.v_f * forward_axis(tr.yaw) + action.v_l * right_axis(tr.yaw)) * dt;
  if (delta.squaredNorm() > 0.0) {
    const Eigen::Vector2d p = move_circle(world, tr.position(), world.tracker_radius, delta);
    tr.x = p.x();
    tr.y = p.y();
  }
  if (action.omega_y != 0.0) tr.yaw = wrap_angle(tr.yaw - action.omega_y * dt);
  for (auto& e : world.entities) update_entity(world, e, dt);
  ++world.time_step;
}

double reward(const Pose2& tracker, const Pose2& target, const RewardParams& p) {
  const Eigen::Vector2d rel = to_body(tracker, target.position());
  const double d = rel.norm();
  const double theta = std::atan2(rel.y(), rel.x());
  const double r = 1.0 - std::abs(d - p.d_star) / p.d_max - std::abs(theta) / p.theta_max;
  return std::clamp(r, -1.0, 1.0);
}

double EpisodeLog::total_reward() const {
  double s = 0.0;
  for (const auto& st : steps) s += st.reward;
  return s;
}

EpisodeLog run_episode(World world, Policy& policy, const EpisodeConfig& config,
                       std::uint64_t seed) {
  if (config.max_steps < 1 || config.lost_limit < 1) {
    throw Error(ErrorCode::kUsage, "max_steps and lost_limit must be >= 1");
  }
  Rng rng(derive_seed(seed, 0x5e45));
  EpisodeLog log;
  log.max_steps = config.max_steps;
  log.steps.reserve(static_cast<std::size_t>(config.max_steps));
  const int target_id = world.target().instance_id;
  int invisible = 0;
  for (int t = 0; t < config.max_steps; ++t) {
    const Camera cam = make_camera(world.tracker, config.render.camera);
    const Observation obs = render(world, cam, config.render, rng);
    EpisodeStep st;
    st.step = t;
    st.tracker = world.tracker;
    st.target = world.target().pose;
    for (const auto& c : obs.candidates) {
      if (c.instance_id == target_id) {
        st.target_visible = true;
        st.bbox = c.bbox;
        st.confidence = c.confidence;
      }
    }
    try {
      st.action = clamp_action(policy.act(obs), config.limits);
    } catch (const std::exception& ex) {
      log.aborted = true;
      log.error = ex.what();
      break;
    }
    step_world(world, st.action);
    st.reward = reward(world.tracker, world.target().pose, config.reward);
    log.steps.push_back(st);
    invisible = st.target_visible ? 0 : invisible + 1;
    if (invisible > config.lost_limit) {
      log.terminated_early = true;
      break;
    }
  }
  return log;
}

double correct_action_rate(const EpisodeLog& log, int dead_zone_px, int image_w,
                           double lateral_weight) {
  int eligible = 0;
  int correct = 0;
  for (const auto& st : log.steps) {
    if (!st.bbox) continue;
    const double offset = (*st.bbox)[0] - 0.5 * image_w;
    if (std::abs(offset) <= dead_zone_px) continue;
    ++eligible;
    const double turn = st.action.omega_y + lateral_weight * st.action.v_l;
    if (turn * offset > 0.0) ++correct;
  }
  if (eligible == 0) throw Error(ErrorCode::kNoEligibleSteps, "every step is inside the dead zone");
  return static_cast<double>(correct) / eligible;
}

Metrics compute_metrics(const std::vector<EpisodeLog>& logs, int horizon) {
  if (logs.empty()) throw Error(ErrorCode::kEmptyLogs, "no episode logs");
  constexpr int kTsrHorizon = 1500;
  constexpr int kDeadZone = 8;
  Metrics m;
  m.episodes = static_cast<int>(logs.size());
  int tsr_pool = 0;
  int tsr_hits = 0;
  int car_pool = 0;
  double car_sum = 0.0;
  for (const auto& log : logs) {
    m.ar += log.total_reward();
    m.el += log.length();
    if (!log.aborted && log.length() >= horizon) m.sr += 1.0;
    if (log.max_steps >= kTsrHorizon) {
      ++tsr_pool;
      if (!log.aborted && log.length() >= kTsrHorizon) ++tsr_hits;
    }
    try {
      car_sum += correct_action_rate(log, kDeadZone);
      ++car_pool;
    } catch (const Error&) {
    }
  }
  const double n = static_cast<double>(logs.size());
  m.ar /= n;
  m.el /= n;
  m.sr /= n;
  m.tsr = tsr_pool > 0 ? static_cast<double>(tsr_hits) / tsr_pool
                       : std::numeric_limits<double>::quiet_NaN();
  m.car = car_pool > 0 ? car_sum / car_pool : std::numeric_limits<double>::quiet_NaN();
  return m;
}

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
  os << "scenario,AR,EL,SR,TSR,CAR,episodes,seed\n";
  const auto num = [&os](double v) {
    if (std::isnan(v)) {
      os << "nan";
    } else {
      os << std::setprecision(6) << v;
    }
  };
  for (const auto& r : rows) {
    os << r.scenario << ',';
    num(r.metrics.ar);
    os << ',';
    num(r.metrics.el);
    os << ',';
    num(r.metrics.sr);
    os << ',';
    num(r.metrics.tsr);
    os << ',';
    num(r.metrics.car);
    os << ',' << r.metrics.episodes << ',' << r.seed << '\n';
  }
}

void write_episode_jsonl(std::ostream& os, const EpisodeLog& log) {
  for (const auto& st : log.steps) {
    nlohmann::json j;
    j["step"] = st.step;
    j["tracker_pose"] = {st.tracker.x, st.tracker.y, st.tracker.yaw};
    j["target_pose"] = {st.target.x, st.target.y, st.target.yaw};
    j["action"] = {st.action.v_f, st.action.v_l, st.action.v_v, st.action.omega_y};
    j["reward"] = st.reward;
    j["target_visible"] = st.target_visible;
    if (st.bbox) {
      j["bbox"] = {(*st.bbox)[0], (*st.bbox)[1], (*st.bbox)[2], (*st.bbox)[3]};
    } else {
      j["bbox"] = nullptr;
    }
    j["confidence"] = st.confidence;
    os << j.dump() << '\n';
  }
}

WorldPreset preset_by_name(const std::string& name) {
  WorldPreset p;
  p.name = name;
  if (name == "default") return p;
  if (name == "occlusion_heavy") {
    p.min_obstacles = 6;
    p.max_obstacles = 8;
    p.distractors = 2;
    p.target_behavior = Behavior::kEvader;
    p.target_speed = 0.12;
    p.dwell_min = 20;
    p.dwell_max = 40;
    p.corrupt_prob = 1.0;
    return p;
  }
  if (name == "distractor4") {
    p.distractors = 4;
    return p;
  }
  throw Error(ErrorCode::kUsage, "unknown preset '" + name + "'");
}

namespace {

Eigen::Vector2d sample_free_point(const World& w, Rng& rng, double clearance) {
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector2d p(uniform(rng, w.bounds.min_x, w.bounds.max_x),
                            uniform(rng, w.bounds.min_y, w.bounds.max_y));
    if (circle_free(w, p, clearance)) return p;
  }
  throw Error(ErrorCode::kSamplingExhausted, "no free spawn point");
}

}  // namespace

RenderConfig render_config_for(const WorldPreset& preset) {
  RenderConfig r;
  r.corrupt_prob = preset.corrupt_prob;
  return r;
}

World make_world(const WorldPreset& preset, std::uint64_t seed) {
  World w;
  w.rng.seed(derive_seed(seed, 1));
  Rng layout(derive_seed(seed, 0));
  w.bounds = {0.0, 0.0, preset.room, preset.room};

  const int n_obs = uniform_int(layout, preset.min_obstacles, preset.max_obstacles);
  for (int i = 0, attempts = 0; i < n_obs && attempts < 2000; ++attempts) {
    const double sw = uniform(layout, preset.min_side, preset.max_side);
    const double sh = uniform(layout, preset.min_side, preset.max_side);
    const double x = uniform(layout, 1.0, preset.room - 1.0 - sw);
    const double y = uniform(layout, 1.0, preset.room - 1.0 - sh);
    const Rect r{x, y, x + sw, y + sh};
    bool clash = false;
    for (const auto& ob : w.obstacles) clash = clash || ob.footprint.inflated(1.2).overlaps(r);
    if (clash) continue;
    w.obstacles.push_back({r, uniform(layout, preset.min_height, preset.max_height)});
    ++i;
  }
  w.rebuild_grids();

  const int k = 1 + preset.distractors;
  w.manifolds = std::make_shared<const ManifoldSet>(
      generate_manifold_set(k, preset.feature_dim, preset.cohesion_delta,
                            preset.separation_eta, preset.view_dirs, derive_seed(seed, 2)));

  // Drift directions orthogonal to every manifold and to each other.
  std::vector<Eigen::VectorXd> used;
  for (const auto& m : w.manifolds->manifolds) {
    used.push_back(m.mean_direction.normalized());
    for (int c = 0; c < m.view_basis.cols(); ++c) used.push_back(m.view_basis.col(c));
  }
  const auto fresh_direction = [&]() {
    Eigen::VectorXd v = gaussian_vector(layout, preset.feature_dim);
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& u : used) v -= u.dot(v) * u;
    }
    v.normalize();
    used.push_back(v);
    return v;
  };

  for (int i = 0; i < k; ++i) {
    Entity e;
    e.instance_id = w.manifolds->manifolds[static_cast<std::size_t>(i)].instance_id;
    e.behavior = i == 0 ? preset.target_behavior : preset.distractor_behavior;
    e.speed = i == 0 ? preset.target_speed : preset.distractor_speed;
    e.pose.yaw = uniform(layout, -kPi, kPi);
    if (preset.drift_amplitude > 0.0 && k * (3 + preset.view_dirs) <= preset.feature_dim) {
      e.drift_basis.resize(preset.feature_dim, 2);
      e.drift_basis.col(0) = fresh_direction();
      e.drift_basis.col(1) = fresh_direction();
      e.drift_amplitude = preset.drift_amplitude;
      e.drift_period = preset.drift_period;
      e.drift_phase = uniform(layout, -kPi, kPi);
    }
    if (e.behavior == Behavior::kEvader) {
      e.hide_interval_min = preset.hide_interval_min;
      e.hide_interval_max = preset.hide_interval_max;
      e.dwell_min = preset.dwell_min;
      e.dwell_max = preset.dwell_max;
      e.hide_radius = preset.hide_radius;
      e.phase_steps = uniform_int(layout, 60, 140);
    }
    w.entities.push_back(std::move(e));
  }
  w.target_index = 0;

  // Target and tracker: tracker at the following distance with a clear view.
  bool placed = false;
  for (int attempt = 0; attempt < 500 && !placed; ++attempt) {
    const Eigen::Vector2d tp = sample_free_point(w, layout, w.entities[0].radius + 0.2);
    const double ang = uniform(layout, -kPi, kPi);
    const Eigen::Vector2d cp = tp + 2.5 * Eigen::Vector2d(std::cos(ang), std::sin(ang));
    if (!circle_free(w, cp, w.tracker_radius + 0.1)) continue;
    w.entities[0].pose.x = tp.x();
    w.entities[0].pose.y = tp.y();
    w.tracker = {cp.x(), cp.y(), std::atan2(tp.y() - cp.y(), tp.x() - cp.x())};
    placed = visibility(w, make_camera(w.tracker), w.entities[0], 32) >= 0.95;
  }
  if (!placed) throw Error(ErrorCode::kSamplingExhausted, "could not place target and tracker");

  for (int i = 1; i < k; ++i) {
    Entity& e = w.entities[static_cast<std::size_t>(i)];
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const Eigen::Vector2d p = sample_free_point(w, layout, e.radius + 0.2);
      if ((p - w.entities[0].pose.position()).norm() < 1.5) continue;
      if ((p - w.tracker.position()).norm() < 1.0) continue;
      e.pose.x = p.x();
      e.pose.y = p.y();
      break;
    }
  }
  return w;
}

}  // namespace occtrack
