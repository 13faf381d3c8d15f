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

#include "occtrack/dataset.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <limits>
#include <queue>
#include <sstream>

#include <json.hpp>

namespace occtrack {

namespace {

using Vec2 = Eigen::Vector2d;

const std::array<Vec2, 4> kNormals = {Vec2(1, 0), Vec2(0, 1), Vec2(-1, 0), Vec2(0, -1)};

int uniform_int(Rng& rng, int lo, int hi) {
  std::uniform_int_distribution<int> u(lo, hi);
  return u(rng);
}

Rect rect_from_points(const Vec2& a, const Vec2& b) {
  return {std::min(a.x(), b.x()), std::min(a.y(), b.y()), std::max(a.x(), b.x()),
          std::max(a.y(), b.y())};
}

Rect rect_around(const Vec2& c, double w, double h) {
  return {c.x() - 0.5 * w, c.y() - 0.5 * h, c.x() + 0.5 * w, c.y() + 0.5 * h};
}

// Extent of a rectangle along an axis-aligned unit direction.
double extent_along(const Rect& r, const Vec2& axis) {
  return std::abs(axis.x()) > 0.5 ? r.width() : r.height();
}

Vec2 corner_between(const Rect& r, const Vec2& n1, const Vec2& n2) {
  const Vec2 c = r.center();
  const Vec2 s = n1 + n2;
  return {c.x() + 0.5 * r.width() * s.x(), c.y() + 0.5 * r.height() * s.y()};
}

bool inside_room(const Rect& room, const Rect& r, double margin) {
  return r.min_x >= room.min_x + margin && r.min_y >= room.min_y + margin &&
         r.max_x <= room.max_x - margin && r.max_y <= room.max_y - margin;
}

struct Draft {
  std::vector<Obstacle> obstacles;
  std::size_t chosen = 0;
  int edge = 0;
  Vec2 target;
  Vec2 tracker;
  Vec2 corner;   // obstacle corner the line of sight wraps around
  Vec2 outward;  // sum of the two edge normals meeting at `corner`
};

double draw_height(Rng& rng, const ScenarioParams& p) {
  return uniform(rng, p.min_height, p.max_height);
}

// Target on edge i of the chosen obstacle, tracker outward from the adjacent
// edge j.
void place_around_corner(Rng& rng, const Rect& o, int i, int j, const ScenarioParams& p,
                         Draft& d) {
  const Vec2& ni = kNormals[static_cast<std::size_t>(i)];
  const Vec2& nj = kNormals[static_cast<std::size_t>(j)];
  const Vec2 corner = corner_between(o, ni, nj);
  d.corner = corner;
  d.outward = ni + nj;
  const double len_i = extent_along(o, nj);
  const double len_j = extent_along(o, ni);
  const double a = uniform(rng, 0.3, std::max(0.35, std::min(len_i - 0.2, 1.5)));
  const double b = uniform(rng, 0.0, 0.8 * len_j);
  const double out = uniform(rng, p.min_standoff, p.max_standoff);
  d.target = corner - a * nj + 0.45 * ni;
  d.tracker = corner - b * ni + out * nj;
}

std::optional<Draft> draft_single(Rng& rng, const ScenarioParams& p, const Rect& room) {
  if (p.max_obstacles < 1) return std::nullopt;
  Draft d;
  const Vec2 c(uniform(rng, room.min_x + 3.0, room.max_x - 3.0),
               uniform(rng, room.min_y + 3.0, room.max_y - 3.0));
  const Rect o = rect_around(c, uniform(rng, 1.0, 2.5), uniform(rng, 1.0, 2.5));
  d.obstacles.push_back({o, draw_height(rng, p)});
  d.edge = uniform_int(rng, 0, 3);
  const int j = (d.edge + (uniform_int(rng, 0, 1) ? 1 : 3)) % 4;
  place_around_corner(rng, o, d.edge, j, p, d);
  return d;
}

std::optional<Draft> draft_double(Rng& rng, const ScenarioParams& p, const Rect& room) {
  if (p.max_obstacles < 2) return std::nullopt;
  auto d = draft_single(rng, p, room);
  if (!d) return std::nullopt;
  // Second occluder diagonally across the corner so the view passes a gap.
  const Vec2 out = d->outward;
  const double gap = uniform(rng, 0.8, 1.4) / std::sqrt(2.0);
  const Vec2 near = d->corner + gap * out;
  const Vec2 far = near + Vec2(out.x() * uniform(rng, 0.8, 1.5), out.y() * uniform(rng, 0.8, 1.5));
  d->obstacles.push_back({rect_from_points(near, far), draw_height(rng, p)});
  return d;
}

std::optional<Draft> draft_corridor(Rng& rng, const ScenarioParams& p, const Rect& room) {
  if (p.max_obstacles < 3) return std::nullopt;
  Draft d;
  const Vec2 m = kNormals[static_cast<std::size_t>(uniform_int(rng, 0, 3))];
  const Vec2 perp(-m.y(), m.x());
  const double width = uniform(rng, 1.4, 2.0);
  const double depth = uniform(rng, 2.0, 3.0);
  constexpr double kWall = 0.3;
  constexpr double kBack = 0.7;
  const double lateral = -(0.5 * width - 0.5);
  d.target = Vec2(uniform(rng, room.min_x + 3.0, room.max_x - 3.0),
                  uniform(rng, room.min_y + 3.0, room.max_y - 3.0));
  const Vec2 axis = d.target - lateral * perp;
  const auto block = [&](double a0, double a1, double l0, double l1) {
    return rect_from_points(axis + a0 * m + l0 * perp, axis + a1 * m + l1 * perp);
  };
  const double mouth = depth - kBack;
  d.obstacles.push_back({block(-kBack - kWall, mouth, -0.5 * width - kWall, -0.5 * width),
                         draw_height(rng, p)});
  d.obstacles.push_back({block(-kBack - kWall, mouth, 0.5 * width, 0.5 * width + kWall),
                         draw_height(rng, p)});
  d.obstacles.push_back({block(-kBack - kWall, -kBack, -0.5 * width - kWall, 0.5 * width + kWall),
                         draw_height(rng, p)});
  d.chosen = 0;
  for (int e = 0; e < 4; ++e) {
    if (kNormals[static_cast<std::size_t>(e)].dot(perp) > 0.5) d.edge = e;
  }
  const double side = uniform_int(rng, 0, 1) ? 1.0 : -1.0;
  d.tracker = axis + (mouth + uniform(rng, p.min_standoff, p.max_standoff)) * m +
              side * (0.5 * width + uniform(rng, 0.3, 1.5)) * perp;
  return d;
}

void jitter(Rng& rng, std::vector<Obstacle>& obstacles, double amount) {
  if (amount <= 0.0) return;
  for (auto& ob : obstacles) {
    const Vec2 c = ob.footprint.center();
    ob.footprint = rect_around(c, ob.footprint.width() * (1.0 + uniform(rng, -amount, amount)),
                               ob.footprint.height() * (1.0 + uniform(rng, -amount, amount)));
  }
}

World world_from(const Rect& room, const std::vector<Obstacle>& obstacles, const Vec2& target,
                 double target_yaw, const Vec2& tracker) {
  World w;
  w.bounds = room;
  w.obstacles = obstacles;
  Entity t;
  t.pose = {target.x(), target.y(), target_yaw};
  w.entities = {t};
  w.tracker = {tracker.x(), tracker.y(),
               std::atan2(target.y() - tracker.y(), target.x() - tracker.x())};
  w.rebuild_grids();
  return w;
}

std::optional<Cell> nearest_free_cell(const OccupancyGrid& g, const Cell& start) {
  if (!g.blocked(start)) return start;
  for (int r = 1; r <= 8; ++r) {
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        if (std::max(std::abs(dx), std::abs(dy)) != r) continue;
        const Cell c{start.x + dx, start.y + dy};
        if (!g.blocked(c)) return c;
      }
    }
  }
  return std::nullopt;
}

// Closest cell by path cost from which the target is seen at `min_vis`.
std::optional<Cell> nearest_viewpoint(const World& world, const OccupancyGrid& g,
                                      const Cell& start, const PlanParams& params) {
  const int n = g.width() * g.height();
  std::vector<double> dist(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::vector<std::uint8_t> done(static_cast<std::size_t>(n), 0);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[static_cast<std::size_t>(g.index(start))] = 0.0;
  pq.emplace(0.0, g.index(start));
  const Entity& target = world.target();
  while (!pq.empty()) {
    const auto [d, idx] = pq.top();
    pq.pop();
    if (done[static_cast<std::size_t>(idx)]) continue;
    done[static_cast<std::size_t>(idx)] = 1;
    const Cell c = g.cell_at(idx);
    const Vec2 p = g.center_of(c);
    Pose2 view{p.x(), p.y(), 0.0};
    if (visibility(world, make_camera(view, params.camera), target, params.n_rays) >=
        params.goal_visibility) {
      return c;
    }
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if ((dx == 0 && dy == 0) || !can_move(g, c, dx, dy)) continue;
        const Cell nb{c.x + dx, c.y + dy};
        const auto v = static_cast<std::size_t>(g.index(nb));
        const double nd = d + ((dx != 0 && dy != 0) ? std::sqrt(2.0) : 1.0);
        if (nd < dist[v]) {
          dist[v] = nd;
          pq.emplace(nd, static_cast<int>(v));
        }
      }
    }
  }
  return std::nullopt;
}

// Body-frame polyline cut where it first leaves [-r, r]^2.
std::vector<Vec2> truncate_to_box(const std::vector<Vec2>& pts, double r) {
  std::vector<Vec2> out;
  const auto inside = [r](const Vec2& p) { return std::abs(p.x()) <= r && std::abs(p.y()) <= r; };
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (inside(pts[i])) {
      out.push_back(pts[i]);
      continue;
    }
    if (i == 0) break;
    const Vec2 a = pts[i - 1];
    const Vec2 d = pts[i] - a;
    double t = 1.0;
    for (int k = 0; k < 2; ++k) {
      if (std::abs(d[k]) < 1e-15) continue;
      const double bound = d[k] > 0 ? r : -r;
      t = std::min(t, (bound - a[k]) / d[k]);
    }
    out.push_back(a + std::max(0.0, t) * d);
    break;
  }
  return out;
}

bool separated(const std::array<Vec2, 4>& quad, const Rect& r, const Vec2& axis) {
  double qmin = std::numeric_limits<double>::infinity();
  double qmax = -qmin;
  for (const auto& p : quad) {
    const double v = p.dot(axis);
    qmin = std::min(qmin, v);
    qmax = std::max(qmax, v);
  }
  double rmin = std::numeric_limits<double>::infinity();
  double rmax = -rmin;
  for (const Vec2& p : {Vec2(r.min_x, r.min_y), Vec2(r.max_x, r.min_y), Vec2(r.min_x, r.max_y),
                       Vec2(r.max_x, r.max_y)}) {
    const double v = p.dot(axis);
    rmin = std::min(rmin, v);
    rmax = std::max(rmax, v);
  }
  return qmax <= rmin + 1e-12 || rmax <= qmin + 1e-12;
}

}  // namespace

const char* to_string(Archetype a) {
  switch (a) {
    case Archetype::kSingleSide: return "single_side";
    case Archetype::kDoubleSide: return "double_side";
    case Archetype::kCorridor: return "corridor";
  }
  return "single_side";
}

Archetype archetype_from_string(const std::string& name) {
  if (name == "single_side") return Archetype::kSingleSide;
  if (name == "double_side") return Archetype::kDoubleSide;
  if (name == "corridor") return Archetype::kCorridor;
  throw Error(ErrorCode::kFormat, "unknown archetype '" + name + "'");
}

Scenario sample_scenario(Archetype archetype, Rng& rng, const ScenarioParams& p) {
  const Rect room{0.0, 0.0, p.room, p.room};
  for (int attempt = 0; attempt < p.max_retries; ++attempt) {
    std::optional<Draft> d;
    switch (archetype) {
      case Archetype::kSingleSide: d = draft_single(rng, p, room); break;
      case Archetype::kDoubleSide: d = draft_double(rng, p, room); break;
      case Archetype::kCorridor: d = draft_corridor(rng, p, room); break;
    }
    if (!d) {
      // Not enough obstacles for the archetype: an open room, never occluded.
      d = Draft{};
      d->target = Vec2(uniform(rng, 1.0, p.room - 1.0), uniform(rng, 1.0, p.room - 1.0));
      d->tracker = Vec2(uniform(rng, 1.0, p.room - 1.0), uniform(rng, 1.0, p.room - 1.0));
    }
    jitter(rng, d->obstacles, p.size_jitter);
    bool ok = true;
    for (const auto& ob : d->obstacles) ok = ok && inside_room(room, ob.footprint, 0.3);
    if (!ok) continue;
    World w = world_from(room, d->obstacles, d->target, uniform(rng, -kPi, kPi), d->tracker);
    if (!circle_free(w, d->target, 0.4) || !circle_free(w, d->tracker, 0.6)) continue;
    const Camera cam = make_camera(w.tracker);
    const double vis = visibility(w, cam, w.entities[0], 32);
    if (vis >= 1.0) continue;

    // Extra clutter that neither touches the scene nor changes its occlusion.
    const int total = uniform_int(rng, std::max(p.min_obstacles, static_cast<int>(d->obstacles.size())),
                                  std::max(p.max_obstacles, static_cast<int>(d->obstacles.size())));
    for (int k = static_cast<int>(w.obstacles.size()), tries = 0; k < total && tries < 100; ++tries) {
      const double sw = uniform(rng, p.min_side, p.max_side);
      const double sh = uniform(rng, p.min_side, p.max_side);
      const Vec2 c(uniform(rng, 0.5 + 0.5 * sw, p.room - 0.5 - 0.5 * sw),
                   uniform(rng, 0.5 + 0.5 * sh, p.room - 0.5 - 0.5 * sh));
      const Obstacle cand{rect_around(c, sw, sh), draw_height(rng, p)};
      bool clash = distance_to_rect(d->target, cand.footprint) < 1.2 ||
                   distance_to_rect(d->tracker, cand.footprint) < 1.2;
      for (const auto& ob : w.obstacles) clash = clash || ob.footprint.inflated(1.0).overlaps(cand.footprint);
      if (clash) continue;
      World trial = w;
      trial.obstacles.push_back(cand);
      if (visibility(trial, cam, trial.entities[0], 32) != vis) continue;
      w.obstacles.push_back(cand);
      ++k;
    }
    w.rebuild_grids();

    Scenario s;
    s.archetype = archetype;
    s.chosen_obstacle = d->chosen;
    s.target_edge = d->edge;
    s.tracker_pose = w.tracker;
    s.target_pose = w.entities[0].pose;
    s.world = std::move(w);
    return s;
  }
  throw Error(ErrorCode::kSamplingExhausted,
              std::string("no partially occluded ") + to_string(archetype) + " scenario after " +
                  std::to_string(p.max_retries) + " draws");
}

OccupancyGrid local_grid(const World& world, const Pose2& pose, double radius,
                         double resolution) {
  const int n = static_cast<int>(std::lround(2.0 * radius / resolution));
  OccupancyGrid g({-radius, -radius}, resolution, n, n);
  const Vec2 fwd = forward_axis(pose.yaw);
  const Vec2 right = right_axis(pose.yaw);
  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix < n; ++ix) {
      const double f0 = -radius + ix * resolution;
      const double r0 = -radius + iy * resolution;
      const std::array<Vec2, 4> quad = {
          from_body(pose, {f0, r0}), from_body(pose, {f0 + resolution, r0}),
          from_body(pose, {f0, r0 + resolution}),
          from_body(pose, {f0 + resolution, r0 + resolution})};
      bool occ = false;
      for (const auto& q : quad) occ = occ || !world.bounds.contains(q);
      for (std::size_t k = 0; k < world.obstacles.size() && !occ; ++k) {
        const Rect& r = world.obstacles[k].footprint;
        occ = !(separated(quad, r, Vec2(1, 0)) || separated(quad, r, Vec2(0, 1)) ||
                separated(quad, r, fwd) || separated(quad, r, right));
      }
      g.set({ix, iy}, occ);
    }
  }
  return g;
}

bool trajectory_collision_free(const OccupancyGrid& grid, const Eigen::MatrixXd& traj,
                               double plan_radius) {
  const double step = 0.25 * grid.resolution();
  const double hi = plan_radius - 1e-9;
  const auto blocked = [&](const Vec2& p) {
    return grid.blocked_at(Vec2(std::clamp(p.x(), -plan_radius, hi), std::clamp(p.y(), -plan_radius, hi)));
  };
  for (Eigen::Index i = 0; i < traj.rows(); ++i) {
    const Vec2 b = plan_radius * traj.row(i).transpose();
    if (i == 0) {
      if (blocked(b)) return false;
      continue;
    }
    const Vec2 a = plan_radius * traj.row(i - 1).transpose();
    const int n = std::max(1, static_cast<int>(std::ceil((b - a).norm() / step)));
    for (int k = 1; k <= n; ++k) {
      if (blocked(a + (b - a) * (static_cast<double>(k) / n))) return false;
    }
  }
  return true;
}

Eigen::MatrixXd resample_polyline(const std::vector<Vec2>& pts, int count) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(count, 2);
  if (pts.empty()) return out;
  std::vector<double> cum{0.0};
  for (std::size_t i = 1; i < pts.size(); ++i) cum.push_back(cum.back() + (pts[i] - pts[i - 1]).norm());
  const double total = cum.back();
  std::size_t seg = 1;
  for (int i = 0; i < count; ++i) {
    const double s = count > 1 ? total * i / (count - 1) : 0.0;
    while (seg + 1 < cum.size() && cum[seg] < s) ++seg;
    Vec2 p = pts.front();
    if (pts.size() > 1 && total > 0.0) {
      const double len = cum[seg] - cum[seg - 1];
      const double t = len > 0.0 ? std::clamp((s - cum[seg - 1]) / len, 0.0, 1.0) : 0.0;
      p = pts[seg - 1] + t * (pts[seg] - pts[seg - 1]);
    }
    out.row(i) = p.transpose();
  }
  return out;
}

Eigen::MatrixXd straight_line_trajectory(const Pose2& tracker, const Pose2& target,
                                         const PlanParams& params, double stop_short) {
  const Vec2 rel = to_body(tracker, target.position());
  const double d = rel.norm();
  const double len = std::clamp(d - stop_short, 0.0, params.plan_radius);
  const Vec2 dir = d > 1e-12 ? Vec2(rel / d) : Vec2(1, 0);
  std::vector<Vec2> line{Vec2::Zero(), len * dir};
  Eigen::MatrixXd traj = resample_polyline(line, params.horizon) / params.plan_radius;
  return traj.cwiseMax(-1.0).cwiseMin(1.0);
}

PlanSample make_sample(const Scenario& scenario, const PlanParams& params, Rng* noise_rng) {
  const World& world = scenario.world;
  const Pose2& tracker = scenario.tracker_pose;
  PlanSample s;
  s.archetype = scenario.archetype;

  const OccupancyGrid inflated =
      rasterize(world.bounds, world.obstacles, params.resolution, params.inflation);
  const auto start = nearest_free_cell(inflated, inflated.cell_of(tracker.position()));
  if (!start) throw Error(ErrorCode::kNoPath, "tracker is boxed in");
  const auto goal = nearest_viewpoint(world, inflated, *start, params);
  if (!goal) throw Error(ErrorCode::kNoPath, "no cell sees the target");

  if (*goal == *start) {
    // Shorten the line until it clears the replay grid.
    const OccupancyGrid local = local_grid(world, tracker, params.plan_radius, params.resolution);
    double stop = params.follow_distance;
    s.traj = straight_line_trajectory(tracker, scenario.target_pose, params, stop);
    while (!trajectory_collision_free(local, s.traj, params.plan_radius) &&
           s.traj.row(s.traj.rows() - 1).norm() > 0.0) {
      stop += params.resolution;
      s.traj = straight_line_trajectory(tracker, scenario.target_pose, params, stop);
    }
  } else {
    const auto cells = astar(inflated, *start, *goal);
    std::vector<Vec2> body{Vec2::Zero()};
    for (std::size_t i = 1; i < cells.size(); ++i) {
      body.push_back(to_body(tracker, inflated.center_of(cells[i])));
    }
    const auto cut = truncate_to_box(body, params.plan_radius);
    s.traj = (resample_polyline(cut, params.horizon) / params.plan_radius).cwiseMax(-1.0).cwiseMin(1.0);
  }

  const Camera cam = make_camera(tracker, params.camera);
  s.bbox.setZero();
  if (const auto b = project_bbox(cam, world.target())) {
    s.bbox << (*b)[0] / cam.image_w, (*b)[1] / cam.image_h, (*b)[2] / cam.image_w,
        (*b)[3] / cam.image_h;
  }
  s.obs = egocentric_crop(world.map, tracker.position(), tracker.yaw, params.crop_radius,
                          params.crop_cells);
  if (noise_rng && params.flip_prob > 0.0) {
    for (Eigen::Index i = 0; i < s.obs.size(); ++i) {
      if (uniform(*noise_rng, 0.0, 1.0) < params.flip_prob) s.obs[i] = 1.0 - s.obs[i];
    }
  }
  s.grid = local_grid(world, tracker, params.plan_radius, params.resolution);
  return s;
}

std::string sample_to_json(const PlanSample& s) {
  nlohmann::json j;
  j["id"] = s.id;
  j["archetype"] = to_string(s.archetype);
  j["randomized"] = s.randomized;
  j["obs"] = std::vector<double>(s.obs.data(), s.obs.data() + s.obs.size());
  j["bbox"] = {s.bbox[0], s.bbox[1], s.bbox[2], s.bbox[3]};
  nlohmann::json traj = nlohmann::json::array();
  for (Eigen::Index i = 0; i < s.traj.rows(); ++i) traj.push_back({s.traj(i, 0), s.traj(i, 1)});
  j["traj"] = traj;
  j["grid"] = {{"resolution", s.grid.resolution()},
               {"w", s.grid.width()},
               {"h", s.grid.height()},
               {"rle", s.grid.to_rle()}};
  return j.dump();
}

PlanSample sample_from_json(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    PlanSample s;
    s.id = j.at("id").get<int>();
    s.archetype = archetype_from_string(j.at("archetype").get<std::string>());
    s.randomized = j.at("randomized").get<bool>();
    const auto obs = j.at("obs").get<std::vector<double>>();
    s.obs = Eigen::Map<const Eigen::VectorXd>(obs.data(), static_cast<Eigen::Index>(obs.size()));
    const auto bbox = j.at("bbox").get<std::vector<double>>();
    if (bbox.size() != 4) throw Error(ErrorCode::kFormat, "bbox must have 4 entries");
    s.bbox = Eigen::Vector4d(bbox[0], bbox[1], bbox[2], bbox[3]);
    const auto& traj = j.at("traj");
    s.traj.resize(static_cast<Eigen::Index>(traj.size()), 2);
    for (std::size_t i = 0; i < traj.size(); ++i) {
      s.traj(static_cast<Eigen::Index>(i), 0) = traj[i].at(0).get<double>();
      s.traj(static_cast<Eigen::Index>(i), 1) = traj[i].at(1).get<double>();
    }
    const auto& g = j.at("grid");
    const double res = g.at("resolution").get<double>();
    const int w = g.at("w").get<int>();
    const int h = g.at("h").get<int>();
    s.grid = OccupancyGrid::from_rle({-0.5 * w * res, -0.5 * h * res}, res, w, h,
                                     g.at("rle").get<std::string>());
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, e.what());
  }
}

DatasetSummary generate_dataset(int n, double randomized_fraction, std::uint64_t seed,
                                std::ostream& out, const ScenarioParams& scenario,
                                const PlanParams& plan) {
  if (n < 1) throw Error(ErrorCode::kUsage, "dataset size must be >= 1");
  if (!(randomized_fraction >= 0.0 && randomized_fraction <= 1.0)) {
    throw Error(ErrorCode::kUsage, "randomized fraction must be in [0, 1]");
  }
  constexpr int kAttempts = 50;
  DatasetSummary summary;
  for (int i = 0; i < n; ++i) {
    const bool randomized = std::llround((i + 1) * randomized_fraction) >
                            std::llround(i * randomized_fraction);
    const auto archetype = static_cast<Archetype>(i % 3);
    ScenarioParams sp = scenario;
    PlanParams pp = plan;
    if (randomized) {
      sp.size_jitter = 0.15;
      pp.flip_prob = 0.02;
    }
    bool done = false;
    for (int a = 0; a < kAttempts && !done; ++a) {
      Rng rng(derive_seed(derive_seed(seed, static_cast<std::uint64_t>(i)), static_cast<std::uint64_t>(a)));
      try {
        const Scenario sc = sample_scenario(archetype, rng, sp);
        PlanSample s = make_sample(sc, pp, &rng);
        s.id = i;
        s.randomized = randomized;
        out << sample_to_json(s) << '\n';
        done = true;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNoPath && e.code() != ErrorCode::kSamplingExhausted) throw;
        ++summary.rejected;
      }
    }
    if (!done) {
      throw Error(ErrorCode::kSamplingExhausted,
                  "sample " + std::to_string(i) + " failed after " + std::to_string(kAttempts) +
                      " attempts (" + std::to_string(summary.rejected) + " rejections so far)");
    }
    ++summary.samples;
    if (randomized) ++summary.randomized;
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed");
  return summary;
}

DatasetSummary generate_dataset(int n, double randomized_fraction, std::uint64_t seed,
                                const std::string& out_path, const ScenarioParams& scenario,
                                const PlanParams& plan) {
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + out_path);
  return generate_dataset(n, randomized_fraction, seed, out, scenario, plan);
}

std::vector<PlanSample> read_dataset(std::istream& in) {
  std::vector<PlanSample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(sample_from_json(line));
  }
  return out;
}

std::vector<PlanSample> read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return read_dataset(in);
}

}  // namespace occtrack
