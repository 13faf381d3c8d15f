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

#include "occtrack/occupancy.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <sstream>
#include <tuple>

namespace occtrack {

double distance_to_rect(const Eigen::Vector2d& p, const Rect& r) {
  const double dx = std::max({r.min_x - p.x(), 0.0, p.x() - r.max_x});
  const double dy = std::max({r.min_y - p.y(), 0.0, p.y() - r.max_y});
  return std::hypot(dx, dy);
}

OccupancyGrid::OccupancyGrid(Eigen::Vector2d origin, double resolution,
                             int width, int height)
    : origin_(std::move(origin)),
      resolution_(resolution),
      width_(width),
      height_(height),
      occupied_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0) {}

Cell OccupancyGrid::cell_of(const Eigen::Vector2d& p) const {
  return {static_cast<int>(std::floor((p.x() - origin_.x()) / resolution_)),
          static_cast<int>(std::floor((p.y() - origin_.y()) / resolution_))};
}

Eigen::Vector2d OccupancyGrid::center_of(const Cell& c) const {
  return origin_ + resolution_ * Eigen::Vector2d(c.x + 0.5, c.y + 0.5);
}

std::size_t OccupancyGrid::occupied_count() const {
  return static_cast<std::size_t>(std::count(occupied_.begin(), occupied_.end(), 1));
}

std::string OccupancyGrid::to_rle() const {
  std::ostringstream os;
  std::size_t i = 0;
  bool first = true;
  while (i < occupied_.size()) {
    std::size_t j = i;
    while (j < occupied_.size() && occupied_[j] == occupied_[i]) ++j;
    if (!first) os << ',';
    os << static_cast<int>(occupied_[i]) << ':' << (j - i);
    first = false;
    i = j;
  }
  return os.str();
}

OccupancyGrid OccupancyGrid::from_rle(Eigen::Vector2d origin, double resolution,
                                      int width, int height,
                                      const std::string& rle) {
  OccupancyGrid grid(std::move(origin), resolution, width, height);
  std::size_t pos = 0;
  std::stringstream ss(rle);
  std::string run;
  while (std::getline(ss, run, ',')) {
    const auto colon = run.find(':');
    if (colon == std::string::npos) {
      throw Error(ErrorCode::kFormat, "bad run '" + run + "'");
    }
    const int value = std::stoi(run.substr(0, colon));
    const std::size_t count = std::stoul(run.substr(colon + 1));
    if (pos + count > grid.occupied_.size() || (value != 0 && value != 1)) {
      throw Error(ErrorCode::kFormat, "run-length data does not fit the grid");
    }
    std::fill_n(grid.occupied_.begin() + static_cast<std::ptrdiff_t>(pos), count,
                static_cast<std::uint8_t>(value));
    pos += count;
  }
  if (pos != grid.occupied_.size()) {
    throw Error(ErrorCode::kFormat, "run-length data is short");
  }
  return grid;
}

OccupancyGrid rasterize(const Rect& bounds, std::span<const Obstacle> obstacles,
                        double resolution, double inflation) {
  if (!(resolution > 0.0)) {
    throw Error(ErrorCode::kUsage, "grid resolution must be positive");
  }
  const int w = static_cast<int>(std::ceil(bounds.width() / resolution - 1e-9));
  const int h = static_cast<int>(std::ceil(bounds.height() / resolution - 1e-9));
  OccupancyGrid grid({bounds.min_x, bounds.min_y}, resolution, w, h);
  for (const auto& ob : obstacles) {
    const Rect r = ob.footprint.inflated(inflation);
    const int x0 = std::max(0, static_cast<int>(std::floor((r.min_x - bounds.min_x) / resolution)));
    const int y0 = std::max(0, static_cast<int>(std::floor((r.min_y - bounds.min_y) / resolution)));
    const int x1 = std::min(w - 1, static_cast<int>(std::floor((r.max_x - bounds.min_x) / resolution)));
    const int y1 = std::min(h - 1, static_cast<int>(std::floor((r.max_y - bounds.min_y) / resolution)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Rect cell{bounds.min_x + x * resolution, bounds.min_y + y * resolution,
                        bounds.min_x + (x + 1) * resolution,
                        bounds.min_y + (y + 1) * resolution};
        if (cell.overlaps(r)) grid.set({x, y}, true);
      }
    }
  }
  return grid;
}

bool can_move(const OccupancyGrid& grid, const Cell& from, int dx, int dy) {
  const Cell to{from.x + dx, from.y + dy};
  if (grid.blocked(to)) return false;
  if (dx != 0 && dy != 0) {
    return !grid.blocked({from.x + dx, from.y}) && !grid.blocked({from.x, from.y + dy});
  }
  return true;
}

PathCost path_cost(std::span<const Cell> path) {
  PathCost cost;
  for (std::size_t i = 1; i < path.size(); ++i) {
    const int dx = std::abs(path[i].x - path[i - 1].x);
    const int dy = std::abs(path[i].y - path[i - 1].y);
    if (dx + dy == 2) {
      ++cost.diagonal;
    } else {
      ++cost.straight;
    }
  }
  return cost;
}

double octile_distance(const Cell& a, const Cell& b) {
  const int dx = std::abs(a.x - b.x);
  const int dy = std::abs(a.y - b.y);
  return (dx + dy) + (std::sqrt(2.0) - 2.0) * std::min(dx, dy);
}

std::vector<Cell> astar(const OccupancyGrid& grid, const Cell& start,
                        const Cell& goal) {
  if (grid.blocked(start) || grid.blocked(goal)) {
    throw Error(ErrorCode::kNoPath, "start or goal cell is not free");
  }
  const int n = grid.width() * grid.height();
  std::vector<double> g(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::vector<int> parent(static_cast<std::size_t>(n), -1);
  std::vector<std::uint8_t> closed(static_cast<std::size_t>(n), 0);

  using Entry = std::tuple<double, double, int>;  // f, h, index
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  const int s = grid.index(start);
  const int t = grid.index(goal);
  g[static_cast<std::size_t>(s)] = 0.0;
  const double h0 = octile_distance(start, goal);
  open.emplace(h0, h0, s);

  static constexpr int kDx[8] = {1, -1, 0, 0, 1, 1, -1, -1};
  static constexpr int kDy[8] = {0, 0, 1, -1, 1, -1, 1, -1};
  while (!open.empty()) {
    const auto [f, h, idx] = open.top();
    open.pop();
    const auto u = static_cast<std::size_t>(idx);
    if (closed[u]) continue;
    closed[u] = 1;
    if (idx == t) break;
    const Cell c = grid.cell_at(idx);
    for (int k = 0; k < 8; ++k) {
      if (!can_move(grid, c, kDx[k], kDy[k])) continue;
      const Cell nb{c.x + kDx[k], c.y + kDy[k]};
      const auto v = static_cast<std::size_t>(grid.index(nb));
      if (closed[v]) continue;
      const double step = (kDx[k] != 0 && kDy[k] != 0) ? std::sqrt(2.0) : 1.0;
      const double cand = g[u] + step;
      if (cand < g[v]) {
        g[v] = cand;
        parent[v] = idx;
        const double hn = octile_distance(nb, goal);
        open.emplace(cand + hn, hn, static_cast<int>(v));
      }
    }
  }
  if (!closed[static_cast<std::size_t>(t)]) {
    throw Error(ErrorCode::kNoPath, "goal unreachable");
  }
  std::vector<Cell> path;
  for (int idx = t; idx != -1; idx = parent[static_cast<std::size_t>(idx)]) {
    path.push_back(grid.cell_at(idx));
  }
  std::reverse(path.begin(), path.end());
  return path;
}

Eigen::VectorXd egocentric_crop(const OccupancyGrid& grid,
                                const Eigen::Vector2d& position, double yaw,
                                double radius, int cells) {
  constexpr int kSub = 4;
  const double cell = 2.0 * radius / cells;
  const Eigen::Vector2d fwd = forward_axis(yaw);
  const Eigen::Vector2d right = right_axis(yaw);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(cells * cells);
  for (int r = 0; r < cells; ++r) {
    for (int c = 0; c < cells; ++c) {
      bool hit = false;
      for (int a = 0; a < kSub && !hit; ++a) {
        for (int b = 0; b < kSub && !hit; ++b) {
          const double ahead = radius - (r + (a + 0.5) / kSub) * cell;
          const double side = -radius + (c + (b + 0.5) / kSub) * cell;
          hit = grid.blocked_at(position + ahead * fwd + side * right);
        }
      }
      out[r * cells + c] = hit ? 1.0 : 0.0;
    }
  }
  return out;
}

}  // namespace occtrack
