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

#ifndef OCCTRACK_OCCUPANCY_HPP_
#define OCCTRACK_OCCUPANCY_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "occtrack/common.hpp"

namespace occtrack {

struct Rect {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;

  double width() const { return max_x - min_x; }
  double height() const { return max_y - min_y; }
  Eigen::Vector2d center() const {
    return {0.5 * (min_x + max_x), 0.5 * (min_y + max_y)};
  }
  bool contains(const Eigen::Vector2d& p) const {
    return p.x() >= min_x && p.x() <= max_x && p.y() >= min_y && p.y() <= max_y;
  }
  Rect inflated(double margin) const {
    return {min_x - margin, min_y - margin, max_x + margin, max_y + margin};
  }
  // Strictly positive-area overlap.
  bool overlaps(const Rect& o) const {
    return min_x < o.max_x && max_x > o.min_x && min_y < o.max_y && max_y > o.min_y;
  }
};

// Axis-aligned box obstacle standing on the ground plane.
struct Obstacle {
  Rect footprint;
  double height = 2.5;
};

double distance_to_rect(const Eigen::Vector2d& p, const Rect& r);

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  OccupancyGrid(Eigen::Vector2d origin, double resolution, int width, int height);

  double resolution() const { return resolution_; }
  int width() const { return width_; }
  int height() const { return height_; }
  const Eigen::Vector2d& origin() const { return origin_; }

  bool in_bounds(const Cell& c) const {
    return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_;
  }
  int index(const Cell& c) const { return c.y * width_ + c.x; }
  Cell cell_at(int idx) const { return {idx % width_, idx / width_}; }

  bool occupied(const Cell& c) const {
    return occupied_[static_cast<std::size_t>(index(c))] != 0;
  }
  // Out-of-grid cells count as occupied.
  bool blocked(const Cell& c) const { return !in_bounds(c) || occupied(c); }
  void set(const Cell& c, bool value) {
    occupied_[static_cast<std::size_t>(index(c))] = value ? 1 : 0;
  }

  Cell cell_of(const Eigen::Vector2d& p) const;
  Eigen::Vector2d center_of(const Cell& c) const;
  bool blocked_at(const Eigen::Vector2d& p) const { return blocked(cell_of(p)); }

  std::size_t occupied_count() const;
  const std::vector<std::uint8_t>& cells() const { return occupied_; }

  // Row-major run-length encoding "v:n,v:n,..." starting at cell (0, 0).
  std::string to_rle() const;
  static OccupancyGrid from_rle(Eigen::Vector2d origin, double resolution,
                                int width, int height, const std::string& rle);

 private:
  Eigen::Vector2d origin_ = Eigen::Vector2d::Zero();
  double resolution_ = 1.0;
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> occupied_;
};

// Conservative rasterization: any positive-area overlap of a cell with an
// (optionally inflated) footprint marks the cell occupied. Obstacles outside
// the bounds are clipped.
OccupancyGrid rasterize(const Rect& bounds, std::span<const Obstacle> obstacles,
                        double resolution, double inflation = 0.0);

// 8-connected moves; a diagonal step needs both orthogonal neighbours free
// so paths never cut obstacle corners.
bool can_move(const OccupancyGrid& grid, const Cell& from, int dx, int dy);

struct PathCost {
  int straight = 0;
  int diagonal = 0;
  double value() const { return straight + std::sqrt(2.0) * diagonal; }
  friend bool operator==(const PathCost&, const PathCost&) = default;
};

PathCost path_cost(std::span<const Cell> path);

double octile_distance(const Cell& a, const Cell& b);

// Cost-optimal path including both endpoints. Ties in the open list break
// by (f, h, cell index). Throws NoPath.
std::vector<Cell> astar(const OccupancyGrid& grid, const Cell& start,
                        const Cell& goal);

// Egocentric square crop of side 2*radius centred on `position`, rows running
// from far ahead to behind and columns from left to right in the heading
// frame. 1 = occupied (or outside the map), 0 = free.
Eigen::VectorXd egocentric_crop(const OccupancyGrid& grid,
                                const Eigen::Vector2d& position, double yaw,
                                double radius, int cells);

// Unit vectors of the body frame: x forward, y to the right.
inline Eigen::Vector2d forward_axis(double yaw) {
  return {std::cos(yaw), std::sin(yaw)};
}
inline Eigen::Vector2d right_axis(double yaw) {
  return {std::sin(yaw), -std::cos(yaw)};
}

}  // namespace occtrack

#endif  // OCCTRACK_OCCUPANCY_HPP_
