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

// Independent reference implementations shared by the unit tests and the
// acceptance binary.

#ifndef OCCTRACK_TESTS_ORACLES_HPP_
#define OCCTRACK_TESTS_ORACLES_HPP_

#include <optional>
#include <queue>
#include <vector>

#include "occtrack/occupancy.hpp"

namespace occtrack::testing {

inline OccupancyGrid random_grid(Rng& rng, int w, int h, double density) {
  OccupancyGrid g({0, 0}, 1.0, w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) g.set({x, y}, uniform(rng, 0, 1) < density);
  }
  return g;
}

// Strict ordering of a + b*sqrt(2) for integer pairs. Two distinct pairs
// never tie because sqrt(2) is irrational.
inline bool cost_less(const PathCost& l, const PathCost& r) {
  const double da = l.straight - r.straight;
  const double db = l.diagonal - r.diagonal;
  return da + std::sqrt(2.0) * db < 0.0;
}

// Plain Dijkstra over integer (straight, diagonal) move counts with the same
// move rules as the planner, no heuristic.
inline std::optional<PathCost> dijkstra_cost(const OccupancyGrid& g, Cell s, Cell e) {
  if (g.blocked(s) || g.blocked(e)) return std::nullopt;
  const int n = g.width() * g.height();
  std::vector<std::optional<PathCost>> best(static_cast<std::size_t>(n));
  std::vector<bool> done(static_cast<std::size_t>(n), false);
  struct Item {
    PathCost c;
    int idx;
  };
  auto worse = [](const Item& a, const Item& b) { return cost_less(b.c, a.c); };
  std::priority_queue<Item, std::vector<Item>, decltype(worse)> pq(worse);
  best[static_cast<std::size_t>(g.index(s))] = PathCost{};
  pq.push({PathCost{}, g.index(s)});
  while (!pq.empty()) {
    const Item it = pq.top();
    pq.pop();
    const auto u = static_cast<std::size_t>(it.idx);
    if (done[u]) continue;
    done[u] = true;
    const Cell c = g.cell_at(it.idx);
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const Cell nb{c.x + dx, c.y + dy};
        if (g.blocked(nb)) continue;
        if (dx != 0 && dy != 0 && (g.blocked({c.x + dx, c.y}) || g.blocked({c.x, c.y + dy}))) {
          continue;
        }
        PathCost nc = it.c;
        if (dx != 0 && dy != 0) {
          ++nc.diagonal;
        } else {
          ++nc.straight;
        }
        auto& slot = best[static_cast<std::size_t>(g.index(nb))];
        if (!slot || cost_less(nc, *slot)) {
          slot = nc;
          pq.push({nc, g.index(nb)});
        }
      }
    }
  }
  return best[static_cast<std::size_t>(g.index(e))];
}

}  // namespace occtrack::testing

#endif  // OCCTRACK_TESTS_ORACLES_HPP_
