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

#include <sstream>

#include <doctest.h>

#include "occtrack/sim.hpp"
#include "sim_fixtures.hpp"

using namespace occtrack;
using testing::empty_world;
using testing::ZeroPolicy;

TEST_CASE("project_bbox") {
  const Camera cam = make_camera({0, 0, 0});
  CHECK(cam.focal == doctest::Approx(80.0));
  Entity e;
  e.radius = 0.3;
  e.height = 1.7;
  SUBCASE("dead ahead") {
    for (double d : {2.0, 3.0, 5.0, 8.0}) {
      e.pose = {d, 0, 0};
      const auto b = project_bbox(cam, e);
      REQUIRE(b);
      CHECK((*b)[0] == doctest::Approx(80.0));
      CHECK((*b)[2] == doctest::Approx(2 * 80.0 * 0.3 / d));
    }
  }
  SUBCASE("behind the camera") {
    e.pose = {-3, 0, 0};
    CHECK_FALSE(project_bbox(cam, e));
  }
  SUBCASE("outside the field of view") {
    e.pose = {1, 5, 0};
    CHECK_FALSE(project_bbox(cam, e));
  }
  SUBCASE("close entity fills the image height") {
    // Bottom edge reaches the image at d <= f * cam_height / (h / 2) = 2 m,
    // top edge at d <= f * 0.2 / 60; at d = 0.2 both clip.
    e.pose = {0.2, 0, 0};
    const auto b = project_bbox(cam, e);
    REQUIRE(b);
    CHECK((*b)[3] == doctest::Approx(120.0));
  }
  SUBCASE("target to the right appears right of centre") {
    const Pose2 facing_east{0, 0, 0};
    e.pose = {4, -1, 0};  // negative y is to the right when facing +x
    const auto b = project_bbox(make_camera(facing_east), e);
    REQUIRE(b);
    CHECK((*b)[0] > 80.0);
  }
  SUBCASE("width strictly decreases with distance") {
    double prev = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 200; ++i) {
      e.pose = {1.0 + 0.05 * i, 0, 0};
      const double w = (*project_bbox(cam, e))[2];
      CHECK(w < prev);
      prev = w;
    }
  }
}

TEST_CASE("visibility") {
  World w = empty_world();
  Entity e;
  e.pose = {5, 0, 0};
  const Camera cam = make_camera({0, 0, 0});
  SUBCASE("no obstacles") { CHECK(visibility(w, cam, e, 32) == 1.0); }
  SUBCASE("tall wall in between") {
    w.obstacles.push_back({{2.0, -10.0, 2.5, 10.0}, 3.0});
    CHECK(visibility(w, cam, e, 32) == 0.0);
  }
  SUBCASE("wall covering half the silhouette") {
    // Thin wall right in front of the entity covering y > 0 (its left half).
    w.obstacles.push_back({{4.5, 0.0, 4.6, 5.0}, 3.0});
    for (int n : {8, 16, 31, 64}) {
      CHECK(std::abs(visibility(w, cam, e, n) - 0.5) <= 1.0 / n);
    }
  }
  SUBCASE("low obstacle does not block") {
    w.obstacles.push_back({{2.0, -10.0, 2.5, 10.0}, 0.1});
    CHECK(visibility(w, cam, e, 32) == 1.0);
  }
  SUBCASE("adding obstacles never increases visibility") {
    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
      World ww = empty_world();
      Entity ee;
      ee.pose = {uniform(rng, 3, 9), uniform(rng, -3, 3), 0};
      double prev = visibility(ww, cam, ee, 32);
      for (int k = 0; k < 5; ++k) {
        const double x = uniform(rng, 0.5, 8), y = uniform(rng, -3, 3);
        ww.obstacles.push_back({{x, y, x + uniform(rng, 0.1, 1), y + uniform(rng, 0.1, 1)},
                                uniform(rng, 0.5, 3)});
        const double v = visibility(ww, cam, ee, 32);
        CHECK(v <= prev);
        CHECK(v >= 0.0);
        prev = v;
      }
    }
  }
}

TEST_CASE("render") {
  World w = testing::two_entity_world();
  const Camera cam = make_camera(w.tracker);
  RenderConfig cfg;
  Rng rng(1);
  SUBCASE("both visible give two distinguishable candidates") {
    const auto obs = render(w, cam, cfg, rng);
    REQUIRE(obs.candidates.size() == 2);
    const double cross = cosine_similarity(obs.candidates[0].feature, obs.candidates[1].feature);
    CHECK(cross <= 0.2 + 0.05);
    CHECK(obs.occupancy.size() == 256);
    for (const auto& c : obs.candidates) {
      CHECK(c.bbox[0] - 0.5 * c.bbox[2] >= 0.0);
      CHECK(c.bbox[0] + 0.5 * c.bbox[2] <= 160.0);
      CHECK(c.bbox[1] - 0.5 * c.bbox[3] >= 0.0);
      CHECK(c.bbox[1] + 0.5 * c.bbox[3] <= 120.0);
    }
  }
  SUBCASE("occluded target leaves only the distractor") {
    w.obstacles.push_back({{2.0, 0.1, 2.4, 3.0}, 3.0});
    w.rebuild_grids();
    const auto obs = render(w, cam, cfg, rng);
    REQUIRE(obs.candidates.size() == 1);
    CHECK(obs.candidates[0].instance_id == w.entities[1].instance_id);
  }
  SUBCASE("noiseless unoccluded confidence is one") {
    cfg.confidence_sigma = 0.0;
    for (const auto& c : render(w, cam, cfg, rng).candidates) CHECK(c.confidence == 1.0);
  }
}

TEST_CASE("step_world") {
  SUBCASE("zero action with static entities") {
    World w = testing::two_entity_world();
    const World before = w;
    step_world(w, Action{});
    CHECK(w.time_step == before.time_step + 1);
    CHECK(w.tracker.x == before.tracker.x);
    CHECK(w.tracker.y == before.tracker.y);
    CHECK(w.tracker.yaw == before.tracker.yaw);
    for (std::size_t i = 0; i < w.entities.size(); ++i) {
      CHECK(w.entities[i].pose.x == before.entities[i].pose.x);
    }
  }
  SUBCASE("body-frame integration") {
    World w = empty_world();
    w.tracker = {1, 5, 0};
    step_world(w, Action{1.0, 0, 0, 0});
    CHECK(w.tracker.x == doctest::Approx(2.0));
    CHECK(w.tracker.y == doctest::Approx(5.0));
    step_world(w, Action{0, 1.0, 0, 0});
    CHECK(w.tracker.y == doctest::Approx(4.0));  // right of +x is -y
    step_world(w, Action{0, 0, 0, 0.1});
    CHECK(w.tracker.yaw == doctest::Approx(-0.1));
  }
  SUBCASE("driving into a wall stops at contact") {
    World w = empty_world();
    w.obstacles.push_back({{3.0, -10.0, 3.5, 10.0}, 3.0});
    w.tracker = {1.0, 0.0, 0.0};
    for (int i = 0; i < 20; ++i) step_world(w, Action{0.4, 0, 0, 0});
    CHECK(w.tracker.x <= 3.0 - w.tracker_radius + 1e-12);
    CHECK(w.tracker.x == doctest::Approx(3.0 - w.tracker_radius).epsilon(1e-6));
  }
  SUBCASE("sliding along a wall keeps the tangential component") {
    World w = empty_world();
    w.obstacles.push_back({{3.0, -10.0, 3.5, 10.0}, 3.0});
    w.tracker = {2.75, 0.0, kPi / 4};
    step_world(w, Action{0.4, 0, 0, 0});
    CHECK(w.tracker.y > 0.2);
  }
}

TEST_CASE("entities never overlap obstacles") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    World w = make_world(preset_by_name(seed % 2 ? "occlusion_heavy" : "distractor4"), seed);
    Rng rng(seed);
    for (int t = 0; t < 300; ++t) {
      const Action a = clamp_action({uniform(rng, -1, 1), uniform(rng, -1, 1), 0, uniform(rng, -1, 1)}, {});
      step_world(w, a);
      REQUIRE(circle_free(w, w.tracker.position(), w.tracker_radius - 1e-9));
      for (const auto& e : w.entities) {
        REQUIRE(circle_free(w, e.pose.position(), e.radius - 1e-9));
      }
    }
  }
}

TEST_CASE("reward") {
  const Pose2 tr{0, 0, 0};
  CHECK(reward(tr, {2.5, 0, 0}) == 1.0);
  CHECK(reward(tr, {7.5, 0, 0}) == doctest::Approx(0.0));
  const double half = kPi / 8;
  CHECK(reward(tr, {2.5 * std::cos(half), 2.5 * std::sin(half), 0}) == doctest::Approx(0.5));
  CHECK(reward(tr, {-20, 0, 0}) == -1.0);
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const Pose2 tg{uniform(rng, -8, 8), uniform(rng, -8, 8), 0};
    CHECK(reward(tr, tg) < 1.0);
  }
}

TEST_CASE("run_episode mechanics") {
  EpisodeConfig cfg;
  ZeroPolicy policy;
  SUBCASE("hidden for 51 steps terminates") {
    const auto log = run_episode(testing::hide_world(10, 51, 600), policy, cfg, 1);
    CHECK(log.terminated_early);
    CHECK(log.length() == 61);
  }
  SUBCASE("hidden for 50 steps does not") {
    const auto log = run_episode(testing::hide_world(10, 50, 600), policy, cfg, 1);
    CHECK_FALSE(log.terminated_early);
    CHECK(log.length() == 500);
  }
  SUBCASE("perfect follow") {
    const auto log = run_episode(testing::perfect_world(), policy, cfg, 1);
    CHECK(log.length() == 500);
    CHECK(log.total_reward() == doctest::Approx(500.0));
    const auto m = compute_metrics({log}, 500);
    CHECK(m.sr == 1.0);
    CHECK(m.ar == doctest::Approx(500.0));
    CHECK(m.el == 500.0);
  }
  SUBCASE("single step") {
    cfg.max_steps = 1;
    CHECK(run_episode(testing::perfect_world(), policy, cfg, 1).length() == 1);
  }
  SUBCASE("deterministic") {
    testing::RandomPolicy a(5), b(5);
    const World w = make_world(preset_by_name("occlusion_heavy"), 9);
    cfg.max_steps = 200;
    std::ostringstream sa, sb;
    write_episode_jsonl(sa, run_episode(w, a, cfg, 4));
    write_episode_jsonl(sb, run_episode(w, b, cfg, 4));
    CHECK(sa.str() == sb.str());
  }
  SUBCASE("agent errors abort") {
    testing::ThrowingPolicy bad;
    const auto log = run_episode(testing::perfect_world(), bad, cfg, 1);
    CHECK(log.aborted);
    CHECK(compute_metrics({log}, 500).sr == 0.0);
  }
}

TEST_CASE("compute_metrics") {
  const auto make = [](int len, double r, int max_steps) {
    EpisodeLog log;
    log.max_steps = max_steps;
    for (int i = 0; i < len; ++i) {
      EpisodeStep s;
      s.step = i;
      s.reward = r;
      log.steps.push_back(s);
    }
    return log;
  };
  const auto m = compute_metrics({make(500, 0.8, 500), make(300, 0.8, 500)}, 500);
  CHECK(m.el == 400.0);
  CHECK(m.sr == 0.5);
  CHECK(m.ar == doctest::Approx(0.5 * (400 + 240)));
  CHECK(std::isnan(m.tsr));
  const auto m2 = compute_metrics({make(1500, 0.5, 1500), make(1500, 0.5, 1500)}, 1500);
  CHECK(m2.tsr == 1.0);
  CHECK(compute_metrics({make(400, 1.0, 500), make(480, 1.0, 500)}, 500).ar == doctest::Approx(440));
  CHECK_THROWS_AS(compute_metrics({}, 500), Error);
}

TEST_CASE("correct_action_rate") {
  EpisodeLog log;
  Rng rng(8);
  for (int i = 0; i < 10000; ++i) {
    EpisodeStep s;
    s.bbox = Box(120, 60, 10, 20);
    s.action.omega_y = uniform(rng, 0, 1) < 0.5 ? 0.1 : -0.1;
    log.steps.push_back(s);
  }
  CHECK(std::abs(correct_action_rate(log, 5) - 0.5) < 0.03);
  for (auto& s : log.steps) s.action.omega_y = 0.1;
  CHECK(correct_action_rate(log, 5) == 1.0);
  for (auto& s : log.steps) s.bbox = Box(82, 60, 10, 20);
  CHECK_THROWS_AS(correct_action_rate(log, 5), Error);
}

TEST_CASE("metrics csv layout") {
  std::ostringstream os;
  Metrics m;
  m.ar = 12.5;
  m.el = 300;
  m.sr = 0.25;
  m.tsr = std::numeric_limits<double>::quiet_NaN();
  m.car = 0.9;
  m.episodes = 4;
  write_metrics_csv(os, {{"full", m, 7}});
  CHECK(os.str() == "scenario,AR,EL,SR,TSR,CAR,episodes,seed\nfull,12.5,300,0.25,nan,0.9,4,7\n");
}

TEST_CASE("presets build and are deterministic") {
  for (const char* name : {"default", "occlusion_heavy", "distractor4"}) {
    const World a = make_world(preset_by_name(name), 3);
    const World b = make_world(preset_by_name(name), 3);
    CHECK(a.obstacles.size() == b.obstacles.size());
    CHECK(a.tracker.x == b.tracker.x);
    CHECK(a.entities.size() == b.entities.size());
  }
  CHECK(make_world(preset_by_name("distractor4"), 1).entities.size() == 5);
  CHECK_THROWS_AS(preset_by_name("nope"), Error);
}
