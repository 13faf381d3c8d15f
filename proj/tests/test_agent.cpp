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

#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"
#include "occtrack/agent.hpp"
#include "sim_fixtures.hpp"

using namespace occtrack;
using occtrack::testing::perfect_world;
using occtrack::testing::two_entity_world;

namespace {

constexpr int kW = 160;
constexpr int kH = 120;

// Predicts zero noise, so sampling only rescales the seed draw.
struct ZeroModel : NoiseModel {
  int horizon() const override { return 16; }
  Eigen::MatrixXd predict(const Eigen::MatrixXd& noisy, const Condition&, int) const override {
    return Eigen::MatrixXd::Zero(noisy.rows(), noisy.cols());
  }
};

struct ThrowingModel : NoiseModel {
  int horizon() const override { return 16; }
  Eigen::MatrixXd predict(const Eigen::MatrixXd&, const Condition&, int) const override {
    throw Error(ErrorCode::kNonFiniteOutput, "planner blew up");
  }
};

RenderConfig quiet_render() {
  RenderConfig r;
  r.bbox_noise_px = 0.0;
  r.confidence_sigma = 0.0;
  r.feature_noise = 0.0;
  return r;
}

Observation observe(const World& w, std::uint64_t seed = 1) {
  Rng rng(seed);
  return render(w, make_camera(w.tracker), quiet_render(), rng);
}

// Agent locked on to the perfect world's target after one step.
AgentState tracking_state(const World& w, const AgentConfig& c) {
  AgentState s = initialize_for(w, c);
  policy_step(observe(w), s, c, nullptr, nullptr);
  REQUIRE(s.mode == Mode::kTrack);
  return s;
}

Observation with_confidence(Observation obs, double conf) {
  for (auto& cand : obs.candidates) cand.confidence = conf;
  return obs;
}

}  // namespace

TEST_CASE("pid_control") {
  const AgentConfig c;
  SUBCASE("box centred at the setpoint height gives zero action") {
    const Action a = pid_control(Box(kW / 2.0, 60, 20, c.height_setpoint), kW, kH, c);
    CHECK(a.v_f == doctest::Approx(0.0));
    CHECK(a.omega_y == doctest::Approx(0.0));
    CHECK(a.v_l == 0.0);
    CHECK(a.v_v == 0.0);
  }
  SUBCASE("box at the right edge saturates the yaw rate to the right") {
    AgentConfig strong = c;
    strong.kp_yaw = 5.0;
    const Action a = pid_control(Box(kW, 60, 20, c.height_setpoint), kW, kH, strong);
    CHECK(a.omega_y == doctest::Approx(ActionLimits{}.yaw));
  }
  SUBCASE("box twice the setpoint height backs away") {
    const Action a = pid_control(Box(kW / 2.0, 60, 40, 2.0 * c.height_setpoint), kW, kH, c);
    CHECK(a.v_f < 0.0);
  }
  SUBCASE("derivative term uses the previous error") {
    PidMemory mem;
    pid_control(Box(kW / 2.0, 60, 20, c.height_setpoint), kW, kH, c, &mem);
    const Action a = pid_control(Box(kW * 0.6, 60, 20, c.height_setpoint), kW, kH, c, &mem);
    CHECK(a.omega_y == doctest::Approx(c.kp_yaw * 0.2 + c.kd_yaw * 0.2));
  }
}

TEST_CASE("pid actions always reduce the horizontal offset") {
  const AgentConfig c;
  EpisodeLog log;
  for (int u = 0; u <= kW; ++u) {
    for (double h : {20.0, 54.4, 90.0}) {
      EpisodeStep st;
      st.bbox = Box(u, 60, 20, h);
      st.action = pid_control(*st.bbox, kW, kH, c);
      log.steps.push_back(st);
    }
  }
  CHECK(correct_action_rate(log, 8) == doctest::Approx(1.0));
}

TEST_CASE("agent config key=value files") {
  SUBCASE("every field round-trips through write and parse") {
    AgentConfig c;
    c.eta_s = 0.55;
    c.beta = 0.7;
    c.trigger_len = 12;
    c.variant = Variant::kLinearKf;
    c.seed = 18446744073709551615ULL;
    c.kp_yaw = 0.1234567890123;
    std::stringstream ss;
    write_agent_config(c, ss);
    const AgentConfig back = parse_agent_config(ss);
    for (const auto& key : agent_config_keys()) {
      CHECK(get_agent_field(back, key) == get_agent_field(c, key));
    }
  }
  SUBCASE("comments and blank lines are skipped, values are trimmed") {
    std::istringstream in("# comment\n\n  eta_c = 0.6 \nvariant=no_kf\n");
    const AgentConfig c = parse_agent_config(in);
    CHECK(c.eta_c == 0.6);
    CHECK(c.variant == Variant::kNoKf);
    CHECK(c.beta == AgentConfig{}.beta);
  }
  SUBCASE("overrides apply on top of a file") {
    std::istringstream in("trigger_len=4\n");
    AgentConfig c = parse_agent_config(in);
    set_agent_field(c, "trigger_len", "7");
    CHECK(c.trigger_len == 7);
  }
  SUBCASE("errors") {
    try {
      std::istringstream no_eq("eta_c 0.6\n");
      parse_agent_config(no_eq);
      FAIL("expected a format error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kFormat);
      CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    }
    std::istringstream unknown("speed=3\n");
    CHECK_THROWS_AS(parse_agent_config(unknown), Error);
    AgentConfig c;
    CHECK_THROWS_AS(set_agent_field(c, "trigger_len", "3.5"), Error);
    CHECK_THROWS_AS(set_agent_field(c, "eta_s", "abc"), Error);
    CHECK_THROWS_AS(set_agent_field(c, "variant", "bogus"), Error);
    try {
      std::istringstream bad("eta_s=1.5\n");
      parse_agent_config(bad);
      FAIL("expected a usage error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kUsage);
    }
  }
  SUBCASE("validate") {
    const auto rejects = [](auto mutate) {
      AgentConfig c;
      mutate(c);
      CHECK_THROWS_AS(validate(c), Error);
    };
    rejects([](AgentConfig& c) { c.eta_c = 0.0; });
    rejects([](AgentConfig& c) { c.beta = 1.0; });
    rejects([](AgentConfig& c) { c.trigger_len = 0; });
    rejects([](AgentConfig& c) { c.plan_exec_len = 0; });
    rejects([](AgentConfig& c) { c.replan_budget = -1; });
    rejects([](AgentConfig& c) { c.plan_candidates = 0; });
    rejects([](AgentConfig& c) { c.focal_px = 0.0; });
    CHECK_NOTHROW(validate(AgentConfig{}));
  }
}

TEST_CASE("initialize") {
  const AgentConfig c;
  SUBCASE("one reference view gives that vector") {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(8);
    v[2] = 1.0;
    const AgentState s = initialize({v}, c);
    CHECK(s.mode == Mode::kDetect);
    CHECK(!s.kf);
    CHECK((s.prototype.vector - v).norm() < 1e-12);
  }
  SUBCASE("augmented views stay close to the manifold mean") {
    const World w = perfect_world();
    const AgentState s = initialize_for(w, c);
    const Eigen::VectorXd& mean = w.manifolds->manifolds[0].mean_direction;
    CHECK(cosine_similarity(s.prototype.vector, mean) >= 0.8);
  }
  SUBCASE("empty list is a usage error") {
    CHECK_THROWS_AS(initialize({}, c), Error);
  }
}

TEST_CASE("detection") {
  const AgentConfig c;
  SUBCASE("the target is acquired and the filter starts on its box") {
    const World w = perfect_world();
    AgentState s = initialize_for(w, c);
    const Observation obs = observe(w);
    policy_step(obs, s, c, nullptr, nullptr);
    CHECK(s.mode == Mode::kTrack);
    REQUIRE(s.kf);
    CHECK((s.kf->box() - obs.candidates[0].bbox).norm() < 1e-12);
  }
  SUBCASE("distractor-only frames never initialize") {
    const World w = two_entity_world();
    AgentState s = initialize_for(w, c);
    Observation obs = observe(w);
    std::erase_if(obs.candidates, [&](const Candidate& cand) {
      return cand.instance_id == w.target().instance_id;
    });
    REQUIRE(obs.candidates.size() == 1);
    for (int i = 0; i < 50; ++i) {
      const Action a = policy_step(obs, s, c, nullptr, nullptr);
      CHECK(s.mode == Mode::kDetect);
      CHECK(a.omega_y == doctest::Approx(c.search_rate * s.search_dir));
    }
    CHECK(s.transitions.empty());
  }
}

TEST_CASE("low confidence for L + 1 steps triggers planning exactly once") {
  const World w = perfect_world();
  AgentConfig c;
  c.plan_candidates = 1;
  const ZeroModel model;
  const NoiseSchedule schedule = build_schedule(5);
  AgentState s = tracking_state(w, c);
  const Observation low = with_confidence(observe(w), 0.3);
  for (int i = 1; i <= c.trigger_len; ++i) {
    policy_step(low, s, c, &model, &schedule);
    CHECK(s.mode == Mode::kTrack);
    CHECK(s.lost_count == i);
  }
  policy_step(low, s, c, &model, &schedule);
  CHECK(s.mode == Mode::kPlan);
  const auto plans = std::count(s.transitions.begin(), s.transitions.end(),
                                std::pair{Mode::kTrack, Mode::kPlan});
  CHECK(plans == 1);
  CHECK(s.plans_sampled == 1);
}

TEST_CASE("no_planner_pid never leaves TRACK on low confidence") {
  const World w = perfect_world();
  AgentConfig c;
  c.variant = Variant::kNoPlannerPid;
  const ZeroModel model;
  const NoiseSchedule schedule = build_schedule(5);
  AgentState s = tracking_state(w, c);
  const Observation low = with_confidence(observe(w), 0.3);
  for (int i = 0; i < 40; ++i) policy_step(low, s, c, &model, &schedule);
  CHECK(s.mode == Mode::kTrack);
  CHECK(s.lost_count == 40);
}

TEST_CASE("a confident re-detection during PLAN returns to TRACK") {
  const World w = perfect_world();
  AgentConfig c;
  c.plan_candidates = 1;
  const ZeroModel model;
  const NoiseSchedule schedule = build_schedule(5);
  AgentState s = tracking_state(w, c);
  Observation none = observe(w);
  none.candidates.clear();
  for (int i = 0; i <= c.trigger_len; ++i) policy_step(none, s, c, &model, &schedule);
  REQUIRE(s.mode == Mode::kPlan);
  policy_step(observe(w), s, c, &model, &schedule);
  CHECK(s.mode == Mode::kTrack);
  CHECK(s.lost_count == 0);
}

TEST_CASE("an exhausted replan budget falls back to DETECT") {
  const World w = perfect_world();
  AgentConfig c;
  c.plan_candidates = 1;
  c.replan_budget = 2;
  c.plan_exec_len = 3;
  const ZeroModel model;
  const NoiseSchedule schedule = build_schedule(5);
  AgentState s = tracking_state(w, c);
  Observation none = observe(w);
  none.candidates.clear();
  for (int i = 0; i <= c.trigger_len; ++i) policy_step(none, s, c, &model, &schedule);
  REQUIRE(s.mode == Mode::kPlan);
  // The trigger step used one tick; each plan runs plan_exec_len ticks.
  const int ticks = (c.replan_budget + 1) * c.plan_exec_len - 1;
  for (int i = 0; i < ticks; ++i) {
    policy_step(none, s, c, &model, &schedule);
    CHECK(s.mode == Mode::kPlan);
  }
  policy_step(none, s, c, &model, &schedule);
  CHECK(s.mode == Mode::kDetect);
  CHECK(!s.kf);
  CHECK(s.plans_sampled == c.replan_budget + 1);
}

TEST_CASE("prototype is updated only on accepted measurements") {
  const World w = perfect_world();
  for (Variant v : {Variant::kFull, Variant::kNoKf, Variant::kLinearKf}) {
    CAPTURE(to_string(v));
    AgentConfig c;
    c.variant = v;
    AgentState s = tracking_state(w, c);
    Observation obs = observe(w);
    // Rotate the candidate feature so an update would be visible.
    Eigen::VectorXd f = obs.candidates[0].feature;
    std::swap(f[0], f[1]);
    obs.candidates[0].feature = f.normalized();
    const Prototype before = s.prototype;
    policy_step(with_confidence(obs, 0.3), s, c, nullptr, nullptr);
    CHECK(s.prototype.vector == before.vector);
    CHECK(s.prototype.update_count == before.update_count);
    policy_step(with_confidence(obs, 0.9), s, c, nullptr, nullptr);
    CHECK(s.prototype.update_count == before.update_count + 1);
    CHECK((s.prototype.vector - before.vector).norm() > 1e-6);
  }
  SUBCASE("no_ema never changes the prototype") {
    AgentConfig c;
    c.variant = Variant::kNoEma;
    AgentState s = tracking_state(w, c);
    const Prototype before = s.prototype;
    for (int i = 0; i < 5; ++i) policy_step(observe(w, i), s, c, nullptr, nullptr);
    CHECK(s.prototype.vector == before.vector);
  }
}

TEST_CASE("mode machine only takes allowed transitions") {
  const std::set<std::pair<Mode, Mode>> allowed = {
      {Mode::kDetect, Mode::kTrack},
      {Mode::kTrack, Mode::kPlan},
      {Mode::kPlan, Mode::kTrack},
      {Mode::kPlan, Mode::kDetect},
  };
  const World w = two_entity_world();
  const ZeroModel model;
  const NoiseSchedule schedule = build_schedule(3);
  const Observation full = observe(w);
  for (std::uint64_t trial = 0; trial < 40; ++trial) {
    AgentConfig c;
    c.variant = all_variants()[trial % all_variants().size()];
    c.trigger_len = 1 + static_cast<int>(trial % 4);
    c.plan_exec_len = 2;
    c.replan_budget = static_cast<int>(trial % 3);
    c.plan_candidates = 1;
    c.seed = trial;
    AgentState s = initialize_for(w, c);
    Rng rng(derive_seed(99, trial));
    for (int t = 0; t < 300; ++t) {
      Observation obs = full;
      obs.step = t;
      std::erase_if(obs.candidates, [&](const Candidate&) { return uniform(rng, 0, 1) < 0.5; });
      for (auto& cand : obs.candidates) {
        cand.confidence = uniform(rng, 0, 1);
        cand.bbox[0] = uniform(rng, 0, kW);
      }
      const Mode before = s.mode;
      policy_step(obs, s, c, &model, &schedule);
      if (s.mode != before) CHECK(allowed.count({before, s.mode}) == 1);
      if (s.mode == Mode::kTrack) CHECK(s.kf.has_value());
      if (s.mode == Mode::kDetect) CHECK(!s.kf.has_value());
    }
    CHECK(s.errors.empty());
    for (const auto& tr : s.transitions) CHECK(allowed.count(tr) == 1);
  }
}

TEST_CASE("internal errors give a zero action and an error entry") {
  const World w = perfect_world();
  AgentConfig c;
  c.plan_candidates = 1;
  const ThrowingModel model;
  const NoiseSchedule schedule = build_schedule(3);
  AgentState s = tracking_state(w, c);
  Observation none = observe(w);
  none.candidates.clear();
  none.step = 17;
  Action a;
  for (int i = 0; i <= c.trigger_len; ++i) a = policy_step(none, s, c, &model, &schedule);
  CHECK(a.v_f == 0.0);
  CHECK(a.v_l == 0.0);
  CHECK(a.omega_y == 0.0);
  REQUIRE(s.errors.size() == 1);
  CHECK(s.errors[0].first == 17);
  CHECK(s.errors[0].second.find("planner blew up") != std::string::npos);
}

TEST_CASE("closed loop reaches and holds reward above 0.9 on a static target") {
  Rng rng(314);
  EpisodeConfig ec;
  ec.max_steps = 150;
  ec.render = quiet_render();
  for (int trial = 0; trial < 30; ++trial) {
    World w = perfect_world();
    const double d = uniform(rng, 1.0, 6.0);
    const double bearing = uniform(rng, -0.6, 0.6);
    w.entities[0].pose = {d * std::cos(bearing), d * std::sin(bearing), uniform(rng, -kPi, kPi)};
    AgentConfig c;
    c.seed = static_cast<std::uint64_t>(trial);
    TrackingPolicy policy(initialize_for(w, c), c);
    const EpisodeLog log = run_episode(w, policy, ec, static_cast<std::uint64_t>(trial));
    REQUIRE(log.length() == ec.max_steps);
    int last_bad = -1;
    for (int t = 0; t < log.length(); ++t) {
      if (log.steps[static_cast<std::size_t>(t)].reward <= 0.9) last_bad = t;
    }
    CAPTURE(d);
    CAPTURE(bearing);
    CHECK(last_bad < 100);
  }
}

TEST_CASE("same seed gives the same action sequence") {
  const WorldPreset preset = preset_by_name("occlusion_heavy");
  const World w = make_world(preset, 5);
  auto model = std::make_shared<NoisePredictor>(PredictorConfig{}, 3);
  auto schedule = std::make_shared<NoiseSchedule>(build_schedule(10));
  EpisodeConfig ec;
  ec.max_steps = 200;
  ec.render = render_config_for(preset);
  AgentConfig c;
  c.seed = 42;
  c.plan_candidates = 2;
  const auto run = [&] {
    TrackingPolicy p(initialize_for(w, c), c, model, schedule);
    return run_episode(w, p, ec, 9);
  };
  const EpisodeLog a = run();
  const EpisodeLog b = run();
  REQUIRE(a.length() == b.length());
  for (int t = 0; t < a.length(); ++t) {
    const Action& x = a.steps[static_cast<std::size_t>(t)].action;
    const Action& y = b.steps[static_cast<std::size_t>(t)].action;
    CHECK(x.v_f == y.v_f);
    CHECK(x.v_l == y.v_l);
    CHECK(x.omega_y == y.omega_y);
  }
}

TEST_CASE("box_to_point and point_to_box") {
  const AgentConfig c;
  SUBCASE("a centred box at the setpoint height is at the follow distance") {
    const Eigen::Vector4d box(0.5, 0.5, 0.1, c.height_setpoint / kH);
    const auto p = box_to_point(box, kW, kH, c);
    REQUIRE(p);
    CHECK(p->x() == doctest::Approx(c.follow_distance));
    CHECK(p->y() == doctest::Approx(0.0));
  }
  SUBCASE("round trip") {
    Rng rng(8);
    for (int i = 0; i < 200; ++i) {
      const Eigen::Vector4d box(uniform(rng, 0.05, 0.95), 0.5, 0.1, uniform(rng, 0.1, 0.9));
      const auto p = box_to_point(box, kW, kH, c);
      REQUIRE(p);
      const Eigen::Vector4d back = point_to_box(*p, box, kW, kH, c);
      CHECK(back[0] == doctest::Approx(box[0]).epsilon(1e-9));
      CHECK(back[3] == doctest::Approx(box[3]).epsilon(1e-9));
      CHECK(back[2] == doctest::Approx(box[2]).epsilon(1e-9));
    }
  }
  SUBCASE("zero height has no point") {
    CHECK(!box_to_point(Eigen::Vector4d(0.5, 0.5, 0.1, 0.0), kW, kH, c));
  }
  SUBCASE("points behind the camera land on their side's edge") {
    const Eigen::Vector4d ref(0.5, 0.5, 0.1, 0.4);
    CHECK(point_to_box({-1.0, 2.0}, ref, kW, kH, c)[0] == 1.0);
    CHECK(point_to_box({-1.0, -2.0}, ref, kW, kH, c)[0] == 0.0);
  }
}

TEST_CASE("ego_compensate") {
  const AgentConfig c;
  const Box centred(kW / 2.0, 60, 20, c.height_setpoint);
  SUBCASE("turning right moves the box left by f tan(omega)") {
    Action a;
    a.omega_y = 0.1;
    const Box out = ego_compensate(centred, a, kW, kH, c);
    CHECK(out[0] == doctest::Approx(kW / 2.0 - c.focal_px * std::tan(0.1)));
    CHECK(out[2] == doctest::Approx(centred[2]));
    CHECK(out[3] == doctest::Approx(centred[3]));
  }
  SUBCASE("moving forward grows the box by the range ratio") {
    Action a;
    a.v_f = 0.5;
    const Box out = ego_compensate(centred, a, kW, kH, c);
    const double ratio = c.follow_distance / (c.follow_distance - 0.5);
    CHECK(out[0] == doctest::Approx(kW / 2.0));
    CHECK(out[3] == doctest::Approx(centred[3] * ratio));
  }
  SUBCASE("zero action is the identity") {
    const Box b(30, 50, 12, 40);
    CHECK((ego_compensate(b, Action{}, kW, kH, c) - b).norm() < 1e-9);
  }
}

TEST_CASE("plan_cost") {
  const Eigen::VectorXd free = Eigen::VectorXd::Zero(256);
  Eigen::MatrixXd straight(16, 2);
  for (int i = 0; i < 16; ++i) straight.row(i) << 0.05 * (i + 1), 0.0;
  SUBCASE("open space: sight from the first waypoint, cost is the length term") {
    const double cost = plan_cost(straight, free, Eigen::Vector2d(3.0, 0.0));
    CHECK(cost == doctest::Approx(0.8 * 4.0 / 100.0));
  }
  SUBCASE("a wall ahead makes the straight plan collide") {
    Eigen::VectorXd wall = free;
    for (int col = 0; col < 16; ++col) wall[5 * 16 + col] = 1.0;  // x in [1, 1.5)
    const double cost = plan_cost(straight, wall, std::nullopt);
    CHECK(cost >= 17.0);
  }
  SUBCASE("without a sight line, ending nearer the target is cheaper") {
    Eigen::VectorXd wall = free;
    for (int col = 0; col < 16; ++col) wall[1 * 16 + col] = 1.0;  // x in [3, 3.5)
    const Eigen::Vector2d target(3.9, 0.0);
    const double far = plan_cost(straight * 0.5, wall, target);
    const double near = plan_cost(straight * 0.75, wall, target);
    CHECK(near < far);
    CHECK(near >= 16.0);
  }
  SUBCASE("the tracker's own cell does not count as a collision") {
    Eigen::VectorXd own = free;
    own[8 * 16 + 8] = 1.0;
    CHECK(plan_cost(straight, own, std::nullopt) < 17.0);
  }
}
