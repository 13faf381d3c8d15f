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

#include <atomic>
#include <thread>

#include <doctest.h>

#include "occtrack/features.hpp"

using namespace occtrack;

namespace {

Eigen::VectorXd basis(int dim, int i) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
  e[i] = 1.0;
  return e;
}

// Brute-force extremes of pairwise cosines over sampled features.
std::pair<double, double> sampled_extremes(const ManifoldSet& set, int samples,
                                           std::uint64_t seed) {
  Rng rng(seed);
  double min_intra = 1.0;
  double max_inter = -1.0;
  for (std::size_t k = 0; k < set.manifolds.size(); ++k) {
    std::vector<FeatureVector> mine;
    for (int s = 0; s < samples; ++s) {
      mine.push_back(describe(set.manifolds[k], uniform(rng, -10, 10), 0.0, rng));
    }
    for (int s = 0; s + 1 < samples; ++s) {
      min_intra = std::min(min_intra, mine[s].dot(mine[s + 1]));
    }
    for (std::size_t j = 0; j < set.manifolds.size(); ++j) {
      if (j == k) continue;
      for (int s = 0; s < samples; ++s) {
        const auto other = describe(set.manifolds[j], uniform(rng, -10, 10), 0.0, rng);
        max_inter = std::max(max_inter, mine[s].dot(other));
      }
    }
  }
  return {min_intra, max_inter};
}

}  // namespace

TEST_CASE("generate_manifold_set certifies cohesion and separation") {
  const ManifoldSet set = generate_manifold_set(2, 64, 0.8, 0.2, 2, 7);
  REQUIRE(set.manifolds.size() == 2);
  const auto [min_intra, max_inter] = sampled_extremes(set, 1000, 99);
  CHECK(min_intra >= 0.8 - 1e-6);
  CHECK(max_inter <= 0.2 + 1e-6);

  for (const auto& m : set.manifolds) {
    CHECK(std::abs(m.mean_direction.norm() - 1.0) < 1e-12);
    const Eigen::MatrixXd gram = m.view_basis.transpose() * m.view_basis;
    CHECK((gram - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((m.view_basis.transpose() * m.mean_direction).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("single manifold keeps high cohesion") {
  const ManifoldSet set = generate_manifold_set(1, 8, 0.99, 0.0, 2, 3);
  const auto [min_intra, max_inter] = sampled_extremes(set, 500, 5);
  CHECK(min_intra >= 0.99 - 1e-6);
  (void)max_inter;
}

TEST_CASE("worst-case cohesion is attained at opposite view angles") {
  for (int dirs : {1, 2, 3}) {
    const ManifoldSet set = generate_manifold_set(1, 16, 0.8, 0.0, dirs, 11);
    const auto& m = set.manifolds[0];
    const double c = describe(m, 0.5 * kPi, 0.0, 1).dot(describe(m, -0.5 * kPi, 0.0, 1));
    CHECK(c == doctest::Approx(0.8).epsilon(1e-9));
  }
}

TEST_CASE("infeasible packings are rejected") {
  CHECK_THROWS_AS(generate_manifold_set(100, 2, 0.9, 0.0, 1, 1), Error);
  try {
    generate_manifold_set(100, 2, 0.9, 0.0, 1, 1);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInfeasibleGeometry);
  }
  // Five simplex directions cannot all be pairwise below -0.5.
  CHECK_THROWS_AS(generate_manifold_set(5, 64, 0.8, -0.5, 2, 1), Error);
  CHECK_THROWS_AS(generate_manifold_set(2, 64, 1.0, 0.2, 2, 1), Error);
}

TEST_CASE("generation is deterministic per seed") {
  const auto a = generate_manifold_set(3, 32, 0.8, 0.2, 2, 42);
  const auto b = generate_manifold_set(3, 32, 0.8, 0.2, 2, 42);
  const auto c = generate_manifold_set(3, 32, 0.8, 0.2, 2, 43);
  CHECK(manifold_set_to_json(a) == manifold_set_to_json(b));
  CHECK(manifold_set_to_json(a) != manifold_set_to_json(c));
}

TEST_CASE("describe") {
  const ManifoldSet set = generate_manifold_set(2, 64, 0.8, 0.2, 2, 7);
  SUBCASE("zero amplitude and noise collapses to the mean") {
    InstanceManifold m = set.manifolds[0];
    m.view_amplitude = 0.0;
    const FeatureVector f = describe(m, 1.3, 0.0, 4);
    CHECK((f - m.mean_direction).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("quarter-turn views stay cohesive") {
    const auto& m = set.manifolds[0];
    CHECK(describe(m, 0.0, 0.0, 1).dot(describe(m, kPi / 2, 0.0, 1)) >= 0.8);
  }
  SUBCASE("distinct manifolds stay separated") {
    Rng rng(17);
    double worst = -1.0;
    for (int i = 0; i < 1000; ++i) {
      const auto a = describe(set.manifolds[0], uniform(rng, -kPi, kPi), 0.0, rng);
      const auto b = describe(set.manifolds[1], uniform(rng, -kPi, kPi), 0.0, rng);
      worst = std::max(worst, cosine_similarity(a, b));
    }
    CHECK(worst <= 0.2);
  }
  SUBCASE("output is unit norm and seed-deterministic with noise") {
    const auto a = describe(set.manifolds[1], 0.7, 0.3, 99);
    const auto b = describe(set.manifolds[1], 0.7, 0.3, 99);
    CHECK(std::abs(a.norm() - 1.0) < 1e-12);
    CHECK(a == b);
  }
}

TEST_CASE("init_prototype") {
  const int d = 6;
  const Eigen::VectorXd e1 = basis(d, 0);
  const Eigen::VectorXd e2 = basis(d, 1);
  SUBCASE("identical inputs reproduce the input") {
    std::vector<FeatureVector> aug{e1, e1, e1};
    const Prototype p = init_prototype(e1, aug);
    CHECK((p.vector - e1).norm() < 1e-15);
    CHECK(p.update_count == 0);
  }
  SUBCASE("single orthogonal augmentation") {
    std::vector<FeatureVector> aug{e2};
    const Prototype p = init_prototype(e1, aug);
    CHECK(p.vector[0] == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(p.vector[1] == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(p.vector.tail(d - 2).norm() == 0.0);
  }
  SUBCASE("antipodal cancellation") {
    std::vector<FeatureVector> aug{-e1};
    try {
      init_prototype(e1, aug);
      FAIL("expected DegenerateSum");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kDegenerateSum);
    }
  }
  SUBCASE("empty augmentation is a precondition error") {
    std::vector<FeatureVector> aug;
    CHECK_THROWS_AS(init_prototype(e1, aug), Error);
  }
  SUBCASE("unit norm over random inputs") {
    Rng rng(123);
    for (int trial = 0; trial < 200; ++trial) {
      const FeatureVector ref = gaussian_vector(rng, 16).normalized();
      std::vector<FeatureVector> aug;
      const int n = 1 + trial % 9;
      for (int i = 0; i < n; ++i) aug.push_back(gaussian_vector(rng, 16).normalized());
      const Prototype p = init_prototype(ref, aug);
      CHECK(std::abs(p.vector.norm() - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("cosine_similarity") {
  const Eigen::VectorXd e1 = basis(4, 0);
  const Eigen::VectorXd e2 = basis(4, 1);
  CHECK(cosine_similarity(e1, e1) == 1.0);
  CHECK(cosine_similarity(e1, e2) == 0.0);
  CHECK(cosine_similarity(e1, (3.0 * e1 + 4.0 * e2).eval()) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK_THROWS_AS(cosine_similarity(e1, Eigen::VectorXd::Zero(4).eval()), Error);

  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const auto a = gaussian_vector(rng, 8);
    const auto b = gaussian_vector(rng, 8);
    const double s = cosine_similarity(a, b);
    CHECK(s == doctest::Approx(cosine_similarity(b, a)));
    CHECK(s == doctest::Approx(cosine_similarity((2.5 * a).eval(), (0.1 * b).eval())));
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("match_candidates") {
  const int d = 5;
  Prototype proto{basis(d, 0), 0, 0};
  const Eigen::VectorXd e2 = basis(d, 1);
  Eigen::VectorXd close = 0.9 * basis(d, 0) + 0.1 * basis(d, 2);

  std::vector<FeatureVector> two{e2, close};
  CHECK(match_candidates(proto, two, 0.5) == std::optional<std::size_t>(1));

  std::vector<FeatureVector> one{e2};
  CHECK_FALSE(match_candidates(proto, one, 0.5).has_value());

  std::vector<FeatureVector> none;
  CHECK_FALSE(match_candidates(proto, none, 0.5).has_value());

  std::vector<FeatureVector> tie{close, close};
  CHECK(match_candidates(proto, tie, 0.5) == std::optional<std::size_t>(0));

  SUBCASE("invariant to positive rescaling of candidates") {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
      Prototype p{gaussian_vector(rng, 8).normalized(), 0, 0};
      std::vector<FeatureVector> cands;
      for (int i = 0; i < 5; ++i) cands.push_back(gaussian_vector(rng, 8));
      const auto before = match_candidates(p, cands, 0.1);
      for (auto& c : cands) c *= uniform(rng, 0.01, 100.0);
      CHECK(match_candidates(p, cands, 0.1) == before);
    }
  }
}

TEST_CASE("ema_update") {
  const int d = 4;
  const Eigen::VectorXd e1 = basis(d, 0);
  const Eigen::VectorXd e2 = basis(d, 1);
  Prototype p{e1, 0, 3};

  const Prototype same = ema_update(p, e2, 1.0);
  CHECK(same.vector == p.vector);
  CHECK(same.update_count == 4);

  const Prototype mixed = ema_update(p, e2, 0.8);
  CHECK(mixed.vector[0] == doctest::Approx(0.8));
  CHECK(mixed.vector[1] == doctest::Approx(0.2));
  CHECK(mixed.vector.tail(2).norm() == 0.0);

  CHECK(ema_update(p, e2, 0.0).vector == e2);

  SUBCASE("convex combination never grows the norm") {
    Rng rng(5);
    Prototype q{gaussian_vector(rng, 16).normalized(), 0, 0};
    for (int i = 0; i < 300; ++i) {
      const FeatureVector t = gaussian_vector(rng, 16).normalized();
      const double bound = std::max(q.vector.norm(), t.norm());
      q = ema_update(q, t, uniform(rng, 0.0, 1.0));
      CHECK(q.vector.norm() <= bound + 1e-12);
      CHECK(q.vector.norm() > 0.0);
    }
  }
}

TEST_CASE("average_update is the running mean") {
  const Eigen::VectorXd e1 = basis(3, 0);
  const Eigen::VectorXd e2 = basis(3, 1);
  Prototype p{e1, 0, 0};
  p = average_update(p, e2);
  CHECK(p.vector[0] == doctest::Approx(0.5));
  p = average_update(p, e2);
  CHECK(p.vector[0] == doctest::Approx(1.0 / 3.0));
  CHECK(p.vector[1] == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("Jensen step holds for arbitrary feature lists") {
  Rng rng(77);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + trial % 12;
    std::vector<FeatureVector> fs;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(10);
    for (int i = 0; i < n; ++i) {
      fs.push_back(gaussian_vector(rng, 10));
      mean += fs.back();
    }
    mean /= n;
    const auto g = gaussian_vector(rng, 10);
    double avg = 0.0;
    for (const auto& f : fs) avg += (f - g).squaredNorm();
    avg /= n;
    CHECK((mean - g).squaredNorm() <= avg + 1e-12);
  }
}

TEST_CASE("coverage assumption check") {
  const ManifoldSet set = generate_manifold_set(1, 32, 0.8, 0.0, 2, 21);
  const auto& m = set.manifolds[0];
  const AngleRange front{0.0, kPi / 2};
  Rng rng(2);

  SUBCASE("dense sweep beats an extreme reference") {
    std::vector<FeatureVector> sweep;
    for (int i = 0; i < 32; ++i) {
      sweep.push_back(describe(m, -kPi / 2 + kPi * (i + 0.5) / 32, 0.0, rng));
    }
    const auto ref = describe(m, kPi / 2, 0.0, rng);
    const CoverageReport r = verify_coverage_assumption(m, ref, sweep, 5000, 9, front);
    CHECK(r.holds);
    CHECK(r.lhs < r.rhs);
  }
  SUBCASE("repeated reference is the equality case") {
    const auto ref = describe(m, 0.3, 0.0, rng);
    std::vector<FeatureVector> same(4, ref);
    const CoverageReport r = verify_coverage_assumption(m, ref, same, 100, 9);
    CHECK(r.lhs == doctest::Approx(r.rhs).epsilon(1e-14));
    CHECK(r.holds);
  }
  SUBCASE("augmentations opposite the probe mode violate coverage") {
    const AngleRange narrow{0.0, 0.2};
    const auto ref = describe(m, 0.0, 0.0, rng);
    std::vector<FeatureVector> far;
    for (int i = 0; i < 8; ++i) far.push_back(describe(m, kPi + 0.01 * i, 0.0, rng));
    const CoverageReport r = verify_coverage_assumption(m, ref, far, 2000, 9, narrow);
    CHECK_FALSE(r.holds);
  }
}

TEST_CASE("lemmas and proposition") {
  SUBCASE("five instances") {
    const ManifoldSet set = generate_manifold_set(5, 64, 0.8, 0.2, 2, 1);
    const TheoryReport r = verify_lemmas_and_proposition(set, 20, 8, 2);
    CHECK(r.lemma1_holds);
    CHECK(r.lemma2_holds);
    CHECK(r.prop1_holds);
    CHECK(r.coverage_holds);
    CHECK(r.instance_pairs == 10);
    CHECK(r.prop1_margin > 0.0);
  }
  SUBCASE("identity augmentation is the equality case") {
    const ManifoldSet set = generate_manifold_set(2, 64, 0.8, 0.2, 2, 4);
    const TheoryReport r = verify_lemmas_and_proposition(set, 10, 0, 5);
    CHECK(r.prop1_holds);
    CHECK(std::abs(r.prop1_margin) < 1e-12);
    CHECK(std::abs(r.lemma1_margin) < 1e-12);
  }
  SUBCASE("single instance is vacuous for the proposition") {
    const ManifoldSet set = generate_manifold_set(1, 16, 0.8, 0.2, 2, 4);
    const TheoryReport r = verify_lemmas_and_proposition(set, 10, 8, 5);
    CHECK(r.instance_pairs == 0);
    CHECK(r.prop1_holds);
    CHECK(r.lemma1_holds);
    CHECK(r.lemma2_holds);
  }
  SUBCASE("tampered set fails certification") {
    ManifoldSet set = generate_manifold_set(2, 16, 0.8, 0.2, 2, 4);
    set.manifolds[1].mean_direction = set.manifolds[0].mean_direction;
    try {
      verify_lemmas_and_proposition(set, 5, 8, 5);
      FAIL("expected AssumptionViolated");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kAssumptionViolated);
    }
  }
}

TEST_CASE("json round trip preserves sets and prototypes") {
  const ManifoldSet set = generate_manifold_set(3, 24, 0.7, 0.1, 2, 8);
  const ManifoldSet back = manifold_set_from_json(manifold_set_to_json(set));
  REQUIRE(back.manifolds.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(back.manifolds[k].mean_direction == set.manifolds[k].mean_direction);
    CHECK(back.manifolds[k].view_basis == set.manifolds[k].view_basis);
    CHECK(back.manifolds[k].view_amplitude == set.manifolds[k].view_amplitude);
  }
  const Prototype p{set.manifolds[0].mean_direction, 4, 17};
  const Prototype q = prototype_from_json(prototype_to_json(p));
  CHECK(q.vector == p.vector);
  CHECK(q.source_instance == 4);
  CHECK(q.update_count == 17);
  CHECK_THROWS_AS(manifold_set_from_json("{\"dim\": 3}"), Error);
}

TEST_CASE("prototype store never exposes a torn vector") {
  const int d = 256;
  PrototypeStore store(Prototype{Eigen::VectorXd::Constant(d, 0.0), 0, 0});
  std::atomic<bool> done{false};
  std::atomic<int> torn{0};
  std::thread reader([&] {
    while (!done.load()) {
      const auto snap = store.snapshot();
      const double first = snap->vector[0];
      if ((snap->vector.array() != first).any()) torn.fetch_add(1);
    }
  });
  for (int i = 1; i <= 2000; ++i) {
    store.publish(Prototype{Eigen::VectorXd::Constant(d, i), 0, i});
  }
  done = true;
  reader.join();
  CHECK(torn.load() == 0);
  CHECK(store.snapshot()->update_count == 2000);
}
