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

// Synthetic instance features and instance prototypes.
//
// Each instance owns a feature manifold: a unit mean direction plus a small
// view-dependent excursion along private orthonormal directions. Mean
// directions of distinct instances sit on a regular simplex, so the
// intra-instance cohesion bound and the inter-instance separation bound are
// both guaranteed by construction and can be certified by sampling.

#ifndef OCCTRACK_FEATURES_HPP_
#define OCCTRACK_FEATURES_HPP_

#include <algorithm>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "occtrack/common.hpp"

namespace occtrack {

using FeatureVector = Eigen::VectorXd;

struct InstanceManifold {
  int instance_id = 0;
  Eigen::VectorXd mean_direction;
  Eigen::MatrixXd view_basis;  // dim x num_view_dirs, orthonormal columns
  double view_amplitude = 0.0;
  double cohesion_delta = 0.5;

  Eigen::Index dim() const { return mean_direction.size(); }
  int num_view_dirs() const { return static_cast<int>(view_basis.cols()); }

  // a_m(angle) = view_amplitude * sin(angle + m * pi / M)
  double view_coefficient(int m, double angle) const;

  // Noiseless, unnormalized point mean + sum_m a_m(angle) b_m.
  Eigen::VectorXd raw_point(double angle) const;
};

struct ManifoldSet {
  int dim = 0;
  double separation_eta = 0.0;
  std::vector<InstanceManifold> manifolds;

  const InstanceManifold& by_instance(int instance_id) const;
};

ManifoldSet generate_manifold_set(int num_instances, int dim,
                                  double cohesion_delta, double separation_eta,
                                  int num_view_dirs, std::uint64_t seed);

// Worst-case inter-instance cosine of a set built with these parameters.
double constructed_max_inter_cosine(int num_instances, double cohesion_delta);

// Unit-norm synthetic descriptor. `noise_scale` is the expected Euclidean
// norm of the isotropic Gaussian perturbation added before normalization.
FeatureVector describe(const InstanceManifold& manifold, double view_angle,
                       double noise_scale, std::uint64_t seed);
FeatureVector describe(const InstanceManifold& manifold, double view_angle,
                       double noise_scale, Rng& rng);

// N views at angles ref_angle + 2*pi*i/N, i = 0..N-1.
std::vector<FeatureVector> view_sweep(const InstanceManifold& manifold,
                                      double ref_angle, int num_views,
                                      double noise_scale, Rng& rng);

template <typename DerivedA, typename DerivedB>
double cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                         const Eigen::MatrixBase<DerivedB>& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 1e-12) || !(nb > 1e-12)) {
    throw Error(ErrorCode::kZeroVector, "cosine similarity of a zero vector");
  }
  const double s = a.dot(b) / (na * nb);
  return std::clamp(s, -1.0, 1.0);
}

struct Prototype {
  Eigen::VectorXd vector;
  int source_instance = -1;
  int update_count = 0;
};

// (f_ref + mean(f_i)) / ||f_ref + mean(f_i)||.
Prototype init_prototype(const FeatureVector& ref_feature,
                         std::span<const FeatureVector> augmented_features,
                         int source_instance = -1);

// Arg-max cosine similarity if it exceeds eta_s. Ties go to the lowest index;
// zero-norm candidates never match.
std::optional<std::size_t> match_candidates(
    const Prototype& prototype, std::span<const FeatureVector> candidates,
    double eta_s);

// beta * old + (1 - beta) * target, no renormalization.
Prototype ema_update(const Prototype& prototype,
                     const FeatureVector& target_feature, double beta);

// Running mean of every accepted feature; the avg_update ablation.
Prototype average_update(const Prototype& prototype,
                         const FeatureVector& target_feature);

// Readers always observe a complete prototype; publish() swaps the whole
// snapshot so a concurrent enhancement thread never exposes a torn vector.
class PrototypeStore {
 public:
  PrototypeStore() = default;
  explicit PrototypeStore(Prototype initial);

  std::shared_ptr<const Prototype> snapshot() const;
  void publish(Prototype next);

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const Prototype> current_;
};

struct AngleRange {
  double center = 0.0;
  double half_width = kPi;  // kPi covers the full circle
};

struct CoverageReport {
  double lhs = 0.0;  // E_g[(1/N) sum ||f_i - g||^2]
  double rhs = 0.0;  // E_g[||f* - g||^2]
  bool holds = false;
};

CoverageReport verify_coverage_assumption(
    const InstanceManifold& manifold, const FeatureVector& ref_feature,
    std::span<const FeatureVector> augmented, int probe_count,
    std::uint64_t seed, AngleRange probes = {}, double tolerance = 1e-6);

struct CertificationReport {
  double min_intra_cosine = 1.0;
  double max_inter_cosine = -1.0;
  bool holds = false;
};

// Monte-Carlo check of the cohesion/separation bounds over random pairs.
CertificationReport certify(const ManifoldSet& set, int sample_pairs,
                            std::uint64_t seed, double tolerance = 1e-6);

struct TheoryReport {
  bool lemma1_holds = true;
  bool lemma2_holds = true;
  bool prop1_holds = true;
  bool coverage_holds = true;
  double lemma1_margin = 0.0;  // min over references of rhs - lhs
  double lemma2_margin = 0.0;
  double prop1_margin = 0.0;   // min proto distance^2 - min ref distance^2
  double coverage_margin = 0.0;
  int instance_pairs = 0;
};

// Samples n_per_instance references per instance, augments each with a
// view sweep of n_views (n_views == 0 augments with the reference itself),
// builds prototypes and evaluates the three inequalities.
TheoryReport verify_lemmas_and_proposition(const ManifoldSet& set,
                                           int n_per_instance, int n_views,
                                           std::uint64_t seed,
                                           int probe_count = 256,
                                           double tolerance = 1e-6);

std::string manifold_set_to_json(const ManifoldSet& set);
ManifoldSet manifold_set_from_json(const std::string& text);
std::string prototype_to_json(const Prototype& prototype);
Prototype prototype_from_json(const std::string& text);

}  // namespace occtrack

#endif  // OCCTRACK_FEATURES_HPP_
