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

#include "occtrack/features.hpp"

#include <limits>
#include <sstream>

#include <json.hpp>

namespace occtrack {

namespace {

// Half-gap B of the worst intra pair: cos_min = (1 - B) / (1 + B).
double cohesion_excursion(double cohesion_delta) {
  return (1.0 - cohesion_delta) / (1.0 + cohesion_delta);
}

Eigen::MatrixXd random_orthonormal(int dim, Rng& rng) {
  Eigen::MatrixXd g(dim, dim);
  for (int c = 0; c < dim; ++c) {
    for (int r = 0; r < dim; ++r) g(r, c) = standard_normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dim, dim);
  // Sign fix makes the draw Haar-distributed.
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int c = 0; c < dim; ++c) {
    if (r(c, c) < 0.0) q.col(c) *= -1.0;
  }
  return q;
}

double random_angle(Rng& rng, const AngleRange& range) {
  return range.center + uniform(rng, -range.half_width, range.half_width);
}

}  // namespace

double InstanceManifold::view_coefficient(int m, double angle) const {
  const int count = num_view_dirs();
  const double phase = count > 0 ? m * kPi / count : 0.0;
  return view_amplitude * std::sin(angle + phase);
}

Eigen::VectorXd InstanceManifold::raw_point(double angle) const {
  Eigen::VectorXd p = mean_direction;
  for (int m = 0; m < num_view_dirs(); ++m) {
    p.noalias() += view_coefficient(m, angle) * view_basis.col(m);
  }
  return p;
}

const InstanceManifold& ManifoldSet::by_instance(int instance_id) const {
  for (const auto& m : manifolds) {
    if (m.instance_id == instance_id) return m;
  }
  throw Error(ErrorCode::kFormat,
              "no manifold for instance " + std::to_string(instance_id));
}

double constructed_max_inter_cosine(int num_instances, double cohesion_delta) {
  if (num_instances < 2) return -1.0;
  const double simplex_cos = -1.0 / (num_instances - 1);
  return simplex_cos / (1.0 + cohesion_excursion(cohesion_delta));
}

ManifoldSet generate_manifold_set(int num_instances, int dim,
                                  double cohesion_delta, double separation_eta,
                                  int num_view_dirs, std::uint64_t seed) {
  if (num_instances < 1 || dim < 1 || num_view_dirs < 0 ||
      num_view_dirs + 1 > dim) {
    throw Error(ErrorCode::kInfeasibleGeometry,
                "need num_instances >= 1 and num_view_dirs + 1 <= dim");
  }
  if (!(cohesion_delta > 0.0 && cohesion_delta < 1.0) ||
      !(separation_eta > -1.0 && separation_eta < 1.0)) {
    throw Error(ErrorCode::kInfeasibleGeometry,
                "cohesion_delta must lie in (0,1), separation_eta in (-1,1)");
  }
  // Mean directions use num_instances coordinates (a centered simplex) and
  // every instance needs num_view_dirs private orthogonal directions.
  const long needed = num_instances == 1
                          ? 1L + num_view_dirs
                          : static_cast<long>(num_instances) * (1 + num_view_dirs);
  if (needed > dim) {
    throw Error(ErrorCode::kInfeasibleGeometry,
                std::to_string(num_instances) + " instances with " +
                    std::to_string(num_view_dirs) +
                    " view directions do not fit in dimension " +
                    std::to_string(dim));
  }
  const double worst_inter =
      constructed_max_inter_cosine(num_instances, cohesion_delta);
  if (num_instances >= 2 && worst_inter > separation_eta + 1e-12) {
    std::ostringstream msg;
    msg << "separation " << separation_eta << " unreachable for "
        << num_instances << " instances (best achievable " << worst_inter
        << ")";
    throw Error(ErrorCode::kInfeasibleGeometry, msg.str());
  }

  Rng rng(seed);
  const Eigen::MatrixXd q = random_orthonormal(dim, rng);
  const double excursion = cohesion_excursion(cohesion_delta);
  double amplitude = 0.0;
  if (num_view_dirs == 1) {
    amplitude = std::sqrt(excursion);
  } else if (num_view_dirs >= 2) {
    amplitude = std::sqrt(2.0 * excursion / num_view_dirs);
  }

  ManifoldSet set;
  set.dim = dim;
  set.separation_eta = separation_eta;
  const int mean_cols = num_instances == 1 ? 1 : num_instances;
  for (int k = 0; k < num_instances; ++k) {
    InstanceManifold m;
    m.instance_id = k;
    if (num_instances == 1) {
      m.mean_direction = q.col(0);
    } else {
      Eigen::VectorXd vertex =
          Eigen::VectorXd::Constant(num_instances, -1.0 / num_instances);
      vertex[k] += 1.0;
      vertex.normalize();
      m.mean_direction = q.leftCols(num_instances) * vertex;
      m.mean_direction.normalize();
    }
    m.view_basis = q.middleCols(mean_cols + k * num_view_dirs, num_view_dirs);
    m.view_amplitude = amplitude;
    m.cohesion_delta = cohesion_delta;
    set.manifolds.push_back(std::move(m));
  }
  return set;
}

FeatureVector describe(const InstanceManifold& manifold, double view_angle,
                       double noise_scale, Rng& rng) {
  Eigen::VectorXd f = manifold.raw_point(view_angle);
  if (noise_scale > 0.0) {
    const double per_component =
        noise_scale / std::sqrt(static_cast<double>(f.size()));
    f += per_component * gaussian_vector(rng, f.size());
  }
  return f / f.norm();
}

FeatureVector describe(const InstanceManifold& manifold, double view_angle,
                       double noise_scale, std::uint64_t seed) {
  Rng rng(seed);
  return describe(manifold, view_angle, noise_scale, rng);
}

std::vector<FeatureVector> view_sweep(const InstanceManifold& manifold,
                                      double ref_angle, int num_views,
                                      double noise_scale, Rng& rng) {
  std::vector<FeatureVector> views;
  views.reserve(static_cast<std::size_t>(std::max(num_views, 0)));
  for (int i = 0; i < num_views; ++i) {
    views.push_back(describe(manifold, ref_angle + 2.0 * kPi * i / num_views,
                             noise_scale, rng));
  }
  return views;
}

Prototype init_prototype(const FeatureVector& ref_feature,
                         std::span<const FeatureVector> augmented_features,
                         int source_instance) {
  if (augmented_features.empty()) {
    throw Error(ErrorCode::kUsage, "init_prototype needs augmented features");
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(ref_feature.size());
  for (const auto& f : augmented_features) {
    if (f.size() != ref_feature.size()) {
      throw Error(ErrorCode::kUsage, "feature dimension mismatch");
    }
    mean += f;
  }
  mean /= static_cast<double>(augmented_features.size());
  const Eigen::VectorXd sum = ref_feature + mean;
  const double norm = sum.norm();
  if (!(norm >= 1e-12)) {
    throw Error(ErrorCode::kDegenerateSum,
                "reference and augmented mean cancel out");
  }
  return Prototype{sum / norm, source_instance, 0};
}

std::optional<std::size_t> match_candidates(
    const Prototype& prototype, std::span<const FeatureVector> candidates,
    double eta_s) {
  std::optional<std::size_t> best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!(candidates[i].norm() > 1e-12)) continue;
    const double s = cosine_similarity(prototype.vector, candidates[i]);
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  if (best && best_score > eta_s) return best;
  return std::nullopt;
}

Prototype ema_update(const Prototype& prototype,
                     const FeatureVector& target_feature, double beta) {
  Prototype next = prototype;
  ++next.update_count;
  if (beta == 1.0) return next;
  if (beta == 0.0) {
    next.vector = target_feature;
    return next;
  }
  next.vector = beta * prototype.vector + (1.0 - beta) * target_feature;
  return next;
}

Prototype average_update(const Prototype& prototype,
                         const FeatureVector& target_feature) {
  Prototype next = prototype;
  // The initial prototype counts as the first sample.
  const double n = static_cast<double>(prototype.update_count) + 1.0;
  next.vector = (n * prototype.vector + target_feature) / (n + 1.0);
  ++next.update_count;
  return next;
}

PrototypeStore::PrototypeStore(Prototype initial)
    : current_(std::make_shared<const Prototype>(std::move(initial))) {}

std::shared_ptr<const Prototype> PrototypeStore::snapshot() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return current_;
}

void PrototypeStore::publish(Prototype next) {
  auto fresh = std::make_shared<const Prototype>(std::move(next));
  std::lock_guard<std::mutex> lock(mutex_);
  current_ = std::move(fresh);
}

CoverageReport verify_coverage_assumption(
    const InstanceManifold& manifold, const FeatureVector& ref_feature,
    std::span<const FeatureVector> augmented, int probe_count,
    std::uint64_t seed, AngleRange probes, double tolerance) {
  if (probe_count < 1 || augmented.empty()) {
    throw Error(ErrorCode::kUsage,
                "coverage check needs probes and augmented features");
  }
  Rng rng(seed);
  double lhs = 0.0;
  double rhs = 0.0;
  for (int p = 0; p < probe_count; ++p) {
    const FeatureVector g = describe(manifold, random_angle(rng, probes), 0.0, rng);
    double avg = 0.0;
    for (const auto& f : augmented) avg += (f - g).squaredNorm();
    lhs += avg / static_cast<double>(augmented.size());
    rhs += (ref_feature - g).squaredNorm();
  }
  CoverageReport report;
  report.lhs = lhs / probe_count;
  report.rhs = rhs / probe_count;
  report.holds = report.lhs <= report.rhs + tolerance;
  return report;
}

CertificationReport certify(const ManifoldSet& set, int sample_pairs,
                            std::uint64_t seed, double tolerance) {
  Rng rng(seed);
  CertificationReport report;
  const auto& ms = set.manifolds;
  for (std::size_t k = 0; k < ms.size(); ++k) {
    for (int p = 0; p < sample_pairs; ++p) {
      const FeatureVector a = describe(ms[k], uniform(rng, -kPi, kPi), 0.0, rng);
      const FeatureVector b = describe(ms[k], uniform(rng, -kPi, kPi), 0.0, rng);
      report.min_intra_cosine = std::min(report.min_intra_cosine, a.dot(b));
    }
    for (std::size_t j = k + 1; j < ms.size(); ++j) {
      for (int p = 0; p < sample_pairs; ++p) {
        const FeatureVector a = describe(ms[k], uniform(rng, -kPi, kPi), 0.0, rng);
        const FeatureVector b = describe(ms[j], uniform(rng, -kPi, kPi), 0.0, rng);
        report.max_inter_cosine = std::max(report.max_inter_cosine, a.dot(b));
      }
    }
  }
  bool intra_ok = true;
  for (const auto& m : ms) {
    intra_ok = intra_ok && report.min_intra_cosine >= m.cohesion_delta - tolerance;
  }
  report.holds =
      intra_ok && (ms.size() < 2 ||
                   report.max_inter_cosine <= set.separation_eta + tolerance);
  return report;
}

TheoryReport verify_lemmas_and_proposition(const ManifoldSet& set,
                                           int n_per_instance, int n_views,
                                           std::uint64_t seed,
                                           int probe_count, double tolerance) {
  if (n_per_instance < 1 || n_views < 0 || probe_count < 1) {
    throw Error(ErrorCode::kUsage, "invalid theory harness sizes");
  }
  const CertificationReport cert = certify(set, 500, derive_seed(seed, 1));
  if (!cert.holds) {
    std::ostringstream msg;
    msg << "manifold set fails certification (min intra " << cert.min_intra_cosine
        << ", max inter " << cert.max_inter_cosine << ")";
    throw Error(ErrorCode::kAssumptionViolated, msg.str());
  }

  Rng rng(derive_seed(seed, 2));
  const std::size_t num = set.manifolds.size();
  std::vector<std::vector<FeatureVector>> references(num);
  std::vector<std::vector<FeatureVector>> prototypes(num);

  TheoryReport report;
  report.lemma1_margin = std::numeric_limits<double>::infinity();
  report.lemma2_margin = std::numeric_limits<double>::infinity();
  report.coverage_margin = std::numeric_limits<double>::infinity();

  for (std::size_t k = 0; k < num; ++k) {
    const InstanceManifold& manifold = set.manifolds[k];
    // Stratified probes: evenly spaced view angles with a random offset
    // integrate the uniform view measure exactly for the harmonic terms.
    std::vector<FeatureVector> probes;
    probes.reserve(static_cast<std::size_t>(probe_count));
    const double offset = uniform(rng, -kPi, kPi);
    for (int p = 0; p < probe_count; ++p) {
      probes.push_back(
          describe(manifold, offset + 2.0 * kPi * p / probe_count, 0.0, rng));
    }
    for (int r = 0; r < n_per_instance; ++r) {
      const double ref_angle = uniform(rng, -kPi, kPi);
      FeatureVector ref = describe(manifold, ref_angle, 0.0, rng);
      std::vector<FeatureVector> augmented =
          n_views == 0 ? std::vector<FeatureVector>{ref}
                       : view_sweep(manifold, ref_angle, n_views, 0.0, rng);
      Eigen::VectorXd avg = Eigen::VectorXd::Zero(ref.size());
      for (const auto& f : augmented) avg += f;
      avg /= static_cast<double>(augmented.size());
      Prototype proto = init_prototype(ref, augmented, manifold.instance_id);

      double e_avg = 0.0;
      double e_ref = 0.0;
      double e_proto = 0.0;
      double e_cover = 0.0;
      for (const auto& g : probes) {
        e_avg += (avg - g).squaredNorm();
        e_ref += (ref - g).squaredNorm();
        e_proto += (proto.vector - g).squaredNorm();
        double spread = 0.0;
        for (const auto& f : augmented) spread += (f - g).squaredNorm();
        e_cover += spread / static_cast<double>(augmented.size());
      }
      e_avg /= probe_count;
      e_ref /= probe_count;
      e_proto /= probe_count;
      e_cover /= probe_count;

      report.lemma1_margin = std::min(report.lemma1_margin, e_ref - e_avg);
      report.lemma2_margin = std::min(report.lemma2_margin, e_ref - e_proto);
      report.coverage_margin = std::min(report.coverage_margin, e_ref - e_cover);

      references[k].push_back(std::move(ref));
      prototypes[k].push_back(std::move(proto.vector));
    }
  }
  report.lemma1_holds = report.lemma1_margin >= -tolerance;
  report.lemma2_holds = report.lemma2_margin >= -tolerance;
  report.coverage_holds = report.coverage_margin >= -tolerance;

  report.prop1_margin = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < num; ++k) {
    for (std::size_t j = k + 1; j < num; ++j) {
      double ref_min = std::numeric_limits<double>::infinity();
      double proto_min = std::numeric_limits<double>::infinity();
      for (const auto& a : references[k]) {
        for (const auto& b : references[j]) {
          ref_min = std::min(ref_min, (a - b).squaredNorm());
        }
      }
      for (const auto& a : prototypes[k]) {
        for (const auto& b : prototypes[j]) {
          proto_min = std::min(proto_min, (a - b).squaredNorm());
        }
      }
      report.prop1_margin = std::min(report.prop1_margin, proto_min - ref_min);
      ++report.instance_pairs;
    }
  }
  report.prop1_holds = report.prop1_margin >= -tolerance;
  return report;
}

namespace {

using nlohmann::json;

json vector_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vector_from(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(),
                                           static_cast<Eigen::Index>(values.size()));
}

}  // namespace

std::string manifold_set_to_json(const ManifoldSet& set) {
  json doc;
  doc["dim"] = set.dim;
  doc["separation_eta"] = set.separation_eta;
  doc["manifolds"] = json::array();
  for (const auto& m : set.manifolds) {
    json basis = json::array();
    for (int c = 0; c < m.num_view_dirs(); ++c) {
      basis.push_back(vector_json(m.view_basis.col(c)));
    }
    doc["manifolds"].push_back({{"instance_id", m.instance_id},
                                {"mean_direction", vector_json(m.mean_direction)},
                                {"view_basis", basis},
                                {"view_amplitude", m.view_amplitude},
                                {"cohesion_delta", m.cohesion_delta}});
  }
  return doc.dump();
}

ManifoldSet manifold_set_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    ManifoldSet set;
    set.dim = doc.at("dim").get<int>();
    set.separation_eta = doc.at("separation_eta").get<double>();
    for (const auto& jm : doc.at("manifolds")) {
      InstanceManifold m;
      m.instance_id = jm.at("instance_id").get<int>();
      m.mean_direction = vector_from(jm.at("mean_direction"));
      const auto& basis = jm.at("view_basis");
      m.view_basis.resize(set.dim, static_cast<Eigen::Index>(basis.size()));
      for (std::size_t c = 0; c < basis.size(); ++c) {
        m.view_basis.col(static_cast<Eigen::Index>(c)) = vector_from(basis[c]);
      }
      m.view_amplitude = jm.at("view_amplitude").get<double>();
      m.cohesion_delta = jm.at("cohesion_delta").get<double>();
      if (m.mean_direction.size() != set.dim) {
        throw Error(ErrorCode::kFormat, "mean_direction dimension mismatch");
      }
      set.manifolds.push_back(std::move(m));
    }
    return set;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, e.what());
  }
}

std::string prototype_to_json(const Prototype& prototype) {
  json doc{{"vector", vector_json(prototype.vector)},
           {"source_instance", prototype.source_instance},
           {"update_count", prototype.update_count}};
  return doc.dump();
}

Prototype prototype_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    return Prototype{vector_from(doc.at("vector")),
                     doc.at("source_instance").get<int>(),
                     doc.at("update_count").get<int>()};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, e.what());
  }
}

}  // namespace occtrack
