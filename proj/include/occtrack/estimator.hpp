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

// Confidence-aware Kalman filter over an image-plane box.
//
// State x = [cx, cy, w, h, dcx, dcy, dw, dh] in pixels and pixels/step with a
// constant-velocity transition. The measurement noise is R = k * s2(c) * I
// where s2(c) = 1 / (1 + exp(lambda * (c - gamma))) shrinks as tracker
// confidence rises, so low-confidence boxes pull the estimate less. The
// pixel scale k puts R near 1 px^2 for a fully confident box.

#ifndef OCCTRACK_ESTIMATOR_HPP_
#define OCCTRACK_ESTIMATOR_HPP_

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "occtrack/common.hpp"

namespace occtrack {

template <typename Scalar>
using Box4 = Eigen::Matrix<Scalar, 4, 1>;

template <typename Scalar>
struct KfState {
  using Vector8 = Eigen::Matrix<Scalar, 8, 1>;
  using Matrix8 = Eigen::Matrix<Scalar, 8, 8>;

  Vector8 x = Vector8::Zero();
  Matrix8 P = Matrix8::Identity();

  Box4<Scalar> box() const { return x.template head<4>(); }
};

template <typename Scalar>
struct KfConfig {
  using Matrix8 = Eigen::Matrix<Scalar, 8, 8>;
  using Matrix48 = Eigen::Matrix<Scalar, 4, 8>;

  Matrix8 F = constant_velocity();
  Matrix48 H = observe_box();
  Matrix8 Q = Scalar(0.01) * Matrix8::Identity();
  Scalar lambda = Scalar(15.0);
  Scalar gamma = Scalar(0.4);
  Scalar eta_c = Scalar(0.5);
  // When false, R = fixed_noise * I regardless of confidence (a plain
  // linear filter for ablations).
  bool confidence_aware = true;
  Scalar noise_scale = Scalar(8100.0);  // px^2
  Scalar fixed_noise = Scalar(1.0);     // px^2
  Scalar min_extent = Scalar(0.1);

  static Matrix8 constant_velocity() {
    Matrix8 f = Matrix8::Identity();
    f.template topRightCorner<4, 4>().setIdentity();
    return f;
  }
  static Matrix48 observe_box() {
    Matrix48 h = Matrix48::Zero();
    h.template leftCols<4>().setIdentity();
    return h;
  }
};

template <typename Scalar>
struct Measurement {
  Box4<Scalar> z = Box4<Scalar>::Zero();
  Scalar confidence = Scalar(0);
};

template <typename Scalar>
struct KfStepResult {
  KfState<Scalar> state;
  Box4<Scalar> predicted_box;
  bool measurement_used = false;
};

template <typename Scalar>
Scalar confidence_noise(Scalar c, Scalar lambda, Scalar gamma) {
  c = std::clamp(c, Scalar(0), Scalar(1));
  return Scalar(1) / (Scalar(1) + std::exp(lambda * (c - gamma)));
}

template <typename Scalar>
Scalar measurement_noise(Scalar c, const KfConfig<Scalar>& config) {
  return config.confidence_aware
             ? config.noise_scale * confidence_noise(c, config.lambda, config.gamma)
             : config.fixed_noise;
}

template <typename Scalar>
void symmetrize(Eigen::Matrix<Scalar, 8, 8>& p) {
  p = Scalar(0.5) * (p + p.transpose()).eval();
}

// Fresh track from a detected box: zero velocity, loose covariance.
template <typename Scalar>
KfState<Scalar> initial_state(const Box4<Scalar>& box) {
  KfState<Scalar> s;
  s.x.setZero();
  s.x.template head<4>() = box;
  s.P.setZero();
  s.P.diagonal() << 10, 10, 10, 10, 100, 100, 100, 100;
  return s;
}

template <typename Scalar>
KfState<Scalar> predict(const KfState<Scalar>& state,
                        const KfConfig<Scalar>& config) {
  KfState<Scalar> out;
  out.x.noalias() = config.F * state.x;
  out.P.noalias() = config.F * state.P * config.F.transpose();
  out.P += config.Q;
  symmetrize(out.P);
  return out;
}

template <typename Scalar>
Eigen::Matrix<Scalar, 8, 4> kalman_gain(const Eigen::Matrix<Scalar, 8, 8>& p,
                                        Scalar noise,
                                        const KfConfig<Scalar>& config) {
  using Matrix4 = Eigen::Matrix<Scalar, 4, 4>;
  Matrix4 s = config.H * p * config.H.transpose();
  s += noise * Matrix4::Identity();
  s = Scalar(0.5) * (s + s.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix4> eig(s);
  const Scalar lo = eig.eigenvalues().minCoeff();
  const Scalar hi = eig.eigenvalues().maxCoeff();
  if (!(lo > Scalar(0)) || hi / lo > Scalar(1e12)) {
    throw Error(ErrorCode::kSingularInnovation,
                "innovation covariance is numerically singular");
  }
  // K = P H^T S^-1, solved through the symmetric factorization.
  const Eigen::Matrix<Scalar, 4, 8> pht_t = config.H * p.transpose();
  const Eigen::Matrix<Scalar, 4, 8> k_t = s.ldlt().solve(pht_t);
  return k_t.transpose();
}

template <typename Scalar>
KfState<Scalar> update(const KfState<Scalar>& state,
                       const Measurement<Scalar>& m,
                       const KfConfig<Scalar>& config) {
  using Matrix8 = Eigen::Matrix<Scalar, 8, 8>;
  const Scalar noise = measurement_noise(m.confidence, config);
  const Eigen::Matrix<Scalar, 8, 4> k = kalman_gain(state.P, noise, config);

  KfState<Scalar> out;
  const Box4<Scalar> innovation = m.z - config.H * state.x;
  out.x = state.x + k * innovation;

  // Joseph form: (I - KH) P (I - KH)^T + K R K^T.
  const Matrix8 a = Matrix8::Identity() - k * config.H;
  out.P = a * state.P * a.transpose() + noise * k * k.transpose();
  symmetrize(out.P);

  out.x[2] = std::max(out.x[2], config.min_extent);
  out.x[3] = std::max(out.x[3], config.min_extent);
  return out;
}

template <typename Scalar>
KfStepResult<Scalar> step(const KfState<Scalar>& state,
                          const std::optional<Measurement<Scalar>>& obs,
                          const KfConfig<Scalar>& config) {
  KfStepResult<Scalar> r;
  r.state = predict(state, config);
  if (obs && obs->confidence >= config.eta_c) {
    r.state = update(r.state, *obs, config);
    r.measurement_used = true;
  }
  r.predicted_box = config.H * r.state.x;
  return r;
}

struct KfTraceRow {
  int step = 0;
  Box4<double> prior = Box4<double>::Zero();
  Box4<double> posterior = Box4<double>::Zero();
  double confidence = 0.0;
  bool measurement_used = false;
  double trace_p = 0.0;
};

inline void write_kf_trace_csv(std::ostream& os,
                               const std::vector<KfTraceRow>& rows) {
  os << "step,prior_x,prior_y,prior_w,prior_h,post_x,post_y,post_w,post_h,"
        "confidence,measurement_used,trace_P\n";
  for (const auto& r : rows) {
    os << r.step;
    for (int i = 0; i < 4; ++i) os << ',' << r.prior[i];
    for (int i = 0; i < 4; ++i) os << ',' << r.posterior[i];
    os << ',' << r.confidence << ',' << (r.measurement_used ? 1 : 0) << ','
       << r.trace_p << '\n';
  }
}

}  // namespace occtrack

#endif  // OCCTRACK_ESTIMATOR_HPP_
