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

#include "occtrack/planner.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <numeric>
#include <ostream>

namespace occtrack {

namespace {

constexpr char kMagic[8] = {'O', 'A', 'V', 'P', 'L', 'A', 'N', '1'};

Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& z) { return 1.0 / (1.0 + (-z).exp()); }

int uniform_k(Rng& rng, int K) {
  std::uniform_int_distribution<int> d(1, K);
  return d(rng);
}

Eigen::MatrixXd gaussian_matrix(Rng& rng, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = standard_normal(rng);
  }
  return m;
}

void check_k(int k, const NoiseSchedule& s) {
  if (k < 1 || k > s.K) throw Error(ErrorCode::kUsage, "k out of range");
}

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<unsigned char, sizeof(T)> bytes{};
  std::uint64_t bits = 0;
  std::memcpy(&bits, &value, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    throw Error(ErrorCode::kFormat, "truncated checkpoint");
  }
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= std::uint64_t{bytes[i]} << (8 * i);
  T value;
  std::memcpy(&value, &bits, sizeof(T));
  return value;
}

}  // namespace

NoiseSchedule build_schedule(int K, double s) {
  if (K < 1) throw Error(ErrorCode::kUsage, "K must be >= 1");
  const auto f = [&](double t) {
    const double c = std::cos((t + s) / (1.0 + s) * kPi / 2.0);
    return c * c;
  };
  NoiseSchedule sc;
  sc.K = K;
  sc.beta = Eigen::VectorXd::Zero(K + 1);
  sc.alpha_bar = Eigen::VectorXd::Ones(K + 1);
  sc.alpha = Eigen::VectorXd::Ones(K + 1);
  sc.phi = Eigen::VectorXd::Zero(K + 1);
  sc.sigma = Eigen::VectorXd::Zero(K + 1);
  for (int k = 1; k <= K; ++k) {
    const double b = 1.0 - f(static_cast<double>(k) / K) / f(static_cast<double>(k - 1) / K);
    sc.beta[k] = std::clamp(b, 0.0, 0.999);
    sc.alpha_bar[k] = sc.alpha_bar[k - 1] * (1.0 - sc.beta[k]);
    sc.alpha[k] = 1.0 / std::sqrt(1.0 - sc.beta[k]);
    sc.phi[k] = sc.beta[k] / std::sqrt(1.0 - sc.alpha_bar[k]);
    sc.sigma[k] = std::sqrt(sc.beta[k] * (1.0 - sc.alpha_bar[k - 1]) / (1.0 - sc.alpha_bar[k]));
  }
  return sc;
}

NoiseSchedule deterministic(NoiseSchedule schedule) {
  schedule.sigma.setZero();
  return schedule;
}

Eigen::MatrixXd forward_noise(const Eigen::MatrixXd& a0, int k, const Eigen::MatrixXd& eps,
                              const NoiseSchedule& schedule) {
  check_k(k, schedule);
  if (a0.rows() != eps.rows() || a0.cols() != eps.cols()) {
    throw Error(ErrorCode::kUsage, "eps shape mismatch");
  }
  return schedule.signal(k) * a0 + schedule.noise(k) * eps;
}

Eigen::VectorXd Condition::encode() const {
  Eigen::VectorXd v(obs.size() + 4);
  v << obs, bbox;
  return v;
}

Condition condition_of(const PlanSample& sample) { return {sample.obs, sample.bbox}; }

Eigen::VectorXd flatten(const Eigen::MatrixXd& traj) {
  Eigen::VectorXd v(traj.size());
  for (Eigen::Index i = 0; i < traj.rows(); ++i) {
    for (Eigen::Index j = 0; j < traj.cols(); ++j) v[i * traj.cols() + j] = traj(i, j);
  }
  return v;
}

Eigen::MatrixXd unflatten(const Eigen::VectorXd& v, int horizon) {
  Eigen::MatrixXd m(horizon, 2);
  for (int i = 0; i < horizon; ++i) {
    m(i, 0) = v[2 * i];
    m(i, 1) = v[2 * i + 1];
  }
  return m;
}

Eigen::VectorXd step_embedding(int k, int embed_dim) {
  if (embed_dim % 2 != 0) throw Error(ErrorCode::kUsage, "embed_dim must be even");
  const int half = embed_dim / 2;
  Eigen::VectorXd e(embed_dim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(1000.0, -static_cast<double>(i) / half);
    e[2 * i] = std::sin(k * freq);
    e[2 * i + 1] = std::cos(k * freq);
  }
  return e;
}

NoisePredictor::NoisePredictor(const PredictorConfig& config) : config_(config) {
  if (config.horizon < 1 || config.cond_dim < 0 || config.hidden < 1 || config.layers < 0 ||
      config.embed_dim < 0 || config.embed_dim % 2 != 0) {
    throw Error(ErrorCode::kUsage, "bad predictor config");
  }
  Eigen::Index offset = 0;
  int in = input_dim();
  for (int l = 0; l <= config.layers; ++l) {
    const int out = l == config.layers ? output_dim() : config.hidden;
    Layer layer;
    layer.rows = out;
    layer.cols = in;
    layer.weight = offset;
    offset += static_cast<Eigen::Index>(out) * in;
    layer.bias = offset;
    offset += out;
    layers_.push_back(layer);
    in = out;
  }
  params_ = Eigen::VectorXd::Zero(offset);
}

NoisePredictor::NoisePredictor(const PredictorConfig& config, std::uint64_t seed)
    : NoisePredictor(config) {
  Rng rng(seed);
  for (const Layer& l : layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.cols));
    for (Eigen::Index i = l.weight; i < l.bias + l.rows; ++i) params_[i] = uniform(rng, -bound, bound);
  }
}

int NoisePredictor::input_dim() const {
  return 2 * config_.horizon + config_.cond_dim + config_.embed_dim;
}

Eigen::Map<const Eigen::MatrixXd> NoisePredictor::weight(const Layer& l) const {
  return {params_.data() + l.weight, l.rows, l.cols};
}

Eigen::Map<const Eigen::VectorXd> NoisePredictor::bias(const Layer& l) const {
  return {params_.data() + l.bias, l.rows};
}

Eigen::VectorXd NoisePredictor::input(const Eigen::MatrixXd& noisy, const Condition& cond,
                                      int k) const {
  const Eigen::VectorXd c = cond.encode();
  if (noisy.rows() != config_.horizon || noisy.cols() != 2 || c.size() != config_.cond_dim) {
    throw Error(ErrorCode::kUsage, "planner input has the wrong shape");
  }
  Eigen::VectorXd x(input_dim());
  x << flatten(noisy), c, step_embedding(k, config_.embed_dim);
  return x;
}

Eigen::MatrixXd NoisePredictor::forward(const Eigen::MatrixXd& inputs) const {
  Eigen::MatrixXd h = inputs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = weight(layers_[l]) * h;
    z.colwise() += bias(layers_[l]);
    if (l + 1 < layers_.size()) {
      h = (z.array() * sigmoid(z.array())).matrix();
    } else {
      h = std::move(z);
    }
  }
  return h;
}

Eigen::MatrixXd NoisePredictor::predict(const Eigen::MatrixXd& noisy, const Condition& cond,
                                        int k) const {
  return unflatten(forward(input(noisy, cond, k)), config_.horizon);
}

double NoisePredictor::loss_and_grad(const Eigen::MatrixXd& inputs,
                                     const Eigen::MatrixXd& targets,
                                     Eigen::VectorXd& grad) const {
  const auto n = static_cast<double>(inputs.cols());
  // Keep every layer's input and pre-activation for the backward pass.
  std::vector<Eigen::MatrixXd> acts{inputs};
  std::vector<Eigen::MatrixXd> pre;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = weight(layers_[l]) * acts.back();
    z.colwise() += bias(layers_[l]);
    pre.push_back(z);
    if (l + 1 < layers_.size()) {
      acts.push_back((z.array() * sigmoid(z.array())).matrix());
    } else {
      acts.push_back(z);
    }
  }
  const Eigen::MatrixXd diff = acts.back() - targets;
  const double value = diff.squaredNorm() / n;

  grad = Eigen::VectorXd::Zero(params_.size());
  Eigen::MatrixXd delta = diff * (2.0 / n);
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Layer& L = layers_[l];
    Eigen::Map<Eigen::MatrixXd>(grad.data() + L.weight, L.rows, L.cols) =
        delta * acts[l].transpose();
    Eigen::Map<Eigen::VectorXd>(grad.data() + L.bias, L.rows) = delta.rowwise().sum();
    if (l == 0) break;
    // SiLU'(z) = s(z) (1 + z (1 - s(z))).
    const Eigen::ArrayXXd s = sigmoid(pre[l - 1].array());
    const Eigen::ArrayXXd dsilu = s * (1.0 + pre[l - 1].array() * (1.0 - s));
    delta = ((weight(L).transpose() * delta).array() * dsilu).matrix();
  }
  return value;
}

std::vector<NoisedExample> draw_examples(const std::vector<const PlanSample*>& samples,
                                         const NoiseSchedule& schedule, int horizon, Rng& rng) {
  std::vector<NoisedExample> out;
  out.reserve(samples.size());
  for (const PlanSample* s : samples) {
    NoisedExample ex;
    ex.sample = s;
    ex.k = uniform_k(rng, schedule.K);
    ex.eps = gaussian_matrix(rng, horizon, 2);
    out.push_back(std::move(ex));
  }
  return out;
}

double loss(const NoiseModel& model, const std::vector<NoisedExample>& batch,
            const NoiseSchedule& schedule) {
  if (batch.empty()) throw Error(ErrorCode::kUsage, "empty batch");
  double total = 0.0;
  for (const auto& ex : batch) {
    const Eigen::MatrixXd noisy = forward_noise(ex.sample->traj, ex.k, ex.eps, schedule);
    total += (ex.eps - model.predict(noisy, condition_of(*ex.sample), ex.k)).squaredNorm();
  }
  return total / static_cast<double>(batch.size());
}

namespace {

void assemble(const NoisePredictor& p, const std::vector<NoisedExample>& examples,
              const NoiseSchedule& schedule, Eigen::MatrixXd& inputs, Eigen::MatrixXd& targets) {
  const auto n = static_cast<Eigen::Index>(examples.size());
  inputs.resize(p.input_dim(), n);
  targets.resize(p.output_dim(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& ex = examples[static_cast<std::size_t>(i)];
    const Eigen::MatrixXd noisy = forward_noise(ex.sample->traj, ex.k, ex.eps, schedule);
    inputs.col(i) = p.input(noisy, condition_of(*ex.sample), ex.k);
    targets.col(i) = flatten(ex.eps);
  }
}

double batched_loss(const NoisePredictor& p, const std::vector<NoisedExample>& examples,
                    const NoiseSchedule& schedule) {
  Eigen::MatrixXd inputs, targets;
  assemble(p, examples, schedule, inputs, targets);
  return (p.forward(inputs) - targets).squaredNorm() / static_cast<double>(examples.size());
}

}  // namespace

GradCheckResult grad_check(const NoisePredictor& predictor, const PlanSample& sample,
                           const NoiseSchedule& schedule, double h, std::uint64_t seed,
                           int n_params) {
  if (!(h >= 1e-6 && h <= 1e-3)) throw Error(ErrorCode::kUsage, "h must lie in [1e-6, 1e-3]");
  Rng rng(seed);
  const auto examples = draw_examples({&sample}, schedule, predictor.horizon(), rng);
  Eigen::MatrixXd inputs, targets;
  assemble(predictor, examples, schedule, inputs, targets);
  Eigen::VectorXd grad;
  predictor.loss_and_grad(inputs, targets, grad);

  NoisePredictor probe = predictor;
  const auto total = static_cast<int>(probe.params().size());
  std::vector<int> idx(static_cast<std::size_t>(total));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(std::min(n_params, total)));

  GradCheckResult r;
  for (int i : idx) {
    double& w = probe.params()[i];
    const double saved = w;
    w = saved + h;
    const double up = (probe.forward(inputs) - targets).squaredNorm();
    w = saved - h;
    const double down = (probe.forward(inputs) - targets).squaredNorm();
    w = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double analytic = grad[i];
    const double scale = std::max(std::abs(numeric) + std::abs(analytic), 1e-8);
    r.max_relative_error = std::max(r.max_relative_error, std::abs(numeric - analytic) / scale);
    ++r.checked;
  }
  return r;
}

TrainResult train(NoisePredictor& predictor, const std::vector<PlanSample>& dataset,
                  const NoiseSchedule& schedule, const TrainConfig& config) {
  if (dataset.empty()) throw Error(ErrorCode::kUsage, "empty dataset");
  if (config.epochs < 0 || config.batch < 1) throw Error(ErrorCode::kUsage, "bad train config");
  Rng rng(config.seed);
  std::vector<const PlanSample*> all;
  for (const auto& s : dataset) all.push_back(&s);
  Rng eval_rng(derive_seed(config.seed, 1));
  const auto eval_set = draw_examples(all, schedule, predictor.horizon(), eval_rng);

  TrainResult result;
  result.loss_curve.push_back(batched_loss(predictor, eval_set, schedule));
  Eigen::VectorXd velocity = Eigen::VectorXd::Zero(predictor.params().size());
  Eigen::VectorXd grad;
  Eigen::MatrixXd inputs, targets;
  std::vector<std::size_t> order(all.size());
  const auto per_epoch = static_cast<int>((all.size() + static_cast<std::size_t>(config.batch) - 1) /
                                          static_cast<std::size_t>(config.batch));
  const double total_steps = std::max(1, config.epochs * per_epoch);
  int batch_id = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch));
      std::vector<const PlanSample*> members;
      for (std::size_t i = start; i < end; ++i) members.push_back(all[order[i]]);
      const auto batch = draw_examples(members, schedule, predictor.horizon(), rng);
      assemble(predictor, batch, schedule, inputs, targets);
      const double value = predictor.loss_and_grad(inputs, targets, grad);
      if (!std::isfinite(value) || !grad.allFinite()) {
        throw Error(ErrorCode::kNonFiniteLoss, "batch " + std::to_string(batch_id));
      }
      const double norm = grad.norm();
      if (config.clip_norm > 0.0 && norm > config.clip_norm) grad *= config.clip_norm / norm;
      const double lr = config.cosine_decay
                            ? 0.5 * config.lr * (1.0 + std::cos(kPi * batch_id / total_steps))
                            : config.lr;
      velocity = config.momentum * velocity - lr * grad;
      predictor.params() += velocity;
      ++batch_id;
    }
    const double epoch_loss = batched_loss(predictor, eval_set, schedule);
    if (!std::isfinite(epoch_loss)) {
      throw Error(ErrorCode::kNonFiniteLoss, "batch " + std::to_string(batch_id - 1));
    }
    result.loss_curve.push_back(epoch_loss);
  }
  return result;
}

Eigen::MatrixXd sample_plan(const NoiseModel& model, const Condition& cond,
                            const NoiseSchedule& schedule, std::uint64_t seed,
                            Eigen::MatrixXd* raw) {
  Rng rng(seed);
  const int T = model.horizon();
  Eigen::MatrixXd a = gaussian_matrix(rng, T, 2);
  for (int k = schedule.K; k >= 1; --k) {
    const Eigen::MatrixXd eps = model.predict(a, cond, k);
    a = schedule.alpha[k] * (a - schedule.phi[k] * eps);
    if (schedule.sigma[k] > 0.0) a += schedule.sigma[k] * gaussian_matrix(rng, T, 2);
  }
  if (!a.allFinite()) throw Error(ErrorCode::kNonFiniteOutput, "sampled trajectory");
  if (raw) *raw = a;
  return a.cwiseMax(-1.0).cwiseMin(1.0);
}

Eigen::MatrixXd smooth_trajectory(const Eigen::MatrixXd& traj, int degree) {
  const Eigen::Index n = traj.rows();
  if (degree < 1) throw Error(ErrorCode::kUsage, "smoothing degree must be >= 1");
  if (n <= degree) return traj;
  Eigen::MatrixXd basis(n, degree);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(n - 1);
    double p = 1.0;
    for (int d = 0; d < degree; ++d) basis(i, d) = (p *= u);
  }
  return basis * basis.colPivHouseholderQr().solve(traj);
}

std::vector<Action> trajectory_to_actions(const Eigen::MatrixXd& traj,
                                          const PursuitParams& params) {
  if (params.lookahead < 1) throw Error(ErrorCode::kUsage, "lookahead must be >= 1");
  const auto T = static_cast<int>(traj.rows());
  std::vector<Action> actions;
  Pose2 pose;  // plan frame: x forward, y right
  for (int i = 0; i < T; ++i) {
    const int w = std::min(i + params.lookahead, T - 1);
    // Plan-frame (forward, right) maps to world (x, -y) so to_body applies.
    const Eigen::Vector2d target(params.plan_radius * traj(w, 0), -params.plan_radius * traj(w, 1));
    const Eigen::Vector2d rel = to_body(pose, target);
    Action a;
    a.v_f = rel.x() / params.lookahead;
    a.v_l = rel.y() / params.lookahead;
    a.omega_y = rel.squaredNorm() > 0.0 ? params.yaw_gain * std::atan2(rel.y(), rel.x()) : 0.0;
    if (params.look_at) {
      const Eigen::Vector2d look = to_body(pose, {params.look_at->x(), -params.look_at->y()});
      a.omega_y = look.squaredNorm() > 0.0 ? params.yaw_gain * std::atan2(look.y(), look.x()) : 0.0;
    }
    a = clamp_action(a, params.limits);
    actions.push_back(a);
    const Eigen::Vector2d p =
        pose.position() + a.v_f * forward_axis(pose.yaw) + a.v_l * right_axis(pose.yaw);
    pose = {p.x(), p.y(), wrap_angle(pose.yaw - a.omega_y)};
  }
  return actions;
}

void save_checkpoint(const NoisePredictor& predictor, const NoiseSchedule& schedule,
                     std::ostream& out) {
  const auto& c = predictor.config();
  out.write(kMagic, sizeof(kMagic));
  for (const int v : {c.cond_dim, c.embed_dim, c.hidden, c.layers, schedule.K, c.horizon}) {
    put_le<std::int32_t>(out, v);
  }
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(predictor.params().size()));
  for (Eigen::Index i = 0; i < predictor.params().size(); ++i) put_le<double>(out, predictor.params()[i]);
  if (!out) throw Error(ErrorCode::kIo, "checkpoint write failed");
}

void save_checkpoint(const NoisePredictor& predictor, const NoiseSchedule& schedule,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path);
  save_checkpoint(predictor, schedule, out);
}

Checkpoint load_checkpoint(std::istream& in) {
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::kFormat, "not a planner checkpoint");
  }
  PredictorConfig c;
  c.cond_dim = get_le<std::int32_t>(in);
  c.embed_dim = get_le<std::int32_t>(in);
  c.hidden = get_le<std::int32_t>(in);
  c.layers = get_le<std::int32_t>(in);
  const int K = get_le<std::int32_t>(in);
  c.horizon = get_le<std::int32_t>(in);
  const auto count = get_le<std::uint64_t>(in);
  constexpr int kMaxDim = 1 << 16;
  for (const int v : {c.cond_dim, c.embed_dim, c.hidden, c.layers, K, c.horizon}) {
    if (v > kMaxDim) throw Error(ErrorCode::kFormat, "implausible checkpoint dims");
  }
  if (K < 1) throw Error(ErrorCode::kFormat, "bad K");
  try {
    Checkpoint ck{NoisePredictor(c), build_schedule(K)};
    if (count != static_cast<std::uint64_t>(ck.predictor.params().size())) {
      throw Error(ErrorCode::kFormat, "parameter count does not match dims");
    }
    for (Eigen::Index i = 0; i < ck.predictor.params().size(); ++i) {
      ck.predictor.params()[i] = get_le<double>(in);
    }
    return ck;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kUsage) throw Error(ErrorCode::kFormat, e.what());
    throw;
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return load_checkpoint(in);
}

void write_loss_csv(const std::vector<double>& curve, std::ostream& out) {
  out << "epoch,mean_loss\n";
  out.precision(17);
  for (std::size_t e = 0; e < curve.size(); ++e) out << e << ',' << curve[e] << '\n';
}

}  // namespace occtrack
