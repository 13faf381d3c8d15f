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

#include "occtrack/cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "occtrack/features.hpp"

#ifndef OCCTRACK_SOURCE_DIR
#define OCCTRACK_SOURCE_DIR "."
#endif

namespace occtrack {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t episode_world_seed(const RunConfig& config, int episode) {
  return config.seed + static_cast<std::uint64_t>(episode);
}

std::shared_ptr<const NoisePredictor> PlannerSet::for_variant(Variant v) const {
  if (v == Variant::kNoPlannerPid) return nullptr;
  if (v == Variant::kPlannerNoBbox && planner_no_bbox) return planner_no_bbox;
  return planner;
}

NoisePredictor train_planner(const PlannerTraining& config, std::uint64_t seed,
                             bool zero_bbox, std::vector<double>* loss_curve) {
  std::stringstream buffer;
  ScenarioParams scenario;
  generate_dataset(config.samples, config.randomized, derive_seed(seed, 1), buffer, scenario);
  std::vector<PlanSample> data = read_dataset(buffer);
  if (zero_bbox) {
    for (auto& s : data) s.bbox.setZero();
  }
  const NoiseSchedule schedule = build_schedule(config.diffusion_steps);
  NoisePredictor net(config.predictor, derive_seed(seed, 2));
  TrainConfig tc = config.train;
  tc.seed = derive_seed(seed, 3);
  TrainResult r = train(net, data, schedule, tc);
  if (loss_curve) *loss_curve = std::move(r.loss_curve);
  return net;
}

namespace {

EpisodeLog run_one(const RunConfig& config, const WorldPreset& preset, Variant variant,
                   const PlannerSet& planners, int episode) {
  const std::uint64_t ws = episode_world_seed(config, episode);
  World world = make_world(preset, ws);
  AgentConfig agent = config.agent;
  agent.variant = variant;
  agent.seed = derive_seed(ws, 9);
  TrackingPolicy policy(initialize_for(world, agent), agent, planners.for_variant(variant),
                        planners.schedule);
  EpisodeConfig ec;
  ec.max_steps = config.max_steps;
  ec.lost_limit = config.lost_limit;
  ec.render = render_config_for(preset);
  EpisodeLog log = run_episode(std::move(world), policy, ec, derive_seed(ws, 5));
  if (!policy.state().errors.empty() && log.error.empty()) {
    log.error = policy.state().errors.front().second;
  }
  return log;
}

}  // namespace

std::vector<EpisodeLog> run_variant(const RunConfig& config, Variant variant,
                                    const PlannerSet& planners) {
  if (config.episodes < 1) throw Error(ErrorCode::kUsage, "episodes must be >= 1");
  if (variant != Variant::kNoPlannerPid && (!planners.planner || !planners.schedule)) {
    throw Error(ErrorCode::kUsage, std::string(to_string(variant)) + " needs a planner");
  }
  const WorldPreset preset = preset_by_name(config.preset);
  std::vector<EpisodeLog> logs(static_cast<std::size_t>(config.episodes));
  const int workers = std::clamp(config.workers, 1, config.episodes);
  if (workers == 1) {
    for (int i = 0; i < config.episodes; ++i) {
      logs[i] = run_one(config, preset, variant, planners, i);
    }
    return logs;
  }
  // Workers claim episode indices; each result lands in its own slot so the
  // output order does not depend on scheduling.
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> failures(workers);
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = next++; i < config.episodes; i = next++) {
          logs[i] = run_one(config, preset, variant, planners, i);
        }
      } catch (...) {
        failures[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  return logs;
}

std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::kIo, "SHA-256 failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  }
  return os.str();
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

std::string git_describe() {
  const std::string cmd =
      std::string("git -C \"") + OCCTRACK_SOURCE_DIR + "\" describe --always --dirty 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return "unknown";
  std::string out;
  std::array<char, 256> buf{};
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe)) out += buf.data();
  const int status = pclose(pipe);
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
  if (status != 0 || out.empty()) return "unknown";
  return out;
}

namespace {

// Seed precedence: --seed, then OAVAT_SEED, then 0.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  const char* env = std::getenv("OAVAT_SEED");
  if (!env || !*env) return 0;
  const std::string text(env);
  std::size_t used = 0;
  std::uint64_t value = 0;
  try {
    if (text.front() == '-') throw std::invalid_argument("negative");
    value = std::stoull(text, &used, 10);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size()) {
    throw Error(ErrorCode::kUsage, "OAVAT_SEED is not an unsigned integer: " + text);
  }
  return value;
}

// Output directory plus the bookkeeping that ends up in manifest.json.
class RunDir {
 public:
  RunDir(std::string command, const std::string& dir, std::uint64_t seed, json config)
      : command_(std::move(command)), dir_(dir), seed_(seed), config_(std::move(config)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir_.string() + ": " + ec.message());
    std::cout << "command: " << command_ << "\n"
              << "seed: " << seed_ << "\n"
              << "run_dir: " << dir_.string() << "\n"
              << "config: " << config_.dump(2) << "\n";
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& bytes) {
    const fs::path p = dir_ / name;
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + p.string());
    out << bytes;
    out.close();
    if (!out) throw Error(ErrorCode::kIo, "write failed for " + p.string());
    record(name);
  }

  // Hashes a file written by someone else.
  void record(const std::string& name) { outputs_[name] = sha256_file(path(name)); }

  void finish(const json& summary) {
    json m;
    m["command"] = command_;
    m["seed"] = seed_;
    m["git_describe"] = git_describe();
    m["config"] = config_;
    m["summary"] = summary;
    m["outputs"] = outputs_;
    std::ofstream out(dir_ / "manifest.json", std::ios::binary);
    if (!out) throw Error(ErrorCode::kIo, "cannot write manifest");
    out << m.dump(2) << "\n";
    std::cout << "summary: " << summary.dump() << "\n";
    for (const auto& [name, hash] : outputs_) std::cout << "sha256 " << hash << "  " << name << "\n";
  }

 private:
  std::string command_;
  fs::path dir_;
  std::uint64_t seed_;
  json config_;
  std::map<std::string, std::string> outputs_;
};

std::string default_dir(const std::string& command, std::uint64_t seed) {
  return "runs/" + command + "-seed" + std::to_string(seed);
}

struct CommonFlags {
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--seed", flags.seed, "Seed (falls back to OAVAT_SEED, then 0)");
  cmd->add_option("--out", flags.out, "Run directory (default runs/<command>-seed<seed>)");
}

std::string out_dir(const CommonFlags& flags, const std::string& command, std::uint64_t seed) {
  return flags.out.empty() ? default_dir(command, seed) : flags.out;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kUsage, what);
}

json predictor_json(const PredictorConfig& p) {
  return {{"horizon", p.horizon}, {"cond_dim", p.cond_dim}, {"embed_dim", p.embed_dim},
          {"hidden", p.hidden},   {"layers", p.layers}};
}

json train_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},       {"batch", t.batch},         {"lr", t.lr},
          {"momentum", t.momentum},   {"clip_norm", t.clip_norm}, {"cosine_decay", t.cosine_decay}};
}

json agent_json(const AgentConfig& a) {
  json j = json::object();
  for (const auto& key : agent_config_keys()) j[key] = get_agent_field(a, key);
  return j;
}

void add_predictor_flags(CLI::App* cmd, PredictorConfig& p) {
  cmd->add_option("--hidden", p.hidden, "Hidden width");
  cmd->add_option("--layers", p.layers, "Hidden layers");
  cmd->add_option("--embed-dim", p.embed_dim, "Step embedding size");
}

void add_train_flags(CLI::App* cmd, TrainConfig& t, const std::string& prefix = "") {
  cmd->add_option("--" + prefix + "epochs", t.epochs, "Training epochs");
  cmd->add_option("--" + prefix + "batch", t.batch, "Batch size");
  cmd->add_option("--" + prefix + "lr", t.lr, "Learning rate");
  cmd->add_option("--" + prefix + "momentum", t.momentum, "SGD momentum");
  cmd->add_option("--" + prefix + "clip-norm", t.clip_norm, "Gradient clip norm (<= 0 off)");
}

void check_training(const PlannerTraining& t) {
  require(t.samples >= 1, "training samples must be >= 1");
  require(t.randomized >= 0.0 && t.randomized <= 1.0, "randomized must lie in [0, 1]");
  require(t.diffusion_steps >= 1, "diffusion steps must be >= 1");
  require(t.train.epochs >= 0 && t.train.batch >= 1, "need epochs >= 0 and batch >= 1");
  require(t.train.lr >= 0.0, "lr must be >= 0");
}

// ---- dataset ---------------------------------------------------------------

struct DatasetArgs {
  CommonFlags common;
  int n = 20000;
  double randomized = 0.6;
  double flip_prob = 0.0;
};

void cmd_dataset(const DatasetArgs& a) {
  require(a.n >= 1, "--n must be >= 1");
  require(a.randomized >= 0.0 && a.randomized <= 1.0, "--randomized must lie in [0, 1]");
  require(a.flip_prob >= 0.0 && a.flip_prob <= 1.0, "--flip-prob must lie in [0, 1]");
  const std::uint64_t seed = resolve_seed(a.common.seed);
  const json config = {{"n", a.n}, {"randomized", a.randomized}, {"flip_prob", a.flip_prob}};
  RunDir run("dataset", out_dir(a.common, "dataset", seed), seed, config);
  PlanParams plan;
  plan.flip_prob = a.flip_prob;
  const DatasetSummary s =
      generate_dataset(a.n, a.randomized, seed, run.path("dataset.jsonl"), {}, plan);
  run.record("dataset.jsonl");
  run.finish({{"samples", s.samples}, {"randomized", s.randomized}, {"rejected", s.rejected}});
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  CommonFlags common;
  std::string dataset;
  PlannerTraining training;
  bool zero_bbox = false;
};

void cmd_train(const TrainArgs& a) {
  check_training(a.training);
  const std::uint64_t seed = resolve_seed(a.common.seed);
  const PlannerTraining& t = a.training;
  json config = {{"dataset", a.dataset.empty() ? json("generated") : json(a.dataset)},
                 {"samples", t.samples},
                 {"randomized", t.randomized},
                 {"diffusion_steps", t.diffusion_steps},
                 {"zero_bbox", a.zero_bbox},
                 {"predictor", predictor_json(t.predictor)},
                 {"train", train_json(t.train)}};
  RunDir run("train", out_dir(a.common, "train", seed), seed, config);

  std::vector<double> curve;
  NoiseSchedule schedule = build_schedule(t.diffusion_steps);
  NoisePredictor net(t.predictor, derive_seed(seed, 2));
  if (a.dataset.empty()) {
    net = train_planner(t, seed, a.zero_bbox, &curve);
  } else {
    std::vector<PlanSample> data = read_dataset(a.dataset);
    if (a.zero_bbox) {
      for (auto& s : data) s.bbox.setZero();
    }
    TrainConfig tc = t.train;
    tc.seed = derive_seed(seed, 3);
    curve = train(net, data, schedule, tc).loss_curve;
  }
  save_checkpoint(net, schedule, run.path("planner.ckpt"));
  run.record("planner.ckpt");
  std::ostringstream loss;
  write_loss_csv(curve, loss);
  run.write("loss.csv", loss.str());
  run.finish({{"initial_loss", curve.empty() ? 0.0 : curve.front()},
              {"final_loss", curve.empty() ? 0.0 : curve.back()},
              {"parameters", net.params().size()}});
}

// ---- verify-theory ---------------------------------------------------------

struct TheoryArgs {
  CommonFlags common;
  int trials = 1000;
  int instances = 5;
  int dim = 64;
  double delta = 0.8;
  double eta = 0.2;
  int views = 8;
  int view_dirs = 2;
  int refs = 10;
  int probes = 256;
};

void cmd_verify_theory(const TheoryArgs& a) {
  require(a.trials >= 1, "--trials must be >= 1");
  require(a.refs >= 1 && a.views >= 0 && a.probes >= 1, "need refs >= 1, views >= 0, probes >= 1");
  const std::uint64_t seed = resolve_seed(a.common.seed);
  const json config = {{"trials", a.trials}, {"instances", a.instances}, {"dim", a.dim},
                       {"delta", a.delta},   {"eta", a.eta},             {"views", a.views},
                       {"view_dirs", a.view_dirs}, {"refs", a.refs},     {"probes", a.probes}};
  RunDir run("verify-theory", out_dir(a.common, "verify-theory", seed), seed, config);

  const double inf = std::numeric_limits<double>::infinity();
  int lemma1 = 0, lemma2 = 0, prop1 = 0, coverage = 0;
  double m1 = inf, m2 = inf, mp = inf, mc = inf;
  int pairs = 0;
  std::ostringstream trials_csv;
  trials_csv << std::setprecision(10)
             << "trial,lemma1,lemma2,prop1,coverage,lemma1_margin,lemma2_margin,prop1_margin,"
                "coverage_margin\n";
  for (int t = 0; t < a.trials; ++t) {
    const std::uint64_t ts = derive_seed(seed, static_cast<std::uint64_t>(t));
    const ManifoldSet set =
        generate_manifold_set(a.instances, a.dim, a.delta, a.eta, a.view_dirs, ts);
    if (t == 0) run.write("manifolds.json", manifold_set_to_json(set) + "\n");
    const TheoryReport r =
        verify_lemmas_and_proposition(set, a.refs, a.views, derive_seed(ts, 1), a.probes);
    lemma1 += r.lemma1_holds;
    lemma2 += r.lemma2_holds;
    prop1 += r.prop1_holds;
    coverage += r.coverage_holds;
    m1 = std::min(m1, r.lemma1_margin);
    m2 = std::min(m2, r.lemma2_margin);
    mp = std::min(mp, r.prop1_margin);
    mc = std::min(mc, r.coverage_margin);
    pairs = r.instance_pairs;
    trials_csv << t << ',' << r.lemma1_holds << ',' << r.lemma2_holds << ',' << r.prop1_holds
               << ',' << r.coverage_holds << ',' << r.lemma1_margin << ',' << r.lemma2_margin
               << ',' << r.prop1_margin << ',' << r.coverage_margin << '\n';
  }
  run.write("trials.csv", trials_csv.str());
  // Infinite margins mean nothing was compared (a single instance).
  const auto margin = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  const double n = a.trials;
  const json report = {{"trials", a.trials},
                       {"instance_pairs", pairs},
                       {"lemma1_pass_rate", lemma1 / n},
                       {"lemma2_pass_rate", lemma2 / n},
                       {"prop1_pass_rate", prop1 / n},
                       {"coverage_pass_rate", coverage / n},
                       {"vacuous", pairs == 0},
                       {"min_lemma1_margin", margin(m1)},
                       {"min_lemma2_margin", margin(m2)},
                       {"min_prop1_margin", margin(mp)},
                       {"min_coverage_margin", margin(mc)}};
  run.write("report.json", report.dump(2) + "\n");
  run.finish(report);
}

// ---- grad-check ------------------------------------------------------------

struct GradArgs {
  CommonFlags common;
  double h = 1e-5;
  int params = 200;
  int diffusion_steps = 50;
  double tolerance = 1e-4;
  PredictorConfig predictor;
};

void cmd_grad_check(const GradArgs& a) {
  require(a.params >= 1, "--params must be >= 1");
  require(a.diffusion_steps >= 1, "--steps must be >= 1");
  const std::uint64_t seed = resolve_seed(a.common.seed);
  const json config = {{"h", a.h},
                       {"params", a.params},
                       {"diffusion_steps", a.diffusion_steps},
                       {"tolerance", a.tolerance},
                       {"predictor", predictor_json(a.predictor)}};
  RunDir run("grad-check", out_dir(a.common, "grad-check", seed), seed, config);
  std::stringstream buffer;
  generate_dataset(1, 0.0, derive_seed(seed, 1), buffer);
  const std::vector<PlanSample> data = read_dataset(buffer);
  const NoisePredictor net(a.predictor, derive_seed(seed, 2));
  const NoiseSchedule schedule = build_schedule(a.diffusion_steps);
  const GradCheckResult r = grad_check(net, data.front(), schedule, a.h, derive_seed(seed, 3),
                                       a.params);
  const json report = {{"max_relative_error", r.max_relative_error},
                       {"checked", r.checked},
                       {"pass", r.max_relative_error < a.tolerance}};
  run.write("gradcheck.json", report.dump(2) + "\n");
  run.finish(report);
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  CommonFlags common;
  RunConfig run;
  std::vector<std::string> variants{"full"};
  std::string agent_config;
  std::map<std::string, std::string> agent_overrides;
  std::string checkpoint;
  std::string checkpoint_no_bbox;
  PlannerTraining training;
  bool episode_logs = true;
};

std::vector<Variant> parse_variants(const std::vector<std::string>& names) {
  std::vector<Variant> out;
  for (const auto& name : names) {
    if (name == "all") {
      for (Variant v : all_variants()) out.push_back(v);
    } else {
      out.push_back(variant_from_string(name));
    }
  }
  require(!out.empty(), "no variant selected");
  return out;
}

void cmd_eval(EvalArgs a) {
  RunConfig& rc = a.run;
  require(rc.episodes >= 1, "--episodes must be >= 1");
  require(rc.max_steps >= 1, "--max-steps must be >= 1");
  require(rc.lost_limit >= 1, "--lost-limit must be >= 1");
  require(rc.workers >= 1, "--workers must be >= 1");
  preset_by_name(rc.preset);
  rc.variants = parse_variants(a.variants);
  rc.seed = resolve_seed(a.common.seed);
  if (!a.agent_config.empty()) rc.agent = load_agent_config(a.agent_config, rc.agent);
  for (const auto& [key, value] : a.agent_overrides) set_agent_field(rc.agent, key, value);
  validate(rc.agent);

  const bool needs_planner = std::any_of(rc.variants.begin(), rc.variants.end(),
                                         [](Variant v) { return v != Variant::kNoPlannerPid; });
  const bool needs_no_bbox = std::find(rc.variants.begin(), rc.variants.end(),
                                       Variant::kPlannerNoBbox) != rc.variants.end();
  if (needs_planner && (a.checkpoint.empty() || (needs_no_bbox && a.checkpoint_no_bbox.empty()))) {
    check_training(a.training);
  }

  json variants = json::array();
  for (Variant v : rc.variants) variants.push_back(to_string(v));
  json config = {{"preset", rc.preset},       {"episodes", rc.episodes},
                 {"max_steps", rc.max_steps}, {"lost_limit", rc.lost_limit},
                 {"variants", variants},      {"workers", rc.workers},
                 {"agent", agent_json(rc.agent)}};
  json planner_cfg = json::object();
  if (needs_planner) {
    planner_cfg["checkpoint"] = a.checkpoint.empty() ? json("trained") : json(a.checkpoint);
    if (needs_no_bbox) {
      planner_cfg["checkpoint_no_bbox"] =
          a.checkpoint_no_bbox.empty() ? json("trained") : json(a.checkpoint_no_bbox);
    }
    planner_cfg["training"] = {{"samples", a.training.samples},
                               {"randomized", a.training.randomized},
                               {"diffusion_steps", a.training.diffusion_steps},
                               {"predictor", predictor_json(a.training.predictor)},
                               {"train", train_json(a.training.train)}};
  }
  config["planner"] = planner_cfg;
  RunDir run("eval", out_dir(a.common, "eval", rc.seed), rc.seed, config);

  PlannerSet planners;
  if (needs_planner) {
    if (!a.checkpoint.empty()) {
      Checkpoint c = load_checkpoint(a.checkpoint);
      planners.planner = std::make_shared<NoisePredictor>(std::move(c.predictor));
      planners.schedule = std::make_shared<NoiseSchedule>(std::move(c.schedule));
    } else {
      std::cout << "training planner on " << a.training.samples << " samples\n";
      planners.planner = std::make_shared<NoisePredictor>(
          train_planner(a.training, rc.seed, false));
      planners.schedule = std::make_shared<NoiseSchedule>(
          build_schedule(a.training.diffusion_steps));
    }
    if (needs_no_bbox) {
      if (!a.checkpoint_no_bbox.empty()) {
        planners.planner_no_bbox =
            std::make_shared<NoisePredictor>(load_checkpoint(a.checkpoint_no_bbox).predictor);
      } else {
        std::cout << "training occupancy-only planner\n";
        planners.planner_no_bbox = std::make_shared<NoisePredictor>(
            train_planner(a.training, rc.seed, true));
      }
    }
  }

  std::vector<MetricsRow> rows;
  json summary = json::object();
  int aborted = 0;
  for (Variant v : rc.variants) {
    const std::vector<EpisodeLog> logs = run_variant(rc, v, planners);
    const Metrics m = compute_metrics(logs, rc.max_steps);
    rows.push_back({rc.preset + "/" + to_string(v), m, rc.seed});
    summary[to_string(v)] = {{"AR", m.ar}, {"EL", m.el}, {"SR", m.sr}};
    std::cout << std::left << std::setw(16) << to_string(v) << " AR " << m.ar << " EL " << m.el
              << " SR " << m.sr << "\n";
    for (std::size_t i = 0; i < logs.size(); ++i) {
      if (logs[i].aborted) {
        ++aborted;
        std::cerr << to_string(v) << " episode " << i << " aborted: " << logs[i].error << "\n";
      }
      if (!a.episode_logs) continue;
      std::ostringstream os;
      write_episode_jsonl(os, logs[i]);
      std::ostringstream name;
      name << "episodes/" << to_string(v) << "/ep" << std::setw(4) << std::setfill('0') << i
           << ".jsonl";
      run.write(name.str(), os.str());
    }
  }
  std::ostringstream csv;
  write_metrics_csv(csv, rows);
  run.write("metrics.csv", csv.str());
  summary["aborted_episodes"] = aborted;
  run.finish(summary);
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"occtrack: occlusion-aware visual active tracking"};
  app.require_subcommand(1);

  DatasetArgs ds;
  auto* dataset = app.add_subcommand("dataset", "Generate the planner dataset (JSONL)");
  add_common(dataset, ds.common);
  dataset->add_option("--n", ds.n, "Number of samples");
  dataset->add_option("--randomized", ds.randomized, "Fraction with randomized sizes");
  dataset->add_option("--flip-prob", ds.flip_prob, "Occupancy bit-flip noise");

  TrainArgs tr;
  auto* trainc = app.add_subcommand("train", "Train the diffusion planner");
  add_common(trainc, tr.common);
  trainc->add_option("--dataset", tr.dataset, "Dataset JSONL (generated when omitted)");
  trainc->add_option("--samples", tr.training.samples, "Samples to generate without --dataset");
  trainc->add_option("--randomized", tr.training.randomized, "Randomized fraction when generating");
  trainc->add_option("--steps", tr.training.diffusion_steps, "Diffusion steps K");
  trainc->add_flag("--zero-bbox", tr.zero_bbox, "Condition on occupancy only");
  add_predictor_flags(trainc, tr.training.predictor);
  add_train_flags(trainc, tr.training.train);

  TheoryArgs th;
  auto* theory = app.add_subcommand("verify-theory", "Check the prototype inequalities");
  add_common(theory, th.common);
  theory->add_option("--trials", th.trials, "Manifold sets to draw");
  theory->add_option("--instances", th.instances, "Instances per set");
  theory->add_option("--dim", th.dim, "Feature dimension");
  theory->add_option("--delta", th.delta, "Cohesion bound");
  theory->add_option("--eta", th.eta, "Separation bound");
  theory->add_option("--views", th.views, "Augmented views per reference");
  theory->add_option("--view-dirs", th.view_dirs, "View directions per manifold");
  theory->add_option("--refs", th.refs, "References per instance");
  theory->add_option("--probes", th.probes, "Probe views for the coverage check");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Run episodes and export metrics");
  add_common(eval, ev.common);
  eval->add_option("--preset", ev.run.preset, "default | occlusion_heavy | distractor4");
  eval->add_option("--episodes", ev.run.episodes, "Episodes per variant");
  eval->add_option("--max-steps", ev.run.max_steps, "Episode horizon");
  eval->add_option("--lost-limit", ev.run.lost_limit, "Hidden steps tolerated");
  eval->add_option("--variant", ev.variants, "Variant name(s) or all")->delimiter(',');
  eval->add_option("--workers", ev.run.workers, "Episode worker threads");
  eval->add_option("--agent-config", ev.agent_config, "key=value agent config file");
  eval->add_option("--checkpoint", ev.checkpoint, "Planner checkpoint (trained when omitted)");
  eval->add_option("--checkpoint-no-bbox", ev.checkpoint_no_bbox,
                   "Occupancy-only planner checkpoint");
  eval->add_option("--train-samples", ev.training.samples, "Samples when training in place");
  eval->add_option("--train-steps", ev.training.diffusion_steps, "Diffusion steps K");
  add_train_flags(eval, ev.training.train, "train-");
  eval->add_flag("!--no-episode-logs", ev.episode_logs, "Skip the per-episode JSONL files");
  for (const auto& key : agent_config_keys()) {
    eval->add_option_function<std::string>(
        "--agent." + key, [&ev, key](const std::string& v) { ev.agent_overrides[key] = v; },
        "Override agent field " + key);
  }

  GradArgs gc;
  auto* grad = app.add_subcommand("grad-check", "Finite-difference check of the planner gradient");
  add_common(grad, gc.common);
  grad->set_help_flag("--help", "Print this help message and exit");
  grad->add_option("--h", gc.h, "Central difference step");
  grad->add_option("--params", gc.params, "Parameters to probe");
  grad->add_option("--steps", gc.diffusion_steps, "Diffusion steps K");
  grad->add_option("--tolerance", gc.tolerance, "Pass threshold on the relative error");
  add_predictor_flags(grad, gc.predictor);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ErrorCode::kUsage);
  }

  try {
    if (*dataset) cmd_dataset(ds);
    if (*trainc) cmd_train(tr);
    if (*theory) cmd_verify_theory(th);
    if (*eval) cmd_eval(ev);
    if (*grad) cmd_grad_check(gc);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: IoError: " << e.what() << "\n";
    return static_cast<int>(ErrorCode::kIo);
  }
  return 0;
}

}  // namespace occtrack
