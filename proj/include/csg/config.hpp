// Run configuration: one structured document covering every stage, parsed
// strictly (unknown keys rejected) and echoed in full into run.json so every
// resolved value is auditable.
#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "csg/dataset.hpp"
#include "csg/denoiser.hpp"
#include "csg/diffusion.hpp"
#include "csg/downstream.hpp"
#include "csg/pretrain.hpp"
#include "csg/rl.hpp"

namespace csg {

/// Configuration problems exit with code 2; runtime failures with 1.
class ConfigError : public CsgError {
 public:
  explicit ConfigError(const std::string& msg) : CsgError(msg) {}
};

struct SplitRatios {
  double train = 0.8, val = 0.1, test = 0.1;
};

struct DataConfig {
  std::string source = "synth";  // "synth" | "files"
  std::string interactions_path;
  std::string qmatrix_path;
  SynthConfig synth;
  SplitRatios split;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  int threads = 0;  // 0 = hardware concurrency
  DataConfig data;
  CorpusOptions simulate;
  DiffusionConfig diffusion;
  DenoiserConfig denoiser;
  PretrainConfig pretrain;
  RLConfig rl;
  RewardConfig reward;
  DownstreamConfig downstream;
  int n_structure_samples = 1;  // marginal averaging per prediction point

  int resolved_threads() const {
    if (threads > 0) return threads;
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
  }
};

namespace cfg_detail {

template <typename... Args>
[[noreturn]] inline void cfail(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  throw ConfigError(os.str());
}

/// Strict object reader: get<T>(key) pulls typed values, and finish()
/// rejects any key that was never consumed.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) cfail("config: ", path_, " must be an object");
  }

  bool has(const std::string& key) {
    return j_.contains(key);
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    seen_.push_back(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const std::exception&) {
      cfail("config: bad value for key '", path_, key, "'");
    }
  }

  const nlohmann::json* object(const std::string& key) {
    if (!j_.contains(key)) return nullptr;
    seen_.push_back(key);
    if (!j_.at(key).is_object()) cfail("config: '", path_, key, "' must be an object");
    return &j_.at(key);
  }

  void finish() {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      bool known = false;
      for (const auto& s : seen_)
        if (s == it.key()) known = true;
      if (!known) cfail("config: unknown key '", path_, it.key(), "'");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

}  // namespace cfg_detail

inline RunConfig config_from_json(const nlohmann::json& j) {
  using cfg_detail::ObjectReader;
  using cfg_detail::cfail;
  RunConfig rc;
  ObjectReader root(j, "");
  root.read("seed", rc.seed);
  root.read("out_dir", rc.out_dir);
  root.read("threads", rc.threads);
  root.read("n_structure_samples", rc.n_structure_samples);

  if (const auto* jd = root.object("data")) {
    ObjectReader d(*jd, "data.");
    d.read("source", rc.data.source);
    d.read("interactions", rc.data.interactions_path);
    d.read("qmatrix", rc.data.qmatrix_path);
    if (const auto* js = d.object("synth")) {
      ObjectReader s(*js, "data.synth.");
      s.read("n_students", rc.data.synth.n_students);
      s.read("n_questions", rc.data.synth.n_questions);
      s.read("n_concepts", rc.data.synth.n_concepts);
      s.read("seq_len", rc.data.synth.seq_len);
      s.read("noise", rc.data.synth.noise);
      s.read("p_node", rc.data.synth.p_node);
      s.read("p_edge", rc.data.synth.p_edge);
      s.read("growth_frac", rc.data.synth.growth_frac);
      s.read("max_concepts_per_q", rc.data.synth.max_concepts_per_q);
      s.finish();
    }
    if (const auto* js = d.object("split")) {
      ObjectReader s(*js, "data.split.");
      s.read("train", rc.data.split.train);
      s.read("val", rc.data.split.val);
      s.read("test", rc.data.split.test);
      s.finish();
    }
    d.finish();
  }

  if (const auto* js = root.object("simulate")) {
    ObjectReader s(*js, "simulate.");
    s.read("stride", rc.simulate.stride);
    s.read("threshold", rc.simulate.threshold);
    std::string mode = rc.simulate.mode == DiscretizeMode::Deterministic ? "deterministic" : "bernoulli";
    s.read("mode", mode);
    if (mode == "deterministic") rc.simulate.mode = DiscretizeMode::Deterministic;
    else if (mode == "bernoulli") rc.simulate.mode = DiscretizeMode::Bernoulli;
    else cfail("config: simulate.mode must be 'deterministic' or 'bernoulli'");
    s.finish();
  }

  if (const auto* js = root.object("diffusion")) {
    ObjectReader s(*js, "diffusion.");
    s.read("steps", rc.diffusion.n_steps);
    s.read("states", rc.diffusion.n_states);
    std::string sched = rc.diffusion.schedule == ScheduleKind::Cosine ? "cosine" : "linear";
    s.read("schedule", sched);
    if (sched == "cosine") rc.diffusion.schedule = ScheduleKind::Cosine;
    else if (sched == "linear") rc.diffusion.schedule = ScheduleKind::Linear;
    else cfail("config: diffusion.schedule must be 'cosine' or 'linear'");
    s.finish();
  }

  if (const auto* js = root.object("denoiser")) {
    ObjectReader s(*js, "denoiser.");
    s.read("hidden_dim", rc.denoiser.hidden_dim);
    s.read("n_layers", rc.denoiser.n_layers);
    s.read("guidance_dim", rc.denoiser.guidance_dim);
    s.read("recency", rc.denoiser.recency);
    s.read("lambda_ve", rc.denoiser.lambda_ve);
    s.finish();
  }

  if (const auto* js = root.object("pretrain")) {
    ObjectReader s(*js, "pretrain.");
    s.read("batch_size", rc.pretrain.batch_size);
    s.read("max_steps", rc.pretrain.max_steps);
    s.read("lr", rc.pretrain.lr);
    s.read("weight_decay", rc.pretrain.weight_decay);
    s.read("eval_every", rc.pretrain.eval_every);
    s.read("patience", rc.pretrain.patience);
    s.finish();
  }

  if (const auto* js = root.object("rl")) {
    ObjectReader s(*js, "rl.");
    s.read("n_trajectories", rc.rl.n_trajectories);
    s.read("n_stored_steps", rc.rl.n_stored_steps);
    s.read("n_updates", rc.rl.n_updates);
    s.read("lr", rc.rl.lr);
    s.read("std_floor", rc.rl.std_floor);
    s.finish();
  }

  if (const auto* js = root.object("reward")) {
    ObjectReader s(*js, "reward.");
    std::vector<double> levels(rc.reward.levels.begin(), rc.reward.levels.end());
    s.read("levels", levels);
    if (levels.size() != 5) cfail("config: reward.levels must have 5 entries");
    std::copy(levels.begin(), levels.end(), rc.reward.levels.begin());
    std::string mode = rc.reward.mode == RewardMode::Solo ? "solo" : "generic";
    s.read("mode", mode);
    if (mode == "solo") rc.reward.mode = RewardMode::Solo;
    else if (mode == "generic") rc.reward.mode = RewardMode::Generic;
    else cfail("config: reward.mode must be 'solo' or 'generic'");
    std::string rule = rc.reward.empty_edge == EmptyEdgeRule::MirrorNodes ? "mirror" : "neutral";
    s.read("empty_edge", rule);
    if (rule == "mirror") rc.reward.empty_edge = EmptyEdgeRule::MirrorNodes;
    else if (rule == "neutral") rc.reward.empty_edge = EmptyEdgeRule::Neutral;
    else cfail("config: reward.empty_edge must be 'mirror' or 'neutral'");
    s.finish();
  }

  if (const auto* js = root.object("downstream")) {
    ObjectReader s(*js, "downstream.");
    s.read("d_pool", rc.downstream.d_pool);
    s.read("lr", rc.downstream.lr);
    s.read("steps", rc.downstream.steps);
    s.read("batch_size", rc.downstream.batch_size);
    s.read("cd_depth", rc.downstream.cd_depth);
    s.finish();
  }
  root.finish();

  // Cross-field validation; module validate() calls give keyed messages.
  try {
    if (rc.data.source != "synth" && rc.data.source != "files")
      cfail("config: data.source must be 'synth' or 'files'");
    if (rc.data.source == "files" &&
        (rc.data.interactions_path.empty() || rc.data.qmatrix_path.empty()))
      cfail("config: data.source 'files' requires data.interactions and data.qmatrix");
    double rsum = rc.data.split.train + rc.data.split.val + rc.data.split.test;
    if (rc.data.split.train < 0 || rc.data.split.val < 0 || rc.data.split.test < 0 ||
        std::abs(rsum - 1.0) > 1e-9)
      cfail("config: data.split ratios must be nonnegative and sum to 1");
    if (rc.data.source == "synth") rc.data.synth.validate();
    rc.diffusion.validate();
    rc.denoiser.validate();
    rc.pretrain.validate();
    rc.rl.validate();
    rc.reward.validate();
    rc.downstream.validate();
    require(rc.simulate.stride >= 1, "simulate.stride must be >= 1");
    require(rc.simulate.threshold > 0.0 && rc.simulate.threshold < 1.0,
            "simulate.threshold must be in (0,1)");
    require(rc.n_structure_samples >= 1, "n_structure_samples must be >= 1");
  } catch (const ConfigError&) {
    throw;
  } catch (const CsgError& e) {
    throw ConfigError(e.what());
  }
  return rc;
}

inline nlohmann::json config_to_json(const RunConfig& rc) {
  nlohmann::json j;
  j["seed"] = rc.seed;
  j["out_dir"] = rc.out_dir;
  j["threads"] = rc.threads;
  j["n_structure_samples"] = rc.n_structure_samples;
  j["data"] = {
      {"source", rc.data.source},
      {"interactions", rc.data.interactions_path},
      {"qmatrix", rc.data.qmatrix_path},
      {"synth",
       {{"n_students", rc.data.synth.n_students},
        {"n_questions", rc.data.synth.n_questions},
        {"n_concepts", rc.data.synth.n_concepts},
        {"seq_len", rc.data.synth.seq_len},
        {"noise", rc.data.synth.noise},
        {"p_node", rc.data.synth.p_node},
        {"p_edge", rc.data.synth.p_edge},
        {"growth_frac", rc.data.synth.growth_frac},
        {"max_concepts_per_q", rc.data.synth.max_concepts_per_q}}},
      {"split",
       {{"train", rc.data.split.train}, {"val", rc.data.split.val}, {"test", rc.data.split.test}}}};
  j["simulate"] = {{"stride", rc.simulate.stride},
                   {"threshold", rc.simulate.threshold},
                   {"mode", rc.simulate.mode == DiscretizeMode::Deterministic ? "deterministic"
                                                                              : "bernoulli"}};
  j["diffusion"] = {{"steps", rc.diffusion.n_steps},
                    {"states", rc.diffusion.n_states},
                    {"schedule", rc.diffusion.schedule == ScheduleKind::Cosine ? "cosine" : "linear"}};
  j["denoiser"] = {{"hidden_dim", rc.denoiser.hidden_dim},
                   {"n_layers", rc.denoiser.n_layers},
                   {"guidance_dim", rc.denoiser.guidance_dim},
                   {"recency", rc.denoiser.recency},
                   {"lambda_ve", rc.denoiser.lambda_ve}};
  j["pretrain"] = {{"batch_size", rc.pretrain.batch_size}, {"max_steps", rc.pretrain.max_steps},
                   {"lr", rc.pretrain.lr},                 {"weight_decay", rc.pretrain.weight_decay},
                   {"eval_every", rc.pretrain.eval_every}, {"patience", rc.pretrain.patience}};
  j["rl"] = {{"n_trajectories", rc.rl.n_trajectories},
             {"n_stored_steps", rc.rl.n_stored_steps},
             {"n_updates", rc.rl.n_updates},
             {"lr", rc.rl.lr},
             {"std_floor", rc.rl.std_floor}};
  j["reward"] = {{"levels", std::vector<double>(rc.reward.levels.begin(), rc.reward.levels.end())},
                 {"mode", rc.reward.mode == RewardMode::Solo ? "solo" : "generic"},
                 {"empty_edge",
                  rc.reward.empty_edge == EmptyEdgeRule::MirrorNodes ? "mirror" : "neutral"}};
  j["downstream"] = {{"d_pool", rc.downstream.d_pool},
                     {"lr", rc.downstream.lr},
                     {"steps", rc.downstream.steps},
                     {"batch_size", rc.downstream.batch_size},
                     {"cd_depth", rc.downstream.cd_depth}};
  return j;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return config_from_json(j);
}

/// Content hash of input files referenced by the run (empty-safe).
inline std::string input_content_hash(const std::vector<std::string>& paths) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : paths) {
    h = fnv1a(p, h);
    std::ifstream in(p, std::ios::binary);
    if (!in.good()) continue;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
      h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
  }
  return hex64(h);
}

/// Every run writes out_dir/run.json: the fully resolved config, the seed,
/// and a content hash of file inputs, for byte-identical reproduction.
inline void write_run_manifest(const RunConfig& rc, const std::string& command,
                               const std::vector<std::string>& input_files) {
  std::filesystem::create_directories(rc.out_dir);
  nlohmann::json j;
  j["command"] = command;
  j["seed"] = rc.seed;
  j["input_hash"] = input_content_hash(input_files);
  j["config"] = config_to_json(rc);
  std::ofstream out(rc.out_dir + "/run.json");
  require(out.good(), "cannot write run manifest in ", rc.out_dir);
  out << j.dump(1, '\t') << '\n';
}

}  // namespace csg
