// Command-line entry point for the cognitive-structure generation pipeline.
//
// Subcommands: synth, simulate, pretrain, finetune, sample, train-kt,
// train-cd, eval, export-dot, variant. Every run writes <out>/run.json with
// the resolved configuration, the seed, and a content hash of file inputs.
// Exit codes: 0 success, 1 runtime failure, 2 configuration/usage error.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "csg/config.hpp"
#include "csg/export_dot.hpp"
#include "csg/pipeline.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> threads;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "Run configuration file (JSON)");
  cmd->add_option("--seed", f.seed, "Override the global seed");
  cmd->add_option("--out", f.out_dir, "Override the output directory");
  cmd->add_option("--threads", f.threads, "Cap worker parallelism");
}

csg::RunConfig resolve_config(const CommonFlags& f) {
  csg::RunConfig rc = f.config_path.empty() ? csg::RunConfig{} : csg::load_config(f.config_path);
  if (f.seed) rc.seed = *f.seed;
  if (f.out_dir) rc.out_dir = *f.out_dir;
  if (f.threads) rc.threads = *f.threads;
  return rc;
}

std::vector<std::string> data_inputs(const csg::RunConfig& rc) {
  std::vector<std::string> inputs;
  if (!rc.data.interactions_path.empty()) inputs.push_back(rc.data.interactions_path);
  if (!rc.data.qmatrix_path.empty()) inputs.push_back(rc.data.qmatrix_path);
  return inputs;
}

void write_report(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  csg::require(out.good(), "cannot write ", path);
  out << j.dump(1, '\t') << '\n';
  std::cout << path << '\n';
}

nlohmann::json outcome_json(const csg::VariantOutcome& o, const csg::RunConfig& rc) {
  return {{"variant", o.variant_id},
          {"kt", o.kt.to_json()},
          {"cd", o.cd.to_json()},
          {"config", csg::config_to_json(rc)}};
}

int cmd_synth(const csg::RunConfig& rc) {
  csg::require(rc.data.source == "synth", "synth: config must use data.source 'synth'");
  auto [ds, planted] = csg::synth_generate(rc.data.synth, rc.seed);
  std::filesystem::create_directories(rc.out_dir);
  csg::write_interactions(ds, rc.out_dir + "/interactions.csv");
  csg::write_qmatrix(ds.qmatrix, rc.out_dir + "/qmatrix.csv");
  csg::write_planted(planted, rc.out_dir + "/planted.json");
  std::cout << "wrote " << ds.n_events() << " events for " << ds.n_students << " students to "
            << rc.out_dir << '\n';
  return 0;
}

int cmd_simulate(const csg::RunConfig& rc) {
  csg::PipelineData data = csg::prepare_data(rc);
  csg::CorpusOptions opts = rc.simulate;
  opts.seed = rc.seed;
  csg::SimulatedCorpus corpus = csg::build_pretrain_corpus(data.train_view, opts);
  std::filesystem::create_directories(rc.out_dir);
  csg::write_corpus(corpus, rc.out_dir + "/corpus.jsonl");
  std::cout << "wrote " << corpus.size() << " simulated structures to " << rc.out_dir
            << "/corpus.jsonl\n";
  return 0;
}

int cmd_pretrain(const csg::RunConfig& rc, int steps_override) {
  csg::PipelineData data = csg::prepare_data(rc);
  csg::CorpusOptions opts = rc.simulate;
  opts.seed = rc.seed;
  csg::SimulatedCorpus corpus = csg::build_pretrain_corpus(data.train_view, opts);
  csg::PretrainConfig pcfg = rc.pretrain;
  pcfg.seed = rc.seed;
  if (steps_override >= 0) pcfg.max_steps = steps_override;
  std::filesystem::create_directories(rc.out_dir);
  pcfg.checkpoint_dir = rc.out_dir;
  csg::PretrainResult res = csg::pretrain(corpus, data.train_view, rc.diffusion, rc.denoiser, pcfg);
  csg::save_checkpoint(res.params, rc.out_dir + "/ckpt_pretrain.json");
  res.log.write_csv(rc.out_dir + "/training_log.csv");
  std::cout << "pretrained on " << corpus.size() << " structures; checkpoint at " << rc.out_dir
            << "/ckpt_pretrain.json\n";
  return res.log.aborted ? 1 : 0;
}

int cmd_finetune(const csg::RunConfig& rc, const std::string& params_path, bool no_pretrain,
                 int steps_override, const std::string& reward_mode) {
  csg::PipelineData data = csg::prepare_data(rc);
  csg::DenoiserParams params;
  if (no_pretrain) {
    params = csg::init_params(rc.denoiser, data.full.n_concepts, data.full.n_questions,
                              rc.diffusion.n_states, rc.seed);
  } else {
    csg::require(!params_path.empty(), "finetune: pass --params <checkpoint> or --no-pretrain");
    params = csg::load_checkpoint(params_path, nullptr, data.full.n_concepts);
  }
  csg::RLConfig rlcfg = rc.rl;
  rlcfg.seed = rc.seed;
  rlcfg.threads = rc.resolved_threads();
  if (steps_override >= 0) rlcfg.n_updates = steps_override;
  csg::RewardConfig rcfg = rc.reward;
  if (reward_mode == "solo") rcfg.mode = csg::RewardMode::Solo;
  else if (reward_mode == "generic") rcfg.mode = csg::RewardMode::Generic;
  else if (!reward_mode.empty()) throw csg::ConfigError("--reward-mode must be solo or generic");

  auto contexts = csg::build_rl_contexts(data.train_view);
  csg::FinetuneResult res = csg::finetune(std::move(params), data.train_view, contexts,
                                          rc.diffusion, rc.denoiser, rlcfg, rcfg);
  std::filesystem::create_directories(rc.out_dir);
  csg::save_checkpoint(res.params, rc.out_dir + "/ckpt_finetune.json");
  res.log.write_csv(rc.out_dir + "/reward_log.csv");
  if (!res.log.rows.empty())
    std::cout << "final mean reward " << res.log.rows.back().mean_reward << " over "
              << res.log.rows.size() << " updates\n";
  return res.log.aborted ? 1 : 0;
}

int cmd_sample(const csg::RunConfig& rc, const std::string& params_path, int student, int prefix,
               const std::string& trajectory_path, bool store_all) {
  csg::PipelineData data = csg::prepare_data(rc);
  csg::DenoiserParams params = csg::load_checkpoint(params_path, nullptr, data.full.n_concepts);
  csg::require(student >= 0 && student < data.full.n_students, "sample: student out of range");
  csg::NoiseSchedule sched = csg::make_schedule(rc.diffusion);

  auto hist = data.train_view.prefix(student, prefix);
  Eigen::RowVectorXd guide = csg::guidance_embed(params, hist, rc.denoiser.recency);
  const int T = rc.diffusion.n_steps;
  auto denoiser = [&](const csg::DiscreteStructure& gt, int t) {
    return csg::denoise(params, gt, t, T, guide);
  };
  std::vector<int> store;
  if (store_all)
    for (int t = 1; t <= T; ++t) store.push_back(t);
  csg::Trajectory traj =
      csg::sample_chain(denoiser, params.n_concepts, rc.diffusion, sched,
                        csg::mix_seed(rc.seed, static_cast<std::uint64_t>(student),
                                      static_cast<std::uint64_t>(prefix)),
                        store);

  std::filesystem::create_directories(rc.out_dir);
  csg::CognitiveStructure cs = csg::marginals_from_output(traj.final_marginals, params.n_concepts);
  write_report(csg::marginals_to_json(cs), rc.out_dir + "/structure_s" + std::to_string(student) +
                                               "_p" + std::to_string(prefix) + ".json");
  if (!trajectory_path.empty()) csg::write_trajectory(traj, trajectory_path);
  return 0;
}

csg::StructureProvider make_provider(const csg::RunConfig& rc, const csg::PipelineData& data,
                                     const std::string& structures, const std::string& params_path,
                                     csg::NoiseSchedule& sched, csg::DenoiserParams& params) {
  if (structures == "simulated") {
    csg::CorpusOptions opts = rc.simulate;
    opts.seed = rc.seed;
    return csg::simulated_provider(data, opts);
  }
  if (structures == "planted") {
    csg::require(data.planted.has_value(), "planted structures require data.source 'synth'");
    return csg::planted_provider(*data.planted);
  }
  if (structures == "sampled") {
    csg::require(!params_path.empty(), "--structures sampled requires --params <checkpoint>");
    params = csg::load_checkpoint(params_path, nullptr, data.full.n_concepts);
    sched = csg::make_schedule(rc.diffusion);
    return csg::sampling_provider(params, rc, data, sched);
  }
  throw csg::ConfigError("--structures must be simulated, sampled, or planted");
}

int cmd_train_head(const csg::RunConfig& rc, const std::string& head, const std::string& structures,
                   const std::string& params_path, int steps_override) {
  csg::PipelineData data = csg::prepare_data(rc);
  csg::NoiseSchedule sched;
  csg::DenoiserParams gen_params;
  csg::StructureProvider source = make_provider(rc, data, structures, params_path, sched, gen_params);

  auto train_targets = csg::build_targets(data.full, data.labels, csg::Split::Train);
  auto test_targets = csg::build_targets(data.full, data.labels, csg::Split::Test);

  std::vector<std::pair<int, int>> keys;
  for (const auto* set : {&train_targets, &test_targets})
    for (const auto& t : *set) keys.emplace_back(t.student, t.position);
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  std::string hash = structures == "sampled" ? csg::params_hash(gen_params) : structures;
  csg::StructureCache cache(rc.out_dir + "/structure_cache", hash, rc.seed);
  cache.ensure(keys, source, rc.resolved_threads());

  csg::DownstreamConfig dscfg = rc.downstream;
  dscfg.seed = rc.seed;
  if (steps_override >= 0) dscfg.steps = steps_override;
  std::filesystem::create_directories(rc.out_dir);
  if (head == "kt") {
    csg::TrainedKT trained =
        csg::train_kt(data.full, train_targets, test_targets, cache.as_provider(), dscfg);
    write_report(csg::head_params_to_json(trained.params, "kt"), rc.out_dir + "/kt_params.json");
    nlohmann::json rep = trained.report.to_json();
    rep["config"] = csg::config_to_json(rc);
    write_report(rep, rc.out_dir + "/kt_report.json");
  } else {
    csg::TrainedCD trained =
        csg::train_cd(data.full, train_targets, test_targets, cache.as_provider(), dscfg);
    write_report(csg::head_params_to_json(trained.params, "cd"), rc.out_dir + "/cd_params.json");
    nlohmann::json rep = trained.report.to_json();
    rep["config"] = csg::config_to_json(rc);
    write_report(rep, rc.out_dir + "/cd_report.json");
  }
  return 0;
}

int cmd_eval(const csg::RunConfig& rc, const std::string& head, const std::string& head_params_path,
             const std::string& structures, const std::string& params_path) {
  csg::PipelineData data = csg::prepare_data(rc);
  csg::NoiseSchedule sched;
  csg::DenoiserParams gen_params;
  csg::StructureProvider source = make_provider(rc, data, structures, params_path, sched, gen_params);
  auto test_targets = csg::build_targets(data.full, data.labels, csg::Split::Test);
  csg::require(!test_targets.empty(), "eval: empty test split");

  std::ifstream in(head_params_path);
  csg::require(in.good(), "cannot open ", head_params_path);
  nlohmann::json j = nlohmann::json::parse(in);

  std::vector<double> preds;
  std::vector<int> labels;
  if (head == "kt") {
    csg::KTParams p = csg::init_kt_params(data.full.n_concepts, data.full.n_questions,
                                          rc.downstream, 0);
    csg::head_params_from_json(j, p, "kt");
    for (const auto& t : test_targets) {
      preds.push_back(csg::kt_predict(source(t.student, t.position), t.question, p));
      labels.push_back(t.response);
    }
  } else {
    csg::CDParams p = csg::init_cd_params(data.full.n_concepts, data.full.n_questions,
                                          rc.downstream, 0);
    csg::head_params_from_json(j, p, "cd");
    for (const auto& t : test_targets) {
      Eigen::RowVectorXd s = csg::pool_cd(source(t.student, t.position), p);
      preds.push_back(csg::cd_predict(s, t.question, p, data.full.qmatrix));
      labels.push_back(t.response);
    }
  }
  csg::EvalReport rep = csg::evaluate(preds, labels);
  nlohmann::json out = rep.to_json();
  out["config"] = csg::config_to_json(rc);
  std::filesystem::create_directories(rc.out_dir);
  write_report(out, rc.out_dir + "/eval_report.json");
  return 0;
}

int cmd_export_dot(const std::string& in_path, const std::string& out_path,
                   const std::string& labels_csv, double threshold) {
  std::ifstream in(in_path);
  csg::require(in.good(), "cannot open ", in_path);
  nlohmann::json j = nlohmann::json::parse(in);
  csg::CognitiveStructure cs = csg::marginals_from_json(j);
  csg::Rng rng(0);
  csg::DiscreteStructure g = csg::discretize(cs, threshold, csg::DiscretizeMode::Deterministic, rng);
  std::vector<std::string> labels;
  if (!labels_csv.empty()) {
    std::string cur;
    for (char ch : labels_csv) {
      if (ch == ',') {
        labels.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    labels.push_back(cur);
  }
  csg::export_dot(g, out_path, labels);
  std::cout << out_path << '\n';
  return 0;
}

int cmd_variant(const csg::RunConfig& rc, int id) {
  csg::PipelineData data = csg::prepare_data(rc);
  csg::VariantOutcome outcome = csg::evaluate_variant(rc, data, id, rc.out_dir + "/structure_cache");
  write_report(outcome_json(outcome, rc), rc.out_dir + "/variant_" + std::to_string(id) +
                                              "_report.json");
  std::cout << "variant " << id << ": KT auc=" << outcome.kt.auc << " acc=" << outcome.kt.acc
            << " rmse=" << outcome.kt.rmse << " | CD auc=" << outcome.cd.auc
            << " acc=" << outcome.cd.acc << " rmse=" << outcome.cd.rmse << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cognitive structure generation pipeline"};
  app.require_subcommand(1);

  CommonFlags flags;
  int steps_override = -1;
  std::string params_path, reward_mode, head_params_path, head_kind;
  std::string structures = "sampled";
  bool no_pretrain = false;
  int student = 0, prefix = 1, variant_id = 6;
  std::string dot_in, dot_out, dot_labels;
  double dot_threshold = 0.5;
  std::string trajectory_path;
  bool store_all = false;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with planted structures");
  add_common(synth, flags);

  auto* simulate = app.add_subcommand("simulate", "Write the rule-based pretraining corpus");
  add_common(simulate, flags);

  auto* pretrain = app.add_subcommand("pretrain", "Pretrain the denoiser on the simulated corpus");
  add_common(pretrain, flags);
  pretrain->add_option("--steps", steps_override, "Override pretrain.max_steps");

  auto* finetune = app.add_subcommand("finetune", "Policy-gradient fine-tuning of the denoiser");
  add_common(finetune, flags);
  finetune->add_option("--params", params_path, "Pretrained checkpoint to start from");
  finetune->add_flag("--no-pretrain", no_pretrain, "Start from freshly initialized parameters");
  finetune->add_option("--steps", steps_override, "Override rl.n_updates");
  finetune->add_option("--reward-mode", reward_mode, "solo|generic");

  auto* sample = app.add_subcommand("sample", "Sample one structure (and optional trajectory)");
  add_common(sample, flags);
  sample->add_option("--params", params_path, "Denoiser checkpoint")->required();
  sample->add_option("--student", student, "Student index");
  sample->add_option("--prefix", prefix, "History prefix length (position bound)");
  sample->add_option("--trajectory", trajectory_path, "Write the trajectory dump here");
  sample->add_flag("--store-all", store_all, "Store every intermediate step in the dump");

  auto* train_kt = app.add_subcommand("train-kt", "Train and evaluate the KT head");
  add_common(train_kt, flags);
  train_kt->add_option("--structures", structures, "simulated|sampled|planted");
  train_kt->add_option("--params", params_path, "Denoiser checkpoint for sampled structures");
  train_kt->add_option("--steps", steps_override, "Override downstream.steps");

  auto* train_cd = app.add_subcommand("train-cd", "Train and evaluate the CD head");
  add_common(train_cd, flags);
  train_cd->add_option("--structures", structures, "simulated|sampled|planted");
  train_cd->add_option("--params", params_path, "Denoiser checkpoint for sampled structures");
  train_cd->add_option("--steps", steps_override, "Override downstream.steps");

  auto* eval = app.add_subcommand("eval", "Evaluate a saved head on the test split");
  add_common(eval, flags);
  eval->add_option("--head", head_kind, "kt|cd")->required();
  eval->add_option("--head-params", head_params_path, "Saved head parameters")->required();
  eval->add_option("--structures", structures, "simulated|sampled|planted");
  eval->add_option("--params", params_path, "Denoiser checkpoint for sampled structures");

  auto* export_dot = app.add_subcommand("export-dot", "Render a structure JSON as DOT");
  export_dot->add_option("--in", dot_in, "Structure JSON (marginals)")->required();
  export_dot->add_option("--dot", dot_out, "Output DOT path")->required();
  export_dot->add_option("--labels", dot_labels, "Comma-separated concept labels");
  export_dot->add_option("--threshold", dot_threshold, "Construction threshold");

  auto* variant = app.add_subcommand("variant", "Run one ablation variant end to end");
  add_common(variant, flags);
  variant->add_option("--id", variant_id, "Variant id: 1..6 (6 = full pipeline)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // usage/config problems exit 2
  }

  try {
    csg::RunConfig rc = resolve_config(flags);
    if (export_dot->parsed()) return cmd_export_dot(dot_in, dot_out, dot_labels, dot_threshold);
    csg::write_run_manifest(rc, app.get_subcommands().front()->get_name(), data_inputs(rc));
    if (synth->parsed()) return cmd_synth(rc);
    if (simulate->parsed()) return cmd_simulate(rc);
    if (pretrain->parsed()) return cmd_pretrain(rc, steps_override);
    if (finetune->parsed())
      return cmd_finetune(rc, params_path, no_pretrain, steps_override, reward_mode);
    if (sample->parsed())
      return cmd_sample(rc, params_path, student, prefix, trajectory_path, store_all);
    if (train_kt->parsed()) return cmd_train_head(rc, "kt", structures, params_path, steps_override);
    if (train_cd->parsed()) return cmd_train_head(rc, "cd", structures, params_path, steps_override);
    if (eval->parsed()) {
      csg::require(head_kind == "kt" || head_kind == "cd", "--head must be kt or cd");
      return cmd_eval(rc, head_kind, head_params_path, structures, params_path);
    }
    if (variant->parsed()) return cmd_variant(rc, variant_id);
    return 2;
  } catch (const csg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
