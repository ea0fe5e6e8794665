// End-to-end orchestration shared by the CLI and the acceptance suite:
// data preparation, the ablation-variant model builds, structure providers,
// and downstream evaluation.
//
// Leak discipline: everything that trains (simulation corpus, fine-tuning
// contexts, head supervision, conditioning histories) sees train-split
// events only; test events appear solely as evaluation targets.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "csg/config.hpp"
#include "csg/dataset.hpp"
#include "csg/denoiser.hpp"
#include "csg/diffusion.hpp"
#include "csg/downstream.hpp"
#include "csg/pretrain.hpp"
#include "csg/rl.hpp"
#include "csg/simulate.hpp"

namespace csg {

/// Copy of ds with events outside `which` removed but student slots kept, so
/// indices stay aligned with the full dataset. Sequences may become empty.
inline InteractionDataset filter_events(const InteractionDataset& ds, const SplitLabels& labels,
                                        Split which) {
  InteractionDataset out = ds;
  for (std::size_t i = 0; i < ds.students.size(); ++i) {
    out.students[i].events.clear();
    for (std::size_t k = 0; k < ds.students[i].events.size(); ++k)
      if (labels.label[i][k] == which) out.students[i].events.push_back(ds.students[i].events[k]);
  }
  return out;
}

struct PipelineData {
  InteractionDataset full;
  SplitLabels labels;
  InteractionDataset train_view;  // index-preserving, train events only
  std::optional<PlantedStructures> planted;
};

inline PipelineData prepare_data(const RunConfig& rc) {
  PipelineData data;
  if (rc.data.source == "synth") {
    auto [ds, planted] = synth_generate(rc.data.synth, rc.seed);
    data.full = std::move(ds);
    data.planted = std::move(planted);
  } else {
    data.full = load_interactions(rc.data.interactions_path);
    attach_qmatrix(data.full, load_qmatrix(rc.data.qmatrix_path, data.full.n_questions));
  }
  data.labels = assign_splits(data.full, rc.data.split.train, rc.data.split.val,
                              rc.data.split.test, mix_seed(rc.seed, 0x59171));
  data.train_view = filter_events(data.full, data.labels, Split::Train);
  return data;
}

/// Rule-based structures as the downstream source: simulate over the train
/// history and discretize, i.e. exactly the records the corpus is made of.
inline StructureProvider simulated_provider(const PipelineData& data, const CorpusOptions& opts) {
  const InteractionDataset* view = &data.train_view;
  CorpusOptions o = opts;
  return [view, o](int student, int prefix_len) {
    Rng rng = corpus_record_rng(o, student, prefix_len);
    CognitiveStructure cs = simulate_structure(view->prefix(student, prefix_len), view->qmatrix);
    return to_marginals(discretize(cs, o.threshold, o.mode, rng));
  };
}

/// Ground-truth oracle: the planted structure as grown at that position.
inline StructureProvider planted_provider(const PlantedStructures& planted) {
  const PlantedStructures* p = &planted;
  return [p](int student, int prefix_len) {
    return to_marginals(p->students[static_cast<std::size_t>(student)].at_position(prefix_len));
  };
}

/// Reverse-chain sampling conditioned on the train history; marginals from
/// the final denoise pass, averaged over n_samples seeded chains.
inline StructureProvider sampling_provider(const DenoiserParams& params, const RunConfig& rc,
                                           const PipelineData& data, const NoiseSchedule& sched) {
  const DenoiserParams* p = &params;
  const InteractionDataset* view = &data.train_view;
  const NoiseSchedule* s = &sched;
  DiffusionConfig dcfg = rc.diffusion;
  DenoiserConfig ncfg = rc.denoiser;
  const int n_samples = rc.n_structure_samples;
  const std::uint64_t seed = rc.seed;
  return [p, view, s, dcfg, ncfg, n_samples, seed](int student, int prefix_len) {
    auto prefix = view->prefix(student, prefix_len);
    Eigen::RowVectorXd guide = guidance_embed(*p, prefix, ncfg.recency);
    const int T = dcfg.n_steps;
    auto denoiser = [&](const DiscreteStructure& gt, int t) {
      return denoise(*p, gt, t, T, guide);
    };
    CognitiveStructure acc(p->n_concepts);
    acc.node_marginals.setZero();
    acc.edge_marginals.setZero();
    for (int k = 0; k < n_samples; ++k) {
      std::uint64_t chain_seed = mix_seed(seed, 0x5A3 + static_cast<std::uint64_t>(k),
                                          mix_seed(static_cast<std::uint64_t>(student), 0x9D,
                                                   static_cast<std::uint64_t>(prefix_len)));
      Trajectory traj = sample_chain(denoiser, p->n_concepts, dcfg, *s, chain_seed);
      CognitiveStructure cs = marginals_from_output(traj.final_marginals, p->n_concepts);
      acc.node_marginals += cs.node_marginals / n_samples;
      acc.edge_marginals += cs.edge_marginals / n_samples;
    }
    for (auto&& t : acc.node_tested) t = true;
    for (auto&& t : acc.edge_tested_upper) t = true;
    return acc;
  };
}

// ---------------------------------------------------------------------------
// Ablation variants: which stages run and which reward is used.
//   1: rule-based structures only            4: RL(solo), no pretraining
//   2: pretraining only                      5: pretraining + RL(generic)
//   3: RL(generic), no pretraining           6: pretraining + RL(solo)  [full]

struct VariantSpec {
  bool pretrain = false;
  bool rl = false;
  RewardMode mode = RewardMode::Solo;
};

inline VariantSpec variant_spec(int id) {
  switch (id) {
    case 1: return {false, false, RewardMode::Solo};
    case 2: return {true, false, RewardMode::Solo};
    case 3: return {false, true, RewardMode::Generic};
    case 4: return {false, true, RewardMode::Solo};
    case 5: return {true, true, RewardMode::Generic};
    case 6: return {true, true, RewardMode::Solo};
    default: fail("variant id must be in 1..6, got ", id);
  }
}

struct VariantArtifacts {
  DenoiserParams params;  // unused for variant 1
  TrainingLog pretrain_log;
  RewardLog reward_log;
};

/// Build the generator for one variant: pretrain on the simulated corpus
/// and/or fine-tune with the requested reward, from the train view only.
inline VariantArtifacts build_variant_model(const RunConfig& rc, const PipelineData& data,
                                            int variant_id) {
  VariantArtifacts art;
  VariantSpec spec = variant_spec(variant_id);
  if (!spec.pretrain && !spec.rl) return art;

  CorpusOptions copts = rc.simulate;
  copts.seed = rc.seed;
  SimulatedCorpus corpus = build_pretrain_corpus(data.train_view, copts);

  if (spec.pretrain) {
    PretrainConfig pcfg = rc.pretrain;
    pcfg.seed = rc.seed;
    PretrainResult pre = pretrain(corpus, data.train_view, rc.diffusion, rc.denoiser, pcfg);
    art.params = std::move(pre.params);
    art.pretrain_log = std::move(pre.log);
  } else {
    art.params = init_params(rc.denoiser, data.full.n_concepts, data.full.n_questions,
                             rc.diffusion.n_states, rc.seed);
  }

  if (spec.rl) {
    RLConfig rlcfg = rc.rl;
    rlcfg.seed = rc.seed;
    rlcfg.threads = rc.resolved_threads();
    RewardConfig rcfg = rc.reward;
    rcfg.mode = spec.mode;
    auto contexts = build_rl_contexts(data.train_view);
    FinetuneResult ft = finetune(std::move(art.params), data.train_view, contexts, rc.diffusion,
                                 rc.denoiser, rlcfg, rcfg);
    art.params = std::move(ft.params);
    art.reward_log = std::move(ft.log);
  }
  return art;
}

struct VariantOutcome {
  EvalReport kt, cd;
  int variant_id = 0;
};

/// Full downstream evaluation of one variant: generate (or reuse cached)
/// structures for every prediction point, then train and score both heads.
inline VariantOutcome evaluate_variant(const RunConfig& rc, const PipelineData& data,
                                       int variant_id, const std::string& cache_dir) {
  VariantSpec spec = variant_spec(variant_id);
  auto train_targets = build_targets(data.full, data.labels, Split::Train);
  auto test_targets = build_targets(data.full, data.labels, Split::Test);
  require(!train_targets.empty() && !test_targets.empty(),
          "variant evaluation needs non-empty train and test targets");

  NoiseSchedule sched = make_schedule(rc.diffusion);
  VariantArtifacts art;
  StructureProvider source;
  std::string source_hash;
  if (variant_id == 1) {
    CorpusOptions copts = rc.simulate;
    copts.seed = rc.seed;
    source = simulated_provider(data, copts);
    source_hash = "simulated";
  } else {
    art = build_variant_model(rc, data, variant_id);
    source = sampling_provider(art.params, rc, data, sched);
    source_hash = params_hash(art.params);
  }

  std::vector<std::pair<int, int>> keys;
  for (const auto* set : {&train_targets, &test_targets})
    for (const auto& t : *set) keys.emplace_back(t.student, t.position);
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

  StructureCache cache(cache_dir, "v" + std::to_string(variant_id) + "_" + source_hash, rc.seed);
  cache.ensure(keys, source, rc.resolved_threads());
  StructureProvider provider = cache.as_provider();

  DownstreamConfig dscfg = rc.downstream;
  dscfg.seed = rc.seed;
  VariantOutcome out;
  out.variant_id = variant_id;
  out.kt = train_kt(data.full, train_targets, test_targets, provider, dscfg).report;
  out.cd = train_cd(data.full, train_targets, test_targets, provider, dscfg).report;
  return out;
}

/// Oracle upper-bound run: heads trained on the planted ground truth.
inline VariantOutcome evaluate_oracle(const RunConfig& rc, const PipelineData& data) {
  require(data.planted.has_value(), "oracle evaluation requires a synthetic dataset");
  auto train_targets = build_targets(data.full, data.labels, Split::Train);
  auto test_targets = build_targets(data.full, data.labels, Split::Test);
  DownstreamConfig dscfg = rc.downstream;
  dscfg.seed = rc.seed;
  StructureProvider provider = planted_provider(*data.planted);
  VariantOutcome out;
  out.kt = train_kt(data.full, train_targets, test_targets, provider, dscfg).report;
  out.cd = train_cd(data.full, train_targets, test_targets, provider, dscfg).report;
  return out;
}

}  // namespace csg
