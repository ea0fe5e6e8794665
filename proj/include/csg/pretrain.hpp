// Denoiser pretraining on the simulated corpus: per step, draw structures,
// corrupt each at an independent uniform timestep, and descend the
// node+edge cross-entropy. Keeps the best-validation checkpoint.
#pragma once

#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "csg/denoiser.hpp"
#include "csg/diffusion.hpp"
#include "csg/simulate.hpp"

namespace csg {

struct PretrainConfig {
  int batch_size = 64;
  int max_steps = 2000;
  double lr = 1e-3;
  double weight_decay = 0.0;
  int eval_every = 200;
  int patience = 0;  // evals without improvement before stopping; 0 = off
  bool lr_decay = true;  // cosine decay from lr to lr_floor over max_steps
  double lr_floor_frac = 0.05;
  std::uint64_t seed = 0;
  std::string checkpoint_dir;  // when set, writes ckpt_{step}.json at eval points

  void validate() const {
    require(batch_size >= 1, "pretrain: batch_size must be >= 1");
    require(max_steps >= 0, "pretrain: max_steps must be >= 0");
    require(lr > 0.0, "pretrain: learning rate must be > 0");
    require(eval_every >= 1, "pretrain: eval_every must be >= 1");
  }
};

struct TrainingLogRow {
  int step;
  double loss, node_loss, edge_loss, grad_norm;
};

struct TrainingLog {
  std::vector<TrainingLogRow> rows;
  std::vector<std::pair<int, double>> val_history;  // (step, val loss)
  bool aborted = false;

  void write_csv(const std::string& path) const {
    std::ofstream out(path);
    require(out.good(), "cannot write ", path);
    out << "step,loss,node_loss,edge_loss,grad_norm\n";
    out.precision(10);
    for (const auto& r : rows)
      out << r.step << ',' << r.loss << ',' << r.node_loss << ',' << r.edge_loss << ','
          << r.grad_norm << '\n';
  }
};

struct PretrainResult {
  DenoiserParams params;
  TrainingLog log;
};

namespace detail {

/// Deterministic 10% holdout: shuffle indices, first tenth is validation.
inline std::pair<std::vector<int>, std::vector<int>> corpus_split(std::size_t n,
                                                                  std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x5A11));
  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  rng.shuffle(order);
  const auto n_val = static_cast<std::size_t>(n / 10);
  std::vector<int> val(order.begin(), order.begin() + static_cast<long>(n_val));
  std::vector<int> train(order.begin() + static_cast<long>(n_val), order.end());
  return {train, val};
}

inline double eval_corpus_loss(const DenoiserParams& params, const DenoiserConfig& ncfg,
                               const NoiseSchedule& sched, const SimulatedCorpus& corpus,
                               const std::vector<int>& indices,
                               const std::vector<std::vector<InteractionEvent>>& prefixes,
                               std::uint64_t seed) {
  if (indices.empty()) return std::numeric_limits<double>::quiet_NaN();
  Rng rng(seed);
  double total = 0.0;
  const int T = sched.n_steps();
  for (int idx : indices) {
    const auto& rec = corpus.records[static_cast<std::size_t>(idx)];
    int t = rng.int_range(1, T);
    DiscreteStructure gt = forward_sample(rec.structure, t, sched, rng);
    Eigen::RowVectorXd guide =
        guidance_embed(params, prefixes[static_cast<std::size_t>(idx)], ncfg.recency);
    DenoiserOutput out = denoise(params, gt, t, T, guide);
    total += loss(out, rec.structure, ncfg.lambda_ve);
  }
  return total / static_cast<double>(indices.size());
}

}  // namespace detail

/// Train from scratch on a simulated corpus. ds supplies the interaction
/// prefixes referenced by corpus records (and M for the embedding table).
/// Returns the parameters with the best validation loss; when the corpus is
/// too small to hold out a slice, the final parameters are returned.
inline PretrainResult pretrain(const SimulatedCorpus& corpus, const InteractionDataset& ds,
                               const DiffusionConfig& dcfg, const DenoiserConfig& ncfg,
                               const PretrainConfig& pcfg) {
  pcfg.validate();
  dcfg.validate();
  require(!corpus.records.empty(), "pretrain: empty corpus");

  NoiseSchedule sched = make_schedule(dcfg);
  const int T = dcfg.n_steps;

  PretrainResult res;
  res.params =
      init_params(ncfg, corpus.n_concepts, std::max(ds.n_questions, 1), dcfg.n_states, pcfg.seed);

  // Prefix lookups are hot; resolve them once.
  std::vector<std::vector<InteractionEvent>> prefixes(corpus.records.size());
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    const auto& rec = corpus.records[i];
    if (rec.prefix_len > 0 && rec.student_index < static_cast<int>(ds.students.size()))
      prefixes[i] = ds.prefix(rec.student_index, rec.prefix_len);
  }

  // Deterministic 10% validation slice, disjoint from training.
  auto [train_idx, val_idx] = detail::corpus_split(corpus.records.size(), pcfg.seed);

  auto params_refs = collect_params(res.params);
  OptimizerState opt = OptimizerState::init(params_refs);
  AdamWHyper hyper{pcfg.lr, 0.9, 0.999, 1e-8, pcfg.weight_decay};

  DenoiserParams best = res.params;
  double best_val = std::numeric_limits<double>::infinity();
  int evals_since_best = 0;
  bool have_val = !val_idx.empty();

  Rng rng(mix_seed(pcfg.seed, 0x7121));
  std::vector<DiscreteStructure> corrupted(static_cast<std::size_t>(pcfg.batch_size));
  for (int step = 1; step <= pcfg.max_steps; ++step) {
    std::vector<GradItem> batch;
    batch.reserve(static_cast<std::size_t>(pcfg.batch_size));
    for (int b = 0; b < pcfg.batch_size; ++b) {
      int idx = train_idx[static_cast<std::size_t>(rng.below(train_idx.size()))];
      const auto& rec = corpus.records[static_cast<std::size_t>(idx)];
      int t = rng.int_range(1, T);
      corrupted[static_cast<std::size_t>(b)] = forward_sample(rec.structure, t, sched, rng);
      batch.push_back(GradItem{&rec.structure, &corrupted[static_cast<std::size_t>(b)], t,
                               &prefixes[static_cast<std::size_t>(idx)]});
    }
    GradResult g = grad(res.params, ncfg, T, batch);
    if (!std::isfinite(g.loss)) {
      warn("pretrain: non-finite loss at step " + std::to_string(step) +
           ", aborting with last good checkpoint");
      res.log.aborted = true;
      break;
    }
    auto grad_refs = collect_params(g.grads);
    if (pcfg.lr_decay && pcfg.max_steps > 1) {
      double phase = static_cast<double>(step - 1) / (pcfg.max_steps - 1);
      double shape = std::cos(phase * M_PI / 2.0);
      hyper.lr = pcfg.lr * (pcfg.lr_floor_frac + (1.0 - pcfg.lr_floor_frac) * shape * shape);
    }
    adamw_step(params_refs, grad_refs, opt, hyper);
    res.log.rows.push_back(TrainingLogRow{step, g.loss, g.node_loss, g.edge_loss,
                                          grad_norm(grad_refs)});

    if (step % pcfg.eval_every == 0 && !pcfg.checkpoint_dir.empty())
      save_checkpoint(res.params, pcfg.checkpoint_dir + "/ckpt_" + std::to_string(step) + ".json");

    if (have_val && (step % pcfg.eval_every == 0 || step == pcfg.max_steps)) {
      double val = detail::eval_corpus_loss(res.params, ncfg, sched, corpus, val_idx, prefixes,
                                            mix_seed(pcfg.seed, 0xE7A1));
      res.log.val_history.emplace_back(step, val);
      if (val < best_val) {
        best_val = val;
        best = res.params;
        evals_since_best = 0;
      } else if (pcfg.patience > 0 && ++evals_since_best >= pcfg.patience) {
        break;
      }
    }
  }

  if (have_val && best_val < std::numeric_limits<double>::infinity()) res.params = best;
  return res;
}

}  // namespace csg
