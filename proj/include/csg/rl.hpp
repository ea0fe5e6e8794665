// Policy optimization of the reverse chain. Generated structures are scored
// against the student's next interaction through XNOR matching over tested
// concepts and tested concept pairs; a five-level hierarchical reward (or a
// flat sum) feeds a standardized eager policy-gradient ascent that
// reinforces log p(G_0 | G_t) at a sampled subset of timesteps.
#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "csg/dataset.hpp"
#include "csg/denoiser.hpp"
#include "csg/diffusion.hpp"

namespace csg {

enum class RewardMode { Solo, Generic };

/// Rule for questions testing a single concept, where no concept pair
/// exists: mirror the node score (default, keeps the top levels reachable)
/// or pin the edge score to the neutral 0.5.
enum class EmptyEdgeRule { MirrorNodes, Neutral };

struct RewardConfig {
  std::array<double, 5> levels{0.0, 2.0, 12.0, 32.0, 36.0};
  RewardMode mode = RewardMode::Solo;
  EmptyEdgeRule empty_edge = EmptyEdgeRule::MirrorNodes;

  void validate() const {
    for (int i = 1; i < 5; ++i)
      require(levels[static_cast<std::size_t>(i - 1)] < levels[static_cast<std::size_t>(i)],
              "reward levels must be strictly increasing");
  }
};

struct MatchScores {
  double m_v = 0.0;
  double m_e = 0.0;
  bool edge_set_empty = false;
};

/// Fraction of the question's tested concepts whose construction state
/// XNOR-matches the response.
inline double match_nodes(const DiscreteStructure& g0, int question, int response,
                          const QMatrix& qm) {
  const int top = g0.n_states - 1;
  auto tested = qm.tested_concepts(question);
  require(!tested.empty(), "match_nodes: question tests no concepts");
  int agree = 0;
  for (int l : tested) {
    int v = g0.node_states[static_cast<std::size_t>(l)] == top ? 1 : 0;
    agree += (v == response) ? 1 : 0;
  }
  return static_cast<double>(agree) / static_cast<double>(tested.size());
}

/// XNOR match over all unordered pairs of tested concepts; flags the empty
/// relation set (single-concept questions).
inline std::pair<double, bool> match_edges(const DiscreteStructure& g0, int question,
                                           const QMatrix& qm, int response) {
  const int top = g0.n_states - 1;
  auto tested = qm.tested_concepts(question);
  int agree = 0, total = 0;
  for (std::size_t a = 0; a < tested.size(); ++a)
    for (std::size_t b = a + 1; b < tested.size(); ++b) {
      ++total;
      int e = g0.edge(tested[a], tested[b]) == top ? 1 : 0;
      agree += (e == response) ? 1 : 0;
    }
  if (total == 0) return {0.0, true};
  return {static_cast<double>(agree) / total, false};
}

inline MatchScores match_scores(const DiscreteStructure& g0, int question, int response,
                                const QMatrix& qm, EmptyEdgeRule rule) {
  MatchScores s;
  s.m_v = match_nodes(g0, question, response, qm);
  auto [m_e, empty] = match_edges(g0, question, qm, response);
  s.edge_set_empty = empty;
  s.m_e = empty ? (rule == EmptyEdgeRule::MirrorNodes ? s.m_v : 0.5) : m_e;
  return s;
}

/// Hierarchy case for (m_v, m_e), evaluated in listed order so boundary
/// points resolve deterministically; returns 1..5.
inline int reward_solo_case(const MatchScores& s) {
  if (s.m_v == 0.0) return 1;
  if (s.m_v < 0.5) return 2;
  if (s.m_e < 0.5) return 3;
  if (s.m_v < 1.0 && s.m_e < 1.0) return 4;
  return 5;
}

inline double reward_solo(const MatchScores& s, const RewardConfig& cfg) {
  return cfg.levels[static_cast<std::size_t>(reward_solo_case(s) - 1)];
}

/// Flat alternative that ignores the hierarchy: m_v + m_e in [0, 2].
inline double reward_generic(const MatchScores& s) { return s.m_v + s.m_e; }

struct RewardValue {
  double value = 0.0;
  int solo_case = 0;  // 0 when the hierarchy does not apply
};

inline RewardValue score_structure(const DiscreteStructure& g0, int question, int response,
                                   const QMatrix& qm, const RewardConfig& cfg) {
  MatchScores s = match_scores(g0, question, response, qm, cfg.empty_edge);
  RewardValue rv;
  rv.solo_case = reward_solo_case(s);
  rv.value = cfg.mode == RewardMode::Solo ? reward_solo(s, cfg) : reward_generic(s);
  return rv;
}

/// log p_theta(G_0 | G_t): sum of per-node and per-edge log-probabilities of
/// the clean states under one denoise pass, built on the tape.
inline int log_prob_on_tape(ad::Tape& tape, const DenoiseIds& out, const DiscreteStructure& g0) {
  int total = tape.sum(
      tape.log_clamped(tape.pick(out.node_probs, target_entries(g0.node_states)), kProbFloor));
  if (!g0.edge_states_upper.empty()) {
    int edges = tape.sum(tape.log_clamped(
        tape.pick(out.edge_probs, target_entries(g0.edge_states_upper)), kProbFloor));
    total = tape.add(total, edges);
  }
  return total;
}

inline double log_prob_g0_given_gt(const DenoiserParams& params, const DenoiserConfig& ncfg,
                                   const DiscreteStructure& g0, const DiscreteStructure& gt, int t,
                                   int total_steps, const std::vector<InteractionEvent>& prefix) {
  ad::Tape tape(false);
  TapeParams ids = register_params(tape, params);
  int guidance = guidance_on_tape(tape, ids, params, prefix, ncfg.recency);
  DenoiseIds out = denoise_on_tape(tape, ids, params, gt, t, total_steps, guidance);
  return tape.scalar(log_prob_on_tape(tape, out, g0));
}

struct RLConfig {
  int n_trajectories = 16;   // |D| per update
  int n_stored_steps = 4;    // |T_d| per trajectory
  int n_updates = 200;       // N
  double lr = 1e-3;          // eta, ascent step size
  double std_floor = 1e-8;   // epsilon
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const {
    require(n_trajectories >= 2, "rl: need at least 2 trajectories per update");
    require(n_stored_steps >= 1, "rl: n_stored_steps must be >= 1");
    require(n_updates >= 0, "rl: n_updates must be >= 0");
    require(lr >= 0.0, "rl: learning rate must be >= 0");
    require(std_floor > 0.0, "rl: std floor must be > 0");
  }
};

struct EagerBatchItem {
  const Trajectory* trajectory = nullptr;
  double reward = 0.0;
  const std::vector<InteractionEvent>* prefix = nullptr;
};

struct EagerGradResult {
  DenoiserParams grads;
  double mean_reward = 0.0;
  double std_reward = 0.0;
  bool skipped = false;  // true when the reward spread fell below the floor
};

/// Monte Carlo eager estimator over a trajectory batch, with rewards
/// standardized across the batch. Each stored G_t contributes
/// advantage * (T / |T_d|) * grad log p(G_0 | G_t), averaged over the batch,
/// oriented for ascent. A sub-floor reward std zeroes the update.
inline EagerGradResult eager_policy_gradient(const DenoiserParams& params,
                                             const DenoiserConfig& ncfg, int total_steps,
                                             const std::vector<EagerBatchItem>& batch,
                                             double std_floor = 1e-8) {
  require(batch.size() >= 2, "eager_policy_gradient: need at least 2 trajectories");
  EagerGradResult res;
  res.grads = zeros_like(params);

  // Population std: a duplicated batch standardizes identically, and a
  // 2-trajectory batch gets advantages exactly +-1.
  const auto n = static_cast<double>(batch.size());
  for (const auto& item : batch) res.mean_reward += item.reward / n;
  double var = 0.0;
  for (const auto& item : batch) {
    double d = item.reward - res.mean_reward;
    var += d * d;
  }
  res.std_reward = std::sqrt(var / n);
  if (res.std_reward < std_floor) {
    res.skipped = true;
    return res;
  }

  for (const auto& item : batch) {
    const Trajectory& traj = *item.trajectory;
    require(!traj.stored.empty(), "eager_policy_gradient: trajectory has no stored steps");
    const double advantage = (item.reward - res.mean_reward) / res.std_reward;
    const double scale = advantage * static_cast<double>(total_steps) /
                         (static_cast<double>(traj.stored.size()) * n);
    for (const auto& [t, gt] : traj.stored) {
      ad::Tape tape(true);
      TapeParams ids = register_params(tape, params);
      int guidance = guidance_on_tape(tape, ids, params, *item.prefix, ncfg.recency);
      DenoiseIds out = denoise_on_tape(tape, ids, params, gt, t, total_steps, guidance);
      tape.backward(log_prob_on_tape(tape, out, traj.final_structure), scale);
      extract_grads(tape, ids, res.grads);
    }
  }
  return res;
}

/// A fine-tuning context: the prediction point (student, prefix length) and
/// the next interaction that scores the generated structure.
struct RLContext {
  int student = 0;
  int prefix_len = 0;
  int question = 0;
  int response = 0;
};

/// Contexts with a non-empty history whose scored event lies in the train
/// split (all events when labels is null).
inline std::vector<RLContext> build_rl_contexts(const InteractionDataset& ds,
                                                const SplitLabels* labels = nullptr) {
  std::vector<RLContext> out;
  for (std::size_t i = 0; i < ds.students.size(); ++i) {
    const auto& events = ds.students[i].events;
    for (std::size_t k = 1; k < events.size(); ++k) {  // k=0 has no usable history
      if (labels && labels->label[i][k] != Split::Train) continue;
      out.push_back(RLContext{static_cast<int>(i), events[k].position, events[k].question_id,
                              events[k].response});
    }
  }
  return out;
}

struct RewardLogRow {
  int update;
  double mean_reward, std_reward, frac_r5, grad_norm;
};

struct RewardLog {
  std::vector<RewardLogRow> rows;
  bool aborted = false;

  void write_csv(const std::string& path) const {
    std::ofstream out(path);
    require(out.good(), "cannot write ", path);
    out << "update,mean_reward,std_reward,frac_r5,grad_norm\n";
    out.precision(10);
    for (const auto& r : rows)
      out << r.update << ',' << r.mean_reward << ',' << r.std_reward << ',' << r.frac_r5 << ','
          << r.grad_norm << '\n';
  }
};

struct FinetuneResult {
  DenoiserParams params;
  RewardLog log;
};

using RewardFn = std::function<RewardValue(const DiscreteStructure& g0, const RLContext& ctx)>;

/// Core fine-tuning loop with an injectable reward. Per update: sample
/// contexts with replacement, roll a trajectory per context storing a random
/// timestep subset, score the endpoints, and take one standardized eager
/// ascent step.
inline FinetuneResult finetune_with_reward(DenoiserParams params, const InteractionDataset& ds,
                                           const std::vector<RLContext>& contexts,
                                           const DiffusionConfig& dcfg, const DenoiserConfig& ncfg,
                                           const RLConfig& rlcfg, const RewardFn& reward_fn) {
  rlcfg.validate();
  dcfg.validate();
  require(!contexts.empty(), "finetune: no usable contexts");
  const int T = dcfg.n_steps;
  const int L = params.n_concepts;
  NoiseSchedule sched = make_schedule(dcfg);

  FinetuneResult res;
  Rng rng(mix_seed(rlcfg.seed, 0xF17E));

  struct Rollout {
    Trajectory traj;
    std::vector<InteractionEvent> prefix;
    RewardValue reward;
  };

  for (int update = 1; update <= rlcfg.n_updates; ++update) {
    // Deterministic per-trajectory seeds; sampling may fan out over threads.
    std::vector<RLContext> picked(static_cast<std::size_t>(rlcfg.n_trajectories));
    std::vector<std::uint64_t> seeds(picked.size());
    for (std::size_t d = 0; d < picked.size(); ++d) {
      picked[d] = contexts[static_cast<std::size_t>(rng.below(contexts.size()))];
      seeds[d] = rng.raw();
    }

    std::vector<Rollout> rollouts(picked.size());
    parallel_for(static_cast<int>(picked.size()), rlcfg.threads, [&](int d) {
      const RLContext& ctx = picked[static_cast<std::size_t>(d)];
      Rng traj_rng(seeds[static_cast<std::size_t>(d)]);
      auto store = traj_rng.sample_without_replacement(T, std::min(rlcfg.n_stored_steps, T));
      for (int& t : store) t += 1;  // subset of [1, T]
      auto& slot = rollouts[static_cast<std::size_t>(d)];
      slot.prefix = ds.prefix(ctx.student, ctx.prefix_len);
      Eigen::RowVectorXd guide = guidance_embed(params, slot.prefix, ncfg.recency);
      auto denoiser = [&](const DiscreteStructure& gt, int t) {
        return denoise(params, gt, t, T, guide);
      };
      slot.traj = sample_chain(denoiser, L, dcfg, sched, traj_rng.raw(), store);
      slot.reward = reward_fn(slot.traj.final_structure, ctx);
    });

    std::vector<EagerBatchItem> batch;
    batch.reserve(rollouts.size());
    double frac_r5 = 0.0;
    for (const auto& r : rollouts) {
      batch.push_back(EagerBatchItem{&r.traj, r.reward.value, &r.prefix});
      if (r.reward.solo_case == 5) frac_r5 += 1.0 / static_cast<double>(rollouts.size());
    }

    EagerGradResult g =
        eager_policy_gradient(params, ncfg, T, batch, rlcfg.std_floor);
    double gnorm = 0.0;
    if (!g.skipped) {
      auto grad_refs = collect_params(g.grads);
      gnorm = grad_norm(grad_refs);
      if (!std::isfinite(gnorm)) {
        warn("finetune: non-finite gradient at update " + std::to_string(update) +
             ", aborting with last checkpoint");
        res.log.aborted = true;
        break;
      }
      auto param_refs = collect_params(params);
      for (std::size_t i = 0; i < param_refs.size(); ++i)
        *param_refs[i].mat += rlcfg.lr * *grad_refs[i].mat;  // ascent
    }
    res.log.rows.push_back(
        RewardLogRow{update, g.mean_reward, g.std_reward, frac_r5, gnorm});
  }

  res.params = std::move(params);
  return res;
}

/// Standard fine-tuning: rewards from matching generated structures against
/// the next real interaction under the configured mode.
inline FinetuneResult finetune(DenoiserParams params, const InteractionDataset& ds,
                               const std::vector<RLContext>& contexts, const DiffusionConfig& dcfg,
                               const DenoiserConfig& ncfg, const RLConfig& rlcfg,
                               const RewardConfig& rcfg) {
  rcfg.validate();
  RewardFn fn = [&ds, &rcfg](const DiscreteStructure& g0, const RLContext& ctx) {
    return score_structure(g0, ctx.question, ctx.response, ds.qmatrix, rcfg);
  };
  return finetune_with_reward(std::move(params), ds, contexts, dcfg, ncfg, rlcfg, fn);
}

}  // namespace csg
