// Discrete-state diffusion over structure entries: uniform transition
// kernels, the closed-form cumulative kernel, exact Bayes posterior, and
// reverse-chain sampling. All probability math is in doubles; the posterior
// ratios near the fully-noised end are ill-conditioned in single precision.
#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "csg/common.hpp"
#include "csg/structure.hpp"

namespace csg {

enum class ScheduleKind { Cosine, Linear };

struct DiffusionConfig {
  int n_steps = 500;  // T
  int n_states = 2;   // c
  ScheduleKind schedule = ScheduleKind::Cosine;

  void validate() const {
    require(n_steps >= 1, "diffusion: T must be >= 1");
    require(n_states >= 2, "diffusion: c must be >= 2");
  }
};

/// alpha[t-1] and alpha_bar[t-1] hold the step-t retention and its running
/// product, t = 1..T. alpha decays toward 0 so the chain ends near uniform.
struct NoiseSchedule {
  Eigen::VectorXd alpha;      // length T
  Eigen::VectorXd alpha_bar;  // length T

  int n_steps() const { return static_cast<int>(alpha.size()); }
  double alpha_at(int t) const { return alpha[t - 1]; }
  double alpha_bar_at(int t) const { return t == 0 ? 1.0 : alpha_bar[t - 1]; }
};

inline NoiseSchedule make_schedule(const DiffusionConfig& cfg) {
  cfg.validate();
  const int T = cfg.n_steps;
  NoiseSchedule s;
  s.alpha.resize(T);
  s.alpha_bar.resize(T);
  if (cfg.schedule == ScheduleKind::Cosine) {
    const double offset = 0.008;
    auto f = [&](double t) {
      double x = (t / T + offset) / (1.0 + offset) * (M_PI / 2.0);
      double c = std::cos(x);
      return c * c;
    };
    const double norm = f(0.0);
    double prev_bar = 1.0;
    for (int t = 1; t <= T; ++t) {
      double bar = f(static_cast<double>(t)) / norm;
      s.alpha_bar[t - 1] = bar;
      s.alpha[t - 1] = bar / prev_bar;
      prev_bar = bar;
    }
  } else {
    double prev_bar = 1.0;
    for (int t = 1; t <= T; ++t) {
      s.alpha[t - 1] = 1.0 - static_cast<double>(t) / T;
      s.alpha_bar[t - 1] = prev_bar * s.alpha[t - 1];
      prev_bar = s.alpha_bar[t - 1];
    }
  }
  return s;
}

/// Uniform transition kernel: alpha * I + (1 - alpha) * ones/c.
inline Eigen::MatrixXd transition_matrix(double alpha, int c) {
  require(alpha >= 0.0 && alpha <= 1.0, "transition_matrix: alpha must be in [0,1]");
  Eigen::MatrixXd q = Eigen::MatrixXd::Constant(c, c, (1.0 - alpha) / c);
  q.diagonal().array() += alpha;
  return q;
}

/// Product Q_1 ... Q_t. Uniform kernels compose into the same family, so the
/// product collapses to the single kernel with alpha_bar_t.
inline Eigen::MatrixXd cumulative_matrix(const NoiseSchedule& sched, int t, int c) {
  require(t >= 1 && t <= sched.n_steps(), "cumulative_matrix: t out of range");
  return transition_matrix(sched.alpha_bar_at(t), c);
}

struct CategoricalDist {
  Eigen::VectorXd probs;

  void validate() const {
    double s = 0.0;
    for (int i = 0; i < probs.size(); ++i) {
      require(probs[i] >= 0.0, "categorical: negative probability");
      s += probs[i];
    }
    require(std::abs(s - 1.0) <= 1e-9, "categorical: probabilities sum to ", s);
  }

  int sample(double u) const {
    double acc = 0.0;
    for (int i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    return static_cast<int>(probs.size()) - 1;
  }
};

/// Exact Bayes posterior q(x_{t-1} | x_t, x_0) for the uniform kernel chain:
/// proportional to Q_t[x, x_t] * Qbar_{t-1}[x_0, x]. Defined for t >= 2; the
/// t = 1 step has no intermediate state and is handled by reverse_step.
inline CategoricalDist posterior(int x_t, int x_0, int t, const NoiseSchedule& sched, int c) {
  require(t >= 2 && t <= sched.n_steps(), "posterior: t must be in [2, T]");
  const Eigen::MatrixXd q_t = transition_matrix(sched.alpha_at(t), c);
  const Eigen::MatrixXd q_bar_prev = transition_matrix(sched.alpha_bar_at(t - 1), c);
  Eigen::VectorXd p(c);
  for (int x = 0; x < c; ++x) p[x] = q_t(x, x_t) * q_bar_prev(x_0, x);
  double z = p.sum();
  require(z > 0.0, "posterior: zero normalizer at t=", t);
  return CategoricalDist{p / z};
}

// Per-entry uniforms for one corruption/denoise step, addressable by node or
// unordered pair. Sampling through an explicit draw table keeps permutation
// couplings exact in tests.
struct EntryUniforms {
  Eigen::VectorXd node_u;  // L
  Eigen::VectorXd edge_u;  // n_upper_pairs(L), canonical order

  static EntryUniforms draw(int L, Rng& rng) {
    EntryUniforms u;
    u.node_u.resize(L);
    for (int l = 0; l < L; ++l) u.node_u[l] = rng.u01();
    u.edge_u.resize(n_upper_pairs(L));
    for (int p = 0; p < u.edge_u.size(); ++p) u.edge_u[p] = rng.u01();
    return u;
  }
};

/// One-shot corruption q(G_t | G_0): every node and upper-triangle edge moves
/// by the cumulative kernel independently; the upper triangle is mirrored.
inline DiscreteStructure forward_sample_with(const DiscreteStructure& g0, int t,
                                             const NoiseSchedule& sched, const EntryUniforms& u) {
  const int c = g0.n_states;
  const Eigen::MatrixXd q_bar = cumulative_matrix(sched, t, c);
  DiscreteStructure g = g0;
  for (std::size_t l = 0; l < g.node_states.size(); ++l) {
    CategoricalDist row{q_bar.row(g0.node_states[l]).transpose()};
    g.node_states[l] = row.sample(u.node_u[static_cast<int>(l)]);
  }
  for (std::size_t p = 0; p < g.edge_states_upper.size(); ++p) {
    CategoricalDist row{q_bar.row(g0.edge_states_upper[p]).transpose()};
    g.edge_states_upper[p] = row.sample(u.edge_u[static_cast<int>(p)]);
  }
  return g;
}

inline DiscreteStructure forward_sample(const DiscreteStructure& g0, int t,
                                        const NoiseSchedule& sched, Rng& rng) {
  return forward_sample_with(g0, t, sched, EntryUniforms::draw(g0.n_concepts, rng));
}

/// Per-entry clean-state predictions from the denoiser, rows sum to 1.
struct DenoiserOutput {
  Eigen::MatrixXd node_probs;  // L x c
  Eigen::MatrixXd edge_probs;  // n_upper_pairs(L) x c
};

namespace detail {

/// Mixture over predicted clean states: sum_x0 p_hat(x0) q(x_{t-1}|x_t,x0).
inline Eigen::VectorXd reverse_entry_dist(int x_t, const Eigen::VectorXd& p0_hat, int t,
                                          const NoiseSchedule& sched) {
  const int c = static_cast<int>(p0_hat.size());
  const Eigen::MatrixXd q_t = transition_matrix(sched.alpha_at(t), c);
  const Eigen::MatrixXd q_bar_prev = transition_matrix(sched.alpha_bar_at(t - 1), c);
  const Eigen::MatrixXd q_bar = cumulative_matrix(sched, t, c);
  Eigen::VectorXd mix = Eigen::VectorXd::Zero(c);
  for (int x0 = 0; x0 < c; ++x0) {
    if (p0_hat[x0] <= 0.0) continue;
    double z = q_bar(x0, x_t);
    require(z > 0.0, "reverse step: zero posterior normalizer");
    for (int x = 0; x < c; ++x) mix[x] += p0_hat[x0] * q_t(x, x_t) * q_bar_prev(x0, x) / z;
  }
  double s = mix.sum();
  require(s > 0.0, "reverse step: degenerate mixture");
  return mix / s;
}

}  // namespace detail

/// One reverse transition G_t -> G_{t-1}. For t >= 2 each entry samples from
/// the posterior mixture; at t = 1 the clean state is drawn directly from
/// the predicted distribution. Edges are sampled on the upper triangle.
inline DiscreteStructure reverse_step_with(const DiscreteStructure& gt, int t,
                                           const DenoiserOutput& probs, const NoiseSchedule& sched,
                                           const EntryUniforms& u) {
  require(t >= 1 && t <= sched.n_steps(), "reverse_step: t out of range");
  DiscreteStructure g = gt;
  for (std::size_t l = 0; l < g.node_states.size(); ++l) {
    Eigen::VectorXd p0 = probs.node_probs.row(static_cast<int>(l)).transpose();
    Eigen::VectorXd dist =
        t == 1 ? p0 : detail::reverse_entry_dist(gt.node_states[l], p0, t, sched);
    g.node_states[l] = CategoricalDist{dist}.sample(u.node_u[static_cast<int>(l)]);
  }
  for (std::size_t p = 0; p < g.edge_states_upper.size(); ++p) {
    Eigen::VectorXd p0 = probs.edge_probs.row(static_cast<int>(p)).transpose();
    Eigen::VectorXd dist =
        t == 1 ? p0 : detail::reverse_entry_dist(gt.edge_states_upper[p], p0, t, sched);
    g.edge_states_upper[p] = CategoricalDist{dist}.sample(u.edge_u[static_cast<int>(p)]);
  }
  return g;
}

inline DiscreteStructure reverse_step(const DiscreteStructure& gt, int t,
                                      const DenoiserOutput& probs, const NoiseSchedule& sched,
                                      Rng& rng) {
  return reverse_step_with(gt, t, probs, sched, EntryUniforms::draw(gt.n_concepts, rng));
}

/// A stored reverse path: the clean endpoint, the noisy states retained for
/// reinforcement, and the seed that reproduces the run.
struct Trajectory {
  DiscreteStructure final_structure;          // G_0
  std::map<int, DiscreteStructure> stored;    // t -> G_t (state fed to step t)
  std::uint64_t seed = 0;
  /// Clean-state marginals emitted by the last denoise call (t = 1); the
  /// low-variance features consumed downstream.
  DenoiserOutput final_marginals;
};

/// Reverse-chain sampling. The denoiser is any callable (G_t, t) ->
/// DenoiserOutput; guidance conditioning is closed over by the caller.
/// store_steps lists the timesteps whose pre-step state G_t is retained.
inline Trajectory sample_chain(const std::function<DenoiserOutput(const DiscreteStructure&, int)>& denoiser,
                               int n_concepts, const DiffusionConfig& cfg,
                               const NoiseSchedule& sched, std::uint64_t seed,
                               const std::vector<int>& store_steps = {}) {
  cfg.validate();
  Rng rng(seed);
  const int T = cfg.n_steps;
  std::vector<bool> keep(static_cast<std::size_t>(T) + 1, false);
  for (int t : store_steps) {
    require(t >= 1 && t <= T, "sample_chain: stored timestep out of [1,T]");
    keep[static_cast<std::size_t>(t)] = true;
  }

  // G_T: every entry uniform over the c states.
  DiscreteStructure g(n_concepts, cfg.n_states);
  for (auto& s : g.node_states) s = static_cast<int>(rng.below(cfg.n_states));
  for (auto& s : g.edge_states_upper) s = static_cast<int>(rng.below(cfg.n_states));

  Trajectory traj;
  traj.seed = seed;
  for (int t = T; t >= 1; --t) {
    if (keep[static_cast<std::size_t>(t)]) traj.stored[t] = g;
    DenoiserOutput probs = denoiser(g, t);
    if (t == 1) traj.final_marginals = probs;
    g = reverse_step(g, t, probs, sched, rng);
  }
  traj.final_structure = std::move(g);
  return traj;
}

/// Marginal construction probabilities from the final denoise pass: for each
/// entry, P(state = c-1). Tested masks are all set; the chain scores every
/// entry.
inline CognitiveStructure marginals_from_output(const DenoiserOutput& out, int n_concepts) {
  const int c = static_cast<int>(out.node_probs.cols());
  CognitiveStructure cs(n_concepts);
  for (int l = 0; l < n_concepts; ++l) {
    cs.node_marginals[l] = out.node_probs(l, c - 1);
    cs.node_tested[static_cast<std::size_t>(l)] = true;
  }
  const auto pairs = upper_pairs(n_concepts);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    cs.set_edge(pairs[p].first, pairs[p].second, out.edge_probs(static_cast<int>(p), c - 1));
    cs.edge_tested_upper[p] = true;
  }
  return cs;
}

inline nlohmann::json structure_to_json(const DiscreteStructure& g) {
  nlohmann::json j;
  j["nodes"] = g.node_states;
  j["edges_upper"] = g.edge_states_upper;
  return j;
}

inline DiscreteStructure structure_from_json(const nlohmann::json& j, int n_states = 2) {
  auto nodes = j.at("nodes").get<std::vector<int>>();
  auto edges = j.at("edges_upper").get<std::vector<int>>();
  const int L = static_cast<int>(nodes.size());
  require(static_cast<int>(edges.size()) == n_upper_pairs(L), "structure edge array size mismatch");
  DiscreteStructure g(L, n_states);
  g.node_states = std::move(nodes);
  g.edge_states_upper = std::move(edges);
  return g;
}

inline void write_trajectory(const Trajectory& traj, const std::string& path) {
  nlohmann::json j;
  j["seed"] = traj.seed;
  j["final"] = structure_to_json(traj.final_structure);
  nlohmann::json stored = nlohmann::json::object();
  for (const auto& [t, g] : traj.stored) stored[std::to_string(t)] = structure_to_json(g);
  j["stored"] = std::move(stored);
  std::ofstream out(path);
  require(out.good(), "cannot write ", path);
  out << j.dump(1, '\t') << '\n';
}

}  // namespace csg
