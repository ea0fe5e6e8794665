// The reverse-denoising network: a small graph-attention stack over node and
// edge state embeddings, conditioned on structural summary features and a
// recency-weighted embedding of the student's interaction prefix. Heads emit
// per-entry categorical distributions over the clean state.
//
// The same graph is built for inference (gradients off) and training
// (gradients on); analytic gradients come from the tape and are checked
// against finite differences in the tests.
#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "csg/autodiff.hpp"
#include "csg/dataset.hpp"
#include "csg/diffusion.hpp"
#include "csg/optimizer.hpp"
#include "csg/structure.hpp"

namespace csg {

using ad::Mat;

struct DenoiserConfig {
  int hidden_dim = 64;    // d_h
  int n_layers = 3;
  int guidance_dim = 16;  // d_g
  double recency = 0.95;  // gamma, prefix recency discount in (0, 1]
  double lambda_ve = 0.5; // edge-loss weight

  void validate() const {
    require(hidden_dim >= 1 && n_layers >= 1 && guidance_dim >= 1, "denoiser: dims must be >= 1");
    require(recency > 0.0 && recency <= 1.0, "denoiser: recency must be in (0,1]");
    require(lambda_ve > 0.0 && lambda_ve <= 1.0, "denoiser: lambda_ve must be in (0,1]");
  }
};

struct DenoiserLayerParams {
  Mat w_q, w_k, w_v;       // d_h x d_h attention maps
  Mat w_ebias;             // d_h x 1 edge-feature attention bias
  Mat w_gproj, b_gproj;    // conditioning projection into the residual path
  Mat w_node1, b_node1;    // d_h x d_h, 1 x d_h node MLP hidden
  Mat w_node2, b_node2;    // d_h x d_h, 1 x d_h node MLP out
  Mat w_edge1, b_edge1;    // 3*d_h x d_h, 1 x d_h edge MLP hidden
  Mat w_edge2, b_edge2;    // d_h x d_h, 1 x d_h edge MLP out
};

struct DenoiserParams {
  // Shape metadata; checkpoints refuse to load into a mismatched setup.
  int n_states = 2;
  int hidden_dim = 0;
  int n_layers = 0;
  int guidance_dim = 0;
  int n_questions = 0;
  int n_concepts = 0;

  Mat node_embed, edge_embed;        // c x d_h input state embeddings
  std::vector<DenoiserLayerParams> layers;
  Mat node_head_w, node_head_b;      // d_h x c, 1 x c
  Mat edge_head_w, edge_head_b;
  Mat q_embed;                       // M x d_g
  Mat r_embed;                       // 2 x d_g
};

/// Fixed-order visitor over every learnable array. The order defines
/// optimizer-state alignment and the checkpoint layout.
inline std::vector<ParamRef> collect_params(DenoiserParams& p) {
  std::vector<ParamRef> out;
  out.push_back({"node_embed", &p.node_embed, false});
  out.push_back({"edge_embed", &p.edge_embed, false});
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    auto& l = p.layers[i];
    const std::string pre = "layer" + std::to_string(i) + ".";
    out.push_back({pre + "w_q", &l.w_q, true});
    out.push_back({pre + "w_k", &l.w_k, true});
    out.push_back({pre + "w_v", &l.w_v, true});
    out.push_back({pre + "w_ebias", &l.w_ebias, true});
    out.push_back({pre + "w_gproj", &l.w_gproj, true});
    out.push_back({pre + "b_gproj", &l.b_gproj, false});
    out.push_back({pre + "w_node1", &l.w_node1, true});
    out.push_back({pre + "b_node1", &l.b_node1, false});
    out.push_back({pre + "w_node2", &l.w_node2, true});
    out.push_back({pre + "b_node2", &l.b_node2, false});
    out.push_back({pre + "w_edge1", &l.w_edge1, true});
    out.push_back({pre + "b_edge1", &l.b_edge1, false});
    out.push_back({pre + "w_edge2", &l.w_edge2, true});
    out.push_back({pre + "b_edge2", &l.b_edge2, false});
  }
  out.push_back({"node_head_w", &p.node_head_w, true});
  out.push_back({"node_head_b", &p.node_head_b, false});
  out.push_back({"edge_head_w", &p.edge_head_w, true});
  out.push_back({"edge_head_b", &p.edge_head_b, false});
  out.push_back({"q_embed", &p.q_embed, false});
  out.push_back({"r_embed", &p.r_embed, false});
  return out;
}

inline std::vector<ParamRef> collect_params(const DenoiserParams& p) {
  return collect_params(const_cast<DenoiserParams&>(p));
}

// Sinusoidal encoding of the diffusion step. The scalar t/T in the summary
// features cannot express how sharply the clean-state posterior changes
// across neighboring steps; the usual multi-frequency encoding can.
constexpr int kTimeEncDim = 16;

inline Eigen::RowVectorXd time_encoding(int t, int total_steps) {
  Eigen::RowVectorXd enc(kTimeEncDim);
  const double pos = total_steps > 0 ? static_cast<double>(t) : 0.0;
  for (int k = 0; k < kTimeEncDim / 2; ++k) {
    double freq = std::pow(10000.0, -2.0 * k / kTimeEncDim);
    enc[2 * k] = std::sin(pos * freq);
    enc[2 * k + 1] = std::cos(pos * freq);
  }
  return enc;
}

/// Xavier-uniform fill: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
inline Mat xavier_matrix(int rows, int cols, Rng& rng) {
  const double a = std::sqrt(6.0 / (rows + cols));
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = (2.0 * rng.u01() - 1.0) * a;
  return m;
}

inline DenoiserParams init_params(const DenoiserConfig& cfg, int n_concepts, int n_questions,
                                  int n_states, std::uint64_t seed) {
  cfg.validate();
  require(n_states >= 2 && n_questions >= 1 && n_concepts >= 1, "init_params: bad dims");
  Rng rng(seed);
  const int d = cfg.hidden_dim;
  const int dg = cfg.guidance_dim;

  DenoiserParams p;
  p.n_states = n_states;
  p.hidden_dim = d;
  p.n_layers = cfg.n_layers;
  p.guidance_dim = dg;
  p.n_questions = n_questions;
  p.n_concepts = n_concepts;

  p.node_embed = xavier_matrix(n_states, d, rng);
  p.edge_embed = xavier_matrix(n_states, d, rng);
  p.layers.resize(static_cast<std::size_t>(cfg.n_layers));
  for (auto& l : p.layers) {
    l.w_q = xavier_matrix(d, d, rng);
    l.w_k = xavier_matrix(d, d, rng);
    l.w_v = xavier_matrix(d, d, rng);
    l.w_ebias = xavier_matrix(d, 1, rng);
    l.w_gproj = xavier_matrix(4 + kTimeEncDim + dg, d, rng);
    l.b_gproj = Mat::Zero(1, d);
    l.w_node1 = xavier_matrix(d, d, rng);
    l.b_node1 = Mat::Zero(1, d);
    l.w_node2 = xavier_matrix(d, d, rng);
    l.b_node2 = Mat::Zero(1, d);
    l.w_edge1 = xavier_matrix(3 * d, d, rng);
    l.b_edge1 = Mat::Zero(1, d);
    l.w_edge2 = xavier_matrix(d, d, rng);
    l.b_edge2 = Mat::Zero(1, d);
  }
  p.node_head_w = xavier_matrix(d, n_states, rng);
  p.node_head_b = Mat::Zero(1, n_states);
  p.edge_head_w = xavier_matrix(d, n_states, rng);
  p.edge_head_b = Mat::Zero(1, n_states);
  p.q_embed = xavier_matrix(n_questions, dg, rng);
  p.r_embed = xavier_matrix(2, dg, rng);
  return p;
}

inline DenoiserParams zeros_like(const DenoiserParams& p) {
  DenoiserParams z = p;
  for (auto& ref : collect_params(z)) ref.mat->setZero();
  return z;
}

/// Structural summary of a noisy structure: fractions of constructed nodes
/// and edges, normalized mean constructed-degree, and diffusion progress.
inline Eigen::Vector4d graph_features(const DiscreteStructure& gt, int t, int total_steps) {
  const int L = gt.n_concepts;
  const int top = gt.n_states - 1;
  double nodes = 0.0;
  for (int s : gt.node_states) nodes += s == top ? 1.0 : 0.0;
  double edges = 0.0;
  Eigen::VectorXd degree = Eigen::VectorXd::Zero(L);
  const auto pairs = upper_pairs(L);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    if (gt.edge_states_upper[p] == top) {
      edges += 1.0;
      degree[pairs[p].first] += 1.0;
      degree[pairs[p].second] += 1.0;
    }
  }
  Eigen::Vector4d f;
  f[0] = nodes / L;
  f[1] = pairs.empty() ? 0.0 : edges / static_cast<double>(pairs.size());
  f[2] = L > 1 ? degree.mean() / (L - 1) : 0.0;
  f[3] = total_steps > 0 ? static_cast<double>(t) / total_steps : 0.0;
  return f;
}

/// Normalized recency weights for a prefix of length n: gamma^(n-1-k).
inline Eigen::VectorXd recency_weights(int n, double gamma) {
  Eigen::VectorXd w(n);
  for (int k = 0; k < n; ++k) w[k] = std::pow(gamma, n - 1 - k);
  return w / w.sum();
}

// Tape-side handles for every parameter array, registered by reference.
struct TapeParams {
  int node_embed, edge_embed;
  struct Layer {
    int w_q, w_k, w_v, w_ebias, w_gproj, b_gproj, w_node1, b_node1, w_node2, b_node2, w_edge1,
        b_edge1, w_edge2, b_edge2;
  };
  std::vector<Layer> layers;
  int node_head_w, node_head_b, edge_head_w, edge_head_b;
  int q_embed, r_embed;
};

inline TapeParams register_params(ad::Tape& tape, const DenoiserParams& p) {
  TapeParams t;
  t.node_embed = tape.leaf_ref(&p.node_embed);
  t.edge_embed = tape.leaf_ref(&p.edge_embed);
  for (const auto& l : p.layers) {
    TapeParams::Layer tl;
    tl.w_q = tape.leaf_ref(&l.w_q);
    tl.w_k = tape.leaf_ref(&l.w_k);
    tl.w_v = tape.leaf_ref(&l.w_v);
    tl.w_ebias = tape.leaf_ref(&l.w_ebias);
    tl.w_gproj = tape.leaf_ref(&l.w_gproj);
    tl.b_gproj = tape.leaf_ref(&l.b_gproj);
    tl.w_node1 = tape.leaf_ref(&l.w_node1);
    tl.b_node1 = tape.leaf_ref(&l.b_node1);
    tl.w_node2 = tape.leaf_ref(&l.w_node2);
    tl.b_node2 = tape.leaf_ref(&l.b_node2);
    tl.w_edge1 = tape.leaf_ref(&l.w_edge1);
    tl.b_edge1 = tape.leaf_ref(&l.b_edge1);
    tl.w_edge2 = tape.leaf_ref(&l.w_edge2);
    tl.b_edge2 = tape.leaf_ref(&l.b_edge2);
    t.layers.push_back(tl);
  }
  t.node_head_w = tape.leaf_ref(&p.node_head_w);
  t.node_head_b = tape.leaf_ref(&p.node_head_b);
  t.edge_head_w = tape.leaf_ref(&p.edge_head_w);
  t.edge_head_b = tape.leaf_ref(&p.edge_head_b);
  t.q_embed = tape.leaf_ref(&p.q_embed);
  t.r_embed = tape.leaf_ref(&p.r_embed);
  return t;
}

/// Adjoints of all registered arrays, in visitor order. Call after backward.
inline void extract_grads(const ad::Tape& tape, const TapeParams& ids, DenoiserParams& grads) {
  auto refs = collect_params(grads);
  std::vector<int> order = {ids.node_embed, ids.edge_embed};
  for (const auto& l : ids.layers) {
    order.insert(order.end(), {l.w_q, l.w_k, l.w_v, l.w_ebias, l.w_gproj, l.b_gproj, l.w_node1,
                               l.b_node1, l.w_node2, l.b_node2, l.w_edge1, l.b_edge1, l.w_edge2,
                               l.b_edge2});
  }
  order.insert(order.end(),
               {ids.node_head_w, ids.node_head_b, ids.edge_head_w, ids.edge_head_b, ids.q_embed,
                ids.r_embed});
  require(order.size() == refs.size(), "extract_grads: arity mismatch");
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const Mat& adj = tape.adjoint(order[i]);
    if (adj.size() > 0) *refs[i].mat += adj;
  }
}

/// Recency-weighted mean of learned (question, response) embeddings, built
/// on the tape so gradients reach the tables. Empty prefix: zero vector.
inline int guidance_on_tape(ad::Tape& tape, const TapeParams& ids, const DenoiserParams& p,
                            const std::vector<InteractionEvent>& prefix, double gamma) {
  if (prefix.empty()) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true))
      warn("guidance_embed: empty prefix, using zero guidance (reported once)");
    return tape.constant(Mat::Zero(1, p.guidance_dim));
  }
  std::vector<int> qids, rids;
  qids.reserve(prefix.size());
  rids.reserve(prefix.size());
  for (const auto& e : prefix) {
    require(e.question_id >= 0 && e.question_id < p.n_questions,
            "guidance_embed: question id out of range");
    qids.push_back(e.question_id);
    rids.push_back(e.response);
  }
  int qrows = tape.rows(ids.q_embed, qids);
  int rrows = tape.rows(ids.r_embed, rids);
  return tape.weighted_rowsum(tape.add(qrows, rrows),
                              recency_weights(static_cast<int>(prefix.size()), gamma));
}

/// Plain-value guidance vector (1 x d_g) for inference-time callers.
inline Eigen::RowVectorXd guidance_embed(const DenoiserParams& p,
                                         const std::vector<InteractionEvent>& prefix,
                                         double gamma) {
  ad::Tape tape(false);
  TapeParams ids = register_params(tape, p);
  return tape.value(guidance_on_tape(tape, ids, p, prefix, gamma)).row(0);
}

struct DenoiseIds {
  int node_probs = -1;
  int edge_probs = -1;
};

/// Build the denoising network on a tape. guidance_id must be a 1 x d_g
/// node. The returned ids hold row-normalized categorical outputs.
inline DenoiseIds denoise_on_tape(ad::Tape& tape, const TapeParams& ids, const DenoiserParams& p,
                                  const DiscreteStructure& gt, int t, int total_steps,
                                  int guidance_id) {
  require(gt.n_states == p.n_states, "denoise: state-space mismatch");
  const int L = gt.n_concepts;
  const auto pairs = upper_pairs(L);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(p.hidden_dim));

  Eigen::RowVectorXd summary(4 + kTimeEncDim);
  summary << graph_features(gt, t, total_steps).transpose(), time_encoding(t, total_steps);
  int cond = tape.concat_cols(tape.constant(summary), guidance_id);  // 1 x (4+enc+d_g)

  int x = tape.rows(ids.node_embed, gt.node_states);        // L x d_h
  int e = tape.rows(ids.edge_embed, gt.edge_states_upper);  // P x d_h

  for (std::size_t li = 0; li < ids.layers.size(); ++li) {
    const auto& lw = ids.layers[li];
    int g = tape.add(tape.matmul(cond, lw.w_gproj), lw.b_gproj);  // 1 x d_h

    // Node attention over all peers, edge features biasing the logits.
    int logits = tape.scale(tape.matmul(tape.matmul(x, lw.w_q), tape.transpose(tape.matmul(x, lw.w_k))),
                            inv_sqrt_d);
    if (!pairs.empty())
      logits = tape.add(logits, tape.scatter_upper_sym(tape.matmul(e, lw.w_ebias), L));
    int att = tape.matmul(tape.softmax_rows(logits), tape.matmul(x, lw.w_v));
    x = tape.add(tape.add(x, att), tape.replicate_row(g, L));
    int node_hidden = tape.tanh_op(tape.add_rowvec(tape.matmul(x, lw.w_node1), lw.b_node1));
    x = tape.add(x, tape.add_rowvec(tape.matmul(node_hidden, lw.w_node2), lw.b_node2));

    // Symmetric edge update from endpoint sums, edge state, and conditioning.
    if (!pairs.empty()) {
      int mix = tape.concat_cols(tape.concat_cols(tape.pair_rowsum(x, pairs), e),
                                 tape.replicate_row(g, static_cast<int>(pairs.size())));
      int hidden = tape.tanh_op(tape.add_rowvec(tape.matmul(mix, lw.w_edge1), lw.b_edge1));
      e = tape.add(e, tape.add_rowvec(tape.matmul(hidden, lw.w_edge2), lw.b_edge2));
    }

    require(tape.value(x).allFinite() && tape.value(e).allFinite(),
            "denoise: non-finite activation in layer ", li);
  }

  DenoiseIds out;
  out.node_probs = tape.softmax_rows(tape.add_rowvec(tape.matmul(x, ids.node_head_w), ids.node_head_b));
  out.edge_probs = tape.softmax_rows(tape.add_rowvec(tape.matmul(e, ids.edge_head_w), ids.edge_head_b));
  return out;
}

/// Inference-time denoise: gradients off, guidance passed by value.
inline DenoiserOutput denoise(const DenoiserParams& p, const DiscreteStructure& gt, int t,
                              int total_steps, const Eigen::RowVectorXd& guidance) {
  ad::Tape tape(false);
  TapeParams ids = register_params(tape, p);
  require(guidance.size() == p.guidance_dim, "denoise: guidance dim mismatch");
  DenoiseIds res = denoise_on_tape(tape, ids, p, gt, t, total_steps, tape.constant(guidance));
  return DenoiserOutput{tape.value(res.node_probs), tape.value(res.edge_probs)};
}

inline std::vector<std::pair<int, int>> target_entries(const std::vector<int>& states) {
  std::vector<std::pair<int, int>> out;
  out.reserve(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) out.emplace_back(static_cast<int>(i), states[i]);
  return out;
}

constexpr double kProbFloor = 1e-12;

/// Cross-entropy against the clean structure: mean node NLL plus lambda_ve
/// times mean edge NLL. Returns the scalar node id on the tape.
inline int loss_on_tape(ad::Tape& tape, const DenoiseIds& out, const DiscreteStructure& g0,
                        double lambda_ve, int* node_loss_id = nullptr,
                        int* edge_loss_id = nullptr) {
  int node_nll = tape.scale(
      tape.sum(tape.log_clamped(tape.pick(out.node_probs, target_entries(g0.node_states)), kProbFloor)),
      -1.0 / static_cast<double>(g0.node_states.size()));
  int total = node_nll;
  int edge_nll = -1;
  if (!g0.edge_states_upper.empty()) {
    edge_nll = tape.scale(
        tape.sum(tape.log_clamped(tape.pick(out.edge_probs, target_entries(g0.edge_states_upper)),
                                  kProbFloor)),
        -1.0 / static_cast<double>(g0.edge_states_upper.size()));
    total = tape.add(node_nll, tape.scale(edge_nll, lambda_ve));
  }
  if (node_loss_id) *node_loss_id = node_nll;
  if (edge_loss_id) *edge_loss_id = edge_nll;
  return total;
}

/// Plain-value loss for a precomputed output (used by tests and logging).
inline double loss(const DenoiserOutput& out, const DiscreteStructure& g0, double lambda_ve) {
  double node_nll = 0.0;
  for (std::size_t i = 0; i < g0.node_states.size(); ++i)
    node_nll -= std::log(std::max(out.node_probs(static_cast<int>(i), g0.node_states[i]), kProbFloor));
  node_nll /= static_cast<double>(g0.node_states.size());
  double edge_nll = 0.0;
  if (!g0.edge_states_upper.empty()) {
    for (std::size_t i = 0; i < g0.edge_states_upper.size(); ++i)
      edge_nll -=
          std::log(std::max(out.edge_probs(static_cast<int>(i), g0.edge_states_upper[i]), kProbFloor));
    edge_nll /= static_cast<double>(g0.edge_states_upper.size());
  }
  return node_nll + lambda_ve * edge_nll;
}

/// One training example: clean structure, its corruption at step t, and the
/// interaction prefix that conditions the denoiser.
struct GradItem {
  const DiscreteStructure* g0 = nullptr;
  const DiscreteStructure* gt = nullptr;
  int t = 1;
  const std::vector<InteractionEvent>* prefix = nullptr;
};

struct GradResult {
  DenoiserParams grads;
  double loss = 0.0;
  double node_loss = 0.0;
  double edge_loss = 0.0;
};

/// Mean-batch analytic gradients. Items are processed in order with a fixed
/// accumulation sequence, so results are reproducible.
inline GradResult grad(const DenoiserParams& p, const DenoiserConfig& cfg, int total_steps,
                       const std::vector<GradItem>& batch) {
  require(!batch.empty(), "grad: empty batch");
  GradResult res;
  res.grads = zeros_like(p);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const auto& item : batch) {
    ad::Tape tape(true);
    TapeParams ids = register_params(tape, p);
    int guidance = guidance_on_tape(tape, ids, p, *item.prefix, cfg.recency);
    DenoiseIds out = denoise_on_tape(tape, ids, p, *item.gt, item.t, total_steps, guidance);
    int node_id = -1, edge_id = -1;
    int total = loss_on_tape(tape, out, *item.g0, cfg.lambda_ve, &node_id, &edge_id);
    res.loss += tape.scalar(total) * inv_n;
    res.node_loss += tape.scalar(node_id) * inv_n;
    if (edge_id >= 0) res.edge_loss += tape.scalar(edge_id) * inv_n;
    tape.backward(total, inv_n);
    extract_grads(tape, ids, res.grads);
  }
  for (auto& ref : collect_params(res.grads))
    require(ref.mat->allFinite(), "grad: non-finite gradient in ", ref.name);
  return res;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O: versioned JSON with config echo and named shaped arrays.

constexpr int kCheckpointVersion = 1;

inline nlohmann::json params_to_json(const DenoiserParams& p) {
  nlohmann::json j;
  j["format_version"] = kCheckpointVersion;
  j["config"] = {{"n_states", p.n_states},       {"hidden_dim", p.hidden_dim},
                 {"n_layers", p.n_layers},       {"guidance_dim", p.guidance_dim},
                 {"n_questions", p.n_questions}, {"n_concepts", p.n_concepts}};
  nlohmann::json arrays = nlohmann::json::object();
  for (const auto& ref : collect_params(p)) {
    nlohmann::json arr;
    arr["shape"] = {ref.mat->rows(), ref.mat->cols()};
    std::vector<double> data(ref.mat->data(), ref.mat->data() + ref.mat->size());
    arr["data"] = std::move(data);
    arrays[ref.name] = std::move(arr);
  }
  j["arrays"] = std::move(arrays);
  return j;
}

inline DenoiserParams params_from_json(const nlohmann::json& j) {
  require(j.contains("format_version"), "checkpoint: missing format_version");
  require(j.at("format_version").get<int>() == kCheckpointVersion,
          "checkpoint: format_version mismatch (got ", j.at("format_version").get<int>(),
          ", expected ", kCheckpointVersion, ")");
  const auto& cfg = j.at("config");
  DenoiserParams p;
  p.n_states = cfg.at("n_states").get<int>();
  p.hidden_dim = cfg.at("hidden_dim").get<int>();
  p.n_layers = cfg.at("n_layers").get<int>();
  p.guidance_dim = cfg.at("guidance_dim").get<int>();
  p.n_questions = cfg.at("n_questions").get<int>();
  p.n_concepts = cfg.at("n_concepts").get<int>();
  p.layers.resize(static_cast<std::size_t>(p.n_layers));

  // Allocate by re-deriving shapes, then overwrite from the file.
  DenoiserConfig dc;
  dc.hidden_dim = p.hidden_dim;
  dc.n_layers = p.n_layers;
  dc.guidance_dim = p.guidance_dim;
  DenoiserParams alloc = init_params(dc, std::max(p.n_concepts, 1), p.n_questions, p.n_states, 0);
  alloc.n_concepts = p.n_concepts;

  const auto& arrays = j.at("arrays");
  for (auto& ref : collect_params(alloc)) {
    require(arrays.contains(ref.name), "checkpoint: missing array ", ref.name);
    const auto& arr = arrays.at(ref.name);
    auto shape = arr.at("shape").get<std::vector<long>>();
    require(shape.size() == 2 && shape[0] == ref.mat->rows() && shape[1] == ref.mat->cols(),
            "checkpoint: shape mismatch for array ", ref.name);
    auto data = arr.at("data").get<std::vector<double>>();
    require(static_cast<long>(data.size()) == ref.mat->size(),
            "checkpoint: data size mismatch for array ", ref.name);
    std::copy(data.begin(), data.end(), ref.mat->data());
  }
  return alloc;
}

inline void save_checkpoint(const DenoiserParams& p, const std::string& path,
                            const OptimizerState* opt = nullptr) {
  nlohmann::json j = params_to_json(p);
  if (opt) {
    nlohmann::json o;
    o["step"] = opt->step;
    auto dump = [](const std::vector<Mat>& ms) {
      nlohmann::json out = nlohmann::json::array();
      for (const auto& m : ms)
        out.push_back(std::vector<double>(m.data(), m.data() + m.size()));
      return out;
    };
    o["m"] = dump(opt->m);
    o["v"] = dump(opt->v);
    j["optimizer"] = std::move(o);
  }
  std::ofstream out(path);
  require(out.good(), "cannot write checkpoint ", path);
  out << j.dump() << '\n';
  require(out.good(), "checkpoint write failed: ", path);
}

inline DenoiserParams load_checkpoint(const std::string& path, OptimizerState* opt = nullptr,
                                      int expected_concepts = 0) {
  std::ifstream in(path);
  require(in.good(), "cannot open checkpoint ", path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const std::exception& ex) {
    fail("checkpoint ", path, " is corrupt or truncated: ", ex.what());
  }
  DenoiserParams p = params_from_json(j);
  if (expected_concepts > 0)
    require(p.n_concepts == expected_concepts, "checkpoint ", path, " was trained for L=",
            p.n_concepts, ", incompatible with L=", expected_concepts);
  if (opt && j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    opt->step = o.at("step").get<long>();
    auto refs = collect_params(p);
    auto load = [&](const nlohmann::json& src, std::vector<Mat>& dst) {
      require(src.size() == refs.size(), "checkpoint: optimizer arity mismatch");
      dst.clear();
      for (std::size_t i = 0; i < refs.size(); ++i) {
        auto data = src[i].get<std::vector<double>>();
        require(static_cast<long>(data.size()) == refs[i].mat->size(),
                "checkpoint: optimizer moment size mismatch at ", refs[i].name);
        Mat m(refs[i].mat->rows(), refs[i].mat->cols());
        std::copy(data.begin(), data.end(), m.data());
        dst.push_back(std::move(m));
      }
    };
    load(o.at("m"), opt->m);
    load(o.at("v"), opt->v);
  }
  return p;
}

inline std::string params_hash(const DenoiserParams& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& ref : collect_params(p))
    h = fnv1a(ref.mat->data(), static_cast<std::size_t>(ref.mat->size()) * sizeof(double), h);
  return hex64(h);
}

}  // namespace csg
