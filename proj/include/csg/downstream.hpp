// Downstream student modeling on generated structures. A structure is
// pooled into per-concept (node, incident-edge) evidence; the KT head
// projects it and concatenates a question embedding, the CD head squashes it
// into per-concept proficiency and applies a masked monotone output layer.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "csg/autodiff.hpp"
#include "csg/dataset.hpp"
#include "csg/denoiser.hpp"
#include "csg/optimizer.hpp"
#include "csg/simulate.hpp"
#include "csg/structure.hpp"

namespace csg {

/// Per-concept readout u: for each concept, its node marginal and the mean
/// marginal of its incident edges. Concatenated as [nodes | edge means],
/// giving a 2L vector; permutation of concepts permutes both halves alike.
inline Eigen::VectorXd pool_features(const CognitiveStructure& cs) {
  const int L = cs.n_concepts;
  Eigen::VectorXd u(2 * L);
  for (int l = 0; l < L; ++l) {
    u[l] = cs.node_marginals[l];
    double acc = 0.0;
    for (int j = 0; j < L; ++j)
      if (j != l) acc += cs.edge(l, j);
    u[L + l] = L > 1 ? acc / (L - 1) : 0.0;
  }
  return u;
}

// ---------------------------------------------------------------------------
// Metrics

/// Rank-based AUC (Mann-Whitney) with midranks for ties. Requires both
/// classes to be present.
inline double metric_auc(const std::vector<double>& preds, const std::vector<int>& labels) {
  require(preds.size() == labels.size() && !preds.empty(), "metric_auc: size mismatch");
  const auto n = preds.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return preds[a] < preds[b]; });
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && preds[order[j + 1]] == preds[order[i]]) ++j;
    const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t k = 0; k < n; ++k)
    if (labels[k] == 1) {
      rank_sum_pos += rank[k];
      ++n_pos;
    }
  const std::size_t n_neg = n - n_pos;
  require(n_pos > 0 && n_neg > 0, "metric_auc: labels contain a single class");
  const double u_stat = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
  return u_stat / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

inline double metric_acc(const std::vector<double>& preds, const std::vector<int>& labels,
                         double threshold = 0.5) {
  require(preds.size() == labels.size() && !preds.empty(), "metric_acc: size mismatch");
  std::size_t hit = 0;
  for (std::size_t k = 0; k < preds.size(); ++k)
    if ((preds[k] >= threshold ? 1 : 0) == labels[k]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

inline double metric_rmse(const std::vector<double>& preds, const std::vector<int>& labels) {
  require(preds.size() == labels.size() && !preds.empty(), "metric_rmse: size mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    double d = preds[k] - labels[k];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(preds.size()));
}

struct EvalReport {
  double auc = 0.0, acc = 0.0, rmse = 0.0;
  std::size_t n = 0;

  nlohmann::json to_json() const {
    return {{"auc", auc}, {"acc", acc}, {"rmse", rmse}, {"n", n}};
  }
};

inline EvalReport evaluate(const std::vector<double>& preds, const std::vector<int>& labels) {
  EvalReport r;
  r.auc = metric_auc(preds, labels);
  r.acc = metric_acc(preds, labels);
  r.rmse = metric_rmse(preds, labels);
  r.n = preds.size();
  return r;
}

// ---------------------------------------------------------------------------
// Prediction targets and the structure source

/// One response-prediction instance: the event at `position` of `student`,
/// predicted from the history before it.
struct PredictionTarget {
  int student = 0;
  int position = 0;  // == prefix length of the conditioning history
  int question = 0;
  int response = 0;
};

/// Targets of one split with non-empty histories. Only events of the
/// requested split are ever exposed as supervision.
inline std::vector<PredictionTarget> build_targets(const InteractionDataset& ds,
                                                   const SplitLabels& labels, Split which) {
  std::vector<PredictionTarget> out;
  for (std::size_t i = 0; i < ds.students.size(); ++i) {
    const auto& events = ds.students[i].events;
    for (std::size_t k = 0; k < events.size(); ++k) {
      if (labels.label[i][k] != which) continue;
      if (events[k].position < 1) continue;
      out.push_back(PredictionTarget{static_cast<int>(i), events[k].position,
                                     events[k].question_id, events[k].response});
    }
  }
  return out;
}

/// Source of marginal structures keyed by (student, prefix length).
using StructureProvider = std::function<CognitiveStructure(int student, int prefix_len)>;

// ---------------------------------------------------------------------------
// Knowledge-tracing head

struct DownstreamConfig {
  int d_pool = 16;
  double lr = 0.05;
  int steps = 1500;
  int batch_size = 64;
  int cd_depth = 1;
  std::uint64_t seed = 0;

  void validate() const {
    require(d_pool >= 1, "downstream: d_pool must be >= 1");
    require(lr > 0.0 && steps >= 0 && batch_size >= 1, "downstream: bad training config");
    require(cd_depth >= 1, "downstream: cd_depth must be >= 1");
  }
};

struct KTParams {
  Mat pool_w;   // 2L x d_pool
  Mat q_embed;  // M x d_pool
  Mat out_w;    // 2*d_pool x 1
  Mat out_b;    // 1 x 1
};

inline std::vector<ParamRef> collect_params(KTParams& p) {
  return {{"pool_w", &p.pool_w, true},
          {"q_embed", &p.q_embed, false},
          {"out_w", &p.out_w, true},
          {"out_b", &p.out_b, false}};
}

inline KTParams init_kt_params(int n_concepts, int n_questions, const DownstreamConfig& cfg,
                               std::uint64_t seed) {
  Rng rng(seed);
  KTParams p;
  p.pool_w = xavier_matrix(2 * n_concepts, cfg.d_pool, rng);
  p.q_embed = xavier_matrix(n_questions, cfg.d_pool, rng);
  p.out_w = xavier_matrix(2 * cfg.d_pool, 1, rng);
  p.out_b = Mat::Zero(1, 1);
  return p;
}

/// Projected pooled state for the KT head (1 x d_pool).
inline Eigen::RowVectorXd pool_kt(const CognitiveStructure& cs, const KTParams& p) {
  return (pool_features(cs).transpose() * p.pool_w).row(0);
}

inline double kt_predict(const CognitiveStructure& cs, int question, const KTParams& p) {
  Eigen::RowVectorXd pooled = pool_kt(cs, p);
  Eigen::RowVectorXd x(pooled.size() + p.q_embed.cols());
  x << pooled, p.q_embed.row(question);
  double z = (x * p.out_w)(0, 0) + p.out_b(0, 0);
  return 1.0 / (1.0 + std::exp(-z));
}

// ---------------------------------------------------------------------------
// Cognitive-diagnosis head

struct CDParams {
  Mat readout;        // 1 x 3: per-concept squash coefficients (a, b, c0)
  Mat diff_table;     // M x L, sigmoid-squashed difficulty
  Mat disc_table;     // M x 1, sigmoid-squashed positive discrimination
  std::vector<Mat> out_w;  // monotone output stack, entries clamped >= 0
  std::vector<Mat> out_b;
};

inline std::vector<ParamRef> collect_params(CDParams& p) {
  std::vector<ParamRef> out{{"readout", &p.readout, true},
                            {"diff_table", &p.diff_table, false},
                            {"disc_table", &p.disc_table, false}};
  for (std::size_t i = 0; i < p.out_w.size(); ++i) {
    out.push_back({"out_w" + std::to_string(i), &p.out_w[i], true});
    out.push_back({"out_b" + std::to_string(i), &p.out_b[i], false});
  }
  return out;
}

inline CDParams init_cd_params(int n_concepts, int n_questions, const DownstreamConfig& cfg,
                               std::uint64_t seed) {
  Rng rng(seed);
  CDParams p;
  p.readout = xavier_matrix(1, 3, rng);
  p.readout(0, 0) = std::abs(p.readout(0, 0)) + 1.0;  // start node-increasing
  p.diff_table = xavier_matrix(n_questions, n_concepts, rng);
  p.disc_table = xavier_matrix(n_questions, 1, rng);
  int in_dim = n_concepts;
  for (int d = 0; d < cfg.cd_depth; ++d) {
    const int out_dim = d + 1 == cfg.cd_depth ? 1 : n_concepts;
    Mat w = xavier_matrix(in_dim, out_dim, rng).cwiseAbs();  // respect the clamp from step 0
    p.out_w.push_back(std::move(w));
    p.out_b.push_back(Mat::Zero(1, out_dim));
    in_dim = out_dim;
  }
  return p;
}

inline void clamp_cd_weights(CDParams& p) {
  for (auto& w : p.out_w) w = w.cwiseMax(0.0);
}

/// Per-concept proficiency in (0,1): sigma(a * node + b * incident + c0).
inline Eigen::RowVectorXd pool_cd(const CognitiveStructure& cs, const CDParams& p) {
  const int L = cs.n_concepts;
  Eigen::VectorXd u = pool_features(cs);
  Eigen::RowVectorXd s(L);
  for (int l = 0; l < L; ++l) {
    double z = p.readout(0, 0) * u[l] + p.readout(0, 1) * u[L + l] + p.readout(0, 2);
    s[l] = 1.0 / (1.0 + std::exp(-z));
  }
  return s;
}

inline double cd_predict(const Eigen::RowVectorXd& proficiency, int question, const CDParams& p,
                         const QMatrix& qm) {
  const int L = static_cast<int>(proficiency.size());
  double diff_z, disc_z;
  Eigen::RowVectorXd x(L);
  disc_z = p.disc_table(question, 0);
  const double disc = 1.0 / (1.0 + std::exp(-disc_z));
  for (int l = 0; l < L; ++l) {
    diff_z = p.diff_table(question, l);
    const double diff = 1.0 / (1.0 + std::exp(-diff_z));
    const double mask = qm.tests(question, l) ? 1.0 : 0.0;
    x[l] = mask * (proficiency[l] - diff) * disc;
  }
  Eigen::RowVectorXd h = x;
  for (std::size_t d = 0; d < p.out_w.size(); ++d) {
    h = (h * p.out_w[d] + p.out_b[d]).eval();
    for (int j = 0; j < h.size(); ++j) h[j] = 1.0 / (1.0 + std::exp(-h[j]));
  }
  return h[0];
}

// ---------------------------------------------------------------------------
// Head training (logistic loss, Adam, fixed-order batches)

namespace detail {

struct FeatureCache {
  // Deduplicated structures per (student, prefix) over all splits.
  std::map<std::pair<int, int>, CognitiveStructure> by_key;

  const CognitiveStructure& get(int student, int prefix_len) const {
    auto it = by_key.find({student, prefix_len});
    require(it != by_key.end(), "missing cached structure for student ", student, " prefix ",
            prefix_len);
    return it->second;
  }
};

inline FeatureCache gather_structures(const std::vector<const std::vector<PredictionTarget>*>& sets,
                                      const StructureProvider& provider) {
  FeatureCache cache;
  for (const auto* set : sets)
    for (const auto& t : *set)
      cache.by_key.emplace(std::make_pair(t.student, t.position), CognitiveStructure{});
  for (auto& [key, slot] : cache.by_key) slot = provider(key.first, key.second);
  return cache;
}

}  // namespace detail

struct TrainedKT {
  KTParams params;
  EvalReport report;
};

/// Fit the KT head on train targets, evaluate on test targets. Gradients run
/// through the pooling projection, question embeddings, and output layer.
inline TrainedKT train_kt(const InteractionDataset& ds,
                          const std::vector<PredictionTarget>& train_targets,
                          const std::vector<PredictionTarget>& test_targets,
                          const StructureProvider& provider, const DownstreamConfig& cfg) {
  cfg.validate();
  require(!train_targets.empty(), "train_kt: no training targets");
  auto cache = detail::gather_structures({&train_targets, &test_targets}, provider);

  TrainedKT out;
  out.params = init_kt_params(ds.n_concepts, ds.n_questions, cfg, cfg.seed);
  auto refs = collect_params(out.params);
  OptimizerState opt = OptimizerState::init(refs);
  AdamWHyper hyper{cfg.lr, 0.9, 0.999, 1e-8, 0.0};

  Rng rng(mix_seed(cfg.seed, 0x6B7));
  for (int step = 1; step <= cfg.steps; ++step) {
    KTParams grads;
    grads.pool_w = Mat::Zero(out.params.pool_w.rows(), out.params.pool_w.cols());
    grads.q_embed = Mat::Zero(out.params.q_embed.rows(), out.params.q_embed.cols());
    grads.out_w = Mat::Zero(out.params.out_w.rows(), out.params.out_w.cols());
    grads.out_b = Mat::Zero(1, 1);
    auto grad_refs = collect_params(grads);
    const double inv_n = 1.0 / cfg.batch_size;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const auto& t = train_targets[static_cast<std::size_t>(rng.below(train_targets.size()))];
      const auto& cs = cache.get(t.student, t.position);

      ad::Tape tape(true);
      int pool_w = tape.leaf_ref(&out.params.pool_w);
      int q_embed = tape.leaf_ref(&out.params.q_embed);
      int out_w = tape.leaf_ref(&out.params.out_w);
      int out_b = tape.leaf_ref(&out.params.out_b);
      int u = tape.constant(pool_features(cs).transpose());
      int pooled = tape.matmul(u, pool_w);
      int x = tape.concat_cols(pooled, tape.rows(q_embed, {t.question}));
      int prob = tape.sigmoid_op(tape.add(tape.matmul(x, out_w), out_b));
      // Logistic loss: -log(p) or -log(1-p).
      int target_prob = t.response == 1
                            ? prob
                            : tape.sub(tape.constant(Mat::Constant(1, 1, 1.0)), prob);
      int nll = tape.scale(tape.log_clamped(target_prob, 1e-12), -1.0);
      tape.backward(nll, inv_n);
      const int ids[4] = {pool_w, q_embed, out_w, out_b};
      for (int i = 0; i < 4; ++i) {
        const Mat& adj = tape.adjoint(ids[i]);
        if (adj.size() > 0) *grad_refs[static_cast<std::size_t>(i)].mat += adj;
      }
    }
    adamw_step(refs, grad_refs, opt, hyper);
  }

  std::vector<double> preds;
  std::vector<int> labels;
  preds.reserve(test_targets.size());
  for (const auto& t : test_targets) {
    preds.push_back(kt_predict(cache.get(t.student, t.position), t.question, out.params));
    labels.push_back(t.response);
  }
  if (!preds.empty()) out.report = evaluate(preds, labels);
  return out;
}

struct TrainedCD {
  CDParams params;
  EvalReport report;
};

/// Fit the CD head; the output stack is re-clamped nonnegative after every
/// optimizer step so predictions stay monotone in tested proficiency.
inline TrainedCD train_cd(const InteractionDataset& ds,
                          const std::vector<PredictionTarget>& train_targets,
                          const std::vector<PredictionTarget>& test_targets,
                          const StructureProvider& provider, const DownstreamConfig& cfg) {
  cfg.validate();
  require(!train_targets.empty(), "train_cd: no training targets");
  auto cache = detail::gather_structures({&train_targets, &test_targets}, provider);
  const int L = ds.n_concepts;

  TrainedCD out;
  out.params = init_cd_params(L, ds.n_questions, cfg, mix_seed(cfg.seed, 0xCD));
  auto refs = collect_params(out.params);
  OptimizerState opt = OptimizerState::init(refs);
  AdamWHyper hyper{cfg.lr, 0.9, 0.999, 1e-8, 0.0};

  Rng rng(mix_seed(cfg.seed, 0xCD2));
  for (int step = 1; step <= cfg.steps; ++step) {
    CDParams grads = out.params;
    for (auto& r : collect_params(grads)) r.mat->setZero();
    auto grad_refs = collect_params(grads);
    const double inv_n = 1.0 / cfg.batch_size;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const auto& t = train_targets[static_cast<std::size_t>(rng.below(train_targets.size()))];
      const auto& cs = cache.get(t.student, t.position);

      ad::Tape tape(true);
      int readout = tape.leaf_ref(&out.params.readout);
      int diff_table = tape.leaf_ref(&out.params.diff_table);
      int disc_table = tape.leaf_ref(&out.params.disc_table);
      std::vector<int> w_ids, b_ids;
      for (std::size_t d = 0; d < out.params.out_w.size(); ++d) {
        w_ids.push_back(tape.leaf_ref(&out.params.out_w[d]));
        b_ids.push_back(tape.leaf_ref(&out.params.out_b[d]));
      }

      Eigen::VectorXd u = pool_features(cs);
      Mat node_part(1, L), edge_part(1, L), mask(1, L);
      for (int l = 0; l < L; ++l) {
        node_part(0, l) = u[l];
        edge_part(0, l) = u[L + l];
        mask(0, l) = ds.qmatrix.tests(t.question, l) ? 1.0 : 0.0;
      }
      // s_l = sigma(a*node + b*edge + c0), built with broadcasted scalars.
      int a_id = tape.pick(readout, {{0, 0}});
      int b_id = tape.pick(readout, {{0, 1}});
      int c_id = tape.pick(readout, {{0, 2}});
      int ones = tape.constant(Mat::Constant(1, L, 1.0));
      int z = tape.add(tape.add(tape.matmul(a_id, tape.constant(node_part)),
                                tape.matmul(b_id, tape.constant(edge_part))),
                       tape.matmul(c_id, ones));
      int s = tape.sigmoid_op(z);
      int diff = tape.sigmoid_op(tape.rows(diff_table, {t.question}));
      int disc = tape.sigmoid_op(tape.rows(disc_table, {t.question}));
      int gap = tape.sub(s, diff);
      int scaled = tape.matmul(tape.pick(disc, {{0, 0}}), gap);
      int x = tape.hadamard(tape.constant(mask), scaled);
      int h = x;
      for (std::size_t d = 0; d < w_ids.size(); ++d)
        h = tape.sigmoid_op(tape.add(tape.matmul(h, w_ids[d]), b_ids[d]));
      int prob = h;
      int target_prob = t.response == 1
                            ? prob
                            : tape.sub(tape.constant(Mat::Constant(1, 1, 1.0)), prob);
      int nll = tape.scale(tape.log_clamped(target_prob, 1e-12), -1.0);
      tape.backward(nll, inv_n);

      std::vector<int> ids = {readout, diff_table, disc_table};
      for (std::size_t d = 0; d < w_ids.size(); ++d) {
        ids.push_back(w_ids[d]);
        ids.push_back(b_ids[d]);
      }
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const Mat& adj = tape.adjoint(ids[i]);
        if (adj.size() > 0) *grad_refs[i].mat += adj;
      }
    }
    adamw_step(refs, grad_refs, opt, hyper);
    clamp_cd_weights(out.params);
  }

  std::vector<double> preds;
  std::vector<int> labels;
  for (const auto& t : test_targets) {
    Eigen::RowVectorXd s = pool_cd(cache.get(t.student, t.position), out.params);
    preds.push_back(cd_predict(s, t.question, out.params, ds.qmatrix));
    labels.push_back(t.response);
  }
  if (!preds.empty()) out.report = evaluate(preds, labels);
  return out;
}

// ---------------------------------------------------------------------------
// Head parameter serialization (same named-array layout as checkpoints)

template <typename Params>
inline nlohmann::json head_params_to_json(Params& p, const std::string& kind) {
  nlohmann::json arrays = nlohmann::json::object();
  for (const auto& ref : collect_params(p)) {
    arrays[ref.name] = {{"shape", {ref.mat->rows(), ref.mat->cols()}},
                        {"data", std::vector<double>(ref.mat->data(),
                                                     ref.mat->data() + ref.mat->size())}};
  }
  return {{"kind", kind}, {"arrays", std::move(arrays)}};
}

template <typename Params>
inline void head_params_from_json(const nlohmann::json& j, Params& p, const std::string& kind) {
  require(j.contains("kind") && j.at("kind").get<std::string>() == kind,
          "head params file is not a ", kind, " head");
  const auto& arrays = j.at("arrays");
  for (auto& ref : collect_params(p)) {
    require(arrays.contains(ref.name), "head params: missing array ", ref.name);
    const nlohmann::json& arr = arrays.at(ref.name);
    auto shape = arr.at("shape").get<std::vector<long>>();
    require(shape.size() == 2 && shape[0] == ref.mat->rows() && shape[1] == ref.mat->cols(),
            "head params: shape mismatch for ", ref.name);
    auto data = arr.at("data").get<std::vector<double>>();
    std::copy(data.begin(), data.end(), ref.mat->data());
  }
}

// ---------------------------------------------------------------------------
// Structure cache on disk, keyed by (params hash, student, prefix, seed)

inline nlohmann::json marginals_to_json(const CognitiveStructure& cs) {
  const auto pairs = upper_pairs(cs.n_concepts);
  std::vector<double> nodes(cs.node_marginals.data(),
                            cs.node_marginals.data() + cs.node_marginals.size());
  std::vector<double> edges;
  edges.reserve(pairs.size());
  for (const auto& [a, b] : pairs) edges.push_back(cs.edge(a, b));
  return {{"nodes", nodes}, {"edges_upper", edges}};
}

inline CognitiveStructure marginals_from_json(const nlohmann::json& j) {
  auto nodes = j.at("nodes").get<std::vector<double>>();
  auto edges = j.at("edges_upper").get<std::vector<double>>();
  const int L = static_cast<int>(nodes.size());
  require(static_cast<int>(edges.size()) == n_upper_pairs(L), "marginal edge array size mismatch");
  CognitiveStructure cs(L);
  for (int l = 0; l < L; ++l) {
    cs.node_marginals[l] = nodes[static_cast<std::size_t>(l)];
    cs.node_tested[static_cast<std::size_t>(l)] = true;
  }
  const auto pairs = upper_pairs(L);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    cs.set_edge(pairs[p].first, pairs[p].second, edges[p]);
    cs.edge_tested_upper[p] = true;
  }
  return cs;
}

/// Disk-backed memoization of a structure source. Filenames carry the full
/// key; anything already present is trusted and reused.
class StructureCache {
 public:
  StructureCache(std::string dir, std::string params_hash, std::uint64_t seed)
      : dir_(std::move(dir)), hash_(std::move(params_hash)), seed_(seed) {
    std::filesystem::create_directories(dir_);
  }

  std::string path_for(int student, int prefix_len) const {
    return dir_ + "/" + hash_ + "_s" + std::to_string(student) + "_p" +
           std::to_string(prefix_len) + "_" + std::to_string(seed_) + ".json";
  }

  bool contains(int student, int prefix_len) const {
    return std::filesystem::exists(path_for(student, prefix_len));
  }

  CognitiveStructure load(int student, int prefix_len) const {
    std::ifstream in(path_for(student, prefix_len));
    require(in.good(), "cache miss for student ", student, " prefix ", prefix_len);
    return marginals_from_json(nlohmann::json::parse(in));
  }

  void store(int student, int prefix_len, const CognitiveStructure& cs) const {
    std::ofstream out(path_for(student, prefix_len));
    require(out.good(), "cannot write cache entry for student ", student);
    out << marginals_to_json(cs).dump() << '\n';
  }

  /// Fill every requested key, generating misses in parallel.
  void ensure(std::vector<std::pair<int, int>> keys, const StructureProvider& generate,
              int threads) const {
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    std::vector<std::pair<int, int>> missing;
    for (const auto& k : keys)
      if (!contains(k.first, k.second)) missing.push_back(k);
    parallel_for(static_cast<int>(missing.size()), threads, [&](int i) {
      const auto& [student, prefix_len] = missing[static_cast<std::size_t>(i)];
      store(student, prefix_len, generate(student, prefix_len));
    });
  }

  StructureProvider as_provider() const {
    return [this](int student, int prefix_len) { return load(student, prefix_len); };
  }

 private:
  std::string dir_;
  std::string hash_;
  std::uint64_t seed_;
};

}  // namespace csg
