// Rule-based simulated cognitive structures from interaction histories.
// Node evidence is the weight-weighted correct-rate over the prefix; edge
// evidence restricts to questions that co-test both concepts. These form the
// pretraining corpus.
#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "csg/dataset.hpp"
#include "csg/structure.hpp"

namespace csg {

/// Construction evidence for concept l over a history prefix:
///   sum_j w(l,j) * r_j / sum_j w(l,j).
/// The per-event 1/|T| normalizers cancel in the ratio and are omitted.
/// nullopt when no answered question tests l.
inline std::optional<double> concept_construction(int concept_id,
                                                  const std::vector<InteractionEvent>& prefix,
                                                  const QMatrix& qm) {
  double num = 0.0, den = 0.0;
  for (const auto& e : prefix) {
    double w = qm.weight(e.question_id, concept_id);
    num += w * e.response;
    den += w;
  }
  if (den <= 0.0) return std::nullopt;
  return num / den;
}

/// Construction evidence for the relation between concepts a and b, over
/// questions that test both: sum (w_a + w_b) * r / sum (w_a + w_b).
inline std::optional<double> relation_construction(int a, int b,
                                                   const std::vector<InteractionEvent>& prefix,
                                                   const QMatrix& qm) {
  require(a != b, "relation_construction: self relations are excluded");
  double num = 0.0, den = 0.0;
  for (const auto& e : prefix) {
    if (!qm.tests(e.question_id, a) || !qm.tests(e.question_id, b)) continue;
    double w = qm.weight(e.question_id, a) + qm.weight(e.question_id, b);
    num += w * e.response;
    den += w;
  }
  if (den <= 0.0) return std::nullopt;
  return num / den;
}

/// Marginal structure from a history prefix. Untested entries get the
/// uninformative 0.5 with their tested mask cleared.
inline CognitiveStructure simulate_structure(const std::vector<InteractionEvent>& prefix,
                                             const QMatrix& qm) {
  const int L = qm.n_concepts();
  CognitiveStructure cs(L);
  for (int l = 0; l < L; ++l) {
    if (auto v = concept_construction(l, prefix, qm)) {
      cs.node_marginals[l] = *v;
      cs.node_tested[l] = true;
    }
  }
  const auto pairs = upper_pairs(L);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    if (auto e = relation_construction(pairs[p].first, pairs[p].second, prefix, qm)) {
      cs.set_edge(pairs[p].first, pairs[p].second, *e);
      cs.edge_tested_upper[p] = true;
    }
  }
  return cs;
}

enum class DiscretizeMode { Deterministic, Bernoulli };

/// Map marginals to hard states. Deterministic: constructed iff marginal >=
/// threshold (ties construct). Bernoulli: state ~ Bernoulli(marginal).
/// Untested entries are always unconstructed.
inline DiscreteStructure discretize(const CognitiveStructure& cs, double threshold,
                                    DiscretizeMode mode, Rng& rng) {
  require(threshold > 0.0 && threshold < 1.0, "discretize: threshold must be in (0,1)");
  DiscreteStructure g(cs.n_concepts, 2);
  for (int l = 0; l < cs.n_concepts; ++l) {
    if (!cs.node_tested[static_cast<std::size_t>(l)]) continue;
    double m = cs.node_marginals[l];
    g.node_states[static_cast<std::size_t>(l)] =
        mode == DiscretizeMode::Deterministic ? (m >= threshold ? 1 : 0) : (rng.bernoulli(m) ? 1 : 0);
  }
  const auto pairs = upper_pairs(cs.n_concepts);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    if (!cs.edge_tested_upper[p]) continue;
    double m = cs.edge(pairs[p].first, pairs[p].second);
    g.edge_states_upper[p] =
        mode == DiscretizeMode::Deterministic ? (m >= threshold ? 1 : 0) : (rng.bernoulli(m) ? 1 : 0);
  }
  return g;
}

/// One pretraining record: a hard structure at a history prefix, with the
/// (student, prefix) reference needed to rebuild guidance features.
struct CorpusRecord {
  std::string student_id;
  int student_index = 0;
  int prefix_len = 0;
  DiscreteStructure structure;
};

struct SimulatedCorpus {
  std::vector<CorpusRecord> records;
  int n_concepts = 0;
  std::size_t size() const { return records.size(); }
};

struct CorpusOptions {
  int stride = 5;
  double threshold = 0.5;
  DiscretizeMode mode = DiscretizeMode::Deterministic;
  std::uint64_t seed = 0;  // used by Bernoulli mode only
};

/// Discretization stream for one (student, prefix) record; shared by the
/// corpus builder and by consumers that must reproduce its exact draws.
inline Rng corpus_record_rng(const CorpusOptions& opts, int student_index, int prefix_bound) {
  return Rng(mix_seed(opts.seed, 0xD15C,
                      mix_seed(static_cast<std::uint64_t>(student_index), 0x9,
                               static_cast<std::uint64_t>(prefix_bound))));
}

/// Structures at prefix lengths stride, 2*stride, ..., plus the full
/// sequence. Prefix cuts are by event count here (full datasets have
/// contiguous positions, so count == position bound).
inline SimulatedCorpus build_pretrain_corpus(const InteractionDataset& ds,
                                             const CorpusOptions& opts = {}) {
  require(opts.stride >= 1, "build_pretrain_corpus: stride must be >= 1");
  require(ds.n_concepts > 0, "build_pretrain_corpus: dataset has no qmatrix attached");
  SimulatedCorpus corpus;
  corpus.n_concepts = ds.n_concepts;
  for (std::size_t i = 0; i < ds.students.size(); ++i) {
    const auto& s = ds.students[i];
    if (s.events.empty()) continue;
    const int n = static_cast<int>(s.events.size());
    std::vector<int> cuts;
    for (int p = opts.stride; p < n; p += opts.stride) cuts.push_back(p);
    cuts.push_back(n);
    for (int cut : cuts) {
      std::vector<InteractionEvent> prefix(s.events.begin(), s.events.begin() + cut);
      CognitiveStructure cs = simulate_structure(prefix, ds.qmatrix);
      // Record the position bound, not the count: split views have gaps.
      const int bound = s.events[static_cast<std::size_t>(cut - 1)].position + 1;
      Rng rng = corpus_record_rng(opts, static_cast<int>(i), bound);
      corpus.records.push_back(CorpusRecord{s.student_id, static_cast<int>(i), bound,
                                            discretize(cs, opts.threshold, opts.mode, rng)});
    }
  }
  return corpus;
}

inline void write_corpus(const SimulatedCorpus& corpus, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot write ", path);
  for (const auto& rec : corpus.records) {
    nlohmann::json j;
    j["student_id"] = rec.student_id;
    j["student_index"] = rec.student_index;
    j["prefix_len"] = rec.prefix_len;
    j["nodes"] = rec.structure.node_states;
    j["edges_upper"] = rec.structure.edge_states_upper;
    out << j.dump() << '\n';
  }
  require(out.good(), "write failed: ", path);
}

inline SimulatedCorpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open ", path);
  SimulatedCorpus corpus;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    CorpusRecord rec;
    rec.student_id = j.at("student_id").get<std::string>();
    rec.student_index = j.at("student_index").get<int>();
    rec.prefix_len = j.at("prefix_len").get<int>();
    auto nodes = j.at("nodes").get<std::vector<int>>();
    auto edges = j.at("edges_upper").get<std::vector<int>>();
    const int L = static_cast<int>(nodes.size());
    require(static_cast<int>(edges.size()) == n_upper_pairs(L), "corpus edge array size mismatch");
    rec.structure = DiscreteStructure(L, 2);
    rec.structure.node_states = std::move(nodes);
    rec.structure.edge_states_upper = std::move(edges);
    corpus.n_concepts = L;
    corpus.records.push_back(std::move(rec));
  }
  return corpus;
}

}  // namespace csg
