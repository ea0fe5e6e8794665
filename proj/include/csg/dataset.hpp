// Interaction logs and question-concept weights: CSV loaders, writers,
// record-level splitting, and the planted-structure synthetic generator.
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "csg/common.hpp"
#include "csg/structure.hpp"

namespace csg {

struct InteractionEvent {
  int question_id = 0;
  int response = 0;  // {0,1}
  int position = 0;  // 0-based ordinal within the student's sequence
};

struct StudentSequence {
  std::string student_id;
  std::vector<InteractionEvent> events;  // sorted by position
};

/// Dense M x L nonnegative weights; each row sums to 1.
struct QMatrix {
  Eigen::MatrixXd weights;

  int n_questions() const { return static_cast<int>(weights.rows()); }
  int n_concepts() const { return static_cast<int>(weights.cols()); }
  double weight(int q, int l) const { return weights(q, l); }
  bool tests(int q, int l) const { return weights(q, l) > 0.0; }

  std::vector<int> tested_concepts(int q) const {
    std::vector<int> out;
    for (int l = 0; l < n_concepts(); ++l)
      if (tests(q, l)) out.push_back(l);
    return out;
  }

  void validate() const {
    for (int q = 0; q < n_questions(); ++q) {
      double s = 0.0;
      bool any = false;
      for (int l = 0; l < n_concepts(); ++l) {
        require(weights(q, l) >= 0.0, "negative weight at question ", q);
        if (weights(q, l) > 0.0) any = true;
        s += weights(q, l);
      }
      require(any, "question ", q, " has no concepts");
      require(std::abs(s - 1.0) <= 1e-9, "question ", q, " weights do not sum to 1");
    }
  }
};

struct InteractionDataset {
  std::vector<StudentSequence> students;
  QMatrix qmatrix;
  int n_students = 0;   // N
  int n_questions = 0;  // M
  int n_concepts = 0;   // L

  std::size_t n_events() const {
    std::size_t n = 0;
    for (const auto& s : students) n += s.events.size();
    return n;
  }

  const StudentSequence& student(int i) const { return students[static_cast<std::size_t>(i)]; }

  /// History prefix of student i: events at positions [0, prefix_len).
  /// Positions may be non-contiguous in split views; the cut is by position.
  std::vector<InteractionEvent> prefix(int i, int prefix_len) const {
    std::vector<InteractionEvent> out;
    for (const auto& e : students[static_cast<std::size_t>(i)].events)
      if (e.position < prefix_len) out.push_back(e);
    return out;
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::optional<long> parse_int(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t pos = 0;
  long v = 0;
  try {
    v = std::stol(s, &pos);
  } catch (...) {
    return std::nullopt;
  }
  if (pos != s.size()) return std::nullopt;
  return v;
}

inline std::optional<double> parse_real(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (...) {
    return std::nullopt;
  }
  if (pos != s.size()) return std::nullopt;
  return v;
}

inline void throw_aggregated(const std::vector<std::string>& errors, const std::string& what) {
  if (errors.empty()) return;
  std::string msg = what + ": " + std::to_string(errors.size()) + " error(s)";
  std::size_t shown = std::min<std::size_t>(errors.size(), 20);
  for (std::size_t i = 0; i < shown; ++i) msg += "\n  " + errors[i];
  if (shown < errors.size()) msg += "\n  ...";
  throw CsgError(msg);
}

}  // namespace detail

/// CSV `student_id,question_id,response,position`. Events are grouped by
/// student (first-seen order), sorted by position; positions must be the
/// contiguous range 0..n-1 per student. L is attached later via the Q-matrix.
inline InteractionDataset load_interactions(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open interactions file: ", path);

  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "empty interactions file: ", path);
  {
    auto hdr = detail::split_csv_line(line);
    require(hdr.size() == 4 && hdr[0] == "student_id" && hdr[1] == "question_id" &&
                hdr[2] == "response" && hdr[3] == "position",
            "bad interactions header in ", path,
            " (expected student_id,question_id,response,position)");
  }

  InteractionDataset ds;
  std::map<std::string, int> index_of;
  std::vector<std::string> errors;
  int line_no = 1;
  int max_q = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto f = detail::split_csv_line(line);
    if (f.size() != 4) {
      errors.push_back("line " + std::to_string(line_no) + ": expected 4 fields");
      continue;
    }
    auto qid = detail::parse_int(f[1]);
    auto resp = detail::parse_int(f[2]);
    auto pos = detail::parse_int(f[3]);
    if (f[0].empty() || !qid || !resp || !pos) {
      errors.push_back("line " + std::to_string(line_no) + ": malformed row");
      continue;
    }
    if (*resp != 0 && *resp != 1) {
      errors.push_back("line " + std::to_string(line_no) + ": response " +
                       std::to_string(*resp) + " outside {0,1}");
      continue;
    }
    if (*qid < 0 || *pos < 0) {
      errors.push_back("line " + std::to_string(line_no) + ": negative id or position");
      continue;
    }
    auto [it, inserted] = index_of.try_emplace(f[0], static_cast<int>(ds.students.size()));
    if (inserted) ds.students.push_back(StudentSequence{f[0], {}});
    ds.students[static_cast<std::size_t>(it->second)].events.push_back(
        InteractionEvent{static_cast<int>(*qid), static_cast<int>(*resp), static_cast<int>(*pos)});
    max_q = std::max(max_q, static_cast<int>(*qid));
  }

  for (auto& s : ds.students) {
    std::sort(s.events.begin(), s.events.end(),
              [](const InteractionEvent& a, const InteractionEvent& b) {
                return a.position < b.position;
              });
    for (std::size_t k = 0; k < s.events.size(); ++k) {
      if (k > 0 && s.events[k].position == s.events[k - 1].position) {
        errors.push_back("student " + s.student_id + ": duplicate position " +
                         std::to_string(s.events[k].position));
        break;
      }
      if (static_cast<int>(k) != s.events[k].position) {
        errors.push_back("student " + s.student_id + ": positions have gaps");
        break;
      }
    }
  }
  detail::throw_aggregated(errors, "load_interactions(" + path + ")");
  require(!ds.students.empty(), "no interactions in ", path);

  ds.n_students = static_cast<int>(ds.students.size());
  ds.n_questions = max_q + 1;
  ds.n_concepts = 0;
  return ds;
}

inline void write_interactions(const InteractionDataset& ds, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot write ", path);
  out << "student_id,question_id,response,position\n";
  for (const auto& s : ds.students)
    for (const auto& e : s.events)
      out << s.student_id << ',' << e.question_id << ',' << e.response << ',' << e.position << '\n';
  require(out.good(), "write failed: ", path);
}

/// CSV `question_id,concept_id,weight` with weight > 0; rows renormalized to
/// sum 1. Pass expected_m / expected_l to pin dims, 0 to infer from the file.
inline QMatrix load_qmatrix(const std::string& path, int expected_m = 0, int expected_l = 0) {
  std::ifstream in(path);
  require(in.good(), "cannot open qmatrix file: ", path);

  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "empty qmatrix file: ", path);
  {
    auto hdr = detail::split_csv_line(line);
    require(hdr.size() == 3 && hdr[0] == "question_id" && hdr[1] == "concept_id" &&
                hdr[2] == "weight",
            "bad qmatrix header in ", path, " (expected question_id,concept_id,weight)");
  }

  struct Entry {
    int q, l;
    double w;
  };
  std::vector<Entry> entries;
  std::vector<std::string> errors;
  int line_no = 1, max_q = -1, max_l = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto f = detail::split_csv_line(line);
    auto q = f.size() == 3 ? detail::parse_int(f[0]) : std::nullopt;
    auto l = f.size() == 3 ? detail::parse_int(f[1]) : std::nullopt;
    auto w = f.size() == 3 ? detail::parse_real(f[2]) : std::nullopt;
    if (!q || !l || !w || *q < 0 || *l < 0) {
      errors.push_back("line " + std::to_string(line_no) + ": malformed row");
      continue;
    }
    if (*w <= 0.0) {
      errors.push_back("line " + std::to_string(line_no) + ": weight must be > 0, got " + f[2]);
      continue;
    }
    if (expected_l > 0 && *l >= expected_l) {
      errors.push_back("line " + std::to_string(line_no) + ": concept_id " + f[1] +
                       " >= L=" + std::to_string(expected_l));
      continue;
    }
    entries.push_back(Entry{static_cast<int>(*q), static_cast<int>(*l), *w});
    max_q = std::max(max_q, static_cast<int>(*q));
    max_l = std::max(max_l, static_cast<int>(*l));
  }
  detail::throw_aggregated(errors, "load_qmatrix(" + path + ")");

  const int m = expected_m > 0 ? expected_m : max_q + 1;
  const int l_dim = expected_l > 0 ? expected_l : max_l + 1;
  require(m > 0 && l_dim > 0, "empty qmatrix in ", path);
  require(max_q < m, "question_id ", max_q, " >= M=", m, " in ", path);

  QMatrix qm;
  qm.weights = Eigen::MatrixXd::Zero(m, l_dim);
  for (const auto& e : entries) qm.weights(e.q, e.l) += e.w;
  for (int q = 0; q < m; ++q) {
    double s = qm.weights.row(q).sum();
    if (s <= 0.0) errors.push_back("question " + std::to_string(q) + " has no concepts");
    else qm.weights.row(q) /= s;
  }
  detail::throw_aggregated(errors, "load_qmatrix(" + path + ")");
  return qm;
}

inline void write_qmatrix(const QMatrix& qm, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot write ", path);
  out << "question_id,concept_id,weight\n";
  out.precision(17);
  for (int q = 0; q < qm.n_questions(); ++q)
    for (int l = 0; l < qm.n_concepts(); ++l)
      if (qm.weights(q, l) > 0.0) out << q << ',' << l << ',' << qm.weights(q, l) << '\n';
  require(out.good(), "write failed: ", path);
}

inline void attach_qmatrix(InteractionDataset& ds, QMatrix qm) {
  require(qm.n_questions() >= ds.n_questions, "qmatrix covers ", qm.n_questions(),
          " questions, dataset references ", ds.n_questions);
  qm.validate();
  ds.n_questions = qm.n_questions();
  ds.n_concepts = qm.n_concepts();
  ds.qmatrix = std::move(qm);
}

// ---------------------------------------------------------------------------
// Record-level splitting

enum class Split : int { Train = 0, Val = 1, Test = 2 };

/// Per-event split assignment, indexed [student][event index in sequence].
struct SplitLabels {
  std::vector<std::vector<Split>> label;

  Split at(int student, int event_idx) const {
    return label[static_cast<std::size_t>(student)][static_cast<std::size_t>(event_idx)];
  }
};

/// Assign each interaction record to train/val/test. Deterministic under
/// seed; exact counts up to rounding. Students with fewer than 3 events stay
/// entirely in train (warning), since they cannot populate all three splits.
inline SplitLabels assign_splits(const InteractionDataset& ds, double r_train, double r_val,
                                 double r_test, std::uint64_t seed) {
  require(r_train >= 0 && r_val >= 0 && r_test >= 0, "split ratios must be nonnegative");
  require(std::abs(r_train + r_val + r_test - 1.0) <= 1e-9, "split ratios must sum to 1");

  SplitLabels labels;
  labels.label.resize(ds.students.size());
  std::vector<std::pair<int, int>> pool;  // (student, event idx) eligible for val/test
  int n_small = 0;
  for (std::size_t i = 0; i < ds.students.size(); ++i) {
    const auto& s = ds.students[i];
    labels.label[i].assign(s.events.size(), Split::Train);
    if (s.events.size() < 3) {
      ++n_small;
      continue;
    }
    for (std::size_t k = 0; k < s.events.size(); ++k)
      pool.emplace_back(static_cast<int>(i), static_cast<int>(k));
  }
  if (n_small > 0)
    warn("assign_splits: " + std::to_string(n_small) +
         " student(s) with <3 events kept entirely in train");

  const auto total = static_cast<double>(ds.n_events());
  auto n_val = static_cast<std::size_t>(std::llround(r_val * total));
  auto n_test = static_cast<std::size_t>(std::llround(r_test * total));
  n_val = std::min(n_val, pool.size());
  n_test = std::min(n_test, pool.size() - n_val);

  Rng rng(seed);
  rng.shuffle(pool);
  for (std::size_t k = 0; k < n_val; ++k)
    labels.label[static_cast<std::size_t>(pool[k].first)][static_cast<std::size_t>(pool[k].second)] =
        Split::Val;
  for (std::size_t k = n_val; k < n_val + n_test; ++k)
    labels.label[static_cast<std::size_t>(pool[k].first)][static_cast<std::size_t>(pool[k].second)] =
        Split::Test;
  return labels;
}

/// Project one split out of the dataset. Events keep their original
/// positions (histories are taken from the full dataset when conditioning),
/// so split views may have position gaps.
inline InteractionDataset project_split(const InteractionDataset& ds, const SplitLabels& labels,
                                        Split which) {
  InteractionDataset out;
  out.qmatrix = ds.qmatrix;
  out.n_questions = ds.n_questions;
  out.n_concepts = ds.n_concepts;
  for (std::size_t i = 0; i < ds.students.size(); ++i) {
    StudentSequence s{ds.students[i].student_id, {}};
    for (std::size_t k = 0; k < ds.students[i].events.size(); ++k)
      if (labels.label[i][k] == which) s.events.push_back(ds.students[i].events[k]);
    if (!s.events.empty()) out.students.push_back(std::move(s));
  }
  out.n_students = static_cast<int>(out.students.size());
  return out;
}

struct DatasetSplits {
  InteractionDataset train, val, test;
};

inline DatasetSplits split_dataset(const InteractionDataset& ds, double r_train, double r_val,
                                   double r_test, std::uint64_t seed) {
  auto labels = assign_splits(ds, r_train, r_val, r_test, seed);
  return DatasetSplits{project_split(ds, labels, Split::Train),
                       project_split(ds, labels, Split::Val),
                       project_split(ds, labels, Split::Test)};
}

// ---------------------------------------------------------------------------
// Synthetic generator with planted ground-truth structures

struct SynthConfig {
  int n_students = 100;   // N
  int n_questions = 30;   // M
  int n_concepts = 6;     // L
  int seq_len = 30;
  double noise = 0.1;     // response flip level in [0, 0.5)
  double p_node = 0.75;   // P(node constructed in the final planted structure)
  double p_node_spread = 0.5;  // width of the per-student mastery propensity band
  double curriculum = 0.0;     // 0 = iid concepts; 1 = strongly ordered construction
  double p_edge = 0.6;    // P(edge constructed | both endpoints constructed)
  double growth_frac = 0.8;  // constructions appear within the first growth_frac of the sequence
  int max_concepts_per_q = 3;
  bool block_questions = false;  // contiguous concept blocks instead of random subsets
  int edge_delay_max = 3;        // edge construction lag after both endpoints

  void validate() const {
    require(n_students >= 1 && n_questions >= 1 && n_concepts >= 1 && seq_len >= 1,
            "synth: N, M, L, seq_len must be >= 1");
    require(noise >= 0.0 && noise < 0.5, "synth: noise must be in [0, 0.5)");
    require(p_node >= 0.0 && p_node <= 1.0 && p_edge >= 0.0 && p_edge <= 1.0,
            "synth: probabilities in [0,1]");
    require(p_node_spread >= 0.0 && p_node_spread <= 2.0, "synth: p_node_spread in [0,2]");
    require(curriculum >= 0.0 && curriculum <= 1.0, "synth: curriculum in [0,1]");
    require(edge_delay_max >= 0, "synth: edge_delay_max must be >= 0");
    require(growth_frac >= 0.0 && growth_frac <= 1.0, "synth: growth_frac in [0,1]");
    require(max_concepts_per_q >= 1 && max_concepts_per_q <= n_concepts,
            "synth: max_concepts_per_q in [1, L]");
  }
};

/// Ground truth for one student: the final structure plus per-element
/// construction times. Element x is constructed at position t iff birth <= t;
/// kUnborn marks elements that never construct.
struct PlantedStudent {
  DiscreteStructure final_structure;
  std::vector<int> node_birth;        // length L
  std::vector<int> edge_birth_upper;  // length L*(L-1)/2

  static constexpr int kUnborn = std::numeric_limits<int>::max();

  DiscreteStructure at_position(int t) const {
    DiscreteStructure g(final_structure.n_concepts, final_structure.n_states);
    for (std::size_t l = 0; l < node_birth.size(); ++l)
      g.node_states[l] = node_birth[l] <= t ? final_structure.n_states - 1 : 0;
    for (std::size_t p = 0; p < edge_birth_upper.size(); ++p)
      g.edge_states_upper[p] = edge_birth_upper[p] <= t ? final_structure.n_states - 1 : 0;
    return g;
  }
};

struct PlantedStructures {
  std::vector<PlantedStudent> students;
  double noise = 0.0;
};

/// Fraction of the question's tested elements (concepts plus all unordered
/// pairs of tested concepts) constructed in g; the response model's signal.
inline double constructed_fraction(const DiscreteStructure& g, int question, const QMatrix& qm) {
  const int top = g.n_states - 1;
  auto tested = qm.tested_concepts(question);
  int total = static_cast<int>(tested.size());
  int hit = 0;
  for (int l : tested)
    if (g.node_states[static_cast<std::size_t>(l)] == top) ++hit;
  for (std::size_t a = 0; a < tested.size(); ++a)
    for (std::size_t b = a + 1; b < tested.size(); ++b) {
      ++total;
      if (g.edge(tested[a], tested[b]) == top) ++hit;
    }
  return total == 0 ? 0.0 : static_cast<double>(hit) / total;
}

/// Response logs from planted structures that grow monotonically over the
/// sequence. P(correct) = (1 - noise) * g + noise * (1 - g) with g the
/// constructed fraction of the question's tested elements at that stage.
inline std::pair<InteractionDataset, PlantedStructures> synth_generate(const SynthConfig& cfg,
                                                                       std::uint64_t seed) {
  cfg.validate();
  const int L = cfg.n_concepts;
  const int M = cfg.n_questions;

  InteractionDataset ds;
  PlantedStructures planted;
  planted.noise = cfg.noise;

  // Q-matrix: the first min(M, L) questions each test a single concept so
  // every concept is observable in isolation; the rest test 1..max random
  // concepts with the uniform-split weight convention.
  Rng qrng(mix_seed(seed, 0x71));
  QMatrix qm;
  qm.weights = Eigen::MatrixXd::Zero(M, L);
  for (int q = 0; q < M; ++q) {
    if (q < std::min(M, L)) {
      qm.weights(q, q % L) = 1.0;
      continue;
    }
    int k = qrng.int_range(1, cfg.max_concepts_per_q);
    if (cfg.block_questions) {
      k = std::max(k, std::min(2, L));
      int start = qrng.int_range(0, std::max(L - k, 0));
      for (int l = start; l < std::min(start + k, L); ++l) qm.weights(q, l) = 1.0 / k;
    } else {
      auto chosen = qrng.sample_without_replacement(L, k);
      for (int l : chosen) qm.weights(q, l) = 1.0 / k;
    }
  }

  const auto pairs = upper_pairs(L);
  const int grow_until = std::max(0, static_cast<int>(cfg.growth_frac * cfg.seq_len) - 1);

  for (int i = 0; i < cfg.n_students; ++i) {
    Rng rng(mix_seed(seed, 0x5757, static_cast<std::uint64_t>(i)));
    PlantedStudent ps;
    ps.final_structure = DiscreteStructure(L, 2);
    ps.node_birth.assign(static_cast<std::size_t>(L), PlantedStudent::kUnborn);
    ps.edge_birth_upper.assign(pairs.size(), PlantedStudent::kUnborn);

    // Per-student mastery propensity spreads overall ability across the
    // population, which keeps aggregate response rates informative.
    double propensity =
        cfg.p_node >= 1.0 || cfg.p_node <= 0.0
            ? cfg.p_node
            : std::clamp(cfg.p_node + cfg.p_node_spread * (rng.u01() - 0.5), 0.05, 1.0);
    // With curriculum > 0, higher-indexed concepts are harder and construct
    // later, so mastery is ordered: students differ in speed and extent.
    std::vector<int> constructed;
    for (int l = 0; l < L; ++l) {
      double hardness = L > 1 ? cfg.curriculum * (static_cast<double>(l) / (L - 1) - 0.5) : 0.0;
      double p = cfg.p_node >= 1.0 ? 1.0
                                   : std::clamp(propensity - hardness, 0.02, 0.98);
      if (cfg.p_node <= 0.0) p = 0.0;
      if (rng.bernoulli(p)) {
        ps.final_structure.node_states[static_cast<std::size_t>(l)] = 1;
        constructed.push_back(l);
      }
    }
    for (std::size_t rank = 0; rank < constructed.size(); ++rank) {
      int l = constructed[rank];
      int ordered = constructed.size() > 1
                        ? static_cast<int>(grow_until * static_cast<double>(rank) /
                                           (static_cast<double>(constructed.size()) - 1.0))
                        : 0;
      int uniform = grow_until > 0 ? rng.int_range(0, grow_until) : 0;
      int jitter = grow_until > 0 ? rng.int_range(-2, 2) : 0;
      double mixed = cfg.curriculum * (ordered + jitter) + (1.0 - cfg.curriculum) * uniform;
      ps.node_birth[static_cast<std::size_t>(l)] =
          std::clamp(static_cast<int>(std::lround(mixed)), 0, std::max(grow_until, 0));
    }
    double edge_propensity =
        cfg.p_edge >= 1.0 || cfg.p_edge <= 0.0
            ? cfg.p_edge
            : std::clamp(cfg.p_edge + 0.5 * (rng.u01() - 0.5), 0.05, 0.95);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      auto [a, b] = pairs[p];
      if (ps.final_structure.node_states[static_cast<std::size_t>(a)] == 1 &&
          ps.final_structure.node_states[static_cast<std::size_t>(b)] == 1 &&
          rng.bernoulli(edge_propensity)) {
        ps.final_structure.edge_states_upper[p] = 1;
        int base = std::max(ps.node_birth[static_cast<std::size_t>(a)],
                            ps.node_birth[static_cast<std::size_t>(b)]);
        ps.edge_birth_upper[p] =
            std::min(base + rng.int_range(0, std::max(cfg.edge_delay_max, 0)), cfg.seq_len - 1);
      }
    }

    StudentSequence seq{"s" + std::to_string(i), {}};
    for (int t = 0; t < cfg.seq_len; ++t) {
      int q = static_cast<int>(rng.below(static_cast<std::uint64_t>(M)));
      DiscreteStructure stage = ps.at_position(t);
      double g = constructed_fraction(stage, q, qm);
      double p_correct = (1.0 - cfg.noise) * g + cfg.noise * (1.0 - g);
      int r = rng.bernoulli(p_correct) ? 1 : 0;
      seq.events.push_back(InteractionEvent{q, r, t});
    }
    ds.students.push_back(std::move(seq));
    planted.students.push_back(std::move(ps));
  }

  ds.n_students = cfg.n_students;
  ds.n_questions = M;
  attach_qmatrix(ds, std::move(qm));
  return {std::move(ds), std::move(planted)};
}

// ---------------------------------------------------------------------------
// Planted-structure JSON round trip

inline void write_planted(const PlantedStructures& planted, const std::string& path) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& ps : planted.students) {
    nlohmann::json rec;
    rec["nodes"] = ps.final_structure.node_states;
    rec["edges_upper"] = ps.final_structure.edge_states_upper;
    rec["node_birth"] = ps.node_birth;
    rec["edge_birth_upper"] = ps.edge_birth_upper;
    arr.push_back(std::move(rec));
  }
  nlohmann::json root;
  root["noise"] = planted.noise;
  root["students"] = std::move(arr);
  std::ofstream out(path);
  require(out.good(), "cannot write ", path);
  out << root.dump(1, '\t') << '\n';
}

inline PlantedStructures load_planted(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open ", path);
  nlohmann::json root = nlohmann::json::parse(in);
  PlantedStructures planted;
  planted.noise = root.at("noise").get<double>();
  for (const auto& rec : root.at("students")) {
    PlantedStudent ps;
    auto nodes = rec.at("nodes").get<std::vector<int>>();
    auto edges = rec.at("edges_upper").get<std::vector<int>>();
    const int L = static_cast<int>(nodes.size());
    require(static_cast<int>(edges.size()) == n_upper_pairs(L), "planted edge array size mismatch");
    ps.final_structure = DiscreteStructure(L, 2);
    ps.final_structure.node_states = std::move(nodes);
    ps.final_structure.edge_states_upper = std::move(edges);
    ps.node_birth = rec.at("node_birth").get<std::vector<int>>();
    ps.edge_birth_upper = rec.at("edge_birth_upper").get<std::vector<int>>();
    planted.students.push_back(std::move(ps));
  }
  return planted;
}

}  // namespace csg
