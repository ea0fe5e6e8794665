// Cognitive structure containers: continuous marginals and discrete states
// over an undirected concept graph. Edge state lives on the upper triangle
// and is mirrored; the diagonal is identically zero / unconstructed.
#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "csg/common.hpp"

namespace csg {

/// Upper-triangle pair list for L concepts, in (i<j) lexicographic order.
/// This order is the canonical edge indexing used across the project.
inline std::vector<std::pair<int, int>> upper_pairs(int n_concepts) {
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(n_concepts) * (n_concepts - 1) / 2);
  for (int a = 0; a < n_concepts; ++a)
    for (int b = a + 1; b < n_concepts; ++b) pairs.emplace_back(a, b);
  return pairs;
}

inline int n_upper_pairs(int n_concepts) { return n_concepts * (n_concepts - 1) / 2; }

/// Flat index of unordered pair (a,b) in upper_pairs(L) order.
inline int pair_index(int a, int b, int n_concepts) {
  if (a > b) std::swap(a, b);
  return a * n_concepts - a * (a + 1) / 2 + (b - a - 1);
}

/// Per-entry construction states over alphabet {0..c-1}. State c-1 means
/// "constructed"; with the default c=2 that is the usual 0/1 split.
struct DiscreteStructure {
  int n_concepts = 0;
  int n_states = 2;
  std::vector<int> node_states;             // length L
  std::vector<int> edge_states_upper;       // length L*(L-1)/2, canonical order

  DiscreteStructure() = default;
  DiscreteStructure(int L, int c)
      : n_concepts(L),
        n_states(c),
        node_states(L, 0),
        edge_states_upper(static_cast<std::size_t>(n_upper_pairs(L)), 0) {}

  int edge(int a, int b) const {
    if (a == b) return 0;
    return edge_states_upper[static_cast<std::size_t>(pair_index(a, b, n_concepts))];
  }
  void set_edge(int a, int b, int s) {
    require(a != b, "set_edge: self relation");
    edge_states_upper[static_cast<std::size_t>(pair_index(a, b, n_concepts))] = s;
  }

  bool operator==(const DiscreteStructure& o) const {
    return n_concepts == o.n_concepts && n_states == o.n_states &&
           node_states == o.node_states && edge_states_upper == o.edge_states_upper;
  }

  void validate() const {
    require(static_cast<int>(node_states.size()) == n_concepts, "node state size mismatch");
    require(static_cast<int>(edge_states_upper.size()) == n_upper_pairs(n_concepts),
            "edge state size mismatch");
    for (int s : node_states) require(s >= 0 && s < n_states, "node state out of range");
    for (int s : edge_states_upper) require(s >= 0 && s < n_states, "edge state out of range");
  }
};

/// Construction marginals: node[l] = P(concept l constructed), edge(a,b)
/// symmetric with zero diagonal. tested masks flag entries with evidence;
/// untested entries carry the uninformative 0.5.
struct CognitiveStructure {
  int n_concepts = 0;
  Eigen::VectorXd node_marginals;      // L
  Eigen::MatrixXd edge_marginals;      // L x L symmetric, zero diagonal
  std::vector<bool> node_tested;       // L
  std::vector<bool> edge_tested_upper; // L*(L-1)/2

  CognitiveStructure() = default;
  explicit CognitiveStructure(int L)
      : n_concepts(L),
        node_marginals(Eigen::VectorXd::Constant(L, 0.5)),
        edge_marginals(Eigen::MatrixXd::Constant(L, L, 0.5)),
        node_tested(L, false),
        edge_tested_upper(static_cast<std::size_t>(n_upper_pairs(L)), false) {
    edge_marginals.diagonal().setZero();
  }

  double edge(int a, int b) const { return a == b ? 0.0 : edge_marginals(a, b); }
  void set_edge(int a, int b, double v) {
    require(a != b, "set_edge: self relation");
    edge_marginals(a, b) = v;
    edge_marginals(b, a) = v;
  }
  bool edge_is_tested(int a, int b) const {
    return a != b && edge_tested_upper[static_cast<std::size_t>(pair_index(a, b, n_concepts))];
  }

  void validate() const {
    require(node_marginals.size() == n_concepts, "node marginal size mismatch");
    require(edge_marginals.rows() == n_concepts && edge_marginals.cols() == n_concepts,
            "edge marginal shape mismatch");
    for (int l = 0; l < n_concepts; ++l)
      require(node_marginals[l] >= 0.0 && node_marginals[l] <= 1.0, "node marginal out of [0,1]");
    for (int a = 0; a < n_concepts; ++a) {
      require(edge_marginals(a, a) == 0.0, "nonzero diagonal");
      for (int b = a + 1; b < n_concepts; ++b) {
        require(edge_marginals(a, b) == edge_marginals(b, a), "asymmetric edge marginals");
        require(edge_marginals(a, b) >= 0.0 && edge_marginals(a, b) <= 1.0,
                "edge marginal out of [0,1]");
      }
    }
  }
};

/// Hard structure viewed as marginals (0/1 floats), for feeding discrete
/// samples or rule-based structures through marginal-based consumers.
inline CognitiveStructure to_marginals(const DiscreteStructure& g) {
  CognitiveStructure cs(g.n_concepts);
  const int top = g.n_states - 1;
  for (int l = 0; l < g.n_concepts; ++l) {
    cs.node_marginals[l] = g.node_states[l] == top ? 1.0 : 0.0;
    cs.node_tested[l] = true;
  }
  const auto pairs = upper_pairs(g.n_concepts);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    cs.set_edge(pairs[p].first, pairs[p].second,
                g.edge_states_upper[p] == top ? 1.0 : 0.0);
    cs.edge_tested_upper[p] = true;
  }
  return cs;
}

}  // namespace csg
