// DOT export of a structure: constructed elements green, unconstructed red.
#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "csg/structure.hpp"

namespace csg {

inline std::string to_dot(const DiscreteStructure& g, const std::vector<std::string>& labels = {}) {
  const int top = g.n_states - 1;
  std::string out = "graph cognitive_structure {\n";
  for (int l = 0; l < g.n_concepts; ++l) {
    std::string name = l < static_cast<int>(labels.size()) ? labels[static_cast<std::size_t>(l)]
                                                           : "k" + std::to_string(l);
    out += "  n" + std::to_string(l) + " [label=\"" + name + "\", color=" +
           (g.node_states[static_cast<std::size_t>(l)] == top ? "green" : "red") + "];\n";
  }
  const auto pairs = upper_pairs(g.n_concepts);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    out += "  n" + std::to_string(pairs[p].first) + " -- n" + std::to_string(pairs[p].second) +
           " [color=" + (g.edge_states_upper[p] == top ? "green" : "red") + "];\n";
  }
  out += "}\n";
  return out;
}

inline void export_dot(const DiscreteStructure& g, const std::string& path,
                       const std::vector<std::string>& labels = {}) {
  std::ofstream out(path);
  require(out.good(), "cannot write ", path);
  out << to_dot(g, labels);
  require(out.good(), "write failed: ", path);
}

}  // namespace csg
