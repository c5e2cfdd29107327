#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <optional>
#include <regex>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ctm/core.hpp"

namespace ctm {

/// Directed edge X[input] -> Y[output].
struct Edge {
  std::size_t input = 0;
  std::size_t output = 0;

  auto operator<=>(const Edge&) const = default;
};

/**
 * Bipartite dependency graph from the state-action features X (d_S + d_A of
 * them) to the next-state features Y (d_S of them).
 *
 * Only X -> Y edges are representable, so the bipartite/directed invariant
 * holds by construction. Edges are stored in an adjacency bitmap indexed by
 * (input, output); iteration order is lexicographic in (input, output).
 */
class CausalGraph {
 public:
  CausalGraph() = default;

  CausalGraph(std::size_t state_dims, std::size_t action_dims, int arity,
              std::optional<std::size_t> max_in_degree = std::nullopt)
      : state_dims_(state_dims),
        action_dims_(action_dims),
        arity_(arity),
        max_in_degree_(max_in_degree),
        adjacency_((state_dims + action_dims) * state_dims, false) {
    if (state_dims == 0) throw Error(ErrorKind::kInvalidParameter, "graph needs d_S >= 1");
    if (arity < 2) throw Error(ErrorKind::kInvalidParameter, "graph needs n >= 2");
  }

  std::size_t state_dims() const { return state_dims_; }
  std::size_t action_dims() const { return action_dims_; }
  std::size_t input_dims() const { return state_dims_ + action_dims_; }
  int arity() const { return arity_; }
  std::optional<std::size_t> sparsity() const { return max_in_degree_; }

  void add_edge(std::size_t input, std::size_t output) {
    check_endpoints(input, output);
    if (!has_edge(input, output) && max_in_degree_ && in_degree(output) + 1 > *max_in_degree_) {
      throw Error(ErrorKind::kInvalidParameter,
                  "edge would exceed in-degree bound " + std::to_string(*max_in_degree_) +
                      " at Y" + std::to_string(output));
    }
    adjacency_[slot(input, output)] = true;
  }
  void add_edge(Edge e) { add_edge(e.input, e.output); }

  void remove_edge(std::size_t input, std::size_t output) {
    check_endpoints(input, output);
    adjacency_[slot(input, output)] = false;
  }

  bool has_edge(std::size_t input, std::size_t output) const {
    check_endpoints(input, output);
    return adjacency_[slot(input, output)];
  }
  bool has_edge(Edge e) const { return has_edge(e.input, e.output); }

  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (std::size_t z = 0; z < input_dims(); ++z) {
      for (std::size_t j = 0; j < state_dims_; ++j) {
        if (adjacency_[slot(z, j)]) out.push_back({z, j});
      }
    }
    return out;
  }

  std::size_t edge_count() const {
    return static_cast<std::size_t>(std::count(adjacency_.begin(), adjacency_.end(), true));
  }

  /// Sorted parent set Z_j of output feature j.
  std::vector<std::size_t> parents(std::size_t output) const {
    std::vector<std::size_t> out;
    for (std::size_t z = 0; z < input_dims(); ++z) {
      if (has_edge(z, output)) out.push_back(z);
    }
    return out;
  }

  std::size_t in_degree(std::size_t output) const { return parents(output).size(); }

  std::size_t max_in_degree() const {
    std::size_t best = 0;
    for (std::size_t j = 0; j < state_dims_; ++j) best = std::max(best, in_degree(j));
    return best;
  }

  bool same_dimensions(const CausalGraph& other) const {
    return state_dims_ == other.state_dims_ && action_dims_ == other.action_dims_ &&
           arity_ == other.arity_;
  }

  /// Edge-set equality; the sparsity flag is metadata and not compared.
  friend bool operator==(const CausalGraph& a, const CausalGraph& b) {
    return a.same_dimensions(b) && a.adjacency_ == b.adjacency_;
  }

 private:
  std::size_t slot(std::size_t input, std::size_t output) const {
    return input * state_dims_ + output;
  }

  void check_endpoints(std::size_t input, std::size_t output) const {
    if (input >= input_dims() || output >= state_dims_) {
      throw Error(ErrorKind::kOutOfRange, "edge (" + std::to_string(input) + ", " +
                                              std::to_string(output) + ") outside graph dimensions");
    }
  }

  std::size_t state_dims_ = 0;
  std::size_t action_dims_ = 0;
  int arity_ = 2;
  std::optional<std::size_t> max_in_degree_;
  std::vector<bool> adjacency_;
};

inline void require_same_dimensions(const CausalGraph& a, const CausalGraph& b) {
  if (!a.same_dimensions(b)) {
    throw Error(ErrorKind::kDimensionMismatch, "graphs have different dimensions");
  }
}

inline CausalGraph intersect_graphs(std::span<const CausalGraph> graphs) {
  if (graphs.empty()) throw Error(ErrorKind::kEmptyInput, "intersection of zero graphs");
  CausalGraph result(graphs.front().state_dims(), graphs.front().action_dims(),
                     graphs.front().arity());
  for (const CausalGraph& g : graphs) require_same_dimensions(result, g);
  for (const Edge& e : graphs.front().edges()) {
    const bool everywhere = std::all_of(graphs.begin(), graphs.end(),
                                        [&](const CausalGraph& g) { return g.has_edge(e); });
    if (everywhere) result.add_edge(e);
  }
  return result;
}

/// Node sets are fixed and shared, so the edit distance is the size of the
/// edge symmetric difference.
inline std::size_t graph_edit_distance(const CausalGraph& a, const CausalGraph& b) {
  require_same_dimensions(a, b);
  std::size_t distance = 0;
  for (std::size_t z = 0; z < a.input_dims(); ++z) {
    for (std::size_t j = 0; j < a.state_dims(); ++j) {
      if (a.has_edge(z, j) != b.has_edge(z, j)) ++distance;
    }
  }
  return distance;
}

/// First edge present in `a` but not in `b`, if any.
inline std::optional<Edge> first_difference(const CausalGraph& a, const CausalGraph& b) {
  require_same_dimensions(a, b);
  for (std::size_t z = 0; z < a.input_dims(); ++z) {
    for (std::size_t j = 0; j < a.state_dims(); ++j) {
      if (a.has_edge(z, j) != b.has_edge(z, j)) return Edge{z, j};
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// DOT
// ---------------------------------------------------------------------------

inline std::string to_dot(const CausalGraph& g, const std::string& name = "causal") {
  std::ostringstream out;
  out << "digraph " << name << " {\n";
  out << "  graph [d_S=" << g.state_dims() << ", d_A=" << g.action_dims() << ", n=" << g.arity()
      << "];\n";
  for (std::size_t z = 0; z < g.input_dims(); ++z) out << "  X" << z << ";\n";
  for (std::size_t j = 0; j < g.state_dims(); ++j) out << "  Y" << j << ";\n";
  for (const Edge& e : g.edges()) out << "  X" << e.input << " -> Y" << e.output << ";\n";
  out << "}\n";
  return out.str();
}

/// Parses the format written by to_dot.
inline CausalGraph parse_dot(const std::string& text) {
  static const std::regex header(R"(d_S=(\d+),\s*d_A=(\d+),\s*n=(\d+))");
  static const std::regex edge(R"(X(\d+)\s*->\s*Y(\d+))");
  std::smatch match;
  if (!std::regex_search(text, match, header)) {
    throw Error(ErrorKind::kConfigError, "DOT graph is missing the [d_S, d_A, n] attributes");
  }
  CausalGraph g(std::stoul(match[1]), std::stoul(match[2]), std::stoi(match[3]));
  for (auto it = std::sregex_iterator(text.begin(), text.end(), edge); it != std::sregex_iterator();
       ++it) {
    g.add_edge(std::stoul((*it)[1]), std::stoul((*it)[2]));
  }
  return g;
}

}  // namespace ctm
