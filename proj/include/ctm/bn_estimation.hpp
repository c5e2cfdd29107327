#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ctm/core.hpp"
#include "ctm/factored_mdp.hpp"
#include "ctm/graph.hpp"

namespace ctm {

/// K' = ceil(K / (d_S n^Z)).
inline std::uint64_t per_cell_budget(std::uint64_t total, std::size_t state_dims, int arity, std::size_t sparsity) {
  if (total < 1) throw Error(ErrorKind::kInvalidParameter, "BN estimation needs K >= 1");
  if (state_dims < 1 || arity < 2) throw Error(ErrorKind::kInvalidParameter, "need d_S >= 1 and n >= 2");
  const std::uint64_t cells = saturating_mul(state_dims, saturating_pow(static_cast<std::uint64_t>(arity), sparsity));
  return (total + cells - 1) / cells;
}

/// N(X[Z_j] = x, Y[j] = y), one block of n^{|Z_j|} * n counts per feature.
struct CountTable {
  std::vector<std::vector<std::uint64_t>> counts;
  std::uint64_t per_cell = 0;
};

struct BnEstimate {
  FactoredTransitionModel model;
  CountTable counts;
  std::uint64_t budget = 0;        // requested K
  std::uint64_t per_cell = 0;      // K'
  std::uint64_t samples_used = 0;  // sum_j n^{|Z_j|} K', may exceed K
  std::uint64_t seed = 0;
};

inline void require_matching_graph(const CausalGraph& graph, const FactoredSpace& state, const FactoredSpace& action) {
  if (graph.state_dims() != state.d || graph.action_dims() != action.d || graph.arity() != state.n) {
    throw Error(ErrorKind::kDimensionMismatch, "graph does not match the sampler spaces");
  }
}

/// Independent stream of cell (j, parent assignment).
inline std::uint64_t cell_seed(std::uint64_t seed, std::size_t output, std::size_t parent_index) {
  return derive_seed(seed, {static_cast<std::uint64_t>(output), static_cast<std::uint64_t>(parent_index)});
}

/// Draws K' values of Y[j] with X[scope] pinned to `parent_values` and every
/// other input feature uniform.
template <ConditionalSampler Sampler>
std::vector<std::uint64_t> estimate_cell(const Sampler& sampler, std::size_t output,
                                         std::span<const std::size_t> scope, std::span<const int> parent_values,
                                         std::uint64_t per_cell, std::uint64_t seed) {
  const FactoredSpace state = sampler.state_space();
  const std::size_t inputs = state.d + sampler.action_space().d;
  const auto n = static_cast<std::size_t>(state.n);
  std::vector<bool> pinned(inputs, false);
  std::vector<int> x(inputs, 0);
  for (std::size_t k = 0; k < scope.size(); ++k) {
    pinned[scope[k]] = true;
    x[scope[k]] = parent_values[k];
  }
  std::vector<std::uint64_t> counts(n, 0);
  Rng rng(seed);
  for (std::uint64_t k = 0; k < per_cell; ++k) {
    for (std::size_t z = 0; z < inputs; ++z) {
      if (!pinned[z]) x[z] = static_cast<int>(uniform_index(rng, n));
    }
    ++counts[static_cast<std::size_t>(sampler.sample_feature(x, output, rng))];
  }
  return counts;
}

/**
 * Fits the CPTs of a Bayesian network with fixed structure `graph`, using the
 * generative model to pin each parent configuration. Every cell receives the
 * same K' = per_cell_budget(K, d_S, n, max in-degree of graph) draws, and
 * P_j(y | x) = N(x, y) / K'.
 */
template <ConditionalSampler Sampler>
BnEstimate estimate_bn(const Sampler& sampler, const CausalGraph& graph, std::uint64_t budget, std::uint64_t seed) {
  const FactoredSpace state = sampler.state_space();
  const FactoredSpace action = sampler.action_space();
  require_matching_graph(graph, state, action);
  const int n = state.n;
  const auto un = static_cast<std::size_t>(n);
  const std::uint64_t per_cell = per_cell_budget(budget, state.d, n, graph.max_in_degree());

  BnEstimate result;
  result.budget = budget;
  result.per_cell = per_cell;
  result.seed = seed;
  result.counts.per_cell = per_cell;

  std::vector<std::vector<std::size_t>> scopes = scopes_of(graph);
  std::vector<std::vector<double>> cpts(state.d);
  for (std::size_t j = 0; j < state.d; ++j) {
    const auto& scope = scopes[j];
    const FactoredSpace parent_space = scope.empty() ? FactoredSpace(1, n) : FactoredSpace(scope.size(), n);
    const std::size_t rows = scope.empty() ? 1 : parent_space.size();
    std::vector<int> parents(scope.size(), 0);
    std::vector<std::uint64_t> table;
    table.reserve(rows * un);
    cpts[j].reserve(rows * un);
    for (std::size_t r = 0; r < rows; ++r) {
      if (!scope.empty()) decode(parent_space, r, parents);
      const auto counts = estimate_cell(sampler, j, scope, parents, per_cell, cell_seed(seed, j, r));
      for (std::size_t y = 0; y < un; ++y) {
        table.push_back(counts[y]);
        cpts[j].push_back(static_cast<double>(counts[y]) / static_cast<double>(per_cell));
      }
      result.samples_used += per_cell;
    }
    result.counts.counts.push_back(std::move(table));
  }
  result.model = FactoredTransitionModel(state, action, std::move(scopes), std::move(cpts));
  return result;
}

/// sup_x || P_est(. | x) - P_truth(. | x) ||_1 over full next-state rows.
inline double bn_l1_error(const FactoredTransitionModel& estimate, const FactoredTransitionModel& truth) {
  return sup_l1_distance(estimate, truth);
}

/// sum_j max_x || P_est,j(. | x) - P_truth,j(. | x) ||_1, an upper bound on
/// bn_l1_error (L1 distance of product distributions is at most the sum of the
/// factor distances).
inline double factor_sum_bound(const FactoredTransitionModel& estimate, const FactoredTransitionModel& truth) {
  if (!same_spaces(estimate, truth)) throw Error(ErrorKind::kDimensionMismatch, "models differ in spaces");
  const FactoredSpace& input = estimate.input_space();
  require_dense_enumerable(estimate.state_space(), input);
  std::vector<int> x(input.d, 0);
  double total = 0.0;
  for (std::size_t j = 0; j < estimate.state_space().d; ++j) {
    double worst = 0.0;
    for (std::size_t index = 0; index < input.size(); ++index) {
      decode(input, index, x);
      const auto a = estimate.row(j, estimate.parent_index(j, x));
      const auto b = truth.row(j, truth.parent_index(j, x));
      double distance = 0.0;
      for (std::size_t y = 0; y < a.size(); ++y) distance += std::abs(a[y] - b[y]);
      worst = std::max(worst, distance);
    }
    total += worst;
  }
  return total;
}

/**
 * The model estimate_bn converges to when sampling from the uniform mixture of
 * `models` over `graph`: for each feature j and parent assignment x[Z_j], the
 * average of P_i,j(. | x) over the members and over uniform unpinned inputs.
 */
inline FactoredTransitionModel bn_projection(std::span<const FactoredTransitionModel* const> models,
                                             const CausalGraph& graph) {
  if (models.empty()) throw Error(ErrorKind::kEmptyInput, "projection of an empty mixture");
  const FactoredSpace state = models.front()->state_space();
  const FactoredSpace action = models.front()->action_space();
  const FactoredSpace input = models.front()->input_space();
  require_matching_graph(graph, state, action);
  require_dense_enumerable(state, input);
  const auto un = static_cast<std::size_t>(state.n);

  auto scopes = scopes_of(graph);
  std::vector<std::vector<double>> cpts(state.d);
  std::vector<int> x(input.d, 0);
  for (std::size_t j = 0; j < state.d; ++j) {
    const std::size_t rows = static_cast<std::size_t>(saturating_pow(un, scopes[j].size()));
    std::vector<double> sums(rows * un, 0.0);
    std::vector<double> weights(rows, 0.0);
    for (std::size_t index = 0; index < input.size(); ++index) {
      decode(input, index, x);
      std::size_t r = 0;
      for (std::size_t z : scopes[j]) r = r * un + static_cast<std::size_t>(x[z]);
      for (const FactoredTransitionModel* m : models) {
        const auto row = m->row(j, m->parent_index(j, x));
        for (std::size_t y = 0; y < un; ++y) sums[r * un + y] += row[y];
        weights[r] += 1.0;
      }
    }
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t y = 0; y < un; ++y) sums[r * un + y] /= weights[r];
    }
    cpts[j] = std::move(sums);
  }
  return FactoredTransitionModel(state, action, std::move(scopes), std::move(cpts));
}

}  // namespace ctm
