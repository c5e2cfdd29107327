#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "ctm/core.hpp"
#include "ctm/factored_mdp.hpp"
#include "ctm/graph.hpp"
#include "ctm/independence.hpp"

namespace ctm {

struct PairStatistic {
  Edge pair;
  TestVerdict test;
};

struct StructureReport {
  CausalGraph graph;
  std::vector<PairStatistic> pairs;  // ordered by (input, output)
  std::uint64_t samples = 0;
};

/**
 * Draws K iid (x, y) with x uniform over the state-action space, then tests
 * every (X[z], Y[j]) pair on that one batch and keeps the Dependent pairs.
 */
template <ConditionalSampler Sampler>
StructureReport estimate_structure(const Sampler& sampler, std::uint64_t samples, double eps, Rng& rng) {
  if (samples < 1) throw Error(ErrorKind::kInvalidParameter, "structure estimation needs K >= 1");
  const FactoredSpace state = sampler.state_space();
  const FactoredSpace action = sampler.action_space();
  const std::size_t inputs = state.d + action.d;
  const int n = state.n;

  std::vector<EmpiricalJoint> joints(inputs * state.d, EmpiricalJoint(n));
  std::vector<int> x(inputs, 0);
  std::vector<int> y(state.d, 0);
  for (std::uint64_t k = 0; k < samples; ++k) {
    for (std::size_t z = 0; z < inputs; ++z) x[z] = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(n)));
    for (std::size_t j = 0; j < state.d; ++j) y[j] = sampler.sample_feature(x, j, rng);
    for (std::size_t z = 0; z < inputs; ++z) {
      for (std::size_t j = 0; j < state.d; ++j) joints[z * state.d + j].accumulate(x[z], y[j]);
    }
  }

  StructureReport report{CausalGraph(state.d, action.d, n), {}, samples};
  report.pairs.reserve(joints.size());
  for (std::size_t z = 0; z < inputs; ++z) {
    for (std::size_t j = 0; j < state.d; ++j) {
      const TestVerdict test = independence_test(joints[z * state.d + j], eps);
      report.pairs.push_back({{z, j}, test});
      if (test.verdict == Verdict::kDependent) report.graph.add_edge(z, j);
    }
  }
  return report;
}

inline StructureReport estimate_structure(const Environment& env, std::uint64_t samples, double eps, Rng& rng) {
  return estimate_structure(env.model, samples, eps, rng);
}

/// Exact L1 distance between the joint of (X[z], Y[j]) under uniform X and the
/// product of its marginals. Inputs outside the scope of Y[j] are exactly
/// independent and return 0 without summation round-off.
inline double exact_dependence(const FactoredTransitionModel& model, std::size_t input, std::size_t output) {
  const auto& scope = model.scope(output);
  const auto position = std::find(scope.begin(), scope.end(), input);
  if (position == scope.end()) return 0.0;
  const auto offset = static_cast<std::size_t>(position - scope.begin());

  const int n = model.arity();
  const auto un = static_cast<std::size_t>(n);
  const FactoredSpace parent_space(scope.size(), n);
  const std::size_t rows = model.row_count(output);
  std::vector<int> parents(scope.size(), 0);
  std::vector<double> joint(un * un, 0.0);
  const double weight = 1.0 / static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    decode(parent_space, r, parents);
    const auto a = static_cast<std::size_t>(parents[offset]);
    const auto row = model.row(output, r);
    for (std::size_t b = 0; b < un; ++b) joint[a * un + b] += weight * row[b];
  }
  return l1_to_product_of_marginals(joint, n);
}

/// All pair dependences, indexed [input][output].
inline std::vector<std::vector<double>> dependence_matrix(const FactoredTransitionModel& model) {
  const std::size_t inputs = model.input_space().d;
  std::vector<std::vector<double>> out(inputs, std::vector<double>(model.state_space().d, 0.0));
  for (std::size_t z = 0; z < inputs; ++z) {
    for (std::size_t j = 0; j < model.state_space().d; ++j) out[z][j] = exact_dependence(model, z, j);
  }
  return out;
}

/// Edges whose exact dependence is at least eps (and nonzero, so eps = 0
/// yields exactly the pairs with any dependence at all).
inline CausalGraph epsilon_dependency_subgraph(const FactoredTransitionModel& model, double eps) {
  require_dense_enumerable(model.state_space(), model.input_space());
  CausalGraph g(model.state_space().d, model.action_space().d, model.arity());
  for (std::size_t z = 0; z < model.input_space().d; ++z) {
    for (std::size_t j = 0; j < model.state_space().d; ++j) {
      const double d = exact_dependence(model, z, j);
      if (d > 0.0 && d >= eps) g.add_edge(z, j);
    }
  }
  return g;
}

}  // namespace ctm
