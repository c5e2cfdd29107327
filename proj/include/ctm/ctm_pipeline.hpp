#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "ctm/bn_estimation.hpp"
#include "ctm/core.hpp"
#include "ctm/factored_mdp.hpp"
#include "ctm/graph.hpp"
#include "ctm/parallel.hpp"
#include "ctm/structure_learning.hpp"

namespace ctm {

/// M environments sharing spaces and the initial distribution, plus the
/// ground-truth causal graph and model when the class is synthetic.
class EnvironmentClass {
 public:
  EnvironmentClass() = default;

  explicit EnvironmentClass(std::vector<Environment> environments,
                            std::optional<CausalGraph> causal_graph = std::nullopt,
                            std::optional<FactoredTransitionModel> causal_model = std::nullopt)
      : environments_(std::move(environments)),
        causal_graph_(std::move(causal_graph)),
        causal_model_(std::move(causal_model)) {
    if (environments_.empty()) throw Error(ErrorKind::kEmptyInput, "a class needs M >= 1");
    const Environment& first = environments_.front();
    for (const Environment& env : environments_) {
      if (!same_spaces(env.model, first.model)) {
        throw Error(ErrorKind::kDimensionMismatch, "class members must share spaces");
      }
      if (env.initial_distribution != first.initial_distribution) {
        throw Error(ErrorKind::kInvalidParameter, "class members must share the initial distribution");
      }
    }
    if (causal_model_ && !same_spaces(*causal_model_, first.model)) {
      throw Error(ErrorKind::kDimensionMismatch, "causal model does not match the class spaces");
    }
    if (causal_graph_) require_matching_graph(*causal_graph_, state_space(), action_space());
  }

  std::size_t size() const { return environments_.size(); }
  const std::vector<Environment>& environments() const { return environments_; }
  const Environment& environment(std::size_t i) const { return environments_.at(i); }
  const FactoredSpace& state_space() const { return environments_.front().model.state_space(); }
  const FactoredSpace& action_space() const { return environments_.front().model.action_space(); }
  const std::vector<double>& initial_distribution() const { return environments_.front().initial_distribution; }
  const std::optional<CausalGraph>& causal_graph() const { return causal_graph_; }
  const std::optional<FactoredTransitionModel>& causal_model() const { return causal_model_; }

  std::vector<const FactoredTransitionModel*> models() const {
    std::vector<const FactoredTransitionModel*> out;
    for (const Environment& env : environments_) out.push_back(&env.model);
    return out;
  }

 private:
  std::vector<Environment> environments_;
  std::optional<CausalGraph> causal_graph_;
  std::optional<FactoredTransitionModel> causal_model_;
};

/// P_M(Y | X) = (1/M) sum_i P_i(Y | X): each query picks a member uniformly.
/// A single-member mixture draws nothing extra, so it replays that member's
/// sampler exactly.
class MixtureSampler {
 public:
  explicit MixtureSampler(std::vector<const FactoredTransitionModel*> members) : members_(std::move(members)) {
    if (members_.empty()) throw Error(ErrorKind::kEmptyInput, "mixture of zero models");
  }
  explicit MixtureSampler(const EnvironmentClass& cls) : MixtureSampler(cls.models()) {}

  FactoredSpace state_space() const { return members_.front()->state_space(); }
  FactoredSpace action_space() const { return members_.front()->action_space(); }

  int sample_feature(std::span<const int> x, std::size_t j, Rng& rng) const {
    const std::size_t i = members_.size() == 1 ? 0 : uniform_index(rng, members_.size());
    return members_[i]->sample_feature(x, j, rng);
  }

 private:
  std::vector<const FactoredTransitionModel*> members_;
};

inline MixtureSampler mixture_sampler(const EnvironmentClass& cls) { return MixtureSampler(cls); }

/// Exact mixture dynamics: the average of the members' dense rows.
inline TabularTransitionModel mixture_tabular(const EnvironmentClass& cls) {
  std::vector<double> sum;
  for (const Environment& env : cls.environments()) {
    const TabularTransitionModel t = to_tabular(env.model);
    if (sum.empty()) sum.assign(t.data().size(), 0.0);
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += t.data()[k];
  }
  for (double& v : sum) v /= static_cast<double>(cls.size());
  return TabularTransitionModel(cls.state_space().size(), cls.action_space().size(), std::move(sum));
}

// ---------------------------------------------------------------------------
// Budgets
// ---------------------------------------------------------------------------

struct Budget {
  std::uint64_t structure_samples = 0;  // K' per environment
  std::uint64_t bn_samples = 0;         // K''
  double c_structure = 1.0;
  double c_bn = 1.0;
  double eps = 0.0;
  double delta = 0.0;
  std::size_t environments = 0;
  std::size_t state_dims = 0;
  std::size_t action_dims = 0;
  int arity = 0;
  std::size_t sparsity = 0;
  double structure_eps = 0.0;  // eps / (3 d_S Z)
  double test_delta = 0.0;     // delta / (2 M d_S^2 d_A)
  double bn_delta = 0.0;       // delta / 2
};

/**
 * K'  = ceil(C'  d_S^2 Z^2 n ln(2 M d_S^2 d_A / delta) / eps^2)
 * K'' = ceil(C'' d_S^3 n^{3Z+1} ln(4 d_S n^Z / delta) / eps^2)
 * Natural logarithms throughout.
 */
inline Budget compute_budgets(double eps, double delta, std::size_t environments, std::size_t state_dims,
                              std::size_t action_dims, int arity, std::size_t sparsity, double c_structure = 1.0,
                              double c_bn = 1.0) {
  if (!(eps > 0.0)) throw Error(ErrorKind::kInvalidParameter, "eps must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorKind::kInvalidParameter, "delta must lie in (0, 1)");
  if (environments < 1 || state_dims < 1 || action_dims < 1 || arity < 1 || sparsity < 1) {
    throw Error(ErrorKind::kInvalidParameter, "M, d_S, d_A, n and Z must all be >= 1");
  }
  if (!(c_structure > 0.0) || !(c_bn > 0.0)) throw Error(ErrorKind::kInvalidParameter, "constants must be positive");

  const double m = static_cast<double>(environments);
  const double ds = static_cast<double>(state_dims);
  const double da = static_cast<double>(action_dims);
  const double n = arity;
  const double z = static_cast<double>(sparsity);

  Budget b;
  b.c_structure = c_structure;
  b.c_bn = c_bn;
  b.eps = eps;
  b.delta = delta;
  b.environments = environments;
  b.state_dims = state_dims;
  b.action_dims = action_dims;
  b.arity = arity;
  b.sparsity = sparsity;
  const double k1 = std::ceil(c_structure * ds * ds * z * z * n * std::log(2.0 * m * ds * ds * da / delta) / (eps * eps));
  const double k2 = std::ceil(c_bn * ds * ds * ds * std::pow(n, 3.0 * z + 1.0) *
                              std::log(4.0 * ds * std::pow(n, z) / delta) / (eps * eps));
  b.structure_samples = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(k1));
  b.bn_samples = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(k2));
  b.structure_eps = eps / (3.0 * ds * z);
  b.test_delta = delta / (2.0 * m * ds * ds * da);
  b.bn_delta = delta / 2.0;
  return b;
}

// ---------------------------------------------------------------------------
// Causal transition model estimation
// ---------------------------------------------------------------------------

struct CtmOptions {
  std::uint64_t structure_samples = 1;  // K' per environment
  std::uint64_t bn_samples = 1;         // K''
  double structure_eps = 0.1;           // tester threshold
  std::uint64_t seed = 0;
  unsigned jobs = 1;
};

struct CtmResult {
  CausalGraph graph;
  FactoredTransitionModel model;
  std::vector<StructureReport> reports;
  std::uint64_t structure_samples_used = 0;
  std::uint64_t bn_samples_used = 0;
  std::uint64_t total_samples = 0;
  std::uint64_t per_cell = 0;
  std::optional<Budget> budget;
  CtmOptions options;
};

/// Seed of the structure phase of environment i.
inline std::uint64_t structure_seed(std::uint64_t seed, std::size_t env) { return derive_seed(seed, {1, env}); }
/// Seed of the Bayesian-network phase.
inline std::uint64_t bn_seed(std::uint64_t seed) { return derive_seed(seed, {2}); }

/**
 * Estimates each member's dependency graph from K' uniform-input samples,
 * intersects them, then fits the network over the intersection from K''
 * samples of the uniform mixture of the members.
 */
inline CtmResult estimate_ctm(const EnvironmentClass& cls, const CtmOptions& options) {
  CtmResult result;
  result.options = options;
  result.reports.resize(cls.size());
  parallel_for(cls.size(), options.jobs, [&](std::size_t i) {
    Rng rng(structure_seed(options.seed, i));
    result.reports[i] = estimate_structure(cls.environment(i).model, options.structure_samples, options.structure_eps, rng);
  });
  std::vector<CausalGraph> graphs;
  for (const StructureReport& r : result.reports) {
    graphs.push_back(r.graph);
    result.structure_samples_used += r.samples;
  }
  result.graph = intersect_graphs(graphs);

  BnEstimate bn = estimate_bn(MixtureSampler(cls), result.graph, options.bn_samples, bn_seed(options.seed));
  result.model = std::move(bn.model);
  result.bn_samples_used = bn.samples_used;
  result.per_cell = bn.per_cell;
  result.total_samples = result.structure_samples_used + result.bn_samples_used;
  return result;
}

/// Budget-driven variant: K', K'' from compute_budgets and tester threshold
/// eps / (3 d_S Z).
inline CtmResult estimate_ctm(const EnvironmentClass& cls, double eps, double delta, double c_structure, double c_bn,
                              std::size_t sparsity, std::uint64_t seed, unsigned jobs = 1) {
  const Budget budget = compute_budgets(eps, delta, cls.size(), cls.state_space().d, cls.action_space().d,
                                        cls.state_space().n, sparsity, c_structure, c_bn);
  CtmOptions options{budget.structure_samples, budget.bn_samples, budget.structure_eps, seed, jobs};
  CtmResult result = estimate_ctm(cls, options);
  result.budget = budget;
  return result;
}

// ---------------------------------------------------------------------------
// Diagnostics for the structural assumptions
// ---------------------------------------------------------------------------

/// lambda = max_i sup_x || P_G(. | x) - P_i(. | x) ||_1.
inline double lambda_sufficiency(const EnvironmentClass& cls, const FactoredTransitionModel& causal_model) {
  double lambda = 0.0;
  for (const Environment& env : cls.environments()) {
    lambda = std::max(lambda, sup_l1_distance(causal_model, env.model));
  }
  return lambda;
}

struct EvennessReport {
  /// max_{x, y_j} | mean_i P_i(y_j | x) / P_G,j(y_j | x[Z_j]) - 1 |, per feature j.
  std::vector<double> per_feature;
  /// The same ratio on full next-state rows.
  double joint = 0.0;
  /// max_x || mean_i P_i,j(. | x) - P_G,j(. | x) ||_1, per feature j.
  std::vector<double> per_feature_l1;

  double max_per_feature() const {
    return per_feature.empty() ? 0.0 : *std::max_element(per_feature.begin(), per_feature.end());
  }
};

inline EvennessReport evenness_residual(const EnvironmentClass& cls, const FactoredTransitionModel& causal_model) {
  if (!same_spaces(causal_model, cls.environment(0).model)) {
    throw Error(ErrorKind::kDimensionMismatch, "causal model does not match the class spaces");
  }
  const FactoredSpace& input = causal_model.input_space();
  const FactoredSpace& state = causal_model.state_space();
  require_dense_enumerable(state, input);
  const auto un = static_cast<std::size_t>(state.n);
  const double m = static_cast<double>(cls.size());

  auto ratio_term = [](double mean, double reference) {
    if (reference == 0.0) {
      if (mean > 0.0) {
        throw Error(ErrorKind::kDivisionByZeroSupport, "causal model has zero mass where an environment does not");
      }
      return 0.0;
    }
    return std::abs(mean / reference - 1.0);
  };

  EvennessReport report;
  report.per_feature.assign(state.d, 0.0);
  report.per_feature_l1.assign(state.d, 0.0);
  std::vector<int> x(input.d, 0);
  std::vector<double> mean(un);
  // ratios[i][j * n + y] = P_i,j(y | x) / P_G,j(y | x); the joint ratio is a
  // product of these, which avoids underflow of the full-row probabilities.
  std::vector<std::vector<double>> ratios(cls.size(), std::vector<double>(state.d * un, 0.0));
  std::vector<int> y(state.d, 0);
  for (std::size_t index = 0; index < input.size(); ++index) {
    decode(input, index, x);
    for (std::size_t j = 0; j < state.d; ++j) {
      const auto reference = causal_model.row(j, causal_model.parent_index(j, x));
      std::fill(mean.begin(), mean.end(), 0.0);
      for (std::size_t i = 0; i < cls.size(); ++i) {
        const auto& model = cls.environment(i).model;
        const auto row = model.row(j, model.parent_index(j, x));
        for (std::size_t v = 0; v < un; ++v) {
          mean[v] += row[v];
          ratios[i][j * un + v] = reference[v] == 0.0 ? (row[v] > 0.0 ? -1.0 : 0.0) : row[v] / reference[v];
        }
      }
      double l1 = 0.0;
      for (std::size_t v = 0; v < un; ++v) {
        mean[v] /= m;
        report.per_feature[j] = std::max(report.per_feature[j], ratio_term(mean[v], reference[v]));
        l1 += std::abs(mean[v] - reference[v]);
      }
      report.per_feature_l1[j] = std::max(report.per_feature_l1[j], l1);
    }
    for (std::size_t yi = 0; yi < state.size(); ++yi) {
      decode(state, yi, y);
      double mean_ratio = 0.0;
      bool support = true;
      for (std::size_t i = 0; i < cls.size(); ++i) {
        double ratio = 1.0;
        for (std::size_t j = 0; j < state.d; ++j) {
          const double r = ratios[i][j * un + static_cast<std::size_t>(y[j])];
          if (r < 0.0) support = false;
          ratio *= r;
        }
        mean_ratio += ratio;
      }
      if (!support) {
        throw Error(ErrorKind::kDivisionByZeroSupport, "causal model has zero mass where an environment does not");
      }
      report.joint = std::max(report.joint, std::abs(mean_ratio / m - 1.0));
    }
  }
  return report;
}

struct DiversityResult {
  bool diverse = false;
  std::optional<Edge> witness;  // an edge in (intersection XOR declared graph)
};

/// Checks that the members' ground-truth graphs intersect to the declared
/// causal graph.
inline DiversityResult diversity_check(const EnvironmentClass& cls) {
  if (!cls.causal_graph()) throw Error(ErrorKind::kMissingGroundTruth, "class declares no causal graph");
  std::vector<CausalGraph> graphs;
  for (const Environment& env : cls.environments()) {
    if (env.true_graph.state_dims() == 0) {
      throw Error(ErrorKind::kMissingGroundTruth, "environment " + std::to_string(env.id) + " has no true graph");
    }
    graphs.push_back(env.true_graph);
  }
  const CausalGraph intersection = intersect_graphs(graphs);
  const auto witness = first_difference(intersection, *cls.causal_graph());
  return {!witness.has_value(), witness};
}

}  // namespace ctm
