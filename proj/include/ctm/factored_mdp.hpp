#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctm/core.hpp"
#include "ctm/graph.hpp"

namespace ctm {

/// Tolerance for "row sums to one" on stored conditional distributions.
inline constexpr double kRowSumTolerance = 1e-9;

/// d discrete features sharing the arity n.
struct FactoredSpace {
  std::size_t d = 1;
  int n = 2;

  FactoredSpace() = default;
  FactoredSpace(std::size_t dims, int arity) : d(dims), n(arity) {
    if (d < 1) throw Error(ErrorKind::kInvalidParameter, "feature space needs d >= 1");
    if (n < 2) throw Error(ErrorKind::kInvalidParameter, "feature space needs n >= 2");
    if (saturating_pow(static_cast<std::uint64_t>(n), d) > kEnumerationLimit) {
      throw Error(ErrorKind::kEnumerationTooLarge,
                  "n^d exceeds the enumeration limit for d=" + std::to_string(d) +
                      ", n=" + std::to_string(n));
    }
  }

  std::size_t size() const {
    return static_cast<std::size_t>(saturating_pow(static_cast<std::uint64_t>(n), d));
  }

  bool operator==(const FactoredSpace&) const = default;
};

/// Concatenation of the state and action spaces (the input X of a transition).
inline FactoredSpace joint_space(const FactoredSpace& state, const FactoredSpace& action) {
  if (state.n != action.n) {
    throw Error(ErrorKind::kInvalidParameter, "state and action features must share one arity");
  }
  return FactoredSpace(state.d + action.d, state.n);
}

/// Lexicographic index of `values` (first feature most significant).
inline std::size_t encode(const FactoredSpace& space, std::span<const int> values) {
  std::size_t index = 0;
  for (int v : values) index = index * static_cast<std::size_t>(space.n) + static_cast<std::size_t>(v);
  return index;
}

inline void decode(const FactoredSpace& space, std::size_t index, std::span<int> out) {
  for (std::size_t k = space.d; k-- > 0;) {
    out[k] = static_cast<int>(index % static_cast<std::size_t>(space.n));
    index /= static_cast<std::size_t>(space.n);
  }
}

struct FeatureVector {
  FactoredSpace space;
  std::vector<int> values;

  FeatureVector() = default;
  FeatureVector(FactoredSpace s, std::vector<int> v) : space(s), values(std::move(v)) {
    if (values.size() != space.d) {
      throw Error(ErrorKind::kDimensionMismatch, "feature vector length " +
                                                     std::to_string(values.size()) + " != d " +
                                                     std::to_string(space.d));
    }
    for (int value : values) {
      if (value < 0 || value >= space.n) {
        throw Error(ErrorKind::kOutOfRange, "feature value " + std::to_string(value) +
                                                " outside [0, " + std::to_string(space.n) + ")");
      }
    }
  }

  std::size_t index() const { return encode(space, values); }

  /// Projection X[Z] onto a sorted index set.
  std::vector<int> project(std::span<const std::size_t> scope) const {
    std::vector<int> out;
    out.reserve(scope.size());
    for (std::size_t z : scope) out.push_back(values.at(z));
    return out;
  }

  bool operator==(const FeatureVector&) const = default;
};

inline std::vector<FeatureVector> enumerate_assignments(const FactoredSpace& space,
                                                        std::uint64_t limit = kEnumerationLimit) {
  const std::uint64_t count = saturating_pow(static_cast<std::uint64_t>(space.n), space.d);
  if (count > limit) throw Error(ErrorKind::kEnumerationTooLarge, "n^d exceeds the limit");
  std::vector<FeatureVector> out;
  out.reserve(count);
  std::vector<int> values(space.d, 0);
  for (std::size_t index = 0; index < count; ++index) {
    decode(space, index, values);
    out.emplace_back(space, values);
  }
  return out;
}

/// Anything that can draw one next-state feature given a full state-action
/// input; the generative-model access the estimators are written against.
template <class S>
concept ConditionalSampler = requires(const S& sampler, std::span<const int> x, std::size_t j,
                                      Rng& rng) {
  { sampler.state_space() } -> std::convertible_to<FactoredSpace>;
  { sampler.action_space() } -> std::convertible_to<FactoredSpace>;
  { sampler.sample_feature(x, j, rng) } -> std::convertible_to<int>;
};

/**
 * P(Y | X) = prod_j P_j(Y[j] | X[Z_j]).
 *
 * cpts[j] stores n^{|Z_j|} rows of n probabilities; the row for a parent
 * assignment is its lexicographic index over the sorted scope Z_j.
 * Immutable after construction.
 */
class FactoredTransitionModel {
 public:
  FactoredTransitionModel() = default;

  FactoredTransitionModel(FactoredSpace state, FactoredSpace action,
                          std::vector<std::vector<std::size_t>> scopes,
                          std::vector<std::vector<double>> cpts,
                          std::optional<std::size_t> sparsity = std::nullopt)
      : state_(state),
        action_(action),
        input_(joint_space(state, action)),
        scopes_(std::move(scopes)),
        cpts_(std::move(cpts)),
        sparsity_(sparsity) {
    validate();
  }

  const FactoredSpace& state_space() const { return state_; }
  const FactoredSpace& action_space() const { return action_; }
  const FactoredSpace& input_space() const { return input_; }
  int arity() const { return state_.n; }
  std::optional<std::size_t> sparsity() const { return sparsity_; }

  const std::vector<std::size_t>& scope(std::size_t j) const { return scopes_.at(j); }
  const std::vector<std::vector<std::size_t>>& scopes() const { return scopes_; }
  const std::vector<double>& cpt(std::size_t j) const { return cpts_.at(j); }
  const std::vector<std::vector<double>>& cpts() const { return cpts_; }

  std::size_t row_count(std::size_t j) const {
    return cpts_[j].size() / static_cast<std::size_t>(arity());
  }

  std::span<const double> row(std::size_t j, std::size_t parent_index) const {
    const auto n = static_cast<std::size_t>(arity());
    return std::span<const double>(cpts_[j]).subspan(parent_index * n, n);
  }

  std::size_t parent_index(std::size_t j, std::span<const int> x) const {
    std::size_t index = 0;
    for (std::size_t z : scopes_[j]) {
      index = index * static_cast<std::size_t>(arity()) + static_cast<std::size_t>(x[z]);
    }
    return index;
  }

  int sample_feature(std::span<const int> x, std::size_t j, Rng& rng) const {
    return sample_categorical(row(j, parent_index(j, x)), rng);
  }

  /// Per-feature draws in increasing j, independent given x.
  void sample(std::span<const int> x, Rng& rng, std::span<int> y) const {
    for (std::size_t j = 0; j < state_.d; ++j) y[j] = sample_feature(x, j, rng);
  }

  CausalGraph graph() const {
    CausalGraph g(state_.d, action_.d, arity());
    for (std::size_t j = 0; j < state_.d; ++j) {
      for (std::size_t z : scopes_[j]) g.add_edge(z, j);
    }
    return g;
  }

 private:
  void validate() const {
    if (scopes_.size() != state_.d || cpts_.size() != state_.d) {
      throw Error(ErrorKind::kDimensionMismatch, "need one scope and one CPT per state feature");
    }
    const auto n = static_cast<std::size_t>(arity());
    for (std::size_t j = 0; j < state_.d; ++j) {
      const auto& scope = scopes_[j];
      for (std::size_t k = 0; k < scope.size(); ++k) {
        if (scope[k] >= input_.d || (k > 0 && scope[k] <= scope[k - 1])) {
          throw Error(ErrorKind::kInvalidParameter,
                      "scope of Y" + std::to_string(j) + " must be sorted, unique, in range");
        }
      }
      if (sparsity_ && scope.size() > *sparsity_) {
        throw Error(ErrorKind::kInvalidParameter,
                    "scope of Y" + std::to_string(j) + " violates the sparsity bound");
      }
      const std::uint64_t rows = saturating_pow(n, scope.size());
      if (saturating_mul(rows, n) > kEnumerationLimit) {
        throw Error(ErrorKind::kEnumerationTooLarge, "CPT too large");
      }
      if (cpts_[j].size() != rows * n) {
        throw Error(ErrorKind::kDimensionMismatch,
                    "CPT of Y" + std::to_string(j) + " has the wrong number of entries");
      }
      for (std::size_t r = 0; r < rows; ++r) {
        double sum = 0.0;
        for (std::size_t y = 0; y < n; ++y) {
          const double p = cpts_[j][r * n + y];
          if (!(p >= 0.0) || p > 1.0 + kRowSumTolerance) {
            throw Error(ErrorKind::kInvalidParameter, "CPT entry outside [0, 1]");
          }
          sum += p;
        }
        if (std::abs(sum - 1.0) > kRowSumTolerance) {
          throw Error(ErrorKind::kInvalidParameter, "CPT row " + std::to_string(r) + " of Y" +
                                                        std::to_string(j) + " sums to " +
                                                        format_double(sum));
        }
      }
    }
  }

  FactoredSpace state_;
  FactoredSpace action_;
  FactoredSpace input_;
  std::vector<std::vector<std::size_t>> scopes_;
  std::vector<std::vector<double>> cpts_;
  std::optional<std::size_t> sparsity_;
};

inline bool same_spaces(const FactoredTransitionModel& a, const FactoredTransitionModel& b) {
  return a.state_space() == b.state_space() && a.action_space() == b.action_space();
}

/// Scopes Z_j read off a graph's parent sets.
inline std::vector<std::vector<std::size_t>> scopes_of(const CausalGraph& g) {
  std::vector<std::vector<std::size_t>> scopes;
  for (std::size_t j = 0; j < g.state_dims(); ++j) scopes.push_back(g.parents(j));
  return scopes;
}

/// Product of factors in increasing j. Both the factored and the dense paths
/// use this exact expression order, so they agree bit for bit.
inline double transition_prob(const FactoredTransitionModel& model, std::span<const int> x,
                              std::span<const int> y) {
  double p = 1.0;
  for (std::size_t j = 0; j < model.state_space().d; ++j) {
    p *= model.row(j, model.parent_index(j, x))[static_cast<std::size_t>(y[j])];
  }
  return p;
}

inline double transition_prob(const FactoredTransitionModel& model, const FeatureVector& x,
                              const FeatureVector& y) {
  if (x.space != model.input_space() || y.space != model.state_space()) {
    throw Error(ErrorKind::kDimensionMismatch, "x/y do not conform to the model spaces");
  }
  return transition_prob(model, std::span<const int>(x.values), std::span<const int>(y.values));
}

inline FeatureVector sample_transition(const FactoredTransitionModel& model, const FeatureVector& x,
                                       Rng& rng) {
  if (x.space != model.input_space()) {
    throw Error(ErrorKind::kDimensionMismatch, "x does not conform to the model input space");
  }
  std::vector<int> y(model.state_space().d);
  model.sample(x.values, rng, y);
  return FeatureVector(model.state_space(), std::move(y));
}

/// Fills `out` with P(. | x) over all n^{d_S} next states in lexicographic order.
inline void joint_row(const FactoredTransitionModel& model, std::span<const int> x,
                      std::vector<double>& out) {
  const FactoredSpace& state = model.state_space();
  const std::size_t count = state.size();
  out.assign(count, 0.0);
  std::vector<std::span<const double>> rows;
  rows.reserve(state.d);
  for (std::size_t j = 0; j < state.d; ++j) rows.push_back(model.row(j, model.parent_index(j, x)));
  std::vector<int> y(state.d, 0);
  for (std::size_t index = 0; index < count; ++index) {
    decode(state, index, y);
    double p = 1.0;
    for (std::size_t j = 0; j < state.d; ++j) p *= rows[j][static_cast<std::size_t>(y[j])];
    out[index] = p;
  }
}

inline void require_dense_enumerable(const FactoredSpace& state, const FactoredSpace& input) {
  const std::uint64_t entries = saturating_mul(saturating_pow(state.n, state.d),
                                               saturating_pow(input.n, input.d));
  if (entries > kEnumerationLimit) {
    throw Error(ErrorKind::kEnumerationTooLarge,
                "dense expansion would need " + std::to_string(entries) + " entries");
  }
}

/**
 * Dense P(s' | s, a). Rows are indexed by s * num_actions + a, which for a
 * flattened factored model is also the lexicographic index of x = (s, a).
 */
class TabularTransitionModel {
 public:
  TabularTransitionModel() = default;

  TabularTransitionModel(std::size_t num_states, std::size_t num_actions, std::vector<double> probs)
      : num_states_(num_states), num_actions_(num_actions), probs_(std::move(probs)) {
    if (num_states == 0 || num_actions == 0) {
      throw Error(ErrorKind::kInvalidParameter, "tabular model needs S, A >= 1");
    }
    if (probs_.size() != num_states * num_actions * num_states) {
      throw Error(ErrorKind::kDimensionMismatch, "tabular model has the wrong number of entries");
    }
    for (std::size_t r = 0; r < num_states * num_actions; ++r) {
      double sum = 0.0;
      for (std::size_t s = 0; s < num_states; ++s) {
        const double p = probs_[r * num_states + s];
        if (!(p >= 0.0)) throw Error(ErrorKind::kInvalidParameter, "negative probability");
        sum += p;
      }
      if (std::abs(sum - 1.0) > kRowSumTolerance) {
        throw Error(ErrorKind::kInvalidParameter,
                    "tabular row " + std::to_string(r) + " sums to " + format_double(sum));
      }
    }
  }

  std::size_t num_states() const { return num_states_; }
  std::size_t num_actions() const { return num_actions_; }

  std::span<const double> row(std::size_t state, std::size_t action) const {
    return std::span<const double>(probs_).subspan((state * num_actions_ + action) * num_states_,
                                                   num_states_);
  }

  double prob(std::size_t state, std::size_t action, std::size_t next) const {
    return row(state, action)[next];
  }

  const std::vector<double>& data() const { return probs_; }

 private:
  std::size_t num_states_ = 0;
  std::size_t num_actions_ = 0;
  std::vector<double> probs_;
};

inline TabularTransitionModel to_tabular(const FactoredTransitionModel& model) {
  require_dense_enumerable(model.state_space(), model.input_space());
  const std::size_t states = model.state_space().size();
  const std::size_t actions = model.action_space().size();
  const std::size_t inputs = model.input_space().size();
  std::vector<double> probs;
  probs.reserve(inputs * states);
  std::vector<int> x(model.input_space().d, 0);
  std::vector<double> row;
  for (std::size_t index = 0; index < inputs; ++index) {
    decode(model.input_space(), index, x);
    joint_row(model, x, row);
    probs.insert(probs.end(), row.begin(), row.end());
  }
  return TabularTransitionModel(states, actions, std::move(probs));
}

/// max_x sum_y |p(y|x) - q(y|x)|.
inline double sup_l1_distance(const FactoredTransitionModel& p, const FactoredTransitionModel& q) {
  if (!same_spaces(p, q)) throw Error(ErrorKind::kDimensionMismatch, "models differ in spaces");
  require_dense_enumerable(p.state_space(), p.input_space());
  const FactoredSpace& input = p.input_space();
  std::vector<int> x(input.d, 0);
  std::vector<double> row_p;
  std::vector<double> row_q;
  double best = 0.0;
  for (std::size_t index = 0; index < input.size(); ++index) {
    decode(input, index, x);
    joint_row(p, x, row_p);
    joint_row(q, x, row_q);
    double distance = 0.0;
    for (std::size_t y = 0; y < row_p.size(); ++y) distance += std::abs(row_p[y] - row_q[y]);
    best = std::max(best, distance);
  }
  return best;
}

inline double sup_l1_distance(const TabularTransitionModel& p, const TabularTransitionModel& q) {
  if (p.num_states() != q.num_states() || p.num_actions() != q.num_actions()) {
    throw Error(ErrorKind::kDimensionMismatch, "tabular models differ in size");
  }
  double best = 0.0;
  for (std::size_t s = 0; s < p.num_states(); ++s) {
    for (std::size_t a = 0; a < p.num_actions(); ++a) {
      const auto rp = p.row(s, a);
      const auto rq = q.row(s, a);
      double distance = 0.0;
      for (std::size_t k = 0; k < rp.size(); ++k) distance += std::abs(rp[k] - rq[k]);
      best = std::max(best, distance);
    }
  }
  return best;
}

inline std::vector<double> uniform_distribution(std::size_t size) {
  return std::vector<double>(size, 1.0 / static_cast<double>(size));
}

/// One member of a class: dynamics, ground-truth dependency graph and the
/// shared initial-state distribution.
struct Environment {
  int id = 0;
  FactoredTransitionModel model;
  CausalGraph true_graph;
  std::vector<double> initial_distribution;

  Environment() = default;
  Environment(int env_id, FactoredTransitionModel m, CausalGraph g, std::vector<double> mu)
      : id(env_id), model(std::move(m)), true_graph(std::move(g)), initial_distribution(std::move(mu)) {
    const auto& s = model.state_space();
    if (true_graph.state_dims() != s.d || true_graph.action_dims() != model.action_space().d ||
        true_graph.arity() != s.n) {
      throw Error(ErrorKind::kDimensionMismatch, "true graph does not match the model spaces");
    }
    if (initial_distribution.size() != s.size()) {
      throw Error(ErrorKind::kDimensionMismatch, "initial distribution must cover every state");
    }
    double sum = 0.0;
    for (double p : initial_distribution) {
      if (!(p >= 0.0)) throw Error(ErrorKind::kInvalidParameter, "negative initial probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      throw Error(ErrorKind::kInvalidParameter, "initial distribution does not sum to 1");
    }
  }
};

}  // namespace ctm
