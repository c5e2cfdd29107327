#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctm/core.hpp"
#include "ctm/factored_mdp.hpp"

namespace ctm {

/// Deterministic reward r(s, a) in [0, 1], stored row-major as s * A + a, and
/// a horizon H >= 1.
struct PlanningTask {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::vector<double> reward;
  std::size_t horizon = 1;

  PlanningTask() = default;
  PlanningTask(std::size_t states, std::size_t actions, std::vector<double> r, std::size_t h)
      : num_states(states), num_actions(actions), reward(std::move(r)), horizon(h) {
    if (horizon < 1) throw Error(ErrorKind::kInvalidParameter, "horizon must be >= 1");
    if (reward.size() != num_states * num_actions) {
      throw Error(ErrorKind::kDimensionMismatch, "reward table must have S * A entries");
    }
    for (double v : reward) {
      if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::kInvalidParameter, "rewards must lie in [0, 1]");
    }
  }

  double r(std::size_t s, std::size_t a) const { return reward[s * num_actions + a]; }
};

/// Nonstationary deterministic policy: actions[h][s] for h in [0, H).
struct Policy {
  std::vector<std::vector<std::size_t>> actions;

  std::size_t horizon() const { return actions.size(); }
  bool operator==(const Policy&) const = default;
};

/// values[h][s] for h in [0, H]; values[H] is identically zero.
struct ValueTable {
  std::vector<std::vector<double>> values;

  double initial_value(std::span<const double> mu) const {
    double v = 0.0;
    for (std::size_t s = 0; s < mu.size(); ++s) v += mu[s] * values.front()[s];
    return v;
  }
};

struct PlanResult {
  Policy policy;
  ValueTable values;
};

inline void require_task_matches(const TabularTransitionModel& model, const PlanningTask& task) {
  if (model.num_states() != task.num_states || model.num_actions() != task.num_actions) {
    throw Error(ErrorKind::kDimensionMismatch, "task and model disagree on S or A");
  }
}

inline double expected_next_value(const TabularTransitionModel& model, std::size_t s, std::size_t a,
                                  const std::vector<double>& next) {
  const auto row = model.row(s, a);
  double v = 0.0;
  for (std::size_t t = 0; t < row.size(); ++t) v += row[t] * next[t];
  return v;
}

/**
 * Backward induction
 *   Q_h(s, a) = r(s, a) + sum_s' P(s' | s, a) V_{h+1}(s'),  V_h = max_a Q_h,
 * with ties broken toward the lowest action index.
 */
inline PlanResult value_iteration(const TabularTransitionModel& model, const PlanningTask& task) {
  require_task_matches(model, task);
  const std::size_t states = task.num_states;
  const std::size_t actions = task.num_actions;
  const std::size_t horizon = task.horizon;

  PlanResult result;
  result.policy.actions.assign(horizon, std::vector<std::size_t>(states, 0));
  result.values.values.assign(horizon + 1, std::vector<double>(states, 0.0));
  for (std::size_t h = horizon; h-- > 0;) {
    const auto& next = result.values.values[h + 1];
    auto& current = result.values.values[h];
    for (std::size_t s = 0; s < states; ++s) {
      double best = 0.0;
      std::size_t best_action = 0;
      for (std::size_t a = 0; a < actions; ++a) {
        const double q = task.r(s, a) + expected_next_value(model, s, a, next);
        if (a == 0 || q > best) {
          best = q;
          best_action = a;
        }
      }
      current[s] = best;
      result.policy.actions[h][s] = best_action;
    }
  }
  return result;
}

inline PlanResult value_iteration(const FactoredTransitionModel& model, const PlanningTask& task) {
  return value_iteration(to_tabular(model), task);
}

/// Exact V_1^pi under mu by backward evaluation; no sampling.
inline double evaluate_policy(const TabularTransitionModel& model, const PlanningTask& task, const Policy& policy,
                              std::span<const double> mu) {
  require_task_matches(model, task);
  if (policy.horizon() != task.horizon || mu.size() != task.num_states) {
    throw Error(ErrorKind::kDimensionMismatch, "policy horizon or mu size does not match the task");
  }
  std::vector<double> next(task.num_states, 0.0);
  std::vector<double> current(task.num_states, 0.0);
  for (std::size_t h = task.horizon; h-- > 0;) {
    if (policy.actions[h].size() != task.num_states) {
      throw Error(ErrorKind::kDimensionMismatch, "policy is not defined on every state");
    }
    for (std::size_t s = 0; s < task.num_states; ++s) {
      const std::size_t a = policy.actions[h][s];
      if (a >= task.num_actions) throw Error(ErrorKind::kOutOfRange, "policy action index out of range");
      current[s] = task.r(s, a) + expected_next_value(model, s, a, next);
    }
    std::swap(current, next);
  }
  double v = 0.0;
  for (std::size_t s = 0; s < task.num_states; ++s) v += mu[s] * next[s];
  return v;
}

inline double optimal_value(const TabularTransitionModel& model, const PlanningTask& task,
                            std::span<const double> mu) {
  return value_iteration(model, task).values.initial_value(mu);
}

/// V*_1 - V^pi_1 on the true model. Raw value; may be -1e-15-ish from round-off.
inline double suboptimality_gap(const TabularTransitionModel& true_model, const PlanningTask& task,
                                std::span<const double> mu, const Policy& policy) {
  return optimal_value(true_model, task, mu) - evaluate_policy(true_model, task, policy, mu);
}

/// 2 lambda H^3 d_S n^{2Z+1}.
inline double epsilon_lambda_bound(double lambda, std::size_t horizon, std::size_t state_dims, int arity,
                                   std::size_t sparsity) {
  if (!(lambda >= 0.0) || horizon < 1 || state_dims < 1 || arity < 2) {
    throw Error(ErrorKind::kInvalidParameter, "need lambda >= 0, H >= 1, d_S >= 1, n >= 2");
  }
  const double h = static_cast<double>(horizon);
  return 2.0 * lambda * h * h * h * static_cast<double>(state_dims) *
         std::pow(static_cast<double>(arity), 2.0 * static_cast<double>(sparsity) + 1.0);
}

/// 2 lambda S A H^3.
inline double epsilon_lambda_bound_tabular(double lambda, std::size_t states, std::size_t actions,
                                           std::size_t horizon) {
  if (!(lambda >= 0.0) || states < 1 || actions < 1 || horizon < 1) {
    throw Error(ErrorKind::kInvalidParameter, "need lambda >= 0 and S, A, H >= 1");
  }
  const double h = static_cast<double>(horizon);
  return 2.0 * lambda * static_cast<double>(states) * static_cast<double>(actions) * h * h * h;
}

/// r(s, a) = 1 when state feature `feature` equals `value`, else 0.
inline PlanningTask goal_feature_task(const FactoredSpace& state, const FactoredSpace& action, std::size_t feature,
                                      int value, std::size_t horizon) {
  if (feature >= state.d || value < 0 || value >= state.n) {
    throw Error(ErrorKind::kInvalidParameter, "goal feature/value outside the state space");
  }
  const std::size_t states = state.size();
  const std::size_t actions = action.size();
  std::vector<double> reward(states * actions, 0.0);
  std::vector<int> s(state.d, 0);
  for (std::size_t si = 0; si < states; ++si) {
    decode(state, si, s);
    if (s[feature] == value) {
      for (std::size_t a = 0; a < actions; ++a) reward[si * actions + a] = 1.0;
    }
  }
  return PlanningTask(states, actions, std::move(reward), horizon);
}

}  // namespace ctm
