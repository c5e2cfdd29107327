#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "ctm/planning.hpp"
#include "helpers.hpp"

namespace ctm {
namespace {

using testing::error_kind;

TabularTransitionModel random_tabular(std::size_t states, std::size_t actions, Rng& rng) {
  std::vector<double> probs;
  for (std::size_t k = 0; k < states * actions; ++k) {
    const auto row = testing::random_row(static_cast<int>(states), rng);
    probs.insert(probs.end(), row.begin(), row.end());
  }
  return TabularTransitionModel(states, actions, std::move(probs));
}

PlanningTask random_task(std::size_t states, std::size_t actions, std::size_t horizon, Rng& rng) {
  std::vector<double> reward(states * actions);
  for (double& r : reward) r = uniform01(rng);
  return PlanningTask(states, actions, std::move(reward), horizon);
}

/// Best value over all A^(S H) deterministic nonstationary policies.
double exhaustive_optimum(const TabularTransitionModel& model, const PlanningTask& task, std::span<const double> mu) {
  const std::size_t slots = task.num_states * task.horizon;
  std::vector<std::size_t> choice(slots, 0);
  double best = -1.0;
  while (true) {
    Policy policy;
    policy.actions.assign(task.horizon, std::vector<std::size_t>(task.num_states));
    for (std::size_t k = 0; k < slots; ++k) policy.actions[k / task.num_states][k % task.num_states] = choice[k];
    best = std::max(best, evaluate_policy(model, task, policy, mu));
    std::size_t k = 0;
    while (k < slots && ++choice[k] == task.num_actions) choice[k++] = 0;
    if (k == slots) break;
  }
  return best;
}

TEST(PlanningTask, Validates) {
  EXPECT_EQ(error_kind([] { PlanningTask(1, 1, {0.5}, 0); }), ErrorKind::kInvalidParameter);
  EXPECT_EQ(error_kind([] { PlanningTask(1, 2, {0.5}, 1); }), ErrorKind::kDimensionMismatch);
  EXPECT_EQ(error_kind([] { PlanningTask(1, 1, {1.5}, 1); }), ErrorKind::kInvalidParameter);
}

TEST(ValueIteration, SingleStateForcedAction) {
  const TabularTransitionModel model(1, 2, {1.0, 1.0});
  const PlanningTask task(1, 2, {1.0, 0.0}, 2);
  const PlanResult plan = value_iteration(model, task);
  EXPECT_DOUBLE_EQ(plan.values.values[0][0], 2.0);
  EXPECT_EQ(plan.policy.actions, (std::vector<std::vector<std::size_t>>{{0}, {0}}));
}

TEST(ValueIteration, ZeroRewardTiesGoToFirstAction) {
  Rng rng(1);
  const auto model = random_tabular(3, 4, rng);
  const PlanningTask task(3, 4, std::vector<double>(12, 0.0), 3);
  const PlanResult plan = value_iteration(model, task);
  for (const auto& step : plan.values.values) {
    for (double v : step) EXPECT_EQ(v, 0.0);
  }
  for (const auto& step : plan.policy.actions) {
    for (std::size_t a : step) EXPECT_EQ(a, 0u);
  }
}

TEST(ValueIteration, MatchesExhaustiveEnumeration) {
  Rng rng(2);
  const auto model = random_tabular(4, 3, rng);
  const PlanningTask task = random_task(4, 3, 3, rng);
  const auto mu = uniform_distribution(4);
  EXPECT_NEAR(value_iteration(model, task).values.initial_value(mu), exhaustive_optimum(model, task, mu), 1e-9);
}

TEST(ValueIteration, ValuesWithinHorizonRange) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto model = random_tabular(5, 3, rng);
    const PlanningTask task = random_task(5, 3, 4, rng);
    const PlanResult plan = value_iteration(model, task);
    for (std::size_t h = 0; h <= task.horizon; ++h) {
      for (double v : plan.values.values[h]) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, static_cast<double>(task.horizon - h) + 1e-12);
      }
    }
  }
}

TEST(ValueIteration, TieBreakIgnoresPayloadPermutation) {
  // At H = 1 actions 1 and 2 are equally good; swapping their next-state rows
  // leaves the lowest-index choice in place.
  const TabularTransitionModel a(2, 3, {0.5, 0.5, 1, 0, 0, 1, 0.5, 0.5, 1, 0, 0, 1});
  const TabularTransitionModel b(2, 3, {0.5, 0.5, 0, 1, 1, 0, 0.5, 0.5, 0, 1, 1, 0});
  const PlanningTask task(2, 3, {0.0, 1.0, 1.0, 0.0, 1.0, 1.0}, 1);
  EXPECT_EQ(value_iteration(a, task).policy, value_iteration(b, task).policy);
  EXPECT_EQ(value_iteration(a, task).policy.actions[0], (std::vector<std::size_t>{1, 1}));
}

TEST(EvaluatePolicy, OptimalPolicyOnOwnModel) {
  Rng rng(4);
  const auto model = random_tabular(4, 2, rng);
  const PlanningTask task = random_task(4, 2, 3, rng);
  const auto mu = uniform_distribution(4);
  const PlanResult plan = value_iteration(model, task);
  EXPECT_NEAR(evaluate_policy(model, task, plan.policy, mu), plan.values.initial_value(mu), 1e-12);
}

TEST(EvaluatePolicy, ZeroRewardIsZero) {
  Rng rng(5);
  const auto model = random_tabular(3, 2, rng);
  const PlanningTask task(3, 2, std::vector<double>(6, 0.0), 2);
  const Policy policy{{{1, 0, 1}, {0, 0, 1}}};
  EXPECT_EQ(evaluate_policy(model, task, policy, uniform_distribution(3)), 0.0);
}

TEST(EvaluatePolicy, AverageOverPoliciesAtHorizonOne) {
  Rng rng(6);
  const auto model = random_tabular(2, 2, rng);
  const PlanningTask task = random_task(2, 2, 1, rng);
  const std::vector<double> mu{0.3, 0.7};
  double average = 0.0;
  for (std::size_t a0 = 0; a0 < 2; ++a0) {
    for (std::size_t a1 = 0; a1 < 2; ++a1) average += evaluate_policy(model, task, Policy{{{a0, a1}}}, mu) / 4.0;
  }
  const double expected = 0.3 * 0.5 * (task.r(0, 0) + task.r(0, 1)) + 0.7 * 0.5 * (task.r(1, 0) + task.r(1, 1));
  EXPECT_NEAR(average, expected, 1e-15);
}

TEST(EvaluatePolicy, RejectsMalformedPolicies) {
  const TabularTransitionModel model(1, 2, {1.0, 1.0});
  const PlanningTask task(1, 2, {1.0, 0.0}, 2);
  const std::vector<double> mu{1.0};
  EXPECT_EQ(error_kind([&] { evaluate_policy(model, task, Policy{{{0}}}, mu); }), ErrorKind::kDimensionMismatch);
  EXPECT_EQ(error_kind([&] { evaluate_policy(model, task, Policy{{{0}, {2}}}, mu); }), ErrorKind::kOutOfRange);
}

TEST(SuboptimalityGap, OptimalAndWorst) {
  const TabularTransitionModel model(1, 2, {1.0, 1.0});
  const PlanningTask task(1, 2, {1.0, 0.0}, 2);
  const std::vector<double> mu{1.0};
  EXPECT_NEAR(suboptimality_gap(model, task, mu, value_iteration(model, task).policy), 0.0, 1e-9);
  EXPECT_DOUBLE_EQ(suboptimality_gap(model, task, mu, Policy{{{1}, {1}}}), 2.0);
}

TEST(SuboptimalityGap, NeverMeaningfullyNegative) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const auto model = random_tabular(3, 3, rng);
    const auto other = random_tabular(3, 3, rng);
    const PlanningTask task = random_task(3, 3, 3, rng);
    const auto mu = uniform_distribution(3);
    EXPECT_GE(suboptimality_gap(model, task, mu, value_iteration(other, task).policy), -1e-9);
  }
}

TEST(PolicyValue, GapAcrossModelsBoundedBySquaredHorizonTimesDistance) {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const auto p = random_tabular(4, 2, rng);
    const auto q = random_tabular(4, 2, rng);
    const PlanningTask task = random_task(4, 2, 3, rng);
    const auto mu = uniform_distribution(4);
    const Policy policy = value_iteration(q, task).policy;
    const double gap = std::abs(evaluate_policy(p, task, policy, mu) - evaluate_policy(q, task, policy, mu));
    const double h = static_cast<double>(task.horizon);
    EXPECT_LE(gap, h * h * sup_l1_distance(p, q) + 1e-12);
  }
}

TEST(EpsilonLambdaBound, Values) {
  EXPECT_EQ(epsilon_lambda_bound(0.0, 3, 2, 3, 4), 0.0);
  EXPECT_NEAR(epsilon_lambda_bound(0.1, 2, 2, 3, 1), 86.4, 1e-12);
  EXPECT_NEAR(epsilon_lambda_bound_tabular(0.1, 4, 2, 2), 12.8, 1e-12);
  EXPECT_EQ(error_kind([] { epsilon_lambda_bound(-0.1, 2, 2, 3, 1); }), ErrorKind::kInvalidParameter);
  EXPECT_EQ(error_kind([] { epsilon_lambda_bound_tabular(0.1, 4, 2, 0); }), ErrorKind::kInvalidParameter);
}

TEST(GoalFeatureTask, IndicatorOnFeature) {
  const PlanningTask task = goal_feature_task(FactoredSpace(2, 3), FactoredSpace(1, 3), 0, 2, 3);
  ASSERT_EQ(task.reward.size(), 27u);
  for (std::size_t s = 0; s < 9; ++s) {
    for (std::size_t a = 0; a < 3; ++a) EXPECT_EQ(task.r(s, a), s / 3 == 2 ? 1.0 : 0.0);
  }
  EXPECT_EQ(error_kind([] { goal_feature_task(FactoredSpace(2, 3), FactoredSpace(1, 3), 2, 0, 3); }),
            ErrorKind::kInvalidParameter);
}

}  // namespace
}  // namespace ctm
