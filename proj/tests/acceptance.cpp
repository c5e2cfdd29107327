// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "ctm/ctm_pipeline.hpp"
#include "ctm/experiment.hpp"
#include "ctm/io.hpp"
#include "ctm/planning.hpp"
#include "ctm/universe.hpp"

namespace {

using namespace ctm;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* pattern, auto... args) {
  char buffer[512];
  std::snprintf(buffer, sizeof buffer, pattern, args...);
  return buffer;
}

std::vector<double> dirichlet_row(int n, Rng& rng) {
  std::vector<double> row(static_cast<std::size_t>(n));
  double sum = 0.0;
  for (double& p : row) {
    p = -std::log(1.0 - uniform01(rng));
    sum += p;
  }
  for (double& p : row) p /= sum;
  return row;
}

bool rows_normalized(const FactoredTransitionModel& m, double tol) {
  for (std::size_t j = 0; j < m.state_space().d; ++j) {
    for (std::size_t r = 0; r < m.row_count(j); ++r) {
      double total = 0.0;
      for (double p : m.row(j, r)) total += p;
      if (std::abs(total - 1.0) > tol) return false;
    }
  }
  return true;
}

// 1. Structure recovery on the wellness class.
Outcome structure_recovery() {
  ExperimentConfig c;
  c.universe = wellness_spec(3, 0);
  c.reps = 10;
  c.grid = {500, 1000, 2000, 5000, 10000, 20000, 50000};
  c.eps = 0.1;
  const auto start = std::chrono::steady_clock::now();
  const ExperimentOutput out = run_structure_experiment(c);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::size_t exact = 0;
  for (const auto& row : out.rows) {
    if (row.metric == "ged" && row.samples == c.grid.back() && row.value == 0.0) ++exact;
  }
  const double mean = mean_of(out.rows, "ged", c.grid.back());
  return {exact >= 9 && seconds <= 300.0,
          fmt("mean GED %.3g at K'=%llu, exact in %zu/10 reps, %.1f s", mean,
              static_cast<unsigned long long>(c.grid.back()), exact, seconds)};
}

// 2. Model-error floor, and its removal when the class averages exactly to the causal model.
Outcome model_plateau() {
  ExperimentConfig c;
  c.universe = wellness_spec(3, 0);
  c.reps = 10;
  c.grid = {20000, 200000, 2000000};
  const ExperimentOutput wellness = run_model_experiment(c);
  const double plateau = mean_of(wellness.rows, "model_l1", c.grid.back());

  ExperimentConfig even = c;
  even.universe = wellness_spec(4, 0);
  even.universe.noise_mode = NoiseMode::kMirroredFactors;
  even.universe.noise_scale = 0.3;
  const ExperimentOutput mirrored = run_model_experiment(even);
  const double floor = mean_of(mirrored.rows, "model_l1", even.grid.back());

  const bool wellness_ok = plateau > 0.0 && plateau <= 0.3;
  const bool mirrored_ok = floor < 0.05;
  return {wellness_ok && mirrored_ok,
          fmt("wellness plateau %.4f (target (0, 0.3]: %s), mirrored-noise plateau %.4f (target < 0.05: %s)", plateau,
              wellness_ok ? "met" : "missed", floor, mirrored_ok ? "met" : "missed")};
}

// 3. Held-out suboptimality gap.
Outcome value_gap() {
  ExperimentConfig c;
  c.universe = wellness_spec(3, 0);
  c.reps = 10;
  c.grid = {2000, 5000, 20000, 50000, 200000};
  c.horizon = 3;
  const ExperimentOutput out = run_value_experiment(c);
  std::vector<double> means;
  for (std::uint64_t g : c.grid) means.push_back(mean_of(out.rows, "suboptimality_gap", g));
  int inversions = 0;
  for (std::size_t i = 0; i + 1 < means.size(); ++i) inversions += means[i + 1] > means[i] ? 1 : 0;
  const double v_star = out.summary.at("optimal_value").get<double>();
  const double bound = out.summary.at("epsilon_lambda_bound").get<double>();
  const double limit = std::max(0.1 * v_star, bound);
  const bool decreasing = inversions <= 1 && means.back() < means.front();
  std::string series;
  for (double m : means) series += fmt("%.4f ", m);
  return {decreasing && means.back() <= limit,
          fmt("gap means %s(inversions %d), final %.4f <= max(0.1 V*=%.4f, eps_lambda=%.4g)", series.c_str(),
              inversions, means.back(), 0.1 * v_star, bound)};
}

// 4. Square-root rate of the network estimate when the class is exactly causal.
Outcome bn_rate() {
  UniverseSpec spec;
  spec.state = FactoredSpace(2, 3);
  spec.action = FactoredSpace(1, 3);
  spec.causal.intercepts = {0.3, 0.5};
  spec.causal.coefficients = {{0.5, 0.0, 0.4}, {0.3, 0.6, 0.0}};
  spec.causal.sigma = 0.6;
  spec.noise_scale = 0.0;
  spec.environments = 2;
  spec.sparsity = 2;
  spec.graph_threshold = 0.01;
  const Universe u = random_universe(spec);
  const FactoredTransitionModel& truth = *u.cls.causal_model();
  const CausalGraph& graph = *u.cls.causal_graph();
  const std::vector<std::uint64_t> grid{4000, 16000, 64000, 256000};
  const int reps = 30;
  std::vector<double> errors;
  for (std::uint64_t k : grid) {
    double total = 0.0;
    for (int r = 0; r < reps; ++r) {
      const auto est = estimate_bn(MixtureSampler(u.cls), graph, k, derive_seed(4, {k, static_cast<std::uint64_t>(r)}));
      total += bn_l1_error(est.model, truth);
    }
    errors.push_back(total / reps);
  }
  bool ok = u.lambda == 0.0;
  std::string ratios;
  for (std::size_t i = 0; i + 1 < errors.size(); ++i) {
    const double ratio = errors[i] / errors[i + 1];
    ok = ok && std::abs(ratio - 2.0) <= 0.6;
    ratios += fmt("%.3f ", ratio);
  }
  return {ok, fmt("lambda %.1f, error ratios per 4x samples: %s(target 2 +/- 0.6)", u.lambda, ratios.c_str())};
}

// 5. Structure guarantee at the budget from the sample-size formula.
Outcome structure_guarantee() {
  const FactoredSpace state(2, 2), action(1, 2);
  const std::vector<double> copy{0.8, 0.2, 0.2, 0.8};
  // Second member also routes X1 into Y0: P(Y0 = X0 xor X1) = 0.8.
  const std::vector<double> xor_table{0.8, 0.2, 0.2, 0.8, 0.2, 0.8, 0.8, 0.2};
  const FactoredTransitionModel a(state, action, {{0}, {2}}, {copy, copy});
  const FactoredTransitionModel b(state, action, {{0, 1}, {2}}, {xor_table, copy});
  const double eps = 0.5, delta = 0.1;
  const Budget budget = compute_budgets(eps, delta, 2, 2, 1, 2, 2, 50.0, 1.0);
  const double tester = budget.structure_eps;
  double weakest = 2.0;
  for (const auto* m : {&a, &b}) {
    for (const auto& row : dependence_matrix(*m)) {
      for (double d : row) {
        if (d > 0.0) weakest = std::min(weakest, d);
      }
    }
  }
  const auto mu = uniform_distribution(4);
  std::vector<Environment> envs;
  envs.emplace_back(0, a, epsilon_dependency_subgraph(a, tester), mu);
  envs.emplace_back(1, b, epsilon_dependency_subgraph(b, tester), mu);
  const std::vector<CausalGraph> member_graphs{envs[0].true_graph, envs[1].true_graph};
  const CausalGraph truth = intersect_graphs(member_graphs);
  const EnvironmentClass cls(std::move(envs), truth, a);
  int failures = 0;
  const int trials = 20;
  for (int t = 0; t < trials; ++t) {
    const CtmResult r = estimate_ctm(cls, eps, delta, 50.0, 1.0, 2, static_cast<std::uint64_t>(t));
    failures += r.graph == truth ? 0 : 1;
  }
  const double rate = static_cast<double>(failures) / trials;
  return {weakest >= 2.0 * tester && rate <= delta + 0.1,
          fmt("K'=%llu per environment, tester eps %.4f, weakest dependence %.3f, failure rate %.2f (limit %.2f)",
              static_cast<unsigned long long>(budget.structure_samples), tester, weakest, rate, delta + 0.1)};
}

// 6. Tester error rates at the prescribed sample size.
Outcome tester_calibration() {
  const int n = 3;
  const double eps = 0.3, delta = 0.1;
  const std::uint64_t k = tester_sample_size(n, eps, delta);
  // Mixture of independent uniform and a perfect copy: distance is exactly 4t/3.
  const double t = 0.75 * eps;
  std::vector<double> dependent(9), independent(9, 1.0 / 9.0);
  for (int x = 0; x < 3; ++x) {
    for (int y = 0; y < 3; ++y) dependent[x * 3 + y] = (1.0 - t) / 9.0 + (x == y ? t / 3.0 : 0.0);
  }
  const double d = l1_to_product_of_marginals(dependent, n);
  auto error_rate = [&](const std::vector<double>& joint, Verdict wrong, std::uint64_t salt) {
    int errors = 0;
    for (int trial = 0; trial < 100; ++trial) {
      Rng rng(derive_seed(salt, {static_cast<std::uint64_t>(trial)}));
      EmpiricalJoint counts(n);
      for (std::uint64_t s = 0; s < k; ++s) {
        const int cell = sample_categorical(joint, rng);
        counts.accumulate(cell / n, cell % n);
      }
      errors += independence_test(counts, eps).verdict == wrong ? 1 : 0;
    }
    return errors / 100.0;
  };
  const double false_dependent = error_rate(independent, Verdict::kDependent, 61);
  const double false_independent = error_rate(dependent, Verdict::kIndependent, 62);
  return {false_dependent <= delta + 0.05 && false_independent <= delta + 0.05 && d >= eps - 1e-12,
          fmt("K=%llu, false Dependent %.2f, false Independent %.2f at distance %.3f (limit %.2f)",
              static_cast<unsigned long long>(k), false_dependent, false_independent, d, delta + 0.05)};
}

// 7. Value iteration against brute force over deterministic policies.
Outcome planner_oracle() {
  Rng rng(7);
  double worst = 0.0;
  for (int instance = 0; instance < 50; ++instance) {
    std::size_t states = 0, actions = 0;
    do {
      states = 1 + uniform_index(rng, 6);
      actions = 1 + uniform_index(rng, 6);
    } while (states * actions > 12);
    const std::size_t horizon = 1 + uniform_index(rng, 3);
    std::vector<double> probs;
    for (std::size_t k = 0; k < states * actions; ++k) {
      const auto row = dirichlet_row(static_cast<int>(states), rng);
      probs.insert(probs.end(), row.begin(), row.end());
    }
    std::vector<double> reward(states * actions);
    for (double& r : reward) r = uniform01(rng);
    const TabularTransitionModel model(states, actions, std::move(probs));
    const PlanningTask task(states, actions, std::move(reward), horizon);
    const auto mu = dirichlet_row(static_cast<int>(states), rng);

    const std::size_t slots = states * horizon;
    std::vector<std::size_t> choice(slots, 0);
    double best = -1.0;
    while (true) {
      Policy policy;
      policy.actions.assign(horizon, std::vector<std::size_t>(states));
      for (std::size_t s = 0; s < slots; ++s) policy.actions[s / states][s % states] = choice[s];
      best = std::max(best, evaluate_policy(model, task, policy, mu));
      std::size_t s = 0;
      while (s < slots && ++choice[s] == actions) choice[s++] = 0;
      if (s == slots) break;
    }
    worst = std::max(worst, std::abs(value_iteration(model, task).values.initial_value(mu) - best));
  }
  return {worst <= 1e-9, fmt("50 instances, largest |V_vi - V_brute| = %.3g", worst)};
}

// 8. Empirical L1 deviation against 2 exp(-K eps^2 / 2n).
Outcome l1_deviation() {
  Rng pick(8);
  int points = 0, violations = 0;
  double tightest = 0.0;
  for (int n : {2, 3, 5, 10}) {
    const std::vector<std::vector<double>> dists{std::vector<double>(static_cast<std::size_t>(n), 1.0 / n),
                                                 dirichlet_row(n, pick)};
    for (const auto& p : dists) {
      for (std::uint64_t k : {20u, 100u, 500u, 2000u}) {
        for (double eps : {0.1, 0.2, 0.3, 0.5}) {
          const double bound = 2.0 * std::exp(-static_cast<double>(k) * eps * eps / (2.0 * n));
          int hits = 0;
          Rng rng(derive_seed(8, {static_cast<std::uint64_t>(n), k, static_cast<std::uint64_t>(eps * 100)}));
          for (int trial = 0; trial < 1000; ++trial) {
            std::vector<double> counts(static_cast<std::size_t>(n), 0.0);
            for (std::uint64_t s = 0; s < k; ++s) counts[static_cast<std::size_t>(sample_categorical(p, rng))] += 1.0;
            double l1 = 0.0;
            for (int i = 0; i < n; ++i) l1 += std::abs(counts[i] / static_cast<double>(k) - p[i]);
            hits += l1 >= eps ? 1 : 0;
          }
          const double freq = hits / 1000.0;
          ++points;
          if (freq > bound) ++violations;
          if (bound < 1.0) tightest = std::max(tightest, freq / bound);
        }
      }
    }
  }
  return {violations == 0, fmt("%d grid points x 1000 trials, %d violations, largest frequency/bound %.3f", points,
                               violations, tightest)};
}

// 9. Normalized CPTs and byte-identical reruns.
Outcome normalization_and_determinism() {
  bool normalized = true;
  const Universe u = build_wellness_universe(3, 0);
  for (const auto* m : u.cls.models()) normalized = normalized && rows_normalized(*m, 1e-12);
  normalized = normalized && rows_normalized(*u.cls.causal_model(), 1e-12);
  const CtmResult r = estimate_ctm(u.cls, CtmOptions{5000, 50000, 0.1, 3, 1});
  normalized = normalized && rows_normalized(r.model, 1e-12);
  const auto held = draw_heldout_environment(u.spec, 5, 9);
  normalized = normalized && rows_normalized(held.model, 1e-12);

  bool identical = model_to_json(build_wellness_universe(3, 0).cls.environment(1).model).dump() ==
                   model_to_json(u.cls.environment(1).model).dump();
  identical = identical && model_to_json(estimate_ctm(u.cls, CtmOptions{5000, 50000, 0.1, 3, 1}).model).dump() ==
                               model_to_json(r.model).dump();
  ExperimentConfig c;
  c.reps = 2;
  c.grid = {2000, 8000};
  for (const std::string kind : {"structure", "model", "value"}) {
    const ExperimentOutput a = run_experiment(kind, c);
    const ExperimentOutput b = run_experiment(kind, c);
    identical = identical && to_csv(a.rows) == to_csv(b.rows) && a.summary.dump() == b.summary.dump() &&
                a.manifest.dump() == b.manifest.dump();
  }
  return {normalized && identical, fmt("rows normalized: %s, seeded reruns identical: %s", normalized ? "yes" : "no",
                                       identical ? "yes" : "no")};
}

}  // namespace

int main() {
  const std::vector<std::function<Outcome()>> criteria{structure_recovery, model_plateau,  value_gap,
                                                       bn_rate,            structure_guarantee, tester_calibration,
                                                       planner_oracle,     l1_deviation,   normalization_and_determinism};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i]();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("criterion %zu: %s %s\n", i + 1, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
