#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "ctm/core.hpp"
#include "ctm/ctm_pipeline.hpp"
#include "ctm/io.hpp"
#include "ctm/parallel.hpp"
#include "ctm/planning.hpp"
#include "ctm/universe.hpp"

#ifndef CTM_VERSION
#define CTM_VERSION "0.0.0"
#endif

namespace ctm {

struct RewardSpec {
  std::string preset = "goal-feature";  // or "table"
  std::size_t feature = 0;
  int value = 2;
  std::filesystem::path table;  // CSV, one line per state, one column per action
};

struct ExperimentConfig {
  std::string universe_kind = "wellness";
  UniverseSpec universe = wellness_spec(3, 0);
  std::size_t reps = 10;
  std::vector<std::uint64_t> grid;
  double eps = 0.1;  // structure tester threshold
  double delta = 0.1;
  std::size_t horizon = 3;
  RewardSpec reward;
  double structure_fraction = 0.5;  // share of a total budget spent on K' (model/value runs)
  bool heldout_in_class = false;    // evaluate on member 0 instead of a fresh environment
  std::filesystem::path out = "out";
  std::uint64_t seed = 0;
  unsigned jobs = 1;

  std::size_t sparsity() const { return universe.sparsity; }
};

inline std::vector<std::uint64_t> parse_grid(const std::string& text) {
  std::vector<std::uint64_t> grid;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size() || !(v >= 1.0) || v != std::floor(v)) throw std::invalid_argument(item);
      grid.push_back(static_cast<std::uint64_t>(v));
    } catch (const std::exception&) {
      throw Error(ErrorKind::kConfigError, "bad grid entry '" + item + "'");
    }
  }
  return grid;
}

/// Structural checks; call after command-line overrides are applied.
inline void validate_config(const ExperimentConfig& c) {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::kConfigError, what); };
  if (c.reps < 1) fail("reps must be >= 1");
  if (c.grid.empty()) fail("grid must not be empty");
  for (std::size_t g = 0; g < c.grid.size(); ++g) {
    if (c.grid[g] < 1) fail("grid entries must be >= 1");
    if (g > 0 && c.grid[g] <= c.grid[g - 1]) fail("grid must be strictly increasing");
  }
  if (!(c.eps > 0.0)) fail("eps must be positive");
  if (!(c.delta > 0.0 && c.delta < 1.0)) fail("delta must lie in (0, 1)");
  if (c.horizon < 1) fail("horizon must be >= 1");
  if (!(c.structure_fraction > 0.0 && c.structure_fraction < 1.0)) fail("structure_fraction must lie in (0, 1)");
  if (c.jobs < 1) fail("jobs must be >= 1");
  if (c.reward.preset == "table") {
    if (!std::filesystem::exists(c.reward.table)) fail("reward table " + c.reward.table.string() + " does not exist");
  } else if (c.reward.preset == "goal-feature") {
    if (c.reward.feature >= c.universe.state.d || c.reward.value < 0 || c.reward.value >= c.universe.state.n) {
      fail("goal feature/value outside the state space");
    }
  } else {
    fail("unknown reward preset '" + c.reward.preset + "'");
  }
  try {
    detail::validate_spec(c.universe);
  } catch (const Error& e) {
    fail(e.what());
  }
}

/// Config file: JSON object. "universe" is "wellness", "linear-gaussian" (with
/// the generator keys alongside) or an object holding the generator keys.
inline ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c;
  try {
    c.seed = j.value("seed", std::uint64_t{0});
    Json universe = j;
    if (j.contains("universe") && j.at("universe").is_object()) {
      universe = j.at("universe");
      if (!universe.contains("M") && j.contains("M")) universe["M"] = j.at("M");
    }
    c.universe_kind = universe.value("universe", std::string("wellness"));
    c.universe = universe_spec_from_json(universe, c.seed);
    c.reps = j.value("reps", c.reps);
    if (j.contains("grid")) {
      const Json& g = j.at("grid");
      c.grid = g.is_string() ? parse_grid(g.get<std::string>()) : g.get<std::vector<std::uint64_t>>();
    }
    c.eps = j.value("eps", c.eps);
    c.delta = j.value("delta", c.delta);
    if (j.contains("Z")) c.universe.sparsity = j.at("Z").get<std::size_t>();
    c.horizon = j.value("H", c.horizon);
    if (j.contains("reward")) {
      const Json& r = j.at("reward");
      c.reward.preset = r.value("preset", c.reward.preset);
      c.reward.feature = r.value("feature", c.reward.feature);
      c.reward.value = r.value("value", c.reward.value);
      if (r.contains("table")) c.reward.table = r.at("table").get<std::string>();
    }
    c.structure_fraction = j.value("structure_fraction", c.structure_fraction);
    c.heldout_in_class = j.value("heldout_in_class", c.heldout_in_class);
    if (j.contains("out")) c.out = j.at("out").get<std::string>();
    c.jobs = j.value("jobs", c.jobs);
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::kConfigError, std::string("malformed config: ") + e.what());
  }
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  ExperimentConfig c = config_from_json(read_json(path));
  if (c.reward.preset == "table" && c.reward.table.is_relative()) c.reward.table = path.parent_path() / c.reward.table;
  return c;
}

/// Everything that determines the results; excludes out and jobs.
inline Json config_to_json(const ExperimentConfig& c) {
  return {{"universe_kind", c.universe_kind},
          {"universe", universe_spec_to_json(c.universe)},
          {"reps", c.reps},
          {"grid", c.grid},
          {"eps", c.eps},
          {"delta", c.delta},
          {"Z", c.sparsity()},
          {"H", c.horizon},
          {"reward",
           {{"preset", c.reward.preset},
            {"feature", c.reward.feature},
            {"value", c.reward.value},
            {"table", c.reward.table.string()}}},
          {"structure_fraction", c.structure_fraction},
          {"heldout_in_class", c.heldout_in_class},
          {"seed", c.seed}};
}

inline std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a(config_to_json(c).dump())); }

/// Rewards for the task: "goal-feature" or a CSV table read from disk.
inline PlanningTask make_task(const ExperimentConfig& c) {
  const FactoredSpace& state = c.universe.state;
  const FactoredSpace& action = c.universe.action;
  if (c.reward.preset == "goal-feature") {
    return goal_feature_task(state, action, c.reward.feature, c.reward.value, c.horizon);
  }
  std::vector<double> reward;
  std::stringstream in(read_text(c.reward.table));
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::stringstream cells(line);
    std::string cell;
    std::size_t cols = 0;
    while (std::getline(cells, cell, ',')) {
      try {
        reward.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error(ErrorKind::kConfigError, "reward table: bad cell '" + cell + "'");
      }
      ++cols;
    }
    if (cols != action.size()) throw Error(ErrorKind::kConfigError, "reward table rows must have one column per action");
    ++rows;
  }
  if (rows != state.size()) throw Error(ErrorKind::kConfigError, "reward table must have one row per state");
  try {
    return PlanningTask(state.size(), action.size(), std::move(reward), c.horizon);
  } catch (const Error& e) {
    throw Error(ErrorKind::kConfigError, std::string("reward table: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Rows and aggregation
// ---------------------------------------------------------------------------

struct ResultRow {
  std::string experiment;
  std::size_t rep = 0;
  std::uint64_t samples = 0;
  std::string metric;  // ged, model_l1, value_error, suboptimality_gap, lambda, evenness_residual
  double value = 0.0;
};

struct AggregateRow {
  std::string experiment;
  std::string stat;  // mean or std
  std::uint64_t samples = 0;
  std::string metric;
  double value = 0.0;
};

inline void sort_rows(std::vector<ResultRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return std::tie(a.samples, a.rep, a.metric) < std::tie(b.samples, b.rep, b.metric);
  });
}

/// Mean and sample standard deviation (R - 1 denominator; 0 for one row) per
/// (samples, metric).
inline std::vector<AggregateRow> aggregate(const std::vector<ResultRow>& rows) {
  std::map<std::tuple<std::uint64_t, std::string, std::string>, std::vector<double>> groups;
  for (const ResultRow& r : rows) groups[{r.samples, r.metric, r.experiment}].push_back(r.value);
  std::vector<AggregateRow> out;
  for (const auto& [key, values] : groups) {
    const auto& [samples, metric, experiment] = key;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    const double sd = values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
    out.push_back({experiment, "mean", samples, metric, mean});
    out.push_back({experiment, "std", samples, metric, sd});
  }
  return out;
}

inline std::string to_csv(std::vector<ResultRow> rows) {
  sort_rows(rows);
  std::string csv = "experiment,rep,samples,metric,value\n";
  for (const ResultRow& r : rows) {
    csv += r.experiment + "," + std::to_string(r.rep) + "," + std::to_string(r.samples) + "," + r.metric + "," +
           format_double(r.value) + "\n";
  }
  for (const AggregateRow& a : aggregate(rows)) {
    csv += a.experiment + "," + a.stat + "," + std::to_string(a.samples) + "," + a.metric + "," +
           format_double(a.value) + "\n";
  }
  return csv;
}

/// Mean of `metric` at grid value `samples`; NaN when absent.
inline double mean_of(const std::vector<ResultRow>& rows, const std::string& metric, std::uint64_t samples) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const ResultRow& r : rows) {
    if (r.metric == metric && r.samples == samples) {
      sum += r.value;
      ++count;
    }
  }
  return count == 0 ? std::nan("") : sum / static_cast<double>(count);
}

struct ExperimentOutput {
  std::string experiment;
  std::vector<ResultRow> rows;
  Json summary;
  Json manifest;
  std::vector<std::pair<std::string, std::string>> dot_files;  // name, contents
};

inline void write_output(const std::filesystem::path& dir, const ExperimentOutput& out) {
  std::filesystem::create_directories(dir);
  write_text(dir / "results.csv", to_csv(out.rows));
  write_json(dir / "summary.json", out.summary);
  write_json(dir / "manifest.json", out.manifest);
  for (const auto& [name, text] : out.dot_files) write_text(dir / name, text);
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr std::uint64_t kStructureTag = 1;
inline constexpr std::uint64_t kModelTag = 2;
inline constexpr std::uint64_t kValueTag = 3;

inline std::uint64_t run_seed(const ExperimentConfig& c, std::uint64_t experiment, std::size_t rep, std::size_t grid) {
  return derive_seed(c.seed, {experiment, rep, grid});
}

inline Json base_manifest(const ExperimentConfig& c, const std::string& experiment, const Universe& u) {
  return {{"experiment", experiment},
          {"version", CTM_VERSION},
          {"config_hash", config_hash(c)},
          {"config", config_to_json(c)},
          {"seed", c.seed},
          {"universe",
           {{"seed", u.spec.seed},
            {"rounds", u.rounds},
            {"lambda", u.lambda},
            {"evenness_residual", u.evenness.max_per_feature()},
            {"evenness_l1", u.evenness.per_feature_l1}}},
          {"reward", c.reward.preset}};
}

inline Json metric_series(const std::vector<ResultRow>& rows, const std::string& metric) {
  Json series = Json::array();
  for (const AggregateRow& a : aggregate(rows)) {
    if (a.metric != metric) continue;
    if (a.stat == "mean") {
      series.push_back({{"samples", a.samples}, {"mean", a.value}});
    } else {
      series.back()["std"] = a.value;
    }
  }
  return series;
}

struct Split {
  std::uint64_t structure = 0;  // K' per environment
  std::uint64_t bn = 0;         // K''
};

/// K' = floor(f g / M), K'' = g - M K'.
inline Split split_budget(const ExperimentConfig& c, std::uint64_t total) {
  const auto m = static_cast<std::uint64_t>(c.universe.environments);
  Split s;
  s.structure = static_cast<std::uint64_t>(std::floor(c.structure_fraction * static_cast<double>(total) /
                                                      static_cast<double>(m)));
  if (s.structure < 1 || s.structure * m >= total) {
    throw Error(ErrorKind::kConfigError, "grid value " + std::to_string(total) + " is too small to split across " +
                                             std::to_string(m) + " environments and the BN phase");
  }
  s.bn = total - m * s.structure;
  return s;
}

}  // namespace detail

/// Ged between the intersected per-environment graphs and the causal graph,
/// per (grid K' per environment, rep).
inline ExperimentOutput run_structure_experiment(const ExperimentConfig& config) {
  validate_config(config);
  const Universe universe = random_universe(config.universe);
  const EnvironmentClass& cls = universe.cls;
  const CausalGraph& truth = *cls.causal_graph();
  const std::size_t reps = config.reps;
  const std::size_t points = config.grid.size();

  std::vector<ResultRow> slots(points * reps);
  std::vector<CausalGraph> final_graphs(reps);
  parallel_for(points * reps, config.jobs, [&](std::size_t task) {
    const std::size_t g = task / reps;
    const std::size_t r = task % reps;
    const std::uint64_t seed = detail::run_seed(config, detail::kStructureTag, r, g);
    std::vector<CausalGraph> graphs;
    for (std::size_t i = 0; i < cls.size(); ++i) {
      Rng rng(structure_seed(seed, i));
      graphs.push_back(estimate_structure(cls.environment(i).model, config.grid[g], config.eps, rng).graph);
    }
    const CausalGraph estimate = intersect_graphs(graphs);
    slots[task] = {"structure", r, config.grid[g], "ged", static_cast<double>(graph_edit_distance(estimate, truth))};
    if (g + 1 == points) final_graphs[r] = estimate;
  });

  ExperimentOutput out;
  out.experiment = "structure";
  out.rows = std::move(slots);
  const std::uint64_t last = config.grid.back();
  std::size_t exact = 0;
  for (const ResultRow& row : out.rows) exact += row.samples == last && row.value == 0.0 ? 1 : 0;
  out.summary = {{"experiment", "structure"},
                 {"ged", detail::metric_series(out.rows, "ged")},
                 {"final_mean_ged", mean_of(out.rows, "ged", last)},
                 {"final_exact_recoveries", exact},
                 {"reps", reps}};
  out.manifest = detail::base_manifest(config, "structure", universe);
  Json phases = Json::array();
  for (std::uint64_t k : config.grid) {
    phases.push_back({{"samples", k},
                      {"structure_per_environment", k},
                      {"structure_total", k * cls.size()},
                      {"bn", 0}});
  }
  out.manifest["phases"] = std::move(phases);
  out.dot_files.emplace_back("causal.dot", to_dot(truth, "causal"));
  for (std::size_t r = 0; r < reps; ++r) {
    out.dot_files.emplace_back("estimated_rep" + std::to_string(r) + ".dot",
                               to_dot(final_graphs[r], "estimated_rep" + std::to_string(r)));
  }
  return out;
}

/// bn_l1_error of the full pipeline estimate against the causal model, per
/// (grid total samples, rep); lambda and evenness_residual at samples = 0.
inline ExperimentOutput run_model_experiment(const ExperimentConfig& config) {
  validate_config(config);
  const Universe universe = random_universe(config.universe);
  const EnvironmentClass& cls = universe.cls;
  const FactoredTransitionModel& causal = *cls.causal_model();
  const std::size_t reps = config.reps;
  const std::size_t points = config.grid.size();
  std::vector<detail::Split> splits;
  for (std::uint64_t g : config.grid) splits.push_back(detail::split_budget(config, g));

  std::vector<ResultRow> slots(points * reps);
  std::vector<std::uint64_t> used(points * reps, 0);
  parallel_for(points * reps, config.jobs, [&](std::size_t task) {
    const std::size_t g = task / reps;
    const std::size_t r = task % reps;
    const CtmOptions options{splits[g].structure, splits[g].bn, config.eps,
                             detail::run_seed(config, detail::kModelTag, r, g), 1};
    const CtmResult result = estimate_ctm(cls, options);
    slots[task] = {"model", r, config.grid[g], "model_l1", bn_l1_error(result.model, causal)};
    used[task] = result.total_samples;
  });

  ExperimentOutput out;
  out.experiment = "model";
  out.rows = std::move(slots);
  out.rows.push_back({"model", 0, 0, "lambda", universe.lambda});
  out.rows.push_back({"model", 0, 0, "evenness_residual", universe.evenness.max_per_feature()});
  out.summary = {{"experiment", "model"},
                 {"model_l1", detail::metric_series(out.rows, "model_l1")},
                 {"plateau", mean_of(out.rows, "model_l1", config.grid.back())},
                 {"lambda", universe.lambda},
                 {"evenness_residual", universe.evenness.max_per_feature()},
                 {"evenness_l1", universe.evenness.per_feature_l1}};
  out.manifest = detail::base_manifest(config, "model", universe);
  Json phases = Json::array();
  for (std::size_t g = 0; g < points; ++g) {
    phases.push_back({{"samples", config.grid[g]},
                      {"structure_per_environment", splits[g].structure},
                      {"bn", splits[g].bn},
                      {"total_used", std::vector<std::uint64_t>(used.begin() + static_cast<std::ptrdiff_t>(g * reps),
                                                                used.begin() + static_cast<std::ptrdiff_t>((g + 1) * reps))}});
  }
  out.manifest["phases"] = std::move(phases);
  out.dot_files.emplace_back("causal.dot", to_dot(*cls.causal_graph(), "causal"));
  return out;
}

/// The environment the value experiment evaluates on.
inline Environment heldout_environment(const ExperimentConfig& config, const Universe& universe) {
  if (config.heldout_in_class) return universe.cls.environment(0);
  return draw_heldout_environment(config.universe, derive_seed(config.universe.seed, {0x686f6c64}),
                                  static_cast<int>(universe.cls.size()));
}

/// Plans on the estimated model and scores the policy on a held-out
/// environment: suboptimality_gap = V*_1 - V^pi_1 and value_error =
/// |V^_1 - V*_1| at the initial distribution.
inline ExperimentOutput run_value_experiment(const ExperimentConfig& config) {
  validate_config(config);
  const Universe universe = random_universe(config.universe);
  const EnvironmentClass& cls = universe.cls;
  const Environment heldout = heldout_environment(config, universe);
  const PlanningTask task = make_task(config);
  const TabularTransitionModel truth = to_tabular(heldout.model);
  const std::vector<double>& mu = cls.initial_distribution();
  const double v_star = optimal_value(truth, task, mu);
  const double heldout_lambda = sup_l1_distance(*cls.causal_model(), heldout.model);
  const double lambda = std::max(universe.lambda, heldout_lambda);
  const FactoredSpace& state = cls.state_space();
  const double bound = epsilon_lambda_bound(lambda, config.horizon, state.d, state.n, config.sparsity());
  const double bound_tabular =
      epsilon_lambda_bound_tabular(lambda, state.size(), cls.action_space().size(), config.horizon);

  const std::size_t reps = config.reps;
  const std::size_t points = config.grid.size();
  std::vector<detail::Split> splits;
  for (std::uint64_t g : config.grid) splits.push_back(detail::split_budget(config, g));

  std::vector<ResultRow> slots(2 * points * reps);
  std::vector<std::uint64_t> used(points * reps, 0);
  parallel_for(points * reps, config.jobs, [&](std::size_t task_index) {
    const std::size_t g = task_index / reps;
    const std::size_t r = task_index % reps;
    const CtmOptions options{splits[g].structure, splits[g].bn, config.eps,
                             detail::run_seed(config, detail::kValueTag, r, g), 1};
    const CtmResult result = estimate_ctm(cls, options);
    const PlanResult plan = value_iteration(to_tabular(result.model), task);
    // Round-off can push the raw gap slightly below zero; reports clamp it.
    const double gap = std::max(0.0, suboptimality_gap(truth, task, mu, plan.policy));
    const double error = std::abs(plan.values.initial_value(mu) - v_star);
    slots[2 * task_index] = {"value", r, config.grid[g], "suboptimality_gap", gap};
    slots[2 * task_index + 1] = {"value", r, config.grid[g], "value_error", error};
    used[task_index] = result.total_samples;
  });

  ExperimentOutput out;
  out.experiment = "value";
  out.rows = std::move(slots);
  out.rows.push_back({"value", 0, 0, "lambda", lambda});
  out.summary = {{"experiment", "value"},
                 {"suboptimality_gap", detail::metric_series(out.rows, "suboptimality_gap")},
                 {"value_error", detail::metric_series(out.rows, "value_error")},
                 {"final_mean_gap", mean_of(out.rows, "suboptimality_gap", config.grid.back())},
                 {"optimal_value", v_star},
                 {"lambda_class", universe.lambda},
                 {"lambda_heldout", heldout_lambda},
                 {"epsilon_lambda_bound", bound},
                 {"epsilon_lambda_bound_tabular", bound_tabular},
                 {"heldout_in_class", config.heldout_in_class}};
  out.manifest = detail::base_manifest(config, "value", universe);
  Json phases = Json::array();
  for (std::size_t g = 0; g < points; ++g) {
    phases.push_back({{"samples", config.grid[g]},
                      {"structure_per_environment", splits[g].structure},
                      {"bn", splits[g].bn},
                      {"total_used", std::vector<std::uint64_t>(used.begin() + static_cast<std::ptrdiff_t>(g * reps),
                                                                used.begin() + static_cast<std::ptrdiff_t>((g + 1) * reps))}});
  }
  out.manifest["phases"] = std::move(phases);
  out.dot_files.emplace_back("causal.dot", to_dot(*cls.causal_graph(), "causal"));
  return out;
}

inline ExperimentOutput run_experiment(const std::string& kind, const ExperimentConfig& config) {
  if (kind == "structure") return run_structure_experiment(config);
  if (kind == "model") return run_model_experiment(config);
  if (kind == "value") return run_value_experiment(config);
  throw Error(ErrorKind::kConfigError, "unknown experiment '" + kind + "'");
}

}  // namespace ctm
