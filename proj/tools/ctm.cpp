// Command-line front end: universe generation, the estimation pipeline,
// planning and the three experiments.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ctm/bn_estimation.hpp"
#include "ctm/core.hpp"
#include "ctm/ctm_pipeline.hpp"
#include "ctm/experiment.hpp"
#include "ctm/io.hpp"
#include "ctm/planning.hpp"
#include "ctm/structure_learning.hpp"
#include "ctm/universe.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  unsigned jobs = 1;
};

void add_common(CLI::App* cmd, Common& c, bool with_config = true) {
  if (with_config) cmd->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "master seed")->each([&](const std::string&) { c.seed_set = true; });
  cmd->add_option("--out", c.out, "output path");
  cmd->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
}

struct RewardFlags {
  std::string preset = "goal-feature";
  std::size_t feature = 0;
  int value = 2;
  std::string table;
  std::size_t horizon = 3;
};

void add_reward(CLI::App* cmd, RewardFlags& r) {
  cmd->add_option("--reward", r.preset, "goal-feature or table")->check(CLI::IsMember({"goal-feature", "table"}));
  cmd->add_option("--feature", r.feature, "goal state feature");
  cmd->add_option("--value", r.value, "goal feature value");
  cmd->add_option("--table", r.table, "reward CSV (states x actions)");
  cmd->add_option("--horizon,-H", r.horizon, "planning horizon");
}

ctm::PlanningTask task_for(const ctm::FactoredTransitionModel& model, const Common& common, const RewardFlags& flags) {
  ctm::ExperimentConfig c;
  if (!common.config.empty()) c = ctm::load_config(common.config);
  c.universe.state = model.state_space();
  c.universe.action = model.action_space();
  c.reward.preset = flags.preset;
  c.reward.feature = flags.feature;
  c.reward.value = flags.value;
  c.reward.table = flags.table;
  c.horizon = flags.horizon;
  if (c.reward.preset == "table" && !fs::exists(c.reward.table)) {
    throw ctm::Error(ctm::ErrorKind::kConfigError, "reward table '" + flags.table + "' does not exist");
  }
  if (c.reward.preset == "goal-feature" &&
      (c.reward.feature >= model.state_space().d || c.reward.value < 0 || c.reward.value >= model.arity())) {
    throw ctm::Error(ctm::ErrorKind::kConfigError, "goal feature/value outside the state space");
  }
  return ctm::make_task(c);
}

ctm::UniverseSpec universe_from(const Common& common) {
  ctm::Json j = common.config.empty() ? ctm::Json::object() : ctm::read_json(common.config);
  if (j.contains("universe") && j.at("universe").is_object()) {
    ctm::Json inner = j.at("universe");
    if (!inner.contains("M") && j.contains("M")) inner["M"] = j.at("M");
    j = inner;
  }
  if (common.seed_set) j["universe_seed"] = common.seed;
  return ctm::universe_spec_from_json(j, common.seed);
}

std::string out_or(const Common& c, const std::string& fallback) { return c.out.empty() ? fallback : c.out; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal transition model estimation and planning"};
  app.set_version_flag("--version", std::string(CTM_VERSION));
  app.require_subcommand(1);

  // gen-universe
  Common gen;
  auto* gen_cmd = app.add_subcommand("gen-universe", "Generate a class from a universe spec");
  add_common(gen_cmd, gen);

  // estimate-structure
  Common st;
  std::string st_class;
  std::uint64_t st_samples = 20000;
  double st_eps = 0.1;
  auto* st_cmd = app.add_subcommand("estimate-structure", "Estimate each member's dependency graph");
  add_common(st_cmd, st, false);
  st_cmd->add_option("--class", st_class, "class directory")->required()->check(CLI::ExistingDirectory);
  st_cmd->add_option("--samples,-K", st_samples, "samples per environment")->check(CLI::PositiveNumber);
  st_cmd->add_option("--eps", st_eps, "tester threshold");

  // estimate-bn
  Common bn;
  std::string bn_class, bn_graph;
  std::uint64_t bn_samples = 100000;
  auto* bn_cmd = app.add_subcommand("estimate-bn", "Fit the network over a fixed graph from the class mixture");
  add_common(bn_cmd, bn, false);
  bn_cmd->add_option("--class", bn_class, "class directory")->required()->check(CLI::ExistingDirectory);
  bn_cmd->add_option("--graph", bn_graph, "DOT graph")->required()->check(CLI::ExistingFile);
  bn_cmd->add_option("--samples,-K", bn_samples, "sample budget")->check(CLI::PositiveNumber);

  // estimate-ctm
  Common ctm_common;
  std::string ctm_class;
  std::optional<std::uint64_t> k_structure, k_bn;
  double ctm_eps = 0.1, ctm_delta = 0.1, c1 = 1.0, c2 = 1.0;
  std::optional<double> ctm_tester_eps;
  std::optional<std::size_t> ctm_z;
  auto* ctm_cmd = app.add_subcommand("estimate-ctm", "Run the full pipeline on a class");
  add_common(ctm_cmd, ctm_common, false);
  ctm_cmd->add_option("--class", ctm_class, "class directory")->required()->check(CLI::ExistingDirectory);
  ctm_cmd->add_option("--structure-samples", k_structure, "K' per environment (overrides the budget)");
  ctm_cmd->add_option("--bn-samples", k_bn, "K'' (overrides the budget)");
  ctm_cmd->add_option("--tester-eps", ctm_tester_eps, "tester threshold (overrides eps / (3 d_S Z))");
  ctm_cmd->add_option("--eps", ctm_eps, "target accuracy for the budget");
  ctm_cmd->add_option("--delta", ctm_delta, "failure probability for the budget");
  ctm_cmd->add_option("--c1", c1, "structure budget constant");
  ctm_cmd->add_option("--c2", c2, "BN budget constant");
  ctm_cmd->add_option("--Z", ctm_z, "declared sparsity (default: causal in-degree)");

  // plan
  Common plan;
  std::string plan_model;
  RewardFlags plan_reward;
  auto* plan_cmd = app.add_subcommand("plan", "Finite-horizon value iteration on a model");
  add_common(plan_cmd, plan);
  plan_cmd->add_option("--model", plan_model, "model JSON")->required()->check(CLI::ExistingFile);
  add_reward(plan_cmd, plan_reward);

  // evaluate
  Common eval;
  std::string eval_model, eval_policy;
  RewardFlags eval_reward;
  auto* eval_cmd = app.add_subcommand("evaluate", "Exact value of a policy on a model");
  add_common(eval_cmd, eval);
  eval_cmd->add_option("--model", eval_model, "model JSON")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--policy", eval_policy, "policy JSON")->required()->check(CLI::ExistingFile);
  add_reward(eval_cmd, eval_reward);

  // experiment
  Common exp;
  std::string exp_kind;
  std::optional<std::size_t> exp_reps;
  std::string exp_grid;
  auto* exp_cmd = app.add_subcommand("experiment", "Run an experiment and write CSV, summary and manifest");
  add_common(exp_cmd, exp);
  exp_cmd->add_option("kind", exp_kind, "structure, model or value")
      ->required()
      ->check(CLI::IsMember({"structure", "model", "value"}));
  exp_cmd->add_option("--reps", exp_reps, "repetitions");
  exp_cmd->add_option("--grid", exp_grid, "comma-separated sample sizes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (gen_cmd->parsed()) {
      const ctm::Universe universe = ctm::random_universe(universe_from(gen));
      const fs::path dir = out_or(gen, "universe");
      ctm::write_universe(dir, universe);
      const auto diversity = ctm::diversity_check(universe.cls);
      std::cout << "wrote " << dir.string() << ": M=" << universe.cls.size() << " rounds=" << universe.rounds
                << " lambda=" << ctm::format_double(universe.lambda)
                << " evenness_residual=" << ctm::format_double(universe.evenness.max_per_feature())
                << " diverse=" << (diversity.diverse ? "yes" : "no") << "\n";
    } else if (st_cmd->parsed()) {
      const ctm::EnvironmentClass cls = ctm::read_class(st_class);
      const fs::path dir = out_or(st, "structure");
      std::vector<ctm::CausalGraph> graphs;
      ctm::Json reports = ctm::Json::array();
      for (std::size_t i = 0; i < cls.size(); ++i) {
        ctm::Rng rng(ctm::structure_seed(st.seed, i));
        const auto report = ctm::estimate_structure(cls.environment(i).model, st_samples, st_eps, rng);
        ctm::write_text(dir / ("env_" + std::to_string(i) + ".dot"), ctm::to_dot(report.graph, "env_" + std::to_string(i)));
        reports.push_back(ctm::report_to_json(report));
        graphs.push_back(report.graph);
      }
      const ctm::CausalGraph g = ctm::intersect_graphs(graphs);
      ctm::write_text(dir / "graph.dot", ctm::to_dot(g, "estimated"));
      ctm::write_json(dir / "reports.json", reports);
      std::cout << "edges=" << g.edge_count();
      if (cls.causal_graph()) std::cout << " ged=" << ctm::graph_edit_distance(g, *cls.causal_graph());
      std::cout << "\n";
    } else if (bn_cmd->parsed()) {
      const ctm::EnvironmentClass cls = ctm::read_class(bn_class);
      const ctm::CausalGraph graph = ctm::parse_dot(ctm::read_text(bn_graph));
      const auto estimate = ctm::estimate_bn(ctm::MixtureSampler(cls), graph, bn_samples, bn.seed);
      ctm::Json model = ctm::model_to_json(estimate.model);
      model["annotations"] = {{"K", estimate.budget}, {"K_prime", estimate.per_cell}, {"seed", estimate.seed}};
      const fs::path path = out_or(bn, "bn.json");
      ctm::write_json(path, model);
      std::cout << "per_cell=" << estimate.per_cell << " samples_used=" << estimate.samples_used;
      if (cls.causal_model()) {
        std::cout << " bn_l1_error=" << ctm::format_double(ctm::bn_l1_error(estimate.model, *cls.causal_model()));
      }
      std::cout << "\n";
    } else if (ctm_cmd->parsed()) {
      const ctm::EnvironmentClass cls = ctm::read_class(ctm_class);
      ctm::CtmResult result;
      if (k_structure && k_bn) {
        const double tester = ctm_tester_eps.value_or(0.1);
        result = ctm::estimate_ctm(cls, ctm::CtmOptions{*k_structure, *k_bn, tester, ctm_common.seed, ctm_common.jobs});
      } else if (k_structure || k_bn) {
        throw ctm::Error(ctm::ErrorKind::kConfigError, "give both --structure-samples and --bn-samples, or neither");
      } else {
        std::size_t z = ctm_z.value_or(cls.causal_graph() ? cls.causal_graph()->max_in_degree() : 1);
        result = ctm::estimate_ctm(cls, ctm_eps, ctm_delta, c1, c2, std::max<std::size_t>(1, z), ctm_common.seed,
                                   ctm_common.jobs);
      }
      const fs::path dir = out_or(ctm_common, "ctm");
      ctm::write_ctm_result(dir, result);
      std::cout << "edges=" << result.graph.edge_count() << " total_samples=" << result.total_samples;
      if (cls.causal_graph()) std::cout << " ged=" << ctm::graph_edit_distance(result.graph, *cls.causal_graph());
      if (cls.causal_model()) {
        std::cout << " bn_l1_error=" << ctm::format_double(ctm::bn_l1_error(result.model, *cls.causal_model()));
      }
      std::cout << "\n";
    } else if (plan_cmd->parsed()) {
      const ctm::FactoredTransitionModel model = ctm::load_model(plan_model);
      const ctm::PlanningTask task = task_for(model, plan, plan_reward);
      const ctm::PlanResult result = ctm::value_iteration(model, task);
      const fs::path dir = out_or(plan, "plan");
      ctm::write_json(dir / "policy.json", ctm::policy_to_json(result.policy));
      ctm::write_json(dir / "values.json", ctm::values_to_json(result.values));
      const auto mu = ctm::uniform_distribution(model.state_space().size());
      std::cout << "V1=" << ctm::format_double(result.values.initial_value(mu)) << "\n";
    } else if (eval_cmd->parsed()) {
      const ctm::FactoredTransitionModel model = ctm::load_model(eval_model);
      const ctm::PlanningTask task = task_for(model, eval, eval_reward);
      const ctm::Policy policy = ctm::policy_from_json(ctm::read_json(eval_policy));
      const ctm::TabularTransitionModel tab = ctm::to_tabular(model);
      const auto mu = ctm::uniform_distribution(model.state_space().size());
      const double v = ctm::evaluate_policy(tab, task, policy, mu);
      const double v_star = ctm::optimal_value(tab, task, mu);
      ctm::Json report = {{"value", v}, {"optimal_value", v_star}, {"suboptimality_gap", v_star - v}};
      if (!eval.out.empty()) ctm::write_json(eval.out, report);
      std::cout << "V_pi=" << ctm::format_double(v) << " V_star=" << ctm::format_double(v_star)
                << " gap=" << ctm::format_double(v_star - v) << "\n";
    } else if (exp_cmd->parsed()) {
      ctm::ExperimentConfig config;
      if (!exp.config.empty()) config = ctm::load_config(exp.config);
      if (exp.seed_set) {
        const bool tie_universe = config.universe.seed == config.seed;
        config.seed = exp.seed;
        if (tie_universe) config.universe.seed = exp.seed;
      }
      if (exp_reps) config.reps = *exp_reps;
      if (!exp_grid.empty()) config.grid = ctm::parse_grid(exp_grid);
      if (!exp.out.empty()) config.out = exp.out;
      config.jobs = exp.jobs;
      const ctm::ExperimentOutput output = ctm::run_experiment(exp_kind, config);
      ctm::write_output(config.out, output);
      std::cout << output.summary.dump() << "\n";
    }
  } catch (const ctm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ctm::ErrorKind::kConfigError ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
