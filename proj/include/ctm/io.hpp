#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctm/bn_estimation.hpp"
#include "ctm/core.hpp"
#include "ctm/ctm_pipeline.hpp"
#include "ctm/factored_mdp.hpp"
#include "ctm/graph.hpp"
#include "ctm/planning.hpp"
#include "ctm/structure_learning.hpp"
#include "ctm/universe.hpp"

namespace ctm {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kConfigError, "cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kConfigError, "cannot write " + path.string());
  out << text;
}

inline Json read_json(const std::filesystem::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::kConfigError, path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const Json& value) { write_text(path, value.dump(2) + "\n"); }

/// 64-bit FNV-1a; stable across platforms, used for config hashes.
inline std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t value) {
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << value;
  return out.str();
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

inline Json space_to_json(const FactoredSpace& s) { return {{"d", s.d}, {"n", s.n}}; }

inline FactoredSpace space_from_json(const Json& j) {
  return FactoredSpace(j.at("d").get<std::size_t>(), j.at("n").get<int>());
}

/// {state_space, action_space, scopes, cpts}; cpts[j] is a list of rows.
/// Doubles are written with round-trip precision.
inline Json model_to_json(const FactoredTransitionModel& model) {
  Json cpts = Json::array();
  const auto n = static_cast<std::size_t>(model.arity());
  for (std::size_t j = 0; j < model.state_space().d; ++j) {
    Json rows = Json::array();
    for (std::size_t r = 0; r < model.row_count(j); ++r) {
      const auto row = model.row(j, r);
      rows.push_back(std::vector<double>(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(n)));
    }
    cpts.push_back(std::move(rows));
  }
  Json out = {{"state_space", space_to_json(model.state_space())},
              {"action_space", space_to_json(model.action_space())},
              {"scopes", model.scopes()},
              {"cpts", std::move(cpts)}};
  if (model.sparsity()) out["sparsity"] = *model.sparsity();
  return out;
}

inline FactoredTransitionModel model_from_json(const Json& j) {
  try {
    auto scopes = j.at("scopes").get<std::vector<std::vector<std::size_t>>>();
    std::vector<std::vector<double>> cpts;
    for (const Json& rows : j.at("cpts")) {
      std::vector<double> flat;
      for (const Json& row : rows) {
        for (const Json& p : row) flat.push_back(p.get<double>());
      }
      cpts.push_back(std::move(flat));
    }
    std::optional<std::size_t> sparsity;
    if (j.contains("sparsity")) sparsity = j.at("sparsity").get<std::size_t>();
    return FactoredTransitionModel(space_from_json(j.at("state_space")), space_from_json(j.at("action_space")),
                                   std::move(scopes), std::move(cpts), sparsity);
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::kConfigError, std::string("malformed model: ") + e.what());
  }
}

inline FactoredTransitionModel load_model(const std::filesystem::path& path) { return model_from_json(read_json(path)); }

// ---------------------------------------------------------------------------
// Reports, policies, values
// ---------------------------------------------------------------------------

inline Json report_to_json(const StructureReport& report) {
  Json pairs = Json::array();
  for (const PairStatistic& p : report.pairs) {
    pairs.push_back({{"input", p.pair.input},
                     {"output", p.pair.output},
                     {"statistic", p.test.statistic},
                     {"threshold", p.test.threshold},
                     {"verdict", p.test.verdict == Verdict::kDependent ? "dependent" : "independent"}});
  }
  return {{"samples", report.samples}, {"edges", report.graph.edge_count()}, {"pairs", std::move(pairs)}};
}

inline Json policy_to_json(const Policy& policy) { return {{"horizon", policy.horizon()}, {"actions", policy.actions}}; }

inline Policy policy_from_json(const Json& j) {
  try {
    return Policy{j.at("actions").get<std::vector<std::vector<std::size_t>>>()};
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::kConfigError, std::string("malformed policy: ") + e.what());
  }
}

inline Json values_to_json(const ValueTable& values) { return {{"values", values.values}}; }

inline Json budget_to_json(const Budget& b) {
  return {{"K_structure", b.structure_samples}, {"K_bn", b.bn_samples}, {"C_structure", b.c_structure},
          {"C_bn", b.c_bn},                     {"eps", b.eps},           {"delta", b.delta},
          {"M", b.environments},                {"d_S", b.state_dims},    {"d_A", b.action_dims},
          {"n", b.arity},                       {"Z", b.sparsity},        {"structure_eps", b.structure_eps},
          {"test_delta", b.test_delta},         {"bn_delta", b.bn_delta}};
}

/// Writes {graph.dot, model.json, reports.json, manifest.json} into `dir`.
inline void write_ctm_result(const std::filesystem::path& dir, const CtmResult& result) {
  std::filesystem::create_directories(dir);
  write_text(dir / "graph.dot", to_dot(result.graph, "estimated"));
  Json model = model_to_json(result.model);
  model["annotations"] = {{"K", result.options.bn_samples},
                          {"K_prime", result.per_cell},
                          {"seed", result.options.seed}};
  write_json(dir / "model.json", model);
  Json reports = Json::array();
  for (const StructureReport& r : result.reports) reports.push_back(report_to_json(r));
  write_json(dir / "reports.json", reports);
  Json manifest = {{"graph", "graph.dot"},
                   {"model", "model.json"},
                   {"reports", "reports.json"},
                   {"seed", result.options.seed},
                   {"structure_eps", result.options.structure_eps},
                   {"samples",
                    {{"structure_per_environment", result.options.structure_samples},
                     {"structure_total", result.structure_samples_used},
                     {"bn_requested", result.options.bn_samples},
                     {"bn_per_cell", result.per_cell},
                     {"bn_used", result.bn_samples_used},
                     {"total", result.total_samples}}}};
  if (result.budget) manifest["budget"] = budget_to_json(*result.budget);
  write_json(dir / "manifest.json", manifest);
}

// ---------------------------------------------------------------------------
// Universe specs and classes
// ---------------------------------------------------------------------------

/// Accepts {"universe": "wellness", "M": .., "seed": ..} or a full linear-
/// Gaussian description. `default_seed` applies when no seed is given.
inline UniverseSpec universe_spec_from_json(const Json& j, std::uint64_t default_seed) {
  try {
    const std::size_t m = j.value("M", std::size_t{3});
    const std::uint64_t seed = j.value("universe_seed", j.value("seed", default_seed));
    UniverseSpec spec;
    const std::string kind = j.value("universe", std::string("wellness"));
    if (kind == "wellness") {
      spec = wellness_spec(m, seed);
    } else if (kind == "linear-gaussian") {
      spec.state = space_from_json(j.at("state_space"));
      spec.action = space_from_json(j.at("action_space"));
      spec.causal.intercepts = j.at("intercepts").get<std::vector<double>>();
      spec.causal.coefficients = j.at("coefficients").get<std::vector<std::vector<double>>>();
      spec.causal.sigma = j.value("sigma", 0.1);
      spec.environments = m;
      spec.seed = seed;
      spec.sparsity = j.at("Z").get<std::size_t>();
    } else {
      throw Error(ErrorKind::kConfigError, "unknown universe kind '" + kind + "'");
    }
    spec.noise_scale = j.value("noise_scale", spec.noise_scale);
    if (j.contains("noise_mode")) spec.noise_mode = parse_noise_mode(j.at("noise_mode").get<std::string>());
    spec.graph_threshold = j.value("graph_threshold", spec.graph_threshold);
    spec.separation = j.value("separation", spec.separation);
    spec.max_rounds = j.value("max_rounds", spec.max_rounds);
    if (j.contains("initial_distribution")) {
      spec.initial_distribution = j.at("initial_distribution").get<std::vector<double>>();
    }
    detail::validate_spec(spec);
    return spec;
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::kConfigError, std::string("malformed universe spec: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kConfigError) throw;
    throw Error(ErrorKind::kConfigError, e.what());
  }
}

inline Json universe_spec_to_json(const UniverseSpec& spec) {
  return {{"state_space", space_to_json(spec.state)},
          {"action_space", space_to_json(spec.action)},
          {"intercepts", spec.causal.intercepts},
          {"coefficients", spec.causal.coefficients},
          {"sigma", spec.causal.sigma},
          {"noise_scale", spec.noise_scale},
          {"noise_mode", std::string(to_string(spec.noise_mode))},
          {"M", spec.environments},
          {"seed", spec.seed},
          {"Z", spec.sparsity},
          {"graph_threshold", spec.graph_threshold},
          {"separation", spec.separation},
          {"max_rounds", spec.max_rounds},
          {"state_names", spec.state_names},
          {"action_names", spec.action_names}};
}

/// Directory layout: manifest.json, causal.json, causal.dot, env_<i>.json,
/// env_<i>.dot.
inline void write_universe(const std::filesystem::path& dir, const Universe& universe) {
  std::filesystem::create_directories(dir);
  const EnvironmentClass& cls = universe.cls;
  Json envs = Json::array();
  for (const Environment& env : cls.environments()) {
    const std::string stem = "env_" + std::to_string(env.id);
    write_json(dir / (stem + ".json"), model_to_json(env.model));
    write_text(dir / (stem + ".dot"), to_dot(env.true_graph, stem));
    envs.push_back({{"id", env.id}, {"model", stem + ".json"}, {"graph", stem + ".dot"}});
  }
  write_json(dir / "causal.json", model_to_json(*cls.causal_model()));
  write_text(dir / "causal.dot", to_dot(*cls.causal_graph(), "causal"));
  Json manifest = {{"spec", universe_spec_to_json(universe.spec)},
                   {"seed", universe.spec.seed},
                   {"rounds", universe.rounds},
                   {"lambda", universe.lambda},
                   {"evenness_residual", universe.evenness.per_feature},
                   {"evenness_residual_joint", universe.evenness.joint},
                   {"evenness_l1", universe.evenness.per_feature_l1},
                   {"initial_distribution", cls.initial_distribution()},
                   {"causal_model", "causal.json"},
                   {"causal_graph", "causal.dot"},
                   {"environments", std::move(envs)}};
  write_json(dir / "manifest.json", manifest);
}

inline EnvironmentClass read_class(const std::filesystem::path& dir) {
  const Json manifest = read_json(dir / "manifest.json");
  try {
    const auto mu = manifest.at("initial_distribution").get<std::vector<double>>();
    std::vector<Environment> envs;
    for (const Json& e : manifest.at("environments")) {
      envs.emplace_back(e.at("id").get<int>(), load_model(dir / e.at("model").get<std::string>()),
                        parse_dot(read_text(dir / e.at("graph").get<std::string>())), mu);
    }
    std::optional<CausalGraph> graph;
    std::optional<FactoredTransitionModel> model;
    if (manifest.contains("causal_graph")) graph = parse_dot(read_text(dir / manifest.at("causal_graph").get<std::string>()));
    if (manifest.contains("causal_model")) model = load_model(dir / manifest.at("causal_model").get<std::string>());
    return EnvironmentClass(std::move(envs), std::move(graph), std::move(model));
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::kConfigError, std::string("malformed class manifest: ") + e.what());
  }
}

}  // namespace ctm
