#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ctm/core.hpp"
#include "ctm/ctm_pipeline.hpp"
#include "ctm/factored_mdp.hpp"
#include "ctm/graph.hpp"
#include "ctm/structure_learning.hpp"

namespace ctm {

namespace detail {

inline double lower_tail(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
inline double upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace detail

/**
 * Mass of N(mu, sigma^2) on the bins (-inf, 0.5], (0.5, 1.5], ..., (n - 1.5, inf).
 *
 * Each bin is computed from whichever tail keeps the subtraction away from 1,
 * so far-tail masses stay strictly positive instead of cancelling to zero.
 */
inline std::vector<double> gaussian_bin_cpt(double mu, double sigma, int arity) {
  if (!(sigma > 0.0)) throw Error(ErrorKind::kInvalidParameter, "sigma must be positive");
  if (arity < 2) throw Error(ErrorKind::kInvalidParameter, "need n >= 2");
  const auto n = static_cast<std::size_t>(arity);
  std::vector<double> mass(n, 0.0);
  auto z = [&](std::size_t k) { return (static_cast<double>(k) + 0.5 - mu) / sigma; };
  mass[0] = detail::lower_tail(z(0));
  mass[n - 1] = detail::upper_tail(z(n - 2));
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const double a = z(k - 1);
    const double b = z(k);
    if (a >= 0.0) {
      mass[k] = detail::upper_tail(a) - detail::upper_tail(b);
    } else if (b <= 0.0) {
      mass[k] = detail::lower_tail(b) - detail::lower_tail(a);
    } else {
      mass[k] = 1.0 - detail::lower_tail(a) - detail::upper_tail(b);
    }
  }
  return mass;
}

/// Per output feature j: Y[j] ~ N(intercept_j + <coefficients_j, X>, sigma^2),
/// discretized by gaussian_bin_cpt. Zero coefficients mark absent edges.
struct LinearGaussianSpec {
  std::vector<double> intercepts;
  std::vector<std::vector<double>> coefficients;
  double sigma = 0.1;

  void validate(std::size_t state_dims, std::size_t input_dims) const {
    if (!(sigma > 0.0)) throw Error(ErrorKind::kInvalidParameter, "sigma must be positive");
    if (intercepts.size() != state_dims || coefficients.size() != state_dims) {
      throw Error(ErrorKind::kDimensionMismatch, "need one intercept and coefficient row per state feature");
    }
    for (const auto& row : coefficients) {
      if (row.size() != input_dims) {
        throw Error(ErrorKind::kDimensionMismatch, "coefficient rows must have d_S + d_A entries");
      }
    }
  }

  CausalGraph graph(std::size_t state_dims, std::size_t action_dims, int arity) const {
    CausalGraph g(state_dims, action_dims, arity);
    for (std::size_t j = 0; j < state_dims; ++j) {
      for (std::size_t z = 0; z < state_dims + action_dims; ++z) {
        if (coefficients[j][z] != 0.0) g.add_edge(z, j);
      }
    }
    return g;
  }
};

/// Factored model whose scopes are the nonzero-coefficient inputs.
inline FactoredTransitionModel model_from_linear_gaussian(const FactoredSpace& state, const FactoredSpace& action,
                                                          const LinearGaussianSpec& spec) {
  const std::size_t inputs = state.d + action.d;
  spec.validate(state.d, inputs);
  const int n = state.n;
  std::vector<std::vector<std::size_t>> scopes(state.d);
  std::vector<std::vector<double>> cpts(state.d);
  for (std::size_t j = 0; j < state.d; ++j) {
    for (std::size_t z = 0; z < inputs; ++z) {
      if (spec.coefficients[j][z] != 0.0) scopes[j].push_back(z);
    }
    const std::size_t rows = static_cast<std::size_t>(saturating_pow(static_cast<std::uint64_t>(n), scopes[j].size()));
    std::vector<int> parents(scopes[j].size(), 0);
    const FactoredSpace parent_space(std::max<std::size_t>(1, scopes[j].size()), n);
    for (std::size_t r = 0; r < rows; ++r) {
      if (!scopes[j].empty()) decode(parent_space, r, parents);
      double mu = spec.intercepts[j];
      for (std::size_t k = 0; k < scopes[j].size(); ++k) mu += spec.coefficients[j][scopes[j][k]] * parents[k];
      const auto row = gaussian_bin_cpt(mu, spec.sigma, n);
      cpts[j].insert(cpts[j].end(), row.begin(), row.end());
    }
  }
  return FactoredTransitionModel(state, action, std::move(scopes), std::move(cpts));
}

enum class NoiseMode {
  /// Fresh N(0, noise_scale^2) perturbation of every coefficient per environment.
  kIndependent,
  /// Environments 2k and 2k+1 receive opposite coefficient perturbations.
  kMirroredCoefficients,
  /// Environments 2k and 2k+1 receive P_G * (1 +/- c (u - E_{P_G}[u])) with
  /// u ~ U[-1, 1] per (x, y) and c = noise_scale <= 1/2: the class average of
  /// every feature's factor is exactly P_G.
  kMirroredFactors,
};

inline std::string_view to_string(NoiseMode mode) {
  switch (mode) {
    case NoiseMode::kIndependent: return "independent";
    case NoiseMode::kMirroredCoefficients: return "mirrored-coefficients";
    case NoiseMode::kMirroredFactors: return "mirrored-factors";
  }
  return "independent";
}

inline NoiseMode parse_noise_mode(std::string_view text) {
  if (text == "independent") return NoiseMode::kIndependent;
  if (text == "mirrored-coefficients") return NoiseMode::kMirroredCoefficients;
  if (text == "mirrored-factors") return NoiseMode::kMirroredFactors;
  throw Error(ErrorKind::kConfigError, "unknown noise mode '" + std::string(text) + "'");
}

struct UniverseSpec {
  FactoredSpace state;
  FactoredSpace action;
  LinearGaussianSpec causal;
  double noise_scale = 0.1;
  NoiseMode noise_mode = NoiseMode::kIndependent;
  std::size_t environments = 3;
  std::uint64_t seed = 0;
  /// Empty means uniform over states.
  std::vector<double> initial_distribution;
  /// Declared Z; the causal pattern must respect it.
  std::size_t sparsity = 1;
  /// An environment's ground-truth graph holds the pairs whose exact
  /// dependence reaches this threshold.
  double graph_threshold = 0.05;
  /// Accepted classes keep every causal pair at least this far above the
  /// threshold in every member, and every other pair this far below it in at
  /// least one member.
  double separation = 0.0;
  std::size_t max_rounds = 1000;
  std::vector<std::string> state_names;
  std::vector<std::string> action_names;
};

struct Universe {
  UniverseSpec spec;
  EnvironmentClass cls;
  double lambda = 0.0;
  EvennessReport evenness;
  std::size_t rounds = 0;
};

namespace detail {

inline void validate_spec(const UniverseSpec& spec) {
  if (spec.state.n != spec.action.n) throw Error(ErrorKind::kInvalidParameter, "mixed arities");
  spec.causal.validate(spec.state.d, spec.state.d + spec.action.d);
  if (spec.environments < 1) throw Error(ErrorKind::kInvalidParameter, "need M >= 1");
  if (!(spec.noise_scale >= 0.0)) throw Error(ErrorKind::kInvalidParameter, "noise scale must be >= 0");
  if (!(spec.graph_threshold > 0.0)) throw Error(ErrorKind::kInvalidParameter, "graph threshold must be > 0");
  if (!(spec.separation >= 0.0)) throw Error(ErrorKind::kInvalidParameter, "separation must be >= 0");
  if (spec.noise_mode != NoiseMode::kIndependent && spec.environments % 2 != 0) {
    throw Error(ErrorKind::kSpecInfeasible, "mirrored noise modes need an even number of environments");
  }
  if (spec.noise_mode == NoiseMode::kMirroredFactors && spec.noise_scale > 0.5) {
    throw Error(ErrorKind::kSpecInfeasible, "mirrored-factor amplitude must be <= 0.5");
  }
  const CausalGraph g = spec.causal.graph(spec.state.d, spec.action.d, spec.state.n);
  if (g.max_in_degree() > spec.sparsity) {
    throw Error(ErrorKind::kSpecInfeasible, "causal pattern has in-degree " + std::to_string(g.max_in_degree()) +
                                                " > declared Z = " + std::to_string(spec.sparsity));
  }
}

inline std::vector<double> initial_distribution(const UniverseSpec& spec) {
  if (spec.initial_distribution.empty()) return uniform_distribution(spec.state.size());
  return spec.initial_distribution;
}

inline std::vector<double> coefficient_noise(const UniverseSpec& spec, Rng& rng) {
  const std::size_t inputs = spec.state.d + spec.action.d;
  std::vector<double> noise(spec.state.d * inputs, 0.0);
  if (spec.noise_scale == 0.0) return noise;
  std::normal_distribution<double> normal(0.0, spec.noise_scale);
  for (double& e : noise) e = normal(rng);
  return noise;
}

inline FactoredTransitionModel perturbed_coefficient_model(const UniverseSpec& spec, const std::vector<double>& noise,
                                                           double sign) {
  const std::size_t inputs = spec.state.d + spec.action.d;
  LinearGaussianSpec perturbed = spec.causal;
  for (std::size_t j = 0; j < spec.state.d; ++j) {
    for (std::size_t z = 0; z < inputs; ++z) perturbed.coefficients[j][z] += sign * noise[j * inputs + z];
  }
  return model_from_linear_gaussian(spec.state, spec.action, perturbed);
}

/// u[j][x * n + y] ~ U[-1, 1] over the full input space.
inline std::vector<std::vector<double>> factor_noise(const UniverseSpec& spec, Rng& rng) {
  const FactoredSpace input = joint_space(spec.state, spec.action);
  const std::size_t entries = input.size() * static_cast<std::size_t>(spec.state.n);
  std::vector<std::vector<double>> u(spec.state.d, std::vector<double>(entries, 0.0));
  for (auto& table : u) {
    for (double& v : table) v = 2.0 * uniform01(rng) - 1.0;
  }
  return u;
}

inline FactoredTransitionModel perturbed_factor_model(const UniverseSpec& spec, const FactoredTransitionModel& causal,
                                                      const std::vector<std::vector<double>>& u, double sign) {
  const FactoredSpace input = joint_space(spec.state, spec.action);
  const auto n = static_cast<std::size_t>(spec.state.n);
  std::vector<std::size_t> all_inputs(input.d);
  for (std::size_t z = 0; z < input.d; ++z) all_inputs[z] = z;
  std::vector<std::vector<std::size_t>> scopes(spec.state.d, all_inputs);
  std::vector<std::vector<double>> cpts(spec.state.d);
  std::vector<int> x(input.d, 0);
  const double c = sign * spec.noise_scale;
  for (std::size_t j = 0; j < spec.state.d; ++j) {
    cpts[j].reserve(input.size() * n);
    for (std::size_t index = 0; index < input.size(); ++index) {
      decode(input, index, x);
      const auto base = causal.row(j, causal.parent_index(j, x));
      const double* noise = &u[j][index * n];
      double centre = 0.0;
      for (std::size_t y = 0; y < n; ++y) centre += base[y] * noise[y];
      for (std::size_t y = 0; y < n; ++y) cpts[j].push_back(base[y] * (1.0 + c * (noise[y] - centre)));
    }
  }
  return FactoredTransitionModel(spec.state, spec.action, std::move(scopes), std::move(cpts));
}

inline std::vector<FactoredTransitionModel> draw_models(const UniverseSpec& spec, const FactoredTransitionModel& causal,
                                                        Rng& rng) {
  std::vector<FactoredTransitionModel> models;
  models.reserve(spec.environments);
  switch (spec.noise_mode) {
    case NoiseMode::kIndependent:
      for (std::size_t i = 0; i < spec.environments; ++i) {
        models.push_back(perturbed_coefficient_model(spec, coefficient_noise(spec, rng), 1.0));
      }
      break;
    case NoiseMode::kMirroredCoefficients:
      for (std::size_t i = 0; i < spec.environments; i += 2) {
        const auto noise = coefficient_noise(spec, rng);
        models.push_back(perturbed_coefficient_model(spec, noise, 1.0));
        models.push_back(perturbed_coefficient_model(spec, noise, -1.0));
      }
      break;
    case NoiseMode::kMirroredFactors:
      for (std::size_t i = 0; i < spec.environments; i += 2) {
        const auto u = factor_noise(spec, rng);
        models.push_back(perturbed_factor_model(spec, causal, u, 1.0));
        models.push_back(perturbed_factor_model(spec, causal, u, -1.0));
      }
      break;
  }
  return models;
}

/// Diversity of the thresholded graphs plus the separation margin.
inline bool accept_class(const UniverseSpec& spec, const CausalGraph& causal_graph,
                         const std::vector<std::vector<std::vector<double>>>& dependences) {
  const double tau = spec.graph_threshold;
  const double margin = spec.separation;
  for (std::size_t z = 0; z < causal_graph.input_dims(); ++z) {
    for (std::size_t j = 0; j < causal_graph.state_dims(); ++j) {
      if (causal_graph.has_edge(z, j)) {
        for (const auto& d : dependences) {
          if (d[z][j] < tau + margin || d[z][j] <= 0.0) return false;
        }
      } else {
        const bool cleared = std::any_of(dependences.begin(), dependences.end(), [&](const auto& d) {
          return d[z][j] < tau && d[z][j] <= tau - margin;
        });
        if (!cleared) return false;
      }
    }
  }
  return true;
}

inline Environment make_environment(int id, FactoredTransitionModel model, double threshold,
                                    const std::vector<double>& mu) {
  CausalGraph g = epsilon_dependency_subgraph(model, threshold);
  return Environment(id, std::move(model), std::move(g), mu);
}

}  // namespace detail

/**
 * Builds a class whose causal structure is the nonzero-coefficient pattern of
 * spec.causal. Members are redrawn from the same stream until the thresholded
 * member graphs intersect to exactly that pattern (with the requested
 * separation); SpecInfeasible after max_rounds.
 */
inline Universe random_universe(const UniverseSpec& spec) {
  detail::validate_spec(spec);
  const CausalGraph causal_graph = spec.causal.graph(spec.state.d, spec.action.d, spec.state.n);
  FactoredTransitionModel causal_model = model_from_linear_gaussian(spec.state, spec.action, spec.causal);
  const std::vector<double> mu = detail::initial_distribution(spec);

  Rng rng(derive_seed(spec.seed, {0x756e6976}));
  for (std::size_t round = 1; round <= spec.max_rounds; ++round) {
    std::vector<FactoredTransitionModel> models = detail::draw_models(spec, causal_model, rng);
    std::vector<std::vector<std::vector<double>>> dependences;
    for (const auto& m : models) dependences.push_back(dependence_matrix(m));
    if (!detail::accept_class(spec, causal_graph, dependences)) {
      if (spec.noise_scale == 0.0) break;  // every round would draw the same class
      continue;
    }
    std::vector<Environment> envs;
    for (std::size_t i = 0; i < models.size(); ++i) {
      envs.push_back(detail::make_environment(static_cast<int>(i), std::move(models[i]), spec.graph_threshold, mu));
    }
    Universe universe;
    universe.spec = spec;
    universe.cls = EnvironmentClass(std::move(envs), causal_graph, causal_model);
    universe.lambda = lambda_sufficiency(universe.cls, causal_model);
    universe.evenness = evenness_residual(universe.cls, causal_model);
    universe.rounds = round;
    return universe;
  }
  throw Error(ErrorKind::kSpecInfeasible, "no diverse class found within " + std::to_string(spec.max_rounds) +
                                              " rounds");
}

/// A fresh member of the universe from its own stream, not constrained by
/// diversity; used as the held-out evaluation environment.
inline Environment draw_heldout_environment(const UniverseSpec& spec, std::uint64_t seed, int id) {
  detail::validate_spec(spec);
  const FactoredTransitionModel causal = model_from_linear_gaussian(spec.state, spec.action, spec.causal);
  Rng rng(derive_seed(seed, {0x68656c64}));
  FactoredTransitionModel model;
  if (spec.noise_mode == NoiseMode::kMirroredFactors) {
    const double sign = uniform01(rng) < 0.5 ? 1.0 : -1.0;
    model = detail::perturbed_factor_model(spec, causal, detail::factor_noise(spec, rng), sign);
  } else {
    model = detail::perturbed_coefficient_model(spec, detail::coefficient_noise(spec, rng), 1.0);
  }
  return detail::make_environment(id, std::move(model), spec.graph_threshold, detail::initial_distribution(spec));
}

// ---------------------------------------------------------------------------
// Wellness domain
// ---------------------------------------------------------------------------

/// Feature order: states (A, W), actions (P, S, D, C, St).
namespace wellness {
inline constexpr std::size_t kA = 0, kW = 1, kP = 2, kS = 3, kD = 4, kC = 5, kSt = 6;
}

/**
 * Academic performance A and weight W driven by physical activity P, sleep S,
 * diet D, caffeine C and study St:
 *   mu_A = A + 0.2 D + 0.5 S + 0.8 St - 0.8
 *   mu_W = W - 0.5 D - 0.5 P + 1
 * with sigma = 0.1 and three levels per feature. Members perturb every
 * coefficient (including the zero ones) with N(0, 0.1^2) noise; intercepts are
 * not perturbed.
 */
inline UniverseSpec wellness_spec(std::size_t environments, std::uint64_t seed) {
  UniverseSpec spec;
  spec.state = FactoredSpace(2, 3);
  spec.action = FactoredSpace(5, 3);
  spec.causal.sigma = 0.1;
  spec.causal.intercepts = {-0.8, 1.0};
  //                          A    W    P     S    D     C    St
  spec.causal.coefficients = {{1.0, 0.0, 0.0, 0.5, 0.2, 0.0, 0.8},
                              {0.0, 1.0, -0.5, 0.0, -0.5, 0.0, 0.0}};
  spec.noise_scale = 0.1;
  spec.noise_mode = NoiseMode::kIndependent;
  spec.environments = environments;
  spec.seed = seed;
  spec.sparsity = 4;
  spec.graph_threshold = 0.05;
  spec.separation = 0.025;
  spec.state_names = {"A", "W"};
  spec.action_names = {"P", "S", "D", "C", "St"};
  return spec;
}

inline Universe build_wellness_universe(std::size_t environments, std::uint64_t seed) {
  return random_universe(wellness_spec(environments, seed));
}

}  // namespace ctm
