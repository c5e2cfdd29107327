#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "ctm/io.hpp"
#include "ctm/universe.hpp"
#include "helpers.hpp"

namespace ctm {
namespace {

using testing::error_kind;

/// One state and one action feature, ternary, Y0 driven by both.
UniverseSpec small_spec(NoiseMode mode, std::size_t m, std::uint64_t seed) {
  UniverseSpec spec;
  spec.state = FactoredSpace(1, 3);
  spec.action = FactoredSpace(1, 3);
  spec.causal.intercepts = {0.5};
  spec.causal.coefficients = {{0.5, 0.5}};
  spec.causal.sigma = 0.3;
  spec.noise_scale = 0.1;
  spec.noise_mode = mode;
  spec.environments = m;
  spec.seed = seed;
  spec.sparsity = 2;
  spec.graph_threshold = 0.01;
  return spec;
}

TEST(GaussianBinCpt, CentredOnMiddleBin) {
  const auto mass = gaussian_bin_cpt(1.0, 0.1, 3);
  EXPECT_NEAR(mass[1], 0.99999943, 1e-8);
  EXPECT_NEAR(mass[0], 2.8665e-7, 1e-10);
  EXPECT_NEAR(mass[2], 2.8665e-7, 1e-10);
}

TEST(GaussianBinCpt, SaturatesUpperBin) { EXPECT_GE(gaussian_bin_cpt(10.0, 0.1, 3)[2], 1.0 - 1e-12); }

TEST(GaussianBinCpt, SymmetricAboutThreshold) {
  for (double sigma : {0.01, 0.3, 5.0}) {
    const auto mass = gaussian_bin_cpt(0.5, sigma, 2);
    EXPECT_EQ(mass[0], 0.5);
    EXPECT_EQ(mass[1], 0.5);
  }
}

TEST(GaussianBinCpt, SumsToOneAndStaysPositive) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const double mu = 8.0 * uniform01(rng) - 3.0;
    const double sigma = 0.02 + uniform01(rng);
    const int n = 2 + static_cast<int>(uniform_index(rng, 4));
    const auto mass = gaussian_bin_cpt(mu, sigma, n);
    double total = 0.0;
    for (double p : mass) {
      EXPECT_GE(p, 0.0);
      total += p;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(GaussianBinCpt, RejectsBadParameters) {
  EXPECT_EQ(error_kind([] { gaussian_bin_cpt(0.0, 0.0, 3); }), ErrorKind::kInvalidParameter);
  EXPECT_EQ(error_kind([] { gaussian_bin_cpt(0.0, 0.1, 1); }), ErrorKind::kInvalidParameter);
}

TEST(WellnessUniverse, CausalStructure) {
  const Universe u = build_wellness_universe(3, 0);
  const CausalGraph& g = *u.cls.causal_graph();
  EXPECT_EQ(g.edge_count(), 7u);
  EXPECT_EQ(g.max_in_degree(), 4u);
  EXPECT_EQ(g.in_degree(wellness::kA), 4u);
  EXPECT_EQ(g.parents(wellness::kA), (std::vector<std::size_t>{wellness::kA, wellness::kS, wellness::kD, wellness::kSt}));
  EXPECT_EQ(g.parents(wellness::kW), (std::vector<std::size_t>{wellness::kW, wellness::kP, wellness::kD}));
  EXPECT_EQ(u.cls.state_space(), FactoredSpace(2, 3));
  EXPECT_EQ(u.cls.action_space(), FactoredSpace(5, 3));
}

TEST(WellnessUniverse, MemberPatternsAreSupersetsOfCausalGraph) {
  const Universe u = build_wellness_universe(3, 0);
  for (const Environment& env : u.cls.environments()) {
    const CausalGraph pattern = env.model.graph();
    EXPECT_EQ(pattern.edge_count(), 14u);
    for (const Edge& e : u.cls.causal_graph()->edges()) EXPECT_TRUE(pattern.has_edge(e));
  }
}

TEST(WellnessUniverse, DiverseWithPositiveLambda) {
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const Universe u = build_wellness_universe(3, seed);
    EXPECT_TRUE(diversity_check(u.cls).diverse);
    EXPECT_GT(u.lambda, 0.0);
    EXPECT_EQ(u.lambda, lambda_sufficiency(u.cls, *u.cls.causal_model()));
  }
}

TEST(WellnessUniverse, GroundTruthIsExactDependenceSubgraph) {
  const Universe u = build_wellness_universe(3, 0);
  EXPECT_EQ(epsilon_dependency_subgraph(*u.cls.causal_model(), 1e-12), *u.cls.causal_graph());
  for (const Environment& env : u.cls.environments()) {
    EXPECT_EQ(env.true_graph, epsilon_dependency_subgraph(env.model, u.spec.graph_threshold));
  }
}

TEST(WellnessUniverse, CptRowsNormalized) {
  const Universe u = build_wellness_universe(3, 0);
  std::vector<const FactoredTransitionModel*> models = u.cls.models();
  models.push_back(&*u.cls.causal_model());
  for (const FactoredTransitionModel* m : models) {
    for (std::size_t j = 0; j < 2; ++j) {
      for (std::size_t r = 0; r < m->row_count(j); ++r) {
        double total = 0.0;
        for (double p : m->row(j, r)) total += p;
        EXPECT_NEAR(total, 1.0, 1e-12);
      }
    }
  }
}

TEST(WellnessUniverse, SeedDeterminism) {
  const Universe a = build_wellness_universe(3, 9);
  const Universe b = build_wellness_universe(3, 9);
  const Universe c = build_wellness_universe(3, 10);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(model_to_json(a.cls.environment(i).model).dump(), model_to_json(b.cls.environment(i).model).dump());
  }
  EXPECT_NE(model_to_json(a.cls.environment(0).model).dump(), model_to_json(c.cls.environment(0).model).dump());
}

TEST(RandomUniverse, ZeroNoiseGivesCopies) {
  UniverseSpec spec = small_spec(NoiseMode::kIndependent, 3, 4);
  spec.noise_scale = 0.0;
  const Universe u = random_universe(spec);
  EXPECT_EQ(u.lambda, 0.0);
  EXPECT_LE(u.evenness.max_per_feature(), 1e-15);
  for (const Environment& env : u.cls.environments()) EXPECT_EQ(sup_l1_distance(env.model, *u.cls.causal_model()), 0.0);
}

TEST(RandomUniverse, DeclaredSparsityTooSmall) {
  UniverseSpec spec = small_spec(NoiseMode::kIndependent, 3, 4);
  spec.sparsity = 1;
  EXPECT_EQ(error_kind([&] { random_universe(spec); }), ErrorKind::kSpecInfeasible);
}

TEST(RandomUniverse, MirroredModesNeedEvenM) {
  EXPECT_EQ(error_kind([] { random_universe(small_spec(NoiseMode::kMirroredCoefficients, 3, 1)); }),
            ErrorKind::kSpecInfeasible);
  UniverseSpec spec = small_spec(NoiseMode::kMirroredFactors, 2, 1);
  spec.noise_scale = 0.6;
  EXPECT_EQ(error_kind([&] { random_universe(spec); }), ErrorKind::kSpecInfeasible);
}

TEST(RandomUniverse, GivesUpAfterBoundedRounds) {
  UniverseSpec spec = small_spec(NoiseMode::kIndependent, 2, 1);
  spec.separation = 5.0;
  spec.max_rounds = 5;
  EXPECT_EQ(error_kind([&] { random_universe(spec); }), ErrorKind::kSpecInfeasible);
}

TEST(RandomUniverse, MirroredCoefficientsAreMoreEvenThanIndependent) {
  const UniverseSpec spec = small_spec(NoiseMode::kIndependent, 2, 5);
  const auto causal = model_from_linear_gaussian(spec.state, spec.action, spec.causal);
  Rng rng(31);
  const auto first = detail::coefficient_noise(spec, rng);
  const auto second = detail::coefficient_noise(spec, rng);
  const auto mu = uniform_distribution(3);
  auto make = [&](const std::vector<double>& a, double sign_a, const std::vector<double>& b, double sign_b) {
    std::vector<Environment> envs;
    envs.emplace_back(0, detail::perturbed_coefficient_model(spec, a, sign_a), CausalGraph(1, 1, 3), mu);
    envs.emplace_back(1, detail::perturbed_coefficient_model(spec, b, sign_b), CausalGraph(1, 1, 3), mu);
    return evenness_residual(EnvironmentClass(std::move(envs)), causal);
  };
  const auto mirrored = make(first, 1.0, first, -1.0);
  const auto independent = make(first, 1.0, second, 1.0);
  EXPECT_LT(mirrored.max_per_feature(), independent.max_per_feature());
  EXPECT_LT(mirrored.per_feature_l1[0], independent.per_feature_l1[0]);
}

TEST(RandomUniverse, MirroredFactorsAreExactlyEven) {
  UniverseSpec spec = wellness_spec(4, 3);
  spec.noise_mode = NoiseMode::kMirroredFactors;
  spec.noise_scale = 0.3;
  const Universe u = random_universe(spec);
  EXPECT_LT(u.evenness.max_per_feature(), 1e-12);
  for (double l1 : u.evenness.per_feature_l1) EXPECT_LT(l1, 1e-12);
  // Full rows are products of factors, so paired signs leave a cross term.
  EXPECT_GT(u.evenness.joint, 0.0);
  EXPECT_GT(u.lambda, 0.0);
  EXPECT_TRUE(diversity_check(u.cls).diverse);
}

TEST(HeldoutEnvironment, DeterministicAndFresh) {
  const UniverseSpec spec = wellness_spec(3, 2);
  const Universe u = random_universe(spec);
  const Environment a = draw_heldout_environment(spec, 77, 3);
  const Environment b = draw_heldout_environment(spec, 77, 3);
  EXPECT_EQ(a.model.cpts(), b.model.cpts());
  for (const Environment& env : u.cls.environments()) EXPECT_GT(sup_l1_distance(env.model, a.model), 0.0);
}

}  // namespace
}  // namespace ctm
