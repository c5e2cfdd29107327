#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "ctm/core.hpp"
#include "ctm/factored_mdp.hpp"

namespace ctm::testing {

/// Kind of the ctm::Error thrown by f, or nullopt when it returns normally.
template <class F>
std::optional<ErrorKind> error_kind(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

/// Row of n probabilities drawn from Dirichlet(1, ..., 1).
inline std::vector<double> random_row(int n, Rng& rng) {
  std::vector<double> row(static_cast<std::size_t>(n));
  double sum = 0.0;
  for (double& p : row) {
    p = -std::log(1.0 - uniform01(rng));
    sum += p;
  }
  for (double& p : row) p /= sum;
  return row;
}

/// Factored model with the given scopes and random CPT rows.
inline FactoredTransitionModel random_model(FactoredSpace state, FactoredSpace action,
                                            std::vector<std::vector<std::size_t>> scopes, Rng& rng) {
  std::vector<std::vector<double>> cpts(state.d);
  for (std::size_t j = 0; j < state.d; ++j) {
    const auto rows = saturating_pow(static_cast<std::uint64_t>(state.n), scopes[j].size());
    for (std::uint64_t r = 0; r < rows; ++r) {
      const auto row = random_row(state.n, rng);
      cpts[j].insert(cpts[j].end(), row.begin(), row.end());
    }
  }
  return FactoredTransitionModel(state, action, std::move(scopes), std::move(cpts));
}

/// Every feature's single CPT row is `row`; no inputs matter.
inline FactoredTransitionModel constant_model(FactoredSpace state, FactoredSpace action, std::vector<double> row) {
  std::vector<std::vector<std::size_t>> scopes(state.d);
  std::vector<std::vector<double>> cpts(state.d, row);
  return FactoredTransitionModel(state, action, std::move(scopes), std::move(cpts));
}

/// Y[j] copies input feature parents[j] deterministically.
inline FactoredTransitionModel copy_model(FactoredSpace state, FactoredSpace action,
                                          const std::vector<std::size_t>& parents) {
  const auto n = static_cast<std::size_t>(state.n);
  std::vector<std::vector<std::size_t>> scopes;
  std::vector<std::vector<double>> cpts;
  for (std::size_t p : parents) {
    scopes.push_back({p});
    std::vector<double> table(n * n, 0.0);
    for (std::size_t v = 0; v < n; ++v) table[v * n + v] = 1.0;
    cpts.push_back(std::move(table));
  }
  return FactoredTransitionModel(state, action, std::move(scopes), std::move(cpts));
}

}  // namespace ctm::testing
