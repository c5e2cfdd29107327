#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ctm/core.hpp"

namespace ctm {

/// n x n contingency table of (A, B) observations.
class EmpiricalJoint {
 public:
  explicit EmpiricalJoint(int arity) : arity_(arity), counts_(static_cast<std::size_t>(arity) * arity, 0) {
    if (arity < 2) throw Error(ErrorKind::kInvalidParameter, "joint needs n >= 2");
  }

  EmpiricalJoint& accumulate(int a, int b) {
    if (a < 0 || a >= arity_ || b < 0 || b >= arity_) {
      throw Error(ErrorKind::kOutOfRange, "pair (" + std::to_string(a) + ", " + std::to_string(b) +
                                              ") outside [0, " + std::to_string(arity_) + ")");
    }
    ++counts_[static_cast<std::size_t>(a) * arity_ + b];
    ++total_;
    return *this;
  }

  int arity() const { return arity_; }
  std::uint64_t total() const { return total_; }
  std::uint64_t count(int a, int b) const { return counts_.at(static_cast<std::size_t>(a) * arity_ + b); }
  const std::vector<std::uint64_t>& counts() const { return counts_; }

 private:
  int arity_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

/// sum_{a,b} |P(a,b) - P_A(a) P_B(b)| for a joint given as n*n probabilities.
inline double l1_to_product_of_marginals(std::span<const double> joint, int arity) {
  const auto n = static_cast<std::size_t>(arity);
  std::vector<double> row_marginal(n, 0.0);
  std::vector<double> col_marginal(n, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      row_marginal[a] += joint[a * n + b];
      col_marginal[b] += joint[a * n + b];
    }
  }
  double distance = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      distance += std::abs(joint[a * n + b] - row_marginal[a] * col_marginal[b]);
    }
  }
  return distance;
}

inline double l1_to_product_of_marginals(const EmpiricalJoint& joint) {
  if (joint.total() == 0) throw Error(ErrorKind::kEmptyJoint, "no observations");
  std::vector<double> probs(joint.counts().size());
  const double total = static_cast<double>(joint.total());
  for (std::size_t k = 0; k < probs.size(); ++k) probs[k] = static_cast<double>(joint.counts()[k]) / total;
  return l1_to_product_of_marginals(probs, joint.arity());
}

/**
 * Samples the plug-in tester needs for an (eps, delta) guarantee:
 * K = ceil(72 n^2 ln(6/delta) / eps^2).
 *
 * The statistic deviates from the true distance by at most the sum of three
 * empirical L1 errors (joint and both marginals); the Weissman bound drives
 * each below eps/6 with probability 1 - delta/3 at this K.
 */
inline std::uint64_t tester_sample_size(int arity, double eps, double delta) {
  if (arity < 2) throw Error(ErrorKind::kInvalidParameter, "tester needs n >= 2");
  if (!(eps > 0.0 && eps <= 2.0)) throw Error(ErrorKind::kInvalidParameter, "eps must lie in (0, 2]");
  if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorKind::kInvalidParameter, "delta must lie in (0, 1)");
  const double n = arity;
  const double k = std::ceil(72.0 * n * n * std::log(6.0 / delta) / (eps * eps));
  return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(k));
}

enum class Verdict { kIndependent, kDependent };

struct TestVerdict {
  Verdict verdict = Verdict::kIndependent;
  double statistic = 0.0;
  double threshold = 0.0;
};

/// Dependent iff the plug-in distance reaches eps/2 (ties count as Dependent).
inline TestVerdict independence_test(const EmpiricalJoint& joint, double eps) {
  const double statistic = l1_to_product_of_marginals(joint);
  const double threshold = eps / 2.0;
  return {statistic >= threshold ? Verdict::kDependent : Verdict::kIndependent, statistic, threshold};
}

}  // namespace ctm
