#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ctm {

enum class ErrorKind {
  kEnumerationTooLarge,
  kDimensionMismatch,
  kOutOfRange,
  kEmptyJoint,
  kInvalidParameter,
  kEmptyInput,
  kDivisionByZeroSupport,
  kMissingGroundTruth,
  kSpecInfeasible,
  kConfigError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kEnumerationTooLarge: return "EnumerationTooLarge";
    case ErrorKind::kDimensionMismatch: return "DimensionMismatch";
    case ErrorKind::kOutOfRange: return "OutOfRange";
    case ErrorKind::kEmptyJoint: return "EmptyJoint";
    case ErrorKind::kInvalidParameter: return "InvalidParameter";
    case ErrorKind::kEmptyInput: return "EmptyInput";
    case ErrorKind::kDivisionByZeroSupport: return "DivisionByZeroSupport";
    case ErrorKind::kMissingGroundTruth: return "MissingGroundTruth";
    case ErrorKind::kSpecInfeasible: return "SpecInfeasible";
    case ErrorKind::kConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a kind so callers (and the CLI
/// exit-code mapping) can dispatch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Dense/exact operations refuse to materialize more entries than this.
inline constexpr std::uint64_t kEnumerationLimit = 100'000'000;

/// n^d, saturating at uint64 max.
inline std::uint64_t saturating_pow(std::uint64_t base, std::size_t exponent) {
  std::uint64_t result = 1;
  for (std::size_t i = 0; i < exponent; ++i) {
    if (base != 0 && result > std::numeric_limits<std::uint64_t>::max() / base) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    result *= base;
  }
  return result;
}

inline std::uint64_t saturating_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) {
    return std::numeric_limits<std::uint64_t>::max();
  }
  return a * b;
}

// ---------------------------------------------------------------------------
// Randomness
// ---------------------------------------------------------------------------

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a master seed and a tag path,
/// e.g. derive_seed(master, {experiment, rep, grid_index}).
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t tag : tags) h = splitmix64(h ^ splitmix64(tag + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

/// Uniform double in [0, 1) from the top 53 bits; identical on every platform,
/// unlike std::uniform_real_distribution.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform integer in [0, n) by rejection (no modulo bias).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  const std::uint64_t bound = n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t draw = rng();
  while (draw >= limit) draw = rng();
  return static_cast<std::size_t>(draw % bound);
}

/// Inverse-CDF draw over the stored row order. Falls back to the last outcome
/// with positive mass when round-off leaves the cumulative sum below u.
inline int sample_categorical(std::span<const double> probs, Rng& rng) {
  const double u = uniform01(rng);
  double cumulative = 0.0;
  int last_positive = 0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (probs[k] <= 0.0) continue;
    cumulative += probs[k];
    last_positive = static_cast<int>(k);
    if (u < cumulative) return last_positive;
  }
  return last_positive;
}

// ---------------------------------------------------------------------------
// Formatting
// ---------------------------------------------------------------------------

/// Shortest decimal string that round-trips to the same double.
inline std::string format_double(double value) {
  char buffer[64];
  auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

}  // namespace ctm
