#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace az3d {

/// Outcome of one invariant check. `error` is the worst measured deviation and `tolerance`
/// the bound it is held to; exact checks use 0 for both.
struct CheckResult {
  std::string name;
  bool pass = false;
  double error = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

/// Random Gaussian tables and symbols drawn from them, coded and decoded in one stream.
CheckResult check_symbol_roundtrip(uint64_t seed, int tables = 100, size_t symbols = 100000);

/// Briefly trained scene of every variant: encode, decode, re-encode must match byte for byte.
CheckResult check_scene_roundtrip(uint64_t seed, size_t anchors = 400, int iters = 20);

/// Truncated and bit-flipped streams either decode or raise CodecError, never anything else,
/// and the outcome repeats on a second attempt.
CheckResult check_corrupt_streams(uint64_t seed, int trials = 60);

/// Density, Gaussian and Bernoulli tables are strictly increasing and the learned
/// cumulative is monotone for random parameters.
CheckResult check_cdf_monotone(uint64_t seed);

/// Central differences against the analytic gradients of every learned component, plus
/// the frozen-noise probe of the full loss.
std::vector<CheckResult> gradient_suite(uint64_t seed);

/// Everything above.
std::vector<CheckResult> run_self_checks(uint64_t seed);

}  // namespace az3d
