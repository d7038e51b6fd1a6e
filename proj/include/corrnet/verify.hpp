#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace corrnet {

struct CheckResult {
  std::string name;
  std::string requirement;  // human-readable bound, e.g. "< 1e-9"
  double measured = 0.0;
  bool pass = false;
};

struct VerifyOptions {
  std::uint64_t seed = 7;
  /// Negative control: evaluate translated masks by nearest-grid-point
  /// interpolation instead of exact anchor translation, which destroys the
  /// equivariance of the discrete correlation.
  bool break_equivariance = false;
};

/// The full invariant suite: quadrature sums, basis orthogonality, induced
/// bases, isometry/section/transitivity, correlation equivariance, the
/// impulse-response reconstruction, and a miniature-network gradient check.
std::vector<CheckResult> run_verification(const VerifyOptions& options);

bool all_passed(const std::vector<CheckResult>& results);
std::string verification_report(const std::vector<CheckResult>& results);

}  // namespace corrnet
