#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "corrnet/errors.hpp"

namespace corrnet {

/// Subjects x feature dimensions with binary group labels.
struct FeatureTable {
  Eigen::MatrixXd x;
  std::vector<int> groups;  // 0 or 1 per row
};

/// Two-sample Hotelling statistic
///   t^2 = (n1 n2 / (n1 + n2)) (xbar1 - xbar2)^T (S + lambda I)^-1 (xbar1 - xbar2)
/// with pooled covariance S and ridge lambda = 1e-6 tr(S)/p, which keeps the
/// solve well-posed when the feature dimension exceeds the subject count.
double hotelling_t2(const FeatureTable& table);

struct PermTestResult {
  double t2 = 0.0;
  double p = 1.0;
  int n_perm = 0;
  int n_exceed = 0;  // permutations with t_i^2 strictly greater than t2
  std::uint64_t seed = 0;
  double null_mean = 0.0;
  double null_sd = 0.0;
  double null_q95 = 0.0;
  double null_max = 0.0;
  std::vector<double> null_t2;  // populated only when keep_null is set
};

/// Nonparametric permutation test: random group-size-preserving label
/// permutations, p = #{t_i^2 > t^2} / n_perm (strict inequality). Rows are
/// canonicalized by (group, feature values) before drawing, so the result is
/// invariant to the row order of the table; replicas use derived seeds, so
/// any evaluation order gives identical counts.
PermTestResult permutation_test(const FeatureTable& table, int n_perm = 50000,
                                std::uint64_t seed = 0, bool keep_null = false);

}  // namespace corrnet
