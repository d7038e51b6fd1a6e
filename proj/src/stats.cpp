#include "corrnet/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "corrnet/rng.hpp"

namespace corrnet {

namespace {

void validate(const FeatureTable& table) {
  if (table.x.rows() != static_cast<Eigen::Index>(table.groups.size()))
    throw InvalidArgument("feature table: row/label count mismatch");
  if (!table.x.allFinite()) throw InvalidArgument("feature table: non-finite entries");
  int n0 = 0, n1 = 0;
  for (int g : table.groups) {
    if (g == 0)
      ++n0;
    else if (g == 1)
      ++n1;
    else
      throw InvalidArgument("feature table: group labels must be 0 or 1");
  }
  if (n0 < 2 || n1 < 2)
    throw InsufficientData("hotelling_t2: each group needs at least 2 subjects");
}

double t2_of(const Eigen::MatrixXd& x, const std::vector<int>& groups) {
  const Eigen::Index p = x.cols();
  Eigen::Index n0 = 0, n1 = 0;
  Eigen::VectorXd mean0 = Eigen::VectorXd::Zero(p), mean1 = Eigen::VectorXd::Zero(p);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (groups[static_cast<std::size_t>(i)] == 0) {
      mean0 += x.row(i).transpose();
      ++n0;
    } else {
      mean1 += x.row(i).transpose();
      ++n1;
    }
  }
  mean0 /= static_cast<double>(n0);
  mean1 /= static_cast<double>(n1);

  Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::VectorXd& mean = groups[static_cast<std::size_t>(i)] == 0 ? mean0 : mean1;
    Eigen::VectorXd centered = x.row(i).transpose() - mean;
    pooled.noalias() += centered * centered.transpose();
  }
  pooled /= static_cast<double>(n0 + n1 - 2);

  const double lambda = 1e-6 * pooled.trace() / static_cast<double>(p);
  pooled.diagonal().array() += lambda;

  Eigen::VectorXd delta = mean0 - mean1;
  Eigen::VectorXd solved = pooled.ldlt().solve(delta);
  double quad = delta.dot(solved);
  double factor = static_cast<double>(n0) * static_cast<double>(n1) /
                  static_cast<double>(n0 + n1);
  return factor * std::max(quad, 0.0);
}

// Canonical row order: by group, then lexicographically by feature values.
// Keys the permutation stream to the table's content rather than row order.
std::vector<Eigen::Index> canonical_order(const FeatureTable& table) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(table.x.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    int ga = table.groups[static_cast<std::size_t>(a)];
    int gb = table.groups[static_cast<std::size_t>(b)];
    if (ga != gb) return ga < gb;
    for (Eigen::Index j = 0; j < table.x.cols(); ++j) {
      if (table.x(a, j) != table.x(b, j)) return table.x(a, j) < table.x(b, j);
    }
    return false;
  });
  return order;
}

}  // namespace

double hotelling_t2(const FeatureTable& table) {
  validate(table);
  return t2_of(table.x, table.groups);
}

PermTestResult permutation_test(const FeatureTable& table, int n_perm, std::uint64_t seed,
                                bool keep_null) {
  validate(table);
  if (n_perm < 1) throw InsufficientData("permutation_test: insufficient permutations");

  auto order = canonical_order(table);
  Eigen::MatrixXd x(table.x.rows(), table.x.cols());
  std::vector<int> groups(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = table.x.row(order[i]);
    groups[i] = table.groups[static_cast<std::size_t>(order[i])];
  }

  PermTestResult result;
  result.seed = seed;
  result.n_perm = n_perm;
  result.t2 = t2_of(x, groups);

  double sum = 0.0, sum_sq = 0.0, peak = 0.0;
  std::vector<double> null_values;
  null_values.reserve(static_cast<std::size_t>(n_perm));
  std::vector<int> shuffled(groups);
  for (int rep = 0; rep < n_perm; ++rep) {
    Rng rng("perm-replica-" + std::to_string(rep), seed);
    std::copy(groups.begin(), groups.end(), shuffled.begin());
    rng.shuffle(shuffled.begin(), shuffled.end());
    double ti = t2_of(x, shuffled);
    if (ti > result.t2) ++result.n_exceed;
    sum += ti;
    sum_sq += ti * ti;
    peak = std::max(peak, ti);
    null_values.push_back(ti);
  }

  result.p = static_cast<double>(result.n_exceed) / static_cast<double>(n_perm);
  result.null_mean = sum / n_perm;
  double var = sum_sq / n_perm - result.null_mean * result.null_mean;
  result.null_sd = std::sqrt(std::max(var, 0.0));
  result.null_max = peak;
  std::sort(null_values.begin(), null_values.end());
  result.null_q95 =
      null_values[static_cast<std::size_t>(std::min<double>(0.95 * n_perm, n_perm - 1))];
  if (keep_null) result.null_t2 = std::move(null_values);
  return result;
}

}  // namespace corrnet
