#include "corrnet/stats.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "corrnet/rng.hpp"
#include "doctest.h"

using namespace corrnet;

namespace {

FeatureTable random_table(int n0, int n1, int p, double shift, Rng& rng) {
  FeatureTable t;
  t.x.resize(n0 + n1, p);
  for (int i = 0; i < n0 + n1; ++i) {
    t.groups.push_back(i < n0 ? 0 : 1);
    for (int j = 0; j < p; ++j)
      t.x(i, j) = rng.normal() + (i < n0 ? 0.0 : shift);
  }
  return t;
}

// Exhaustive two-sample t^2 null for tiny tables: every balanced relabeling.
double exhaustive_p(const FeatureTable& table, double t2_obs) {
  const int n = static_cast<int>(table.groups.size());
  int n1 = 0;
  for (int g : table.groups) n1 += g;
  std::vector<int> pick(static_cast<std::size_t>(n), 0);
  std::fill(pick.begin(), pick.begin() + n1, 1);
  std::sort(pick.begin(), pick.end());
  int total = 0, exceed = 0;
  do {
    FeatureTable relabeled = table;
    relabeled.groups.assign(pick.begin(), pick.end());
    ++total;
    if (hotelling_t2(relabeled) > t2_obs) ++exceed;
  } while (std::next_permutation(pick.begin(), pick.end()));
  return static_cast<double>(exceed) / total;
}

}  // namespace

TEST_CASE("hotelling_t2: identical group means give a vanishing statistic") {
  FeatureTable t;
  t.x.resize(4, 3);
  t.x << 1.0, 2.0, 3.0, -1.0, 0.5, 2.0, 1.0, 2.0, 3.0, -1.0, 0.5, 2.0;
  t.groups = {0, 0, 1, 1};
  CHECK(hotelling_t2(t) < 1e-20);
}

TEST_CASE("hotelling_t2: 1-D case equals the squared two-sample t statistic") {
  Rng rng("t2-1d", 3);
  FeatureTable t = random_table(7, 9, 1, 0.8, rng);

  // independent scalar computation
  double m0 = 0, m1 = 0;
  int n0 = 7, n1 = 9;
  for (int i = 0; i < n0; ++i) m0 += t.x(i, 0);
  for (int i = n0; i < n0 + n1; ++i) m1 += t.x(i, 0);
  m0 /= n0;
  m1 /= n1;
  double ss = 0;
  for (int i = 0; i < n0; ++i) ss += (t.x(i, 0) - m0) * (t.x(i, 0) - m0);
  for (int i = n0; i < n0 + n1; ++i) ss += (t.x(i, 0) - m1) * (t.x(i, 0) - m1);
  double s2 = ss / (n0 + n1 - 2);
  double tstat = (m0 - m1) / std::sqrt(s2 * (1.0 / n0 + 1.0 / n1));

  CHECK(hotelling_t2(t) == doctest::Approx(tstat * tstat).epsilon(1e-5));
}

TEST_CASE("hotelling_t2: symmetric under label swap, input validation") {
  Rng rng("t2-swap", 5);
  FeatureTable t = random_table(6, 8, 4, 0.5, rng);
  FeatureTable swapped = t;
  for (auto& g : swapped.groups) g = 1 - g;
  CHECK(hotelling_t2(t) == doctest::Approx(hotelling_t2(swapped)).epsilon(1e-12));

  FeatureTable tiny = random_table(1, 5, 2, 0.0, rng);
  CHECK_THROWS_AS(hotelling_t2(tiny), InsufficientData);
}

TEST_CASE("permutation_test: strong separation yields a tiny p-value") {
  Rng rng("perm-strong", 7);
  FeatureTable t = random_table(20, 20, 1, 8.0, rng);
  auto result = permutation_test(t, 3000, 11);
  CHECK(result.p < 0.001);
  CHECK(result.t2 > result.null_q95);
}

TEST_CASE("permutation_test: sampled p matches the exhaustive 4-vs-4 oracle") {
  Rng rng("perm-exhaustive", 9);
  FeatureTable t = random_table(4, 4, 2, 1.0, rng);
  double t2 = hotelling_t2(t);
  double exact = exhaustive_p(t, t2);
  auto sampled = permutation_test(t, 20000, 13);
  CHECK(std::abs(sampled.p - exact) < 0.02);
  // C(8,4) = 70 balanced splits; perfect separation behaves like 1/70
  CHECK(exact >= 0.0);
}

TEST_CASE("permutation_test: reproducible to the last bit and row-order invariant") {
  Rng rng("perm-repro", 15);
  FeatureTable t = random_table(10, 10, 3, 0.7, rng);
  auto a = permutation_test(t, 500, 21);
  auto b = permutation_test(t, 500, 21);
  CHECK(a.p == b.p);
  CHECK(a.t2 == b.t2);
  CHECK(a.n_exceed == b.n_exceed);

  // permute rows (with their labels): identical result
  FeatureTable shuffled;
  std::vector<int> order = {5, 2, 9, 0, 7, 1, 8, 3, 6, 4, 15, 12, 19, 10, 17, 11, 18, 13, 16, 14};
  shuffled.x.resize(t.x.rows(), t.x.cols());
  for (std::size_t i = 0; i < order.size(); ++i) {
    shuffled.x.row(static_cast<Eigen::Index>(i)) = t.x.row(order[i]);
    shuffled.groups.push_back(t.groups[static_cast<std::size_t>(order[i])]);
  }
  auto c = permutation_test(shuffled, 500, 21);
  CHECK(c.p == a.p);
  CHECK(c.n_exceed == a.n_exceed);
}

TEST_CASE("permutation_test: monotone in the threshold on a fixed permutation set") {
  Rng rng("perm-monotone", 17);
  FeatureTable t = random_table(8, 8, 2, 0.5, rng);
  auto result = permutation_test(t, 1000, 23, /*keep_null=*/true);
  REQUIRE(result.null_t2.size() == 1000);
  auto count_above = [&](double threshold) {
    int c = 0;
    for (double v : result.null_t2) c += (v > threshold);
    return c;
  };
  CHECK(count_above(result.t2) == result.n_exceed);
  CHECK(count_above(result.t2 * 2.0) <= result.n_exceed);
  CHECK(result.p >= 0.0);
  CHECK(result.p <= 1.0);
}

TEST_CASE("permutation_test: null data rejects at roughly the nominal rate") {
  int rejections = 0;
  const int reps = 60;
  for (int rep = 0; rep < reps; ++rep) {
    Rng rng("perm-null-" + std::to_string(rep), 29);
    FeatureTable t = random_table(12, 12, 3, 0.0, rng);
    auto result = permutation_test(t, 400, static_cast<std::uint64_t>(rep));
    if (result.p < 0.05) ++rejections;
  }
  double rate = static_cast<double>(rejections) / reps;
  CHECK(rate >= 0.0);
  CHECK(rate <= 0.15);
}

TEST_CASE("permutation_test: zero permutations are refused") {
  Rng rng("perm-zero", 31);
  FeatureTable t = random_table(5, 5, 2, 0.3, rng);
  CHECK_THROWS_AS(permutation_test(t, 0, 1), InsufficientData);
}
