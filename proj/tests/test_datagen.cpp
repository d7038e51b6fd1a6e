#include "corrnet/datagen.hpp"

#include <cmath>
#include <memory>

#include "corrnet/rng.hpp"
#include "doctest.h"

using namespace corrnet;

namespace {
constexpr double kPi = 3.14159265358979323846;

// Karcher-flow Frechet mean on SPD(3), fixed-point iteration.
Eigen::Matrix3d frechet_mean(const std::vector<ManifoldPoint>& pts, int iters = 20) {
  Eigen::Matrix3d mean = Eigen::Matrix3d::Identity();
  for (int it = 0; it < iters; ++it) {
    Eigen::Matrix3d root = spd_sqrt(mean), inv_root = spd_inv_sqrt(mean);
    Eigen::Matrix3d tangent = Eigen::Matrix3d::Zero();
    for (const auto& p : pts) tangent += spd_log(inv_root * p.spd() * inv_root);
    tangent /= static_cast<double>(pts.size());
    mean = root * sym_exp(tangent) * root;
  }
  return mean;
}
}  // namespace

TEST_CASE("sample_spd_gaussian: degenerate width pins samples to the location") {
  SPDGaussianSpec spec;
  spec.location = Eigen::Vector3d(2.0, 1.0, 0.5).asDiagonal();
  spec.sigma = 1e-8;
  spec.count = 20;
  spec.seed = 5;
  auto pts = sample_spd_gaussian(spec);
  auto space = HomogeneousSpace::spd3();
  auto m = ManifoldPoint::spd3(spec.location);
  for (const auto& p : pts) CHECK(distance(p, m, space) < 1e-6);
}

TEST_CASE("sample_spd_gaussian: Frechet mean of 5000 draws sits near the location") {
  SPDGaussianSpec spec;
  spec.sigma = 0.3;
  spec.count = 5000;
  spec.seed = 11;
  auto pts = sample_spd_gaussian(spec);
  auto mean = frechet_mean(pts);
  auto space = HomogeneousSpace::spd3();
  CHECK(distance(ManifoldPoint::spd3(mean), space.origin, space) < 0.05);
}

TEST_CASE("sample_spd_gaussian: squared distance moment matches the tangent dimension") {
  SPDGaussianSpec spec;
  spec.sigma = 0.05;
  spec.count = 4000;
  spec.seed = 13;
  auto pts = sample_spd_gaussian(spec);
  auto space = HomogeneousSpace::spd3();
  double acc = 0.0;
  for (const auto& p : pts) {
    double d = distance(p, space.origin, space);
    acc += d * d / (spec.sigma * spec.sigma);
  }
  acc /= spec.count;
  CHECK(std::abs(acc - 6.0) < 0.3);  // E ||Z||_F^2 = 6 for the P3 tangent space
}

TEST_CASE("make_p3_dataset: balance, normalization, centroid separability") {
  GridOptions gopt;
  gopt.seed = 3;
  gopt.spd_sigma = 1.2;
  auto grid = std::make_shared<QuadratureGrid>(build_grid(HomogeneousSpace::spd3(), {96}, gopt));

  P3DatasetSpec spec;
  spec.n_per_class = 60;
  spec.seed = 17;
  auto ds = make_p3_dataset(spec, grid);

  REQUIRE(ds.labels.size() == 120);
  int n0 = 0;
  for (int label : ds.labels) n0 += (label == 0);
  CHECK(n0 == 60);

  for (Eigen::Index s = 0; s < ds.values.cols(); ++s) {
    CHECK(ds.values.col(s).maxCoeff() == doctest::Approx(1.0));
    CHECK(ds.values.col(s).minCoeff() >= 0.0);
  }

  // nearest-centroid baseline establishes separability
  Eigen::VectorXd c0 = Eigen::VectorXd::Zero(ds.values.rows());
  Eigen::VectorXd c1 = Eigen::VectorXd::Zero(ds.values.rows());
  for (Eigen::Index s = 0; s < ds.values.cols(); ++s)
    (ds.labels[static_cast<std::size_t>(s)] == 0 ? c0 : c1) += ds.values.col(s);
  c0 /= 60.0;
  c1 /= 60.0;
  int correct = 0;
  for (Eigen::Index s = 0; s < ds.values.cols(); ++s) {
    int pred = ((ds.values.col(s) - c0).norm() <= (ds.values.col(s) - c1).norm()) ? 0 : 1;
    correct += (pred == ds.labels[static_cast<std::size_t>(s)]);
  }
  CHECK(static_cast<double>(correct) / 120.0 > 0.7);

  // determinism
  auto again = make_p3_dataset(spec, grid);
  CHECK((again.values - ds.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("make_synthetic_volumes: audit of the two-class construction") {
  VolumeDatasetSpec spec;
  spec.n_per_class = 6;
  spec.lattice = {4, 4, 4};
  spec.seed = 23;
  auto ds = make_synthetic_volumes(spec);

  REQUIRE(ds.labels.size() == 12);
  REQUIRE(ds.rois.size() == 4);
  const auto n_pts = static_cast<Eigen::Index>(ds.grid->size());

  // ROI masks disjoint and consistent
  int roi_voxels = 0;
  for (int v : ds.roi_of_voxel) roi_voxels += (v >= 0);
  int expected = 0;
  for (const auto& r : ds.rois) expected += r.volume();
  CHECK(roi_voxels == expected);

  // zero-noise: for any class-0/class-1 pair there is an ROI voxel where the
  // signals differ in L2 norm by more than 0.1 (the gain-scaled variant)
  Eigen::VectorXd v0 = volume_variant_signal(spec, *ds.grid, 0);
  Eigen::VectorXd v1 = volume_variant_signal(spec, *ds.grid, 1);
  auto l2 = [&](const Eigen::VectorXd& f) {
    return std::sqrt((ds.grid->weights.array() * f.array().square()).sum());
  };
  CHECK(std::abs(l2(v0) - l2(v1)) > 0.1);

  const Eigen::Index s0 = 0, s1 = 6;  // one sample from each class
  double max_norm_gap = 0.0;
  for (int v = 0; v < ds.n_voxels(); ++v) {
    if (ds.roi_of_voxel[static_cast<std::size_t>(v)] < 0) continue;
    double n0 = l2(ds.values.col(s0).segment(v * n_pts, n_pts));
    double n1 = l2(ds.values.col(s1).segment(v * n_pts, n_pts));
    max_norm_gap = std::max(max_norm_gap, std::abs(n0 - n1));
  }
  CHECK(max_norm_gap > 0.1);

  // non-ROI voxels carry the identical background in both classes (zero noise)
  for (int v = 0; v < ds.n_voxels(); ++v) {
    if (ds.roi_of_voxel[static_cast<std::size_t>(v)] >= 0) continue;
    CHECK((ds.values.col(s0).segment(v * n_pts, n_pts) -
           ds.values.col(s1).segment(v * n_pts, n_pts))
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }

  // same seed -> identical volumes
  auto again = make_synthetic_volumes(spec);
  CHECK((again.values - ds.values).cwiseAbs().maxCoeff() == 0.0);

  // roi_block layout matches the stored volume
  auto block = ds.roi_block(0);
  CHECK(block.rows() == n_pts);
  CHECK(block.cols() == 12 * ds.rois[0].volume());
}

TEST_CASE("eap_transform: zero, zero-frequency identity, linearity") {
  GridOptions gopt;
  gopt.radial_measure = RadialMeasure::Lebesgue3D;
  auto q_grid = std::make_shared<QuadratureGrid>(
      build_grid(HomogeneousSpace::product_s2_rplus(), {6, 10}, gopt));
  auto r_grid = std::make_shared<QuadratureGrid>(
      build_grid(HomogeneousSpace::product_s2_rplus(), {4, 4}));

  SampledFunction zero;
  zero.grid = q_grid;
  zero.values = Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(q_grid->size()));
  CHECK(eap_transform(zero, r_grid).values.cwiseAbs().maxCoeff() == 0.0);

  Rng rng("eap", 29);
  SampledFunction s1 = zero, s2 = zero;
  for (Eigen::Index i = 0; i < s1.values.cols(); ++i) {
    s1.values(0, i) = rng.normal();
    s2.values(0, i) = rng.normal();
  }

  // P at a tiny radius approximates the weighted sum (cos ~ 1)
  auto tiny_grid = std::make_shared<QuadratureGrid>(*r_grid);
  tiny_grid->points.assign(1, ManifoldPoint::product(Eigen::Vector3d(0, 0, 1), 1e-12));
  tiny_grid->weights = Eigen::VectorXd::Ones(1);
  double expected = (s1.values * q_grid->weights)(0, 0);
  CHECK(eap_transform(s1, tiny_grid).values(0, 0) == doctest::Approx(expected).epsilon(1e-9));

  SampledFunction combo = zero;
  combo.values = 1.5 * s1.values - 0.5 * s2.values;
  Eigen::MatrixXd lhs = eap_transform(combo, r_grid).values;
  Eigen::MatrixXd rhs =
      1.5 * eap_transform(s1, r_grid).values - 0.5 * eap_transform(s2, r_grid).values;
  double scale = std::max(1.0, rhs.cwiseAbs().maxCoeff());
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() / scale < 1e-12);
}

TEST_CASE("eap_transform: Gaussian pair widths are reciprocal") {
  // S(q) = exp(-|q|^2 / (2 s^2)) has 3D transform proportional to
  // exp(-2 pi^2 s^2 |r|^2); the sampled transform must reproduce the width.
  const double s_width = 0.45;
  GridOptions gopt;
  gopt.radial_measure = RadialMeasure::Lebesgue3D;
  auto q_grid = std::make_shared<QuadratureGrid>(
      build_grid(HomogeneousSpace::product_s2_rplus(), {10, 28}, gopt));

  SampledFunction s;
  s.grid = q_grid;
  s.values.resize(1, static_cast<Eigen::Index>(q_grid->size()));
  for (std::size_t i = 0; i < q_grid->size(); ++i) {
    double q = q_grid->points[i].radial_part();
    s.values(0, static_cast<Eigen::Index>(i)) = std::exp(-q * q / (2.0 * s_width * s_width));
  }

  // probe P along the z axis
  const int n_probe = 12;
  auto probe = std::make_shared<QuadratureGrid>(*q_grid);
  probe->points.clear();
  for (int k = 0; k < n_probe; ++k)
    probe->points.push_back(
        ManifoldPoint::product(Eigen::Vector3d(0, 0, 1), 0.02 + 0.04 * k));
  probe->weights = Eigen::VectorXd::Ones(n_probe);

  auto p = eap_transform(s, probe);

  // cross-check against a dense 1D radial oracle with the spherical factor
  // integrated analytically: P(rho) = 4 pi / (2 pi rho) int q sin(2 pi q rho)
  // exp(-q^2 / 2 s^2) dq
  for (int k = 0; k < n_probe; ++k) {
    double rho = probe->points[static_cast<std::size_t>(k)].radial_part();
    const int nq = 40000;
    const double qmax = 6.0;
    double acc = 0.0;
    for (int i = 0; i < nq; ++i) {
      double q = (i + 0.5) * qmax / nq;
      acc += q * std::sin(2.0 * kPi * q * rho) * std::exp(-q * q / (2.0 * s_width * s_width));
    }
    acc *= qmax / nq;
    double oracle = 2.0 / rho * acc;
    CHECK(p.values(0, k) == doctest::Approx(oracle).epsilon(1e-2));
  }

  // width from a least-squares fit of log P against rho^2
  double sxx = 0.0, sxy = 0.0, sx = 0.0, sy = 0.0;
  for (int k = 0; k < n_probe; ++k) {
    double rho = probe->points[static_cast<std::size_t>(k)].radial_part();
    double x = rho * rho, y = std::log(p.values(0, k));
    sxx += x * x;
    sxy += x * y;
    sx += x;
    sy += y;
  }
  double slope = (n_probe * sxy - sx * sy) / (n_probe * sxx - sx * sx);
  // log P = c - rho^2 / (2 sigma_r^2), so sigma_r = sqrt(-1 / (2 slope))
  double sigma_r = std::sqrt(-1.0 / (2.0 * slope));
  double expected = 1.0 / (2.0 * kPi * s_width);
  CHECK(std::abs(sigma_r - expected) / expected < 0.1);
}
