#include "corrnet/datagen.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "corrnet/rng.hpp"

namespace corrnet {

std::vector<ManifoldPoint> sample_spd_gaussian(const SPDGaussianSpec& spec) {
  if (spec.sigma <= 0.0) throw InvalidArgument("sample_spd_gaussian: sigma must be positive");
  Eigen::Matrix3d root = spd_sqrt(spec.location);
  std::vector<ManifoldPoint> out;
  out.reserve(static_cast<std::size_t>(spec.count));
  for (int i = 0; i < spec.count; ++i) {
    Rng rng("spd-gaussian-sample-" + std::to_string(i), spec.seed);
    Eigen::Matrix3d z = random_symmetric(rng, 1.0);
    out.push_back(ManifoldPoint::spd3(root * sym_exp(spec.sigma * z) * root));
  }
  return out;
}

P3DatasetSpec::P3DatasetSpec() {
  m2 = Eigen::Vector3d(std::exp(2.0), std::exp(2.0), std::exp(-1.0)).asDiagonal();
}

P3Dataset make_p3_dataset(const P3DatasetSpec& spec, GridPtr grid) {
  if (!grid || grid->domain != QuadratureGrid::Domain::Manifold ||
      grid->space_kind != SpaceKind::SPD3)
    throw InvalidArgument("make_p3_dataset: need an SPD3 grid");
  if (spec.n_per_class < 1) throw InvalidArgument("make_p3_dataset: empty class");
  if (spec.sigma <= 0.0 || spec.perturbation < 0.0)
    throw InvalidArgument("make_p3_dataset: sigma must be positive, perturbation nonnegative");

  auto space = HomogeneousSpace::spd3();
  double center_distance =
      distance(ManifoldPoint::spd3(spec.m1), ManifoldPoint::spd3(spec.m2), space);
  if (center_distance <= 2.0 * spec.perturbation)
    std::fprintf(stderr,
                 "warn-overlap: class centers are %.3f apart with perturbation %.3f; "
                 "classes may overlap\n",
                 center_distance, spec.perturbation);

  P3Dataset ds;
  ds.grid = grid;
  const auto n = static_cast<Eigen::Index>(grid->size());
  const int total = 2 * spec.n_per_class;
  ds.values.resize(n, total);
  ds.labels.resize(static_cast<std::size_t>(total));

  const double inv = 1.0 / (2.0 * spec.sigma * spec.sigma);
  for (int s = 0; s < total; ++s) {
    const int label = s < spec.n_per_class ? 0 : 1;
    ds.labels[static_cast<std::size_t>(s)] = label;
    const Eigen::Matrix3d& center = label == 0 ? spec.m1 : spec.m2;

    Rng rng("p3-sample-" + std::to_string(s), spec.seed);
    Eigen::Matrix3d root = spd_sqrt(center);
    Eigen::Matrix3d loc = root * sym_exp(spec.perturbation * random_symmetric(rng, 1.0)) * root;
    ManifoldPoint m_tilde = ManifoldPoint::spd3(loc);

    for (Eigen::Index i = 0; i < n; ++i) {
      double d = distance(m_tilde, grid->points[static_cast<std::size_t>(i)], space);
      ds.values(i, s) = std::exp(-d * d * inv);
    }
    double peak = ds.values.col(s).maxCoeff();
    if (peak > 0.0) ds.values.col(s) /= peak;
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic volumes
// ---------------------------------------------------------------------------

namespace {

// Oriented band-limited coefficient pattern in the (n, l, m) product ordering.
Eigen::VectorXd base_coefficients(int L, int N_r) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(N_r) * (L + 1) * (L + 1));
  auto idx = [&](int n, int l, int m) { return (n * (L + 1) * (L + 1)) + l * l + (m + l); };
  c(idx(0, 0, 0)) = 0.8;
  c(idx(0, 1, 0)) = 1.0;  // dominant z orientation
  if (L >= 2) c(idx(0, 2, 0)) = 0.6;
  if (N_r >= 2) {
    c(idx(1, 0, 0)) = 0.4;
    c(idx(1, 1, 0)) = 0.5;
  }
  return c;
}

}  // namespace

Eigen::VectorXd volume_variant_signal(const VolumeDatasetSpec& spec,
                                      const QuadratureGrid& grid, int variant) {
  const int L = 2;
  const int nr = std::min(spec.radial_order, 2);
  auto basis = product_basis(L, nr, spec.radial_measure);
  Eigen::VectorXd coeffs = base_coefficients(L, nr);

  Eigen::Matrix3d rot =
      variant == 0 ? Eigen::Matrix3d::Identity() : rotation_y(spec.variant_angle);
  const double shift = variant == 0 ? 0.0 : spec.variant_shift;
  const double gain = variant == 0 ? 1.0 : spec.variant_gain;

  const auto n = static_cast<Eigen::Index>(grid.size());
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = grid.points[static_cast<std::size_t>(i)];
    ManifoldPoint moved = ManifoldPoint::product(rot.transpose() * p.sphere_part(),
                                                 p.radial_part() * std::exp(-shift));
    double v = 0.0;
    for (std::size_t a = 0; a < basis.size(); ++a)
      v += coeffs(static_cast<Eigen::Index>(a)) * basis.funcs[a](moved);
    out(i) = gain * v;
  }
  return out;
}

VolumeDataset make_synthetic_volumes(const VolumeDatasetSpec& spec) {
  if (spec.n_per_class < 1) throw InvalidArgument("make_synthetic_volumes: empty class");
  for (int d : spec.lattice)
    if (d < 2) throw InvalidArgument("make_synthetic_volumes: lattice too small");

  VolumeDataset ds;
  GridOptions gopt;
  gopt.radial_measure = spec.radial_measure;
  ds.grid = std::make_shared<QuadratureGrid>(build_grid(
      HomogeneousSpace::product_s2_rplus(), {spec.sphere_order, spec.radial_order}, gopt));
  ds.lattice = spec.lattice;

  // Four cubic ROIs in the corners, half the lattice extent per axis.
  const int hx = spec.lattice[0] / 2, hy = spec.lattice[1] / 2, hz = spec.lattice[2] / 2;
  ds.rois = {RoiBox{0, 0, 0, hx, hy, hz}, RoiBox{spec.lattice[0] - hx, 0, 0, hx, hy, hz},
             RoiBox{0, spec.lattice[1] - hy, 0, hx, hy, hz},
             RoiBox{0, 0, spec.lattice[2] - hz, hx, hy, hz}};

  const int n_vox = ds.n_voxels();
  ds.roi_of_voxel.assign(static_cast<std::size_t>(n_vox), -1);
  auto vox_id = [&](int x, int y, int z) {
    return (x * spec.lattice[1] + y) * spec.lattice[2] + z;
  };
  for (std::size_t r = 0; r < ds.rois.size(); ++r) {
    const auto& roi = ds.rois[r];
    for (int x = roi.x0; x < roi.x0 + roi.nx; ++x)
      for (int y = roi.y0; y < roi.y0 + roi.ny; ++y)
        for (int z = roi.z0; z < roi.z0 + roi.nz; ++z)
          ds.roi_of_voxel[static_cast<std::size_t>(vox_id(x, y, z))] = static_cast<int>(r);
  }

  const auto n_pts = static_cast<Eigen::Index>(ds.grid->size());
  Eigen::VectorXd variant0 = volume_variant_signal(spec, *ds.grid, 0);
  Eigen::VectorXd variant1 = volume_variant_signal(spec, *ds.grid, 1);

  // Power-matched isotropic background (radial-only profile).
  const double signal_power =
      0.5 * (variant0.squaredNorm() + variant1.squaredNorm()) / static_cast<double>(n_pts);
  Eigen::VectorXd background(n_pts);
  for (Eigen::Index i = 0; i < n_pts; ++i) {
    double t = std::log(ds.grid->points[static_cast<std::size_t>(i)].radial_part());
    background(i) = std::exp(-0.5 * t * t);
  }
  background *= std::sqrt(signal_power * static_cast<double>(n_pts)) / background.norm();

  Eigen::MatrixXd noise_eval;
  if (spec.noise > 0.0) {
    auto noise_basis = product_basis(2, std::min(spec.radial_order, 2), spec.radial_measure);
    noise_eval = evaluate_basis(noise_basis, *ds.grid);
  }

  const int total = 2 * spec.n_per_class;
  ds.values.resize(static_cast<Eigen::Index>(n_vox) * n_pts, total);
  ds.labels.resize(static_cast<std::size_t>(total));

  for (int s = 0; s < total; ++s) {
    const int label = s < spec.n_per_class ? 0 : 1;
    ds.labels[static_cast<std::size_t>(s)] = label;
    Rng rng("volume-sample-" + std::to_string(s), spec.seed);

    // Per-ROI pattern bit: class 0 fills the ROI uniformly with one variant,
    // class 1 interleaves the variants with this bit as the parity phase.
    std::vector<int> roi_bit(ds.rois.size());
    for (std::size_t r = 0; r < ds.rois.size(); ++r)
      roi_bit[r] = static_cast<int>(rng.uniform_index(2));

    for (int x = 0; x < spec.lattice[0]; ++x)
      for (int y = 0; y < spec.lattice[1]; ++y)
        for (int z = 0; z < spec.lattice[2]; ++z) {
          const int v = vox_id(x, y, z);
          const int roi = ds.roi_of_voxel[static_cast<std::size_t>(v)];
          Eigen::VectorXd signal;
          if (roi < 0) {
            signal = background;
          } else {
            int which;
            if (label == 0) {
              which = roi_bit[static_cast<std::size_t>(roi)];
            } else {
              which = ((x + y + z) + roi_bit[static_cast<std::size_t>(roi)]) % 2;
            }
            signal = (which == 0) ? variant0 : variant1;
          }
          if (spec.noise > 0.0) {
            Eigen::VectorXd eta(noise_eval.cols());
            for (Eigen::Index a = 0; a < eta.size(); ++a) eta(a) = rng.normal();
            signal = signal + spec.noise * (noise_eval * eta);
          }
          ds.values.col(s).segment(static_cast<Eigen::Index>(v) * n_pts, n_pts) = signal;
        }
  }
  return ds;
}

Eigen::MatrixXd VolumeDataset::roi_block(std::size_t roi) const {
  const auto& box = rois[roi];
  const auto n_pts = static_cast<Eigen::Index>(grid->size());
  const Eigen::Index n_samples = values.cols();
  const int v_roi = box.volume();
  Eigen::MatrixXd out(n_pts, n_samples * v_roi);
  int local = 0;
  for (int x = box.x0; x < box.x0 + box.nx; ++x)
    for (int y = box.y0; y < box.y0 + box.ny; ++y)
      for (int z = box.z0; z < box.z0 + box.nz; ++z, ++local) {
        const Eigen::Index v = (static_cast<Eigen::Index>(x) * lattice[1] + y) * lattice[2] + z;
        for (Eigen::Index s = 0; s < n_samples; ++s)
          out.col(s * v_roi + local) = values.col(s).segment(v * n_pts, n_pts);
      }
  return out;
}

// ---------------------------------------------------------------------------
// Fourier dual representation
// ---------------------------------------------------------------------------

SampledFunction eap_transform(const SampledFunction& s, GridPtr r_grid) {
  if (!s.grid || s.grid->domain != QuadratureGrid::Domain::Manifold ||
      s.grid->space_kind != SpaceKind::ProductS2RPlus)
    throw InvalidArgument("eap_transform: signal must live on S2 x R+");
  if (!r_grid || r_grid->domain != QuadratureGrid::Domain::Manifold ||
      r_grid->space_kind != SpaceKind::ProductS2RPlus)
    throw InvalidArgument("eap_transform: output grid must live on S2 x R+");

  const auto nq = static_cast<Eigen::Index>(s.grid->size());
  const auto nr = static_cast<Eigen::Index>(r_grid->size());

  Eigen::Matrix<double, 3, Eigen::Dynamic> q(3, nq), r(3, nr);
  for (Eigen::Index i = 0; i < nq; ++i) {
    const auto& p = s.grid->points[static_cast<std::size_t>(i)];
    q.col(i) = p.sphere_part() * p.radial_part();
  }
  for (Eigen::Index j = 0; j < nr; ++j) {
    const auto& p = r_grid->points[static_cast<std::size_t>(j)];
    r.col(j) = p.sphere_part() * p.radial_part();
  }

  Eigen::MatrixXd kernel =
      (2.0 * 3.14159265358979323846 * (q.transpose() * r)).array().cos();
  SampledFunction out;
  out.grid = std::move(r_grid);
  out.values = s.values * s.grid->weights.asDiagonal() * kernel;
  return out;
}

}  // namespace corrnet
