#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <vector>

#include "corrnet/network.hpp"
#include "corrnet/signal.hpp"

namespace corrnet {

// ---------------------------------------------------------------------------
// Gaussian classes on the SPD(3) manifold
// ---------------------------------------------------------------------------

struct SPDGaussianSpec {
  Eigen::Matrix3d location = Eigen::Matrix3d::Identity();
  double sigma = 1.0;
  int count = 1;
  std::uint64_t seed = 0;
};

/// Tangent-space Gaussian pushed through the exponential map at the location:
/// X = M^{1/2} exp(sigma Z) M^{1/2}, Z symmetric with N(0,1) diagonal and
/// N(0,1/2) off-diagonal entries. An approximation of the intrinsic Gaussian;
/// its normalizing constant is never needed. Deterministic per (seed, index).
std::vector<ManifoldPoint> sample_spd_gaussian(const SPDGaussianSpec& spec);

struct P3DatasetSpec {
  Eigen::Matrix3d m1 = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d m2;  // defaults to diag(e^2, e^2, e^-1): distance 3 from m1
  int n_per_class = 500;
  double perturbation = 0.2;  // spread of the per-sample location draws
  double sigma = 1.0;         // width of the tabulated densities
  std::uint64_t seed = 0;

  P3DatasetSpec();
};

struct P3Dataset {
  GridPtr grid;
  Eigen::MatrixXd values;  // points x samples, max-normalized into [0, 1]
  std::vector<int> labels;
};

/// Two classes of unnormalized Gaussian densities on P3, tabulated on a
/// shared grid. Each sample draws a perturbed location around its class
/// center and stores exp(-d^2(M~, X)/(2 sigma^2)), max-normalized. Prints a
/// warning when the class centers are not separated beyond the perturbation.
P3Dataset make_p3_dataset(const P3DatasetSpec& spec, GridPtr grid);

// ---------------------------------------------------------------------------
// Synthetic volumetric signals on S2 x R+
// ---------------------------------------------------------------------------

struct VolumeDatasetSpec {
  int n_per_class = 50;
  std::array<int, 3> lattice = {8, 8, 8};
  int sphere_order = 4;
  int radial_order = 3;
  RadialMeasure radial_measure = RadialMeasure::ScaleInvariant;
  double noise = 0.0;           // additive basis-coefficient noise (std)
  double variant_angle = 1.2;   // rotation between the two signal variants
  double variant_shift = 0.25;  // log-radial shift of the second variant
  double variant_gain = 1.25;   // value gain of the second variant
  std::uint64_t seed = 0;
};

struct VolumeDataset {
  GridPtr grid;  // per-voxel signal domain
  std::array<int, 3> lattice;
  std::vector<RoiBox> rois;
  std::vector<int> roi_of_voxel;  // per lattice voxel, -1 outside every ROI
  /// (voxels * points) x samples, voxel-major rows.
  Eigen::MatrixXd values;
  std::vector<int> labels;

  int n_voxels() const { return lattice[0] * lattice[1] * lattice[2]; }
  /// ROI block in network layout: (points) x (samples * roi_voxels).
  Eigen::MatrixXd roi_block(std::size_t roi) const;
};

/// Two-class volumes over a voxel lattice with four cubic ROIs. ROI voxels
/// carry an oriented band-limited signal in one of two variants (the second
/// is a rotated, radially shifted, gain-scaled copy of the first); class 0
/// fills each ROI uniformly with one variant, class 1 interleaves the two by
/// voxel parity. Per-voxel marginals match across classes, so the classes
/// differ only through cross-voxel structure. Non-ROI voxels carry
/// power-matched isotropic content drawn identically for both classes.
VolumeDataset make_synthetic_volumes(const VolumeDatasetSpec& spec);

/// The two variant signals evaluated on a grid (test and audit access).
Eigen::VectorXd volume_variant_signal(const VolumeDatasetSpec& spec,
                                      const QuadratureGrid& grid, int variant);

// ---------------------------------------------------------------------------
// Fourier dual representation
// ---------------------------------------------------------------------------

/// Direct-summation Fourier transform of a ball-domain signal:
///   P(r_j) = sum_i w_i S(q_i) cos(2 pi q_i . r_j),
/// with q_i = radius * direction of the input grid point (real part only;
/// symmetrized real signals give real transforms). The input grid's weights
/// set the integration measure.
SampledFunction eap_transform(const SampledFunction& s, GridPtr r_grid);

}  // namespace corrnet
