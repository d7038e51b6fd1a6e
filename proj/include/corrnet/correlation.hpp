#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>

#include "corrnet/signal.hpp"

namespace corrnet {

/// Multi-channel function sampled on a group grid; the discrete carrier of
/// correlation outputs.
struct GroupFunction {
  GridPtr grid;
  Eigen::MatrixXd values;  // channels x points

  int channels() const { return static_cast<int>(values.rows()); }
  std::size_t size() const { return grid ? grid->size() : 0; }
};

/// Correlation of a manifold signal with a smooth mask, sampled at the
/// elements of `out_grid`:
///   out(c, j) = sum_ci sum_i w^t_i f(ci, x_i) w_{c,ci}(g_j^-1 . x_i).
/// Mask evaluation at translated points is exact (anchors are moved by the
/// isometry; no interpolation).
GroupFunction corr_manifold(const SampledFunction& f, const BumpMask& w, GridPtr out_grid);

/// Same sum evaluated at an arbitrary list of group elements.
Eigen::MatrixXd corr_manifold_at(const SampledFunction& f, const BumpMask& w,
                                 const std::vector<GroupElement>& elements);

/// Correlation of a group-domain signal with a group-anchored mask.
GroupFunction corr_group(const GroupFunction& f, const BumpMask& w, GridPtr out_grid);

Eigen::MatrixXd corr_group_at(const GroupFunction& f, const BumpMask& w,
                              const std::vector<GroupElement>& elements);

/// max_j | corr(L*^g f, w)(g_j) - corr(f, w)(g^-1 g_j) |. The translated side
/// re-runs the quadrature sum at the translated group elements; the
/// pushforward side resamples f through `fit_basis` (band-limited inputs).
double equivariance_residual(const SampledFunction& f, const BumpMask& w,
                             const GroupElement& g, GridPtr out_grid,
                             const BasisSet& fit_basis);

/// Opaque linear system under test: maps a signal to a group function on a
/// fixed output grid chosen by its provider.
using LinearSystem = std::function<GroupFunction(const SampledFunction&)>;

struct IdentifyOptions {
  /// Probe F(u_y) at every output element instead of the identity only,
  /// producing the full translate table needed to re-apply the system.
  bool full_sweep = false;
  int n_probes = 5;        // random functions for the linearity check
  std::uint64_t seed = 1;
};

struct MaskIdentification {
  GridPtr in_grid;
  GridPtr out_grid;
  /// w tabulated on the input grid points via w(y) = F(u_y)(identity).
  Eigen::VectorXd mask_on_grid;
  /// Full sweep table T(j, i) = F(u_{x_i})(g_j) = w(g_j^-1 . x_i).
  std::optional<Eigen::MatrixXd> translate_table;
  /// ||F(a f1 + b f2) - a F(f1) - b F(f2)||_max over random probes.
  double linearity_residual = 0.0;
  /// Reconstruction consistency of Eq.-(3) tabulation on random probes:
  /// at the identity element always; over every output element under a
  /// full sweep. Zero (to quadrature precision) iff F acts as a correlation.
  double equivariance_residual = 0.0;
};

/// Identify the mask of a linear group-equivariant system from its impulse
/// responses. The default probe reads responses at the identity element,
/// which must be present in F's output grid.
MaskIdentification identify_mask(const LinearSystem& F, GridPtr in_grid,
                                 const IdentifyOptions& options = {});

/// Re-apply an identified system from its translate table (full sweep only).
GroupFunction apply_identified(const MaskIdentification& id, const SampledFunction& f);

}  // namespace corrnet
