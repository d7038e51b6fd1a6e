#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "corrnet/geometry.hpp"

namespace corrnet {

class Rng;

/// Multi-channel real-valued function sampled on a quadrature grid.
struct SampledFunction {
  GridPtr grid;
  Eigen::MatrixXd values;  // channels x points

  int channels() const { return static_cast<int>(values.rows()); }
  std::size_t size() const { return grid ? grid->size() : 0; }
};

/// Smooth mask w(x) = sum_k c_k exp(-d^2(x, a_k) / (2 tau^2)), evaluable at
/// arbitrary points of its domain (a manifold or a group). Exact evaluability
/// is what makes pushforwards interpolation-free.
struct BumpMask {
  bool on_group = false;
  HomogeneousSpace space = HomogeneousSpace::sphere2();  // manifold masks
  GroupKind group_kind = GroupKind::SO3;                 // group masks
  std::vector<ManifoldPoint> anchors;
  std::vector<GroupElement> group_anchors;
  double tau = 1.0;
  // channels_out x (channels_in * n_anchors); column index ci * K + k
  Eigen::MatrixXd coefficients;

  int n_anchors() const {
    return static_cast<int>(on_group ? group_anchors.size() : anchors.size());
  }
  int channels_out() const { return static_cast<int>(coefficients.rows()); }
  int channels_in() const {
    return n_anchors() == 0 ? 0 : static_cast<int>(coefficients.cols()) / n_anchors();
  }

  /// Bump profile at a point, one entry per anchor (shared by all channels).
  Eigen::VectorXd bump_values(const ManifoldPoint& x) const;
  Eigen::VectorXd bump_values(const GroupElement& h) const;

  double evaluate(int co, int ci, const ManifoldPoint& x) const;
  double evaluate(int co, int ci, const GroupElement& h) const;

  void check() const;
};

BumpMask make_manifold_mask(const HomogeneousSpace& space,
                            std::vector<ManifoldPoint> anchors, double tau,
                            Eigen::MatrixXd coefficients);
BumpMask make_group_mask(GroupKind kind, std::vector<GroupElement> anchors, double tau,
                         Eigen::MatrixXd coefficients);

/// Seeded anchor set on a manifold; `radial_spread` bounds |log r| for the
/// product space's radial coordinate.
std::vector<ManifoldPoint> random_anchors(const HomogeneousSpace& space, int count,
                                          Rng& rng, double radial_spread = 0.7,
                                          double spd_spread = 0.7);
/// Seeded anchor set on a group; `spread` bounds rotation angles / |log s| /
/// the gl exponent norm.
std::vector<GroupElement> random_group_anchors(GroupKind kind, int count, Rng& rng,
                                               double spread = 0.7);

/// Ordered family of basis functions with smooth evaluators.
struct BasisSet {
  std::string domain;  // "sphere2", "product_s2_rplus", "so3", "circle", ...
  std::vector<std::function<double(const ManifoldPoint&)>> funcs;
  std::vector<std::function<double(const GroupElement&)>> group_funcs;
  /// Optional fast whole-set evaluator (points x basis); falls back to funcs.
  std::function<Eigen::MatrixXd(const std::vector<ManifoldPoint>&)> bulk;
  int band_limit = 0;
  int radial_order = 0;

  std::size_t size() const {
    return funcs.empty() ? group_funcs.size() : funcs.size();
  }
  bool on_group() const { return funcs.empty() && !group_funcs.empty(); }
};

/// Real spherical harmonic Y_l^m (orthonormal, Condon-Shortley phase omitted)
/// at a unit vector.
double eval_sph_harmonic(int l, int m, const Eigen::Vector3d& x);

/// All Y_l^m for l <= L in (l, m) order, computed in one recurrence pass.
Eigen::VectorXd sph_harmonics_all(int L, const Eigen::Vector3d& x);

/// Laguerre radial function psi_n(r) = L_n(r) exp(-r/2), orthonormal on
/// (0, inf) against plain dr.
double eval_radial(int n, double r);

/// Hermite function in t = log r, orthonormal against dr/r. The radial family
/// used on scale-invariant grids.
double eval_log_radial(int n, double r);

/// Spherical harmonics of degree 0..L in (l, m) order.
BasisSet sphere_basis(int L);

/// Product basis {Y_l^m . psi_n} on S2 x R+, ordered (n, l, m) lexicographic.
BasisSet shore_basis(int L, int N_r);

/// Product basis with the radial family matching the grid's weight convention.
BasisSet product_basis(int L, int N_r, RadialMeasure measure);

/// Evaluation matrix, points x basis functions.
Eigen::MatrixXd evaluate_basis(const BasisSet& basis, const QuadratureGrid& grid);

/// <f1, f2> per channel pair against the grid weights.
Eigen::MatrixXd inner_product(const SampledFunction& f1, const SampledFunction& f2);

/// c_alpha = <f, v_alpha> per channel (orthogonal projection coefficients).
Eigen::MatrixXd fit_coefficients(const SampledFunction& f, const BasisSet& basis);

SampledFunction synthesize(const Eigen::MatrixXd& coeffs, const BasisSet& basis,
                           GridPtr grid);

/// Basis on M induced from a basis on G through a section (Props. of the
/// principal-bundle structure): v~(x) = v(section(x)). Reported with its Gram
/// matrix under the grid quadrature; callers assert linear independence.
struct InducedBasis {
  BasisSet basis;
  Eigen::MatrixXd gram;
  double min_singular_value = 0.0;
};

InducedBasis induce_basis(const BasisSet& group_basis, const HomogeneousSpace& space,
                          GridPtr grid);

/// Generic overload with an explicit section map; used where the quotient
/// structure is not one of the four built-in space kinds (e.g. the circle,
/// where the section is a bijection and orthogonality is exact).
InducedBasis induce_basis(const BasisSet& group_basis,
                          const std::function<GroupElement(const ManifoldPoint&)>& sect,
                          GridPtr grid);

/// Weight-normalized indicator: value 1/w_i at point i, zero elsewhere, so
/// that <delta_at(i), f> = f(x_i) exactly.
SampledFunction delta_at(std::size_t index, GridPtr grid);

/// Pushforward of a mask: (L*^g w)(x) = w(g^-1 . x), realized exactly by
/// translating anchors (isometry of the bump metric).
BumpMask pushforward(const GroupElement& g, const BumpMask& w);

/// Pushforward of a sampled function by band-limited resampling: fit through
/// `basis`, then evaluate the synthesized function at g^-1 . x_i. Throws
/// UnsupportedResample when f does not lie in the basis span.
SampledFunction pushforward(const GroupElement& g, const SampledFunction& f,
                            const BasisSet& basis);

/// Random smooth functions on a group (seeded bump expansions); serves as a
/// generic orthogonal-basis stand-in for induce_basis tests and checks.
BasisSet random_group_functions(GroupKind kind, int count, Rng& rng, double tau = 0.6);

}  // namespace corrnet
