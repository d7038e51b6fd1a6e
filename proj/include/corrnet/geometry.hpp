#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <vector>

#include "corrnet/errors.hpp"

namespace corrnet {

enum class SpaceKind { Sphere2, PositiveHalfLine, ProductS2RPlus, SPD3 };
enum class GroupKind { SO3, PositiveScale, SO3xScale, GL3 };

const char* to_string(SpaceKind kind);
const char* to_string(GroupKind kind);
SpaceKind space_kind_from_string(const std::string& s);
GroupKind group_kind_from_string(const std::string& s);

/// Coordinate-vector length per space kind (3, 1, 4, 9).
int coord_dim(SpaceKind kind);
/// Lie-algebra dimension per group kind (3, 1, 4, 9).
int algebra_dim(GroupKind kind);

/// Point on one of the supported manifolds. Coordinates are
///   Sphere2:          (x, y, z), unit norm
///   PositiveHalfLine: (r), r > 0
///   ProductS2RPlus:   (x, y, z, r)
///   SPD3:             row-major 3x3 symmetric positive definite matrix
struct ManifoldPoint {
  Eigen::VectorXd coords;

  Eigen::Vector3d sphere_part() const { return coords.head<3>(); }
  double radial_part() const { return coords(coords.size() - 1); }
  Eigen::Matrix3d spd() const;

  static ManifoldPoint sphere(const Eigen::Vector3d& x);
  static ManifoldPoint half_line(double r);
  static ManifoldPoint product(const Eigen::Vector3d& x, double r);
  static ManifoldPoint spd3(const Eigen::Matrix3d& m);
};

/// Element of one of the supported symmetry groups. Only the components
/// the kind requires are meaningful; the rest stay at their identity values.
struct GroupElement {
  GroupKind kind = GroupKind::SO3;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  double scale = 1.0;
  Eigen::Matrix3d gl = Eigen::Matrix3d::Identity();

  static GroupElement identity(GroupKind kind);
  static GroupElement from_rotation(const Eigen::Matrix3d& r);
  static GroupElement from_scale(double s);
  static GroupElement rotation_scale(const Eigen::Matrix3d& r, double s);
  static GroupElement from_gl(const Eigen::Matrix3d& m);

  /// Validates orthogonality / invertibility invariants; throws on violation.
  void check() const;
};

/// The (M, G, o) triple: manifold kind, symmetry group, chosen origin.
struct HomogeneousSpace {
  SpaceKind kind;
  GroupKind group_kind;
  ManifoldPoint origin;

  static HomogeneousSpace sphere2();
  static HomogeneousSpace positive_half_line();
  static HomogeneousSpace product_s2_rplus();
  static HomogeneousSpace spd3();
  static HomogeneousSpace of(SpaceKind kind);

  bool contains(const ManifoldPoint& x, double tol = 1e-10) const;
};

/// Weight convention for the radial factor of R+ grids.
///   PlainDr:        Gauss-Laguerre nodes, weights for the measure dr
///   ScaleInvariant: Gauss-Hermite nodes in t = log r, weights for dr/r
///   Lebesgue3D:     Gauss-Laguerre nodes, weights for r^2 dr (the radial
///                   factor of Lebesgue measure on R^3, used by the Fourier
///                   transform of ball-domain signals)
enum class RadialMeasure { PlainDr, ScaleInvariant, Lebesgue3D };

const char* to_string(RadialMeasure m);
RadialMeasure radial_measure_from_string(const std::string& s);

struct GridOptions {
  RadialMeasure radial_measure = RadialMeasure::PlainDr;
  std::uint64_t seed = 0;      // Monte Carlo grids (SPD3) and GL(3) element sets
  double spd_sigma = 1.0;      // tangent-space std of the SPD3 Monte Carlo grid
  double gl_epsilon = 0.2;     // GL(3) grid elements are exp(eps * Z)
  double scale_log_half_range = 2.0 * 0.6931471805599453;  // scale nodes in [exp(-h), exp(h)]
};

/// Nodes + positive weights approximating integration on a manifold
/// (against the volume density) or on a group (against Haar measure).
struct QuadratureGrid {
  enum class Domain { Manifold, Group };

  Domain domain = Domain::Manifold;
  SpaceKind space_kind = SpaceKind::Sphere2;  // meaningful when domain == Manifold
  GroupKind group_kind = GroupKind::SO3;      // meaningful when domain == Group
  std::vector<ManifoldPoint> points;
  std::vector<GroupElement> elements;
  Eigen::VectorXd weights;
  std::vector<int> resolution;
  GridOptions options;

  std::size_t size() const {
    return domain == Domain::Manifold ? points.size() : elements.size();
  }
};

using GridPtr = std::shared_ptr<const QuadratureGrid>;

// ---------------------------------------------------------------------------
// Group and manifold operations
// ---------------------------------------------------------------------------

/// Group action g.x. Sphere2: x -> Rx; PositiveHalfLine: r -> |a| r;
/// product: componentwise; SPD3: X -> g X g^T.
ManifoldPoint act(const GroupElement& g, const ManifoldPoint& x,
                  const HomogeneousSpace& space);

GroupElement compose(const GroupElement& g1, const GroupElement& g2);
GroupElement inverse(const GroupElement& g);

/// Invariant Riemannian distance of the space kind.
double distance(const ManifoldPoint& x, const ManifoldPoint& y,
                const HomogeneousSpace& space);

/// Bi-invariant (SO(3), scale) resp. left-invariant (GL(3)) group distance,
/// used as the bump metric for masks anchored on a group.
double group_distance(const GroupElement& g1, const GroupElement& g2);

/// Lie exponential. Coordinates: so(3) rotation vector; log-scale; their
/// concatenation for SO3xScale; row-major gl(3).
GroupElement group_exp(const Eigen::VectorXd& v, GroupKind kind);

/// Principal logarithm. Throws LogBranchError outside its domain
/// (negative scale; GL(3) eigenvalue on the closed negative real axis or
/// negative determinant). The SO(3) branch at rotation angle pi picks the
/// axis with deterministic sign (first nonzero component positive).
Eigen::VectorXd group_log(const GroupElement& g);

/// Deterministic right-inverse of g -> g.o. Sphere2: (theta, phi) ->
/// Rz(phi) Ry(theta) with phi = 0 at the poles; PositiveHalfLine: r -> r;
/// product: componentwise; SPD3: X -> symmetric square root.
GroupElement section(const ManifoldPoint& x, const HomogeneousSpace& space);

/// A group element with g.x = y (transitivity witness).
GroupElement transitive_element(const ManifoldPoint& x, const ManifoldPoint& y,
                                const HomogeneousSpace& space);

QuadratureGrid build_grid(const HomogeneousSpace& space,
                          const std::vector<int>& resolution,
                          const GridOptions& options = {});

QuadratureGrid haar_grid(GroupKind kind, const std::vector<int>& resolution,
                         const GridOptions& options = {});

// ---------------------------------------------------------------------------
// Matrix helpers shared across modules
// ---------------------------------------------------------------------------

Eigen::Matrix3d rotation_x(double angle);
Eigen::Matrix3d rotation_y(double angle);
Eigen::Matrix3d rotation_z(double angle);

/// Rodrigues formula, exp of the skew matrix of omega.
Eigen::Matrix3d so3_exp(const Eigen::Vector3d& omega);
/// Inverse Rodrigues with the documented angle-pi branch.
Eigen::Vector3d so3_log(const Eigen::Matrix3d& r);

/// Symmetric-eigendecomposition matrix functions with eigenvalue floor 1e-12.
Eigen::Matrix3d spd_sqrt(const Eigen::Matrix3d& m);
Eigen::Matrix3d spd_inv_sqrt(const Eigen::Matrix3d& m);
Eigen::Matrix3d spd_log(const Eigen::Matrix3d& m);
Eigen::Matrix3d sym_exp(const Eigen::Matrix3d& m);

/// General 3x3 matrix exponential / principal logarithm.
Eigen::Matrix3d gl3_exp(const Eigen::Matrix3d& m);
Eigen::Matrix3d gl3_log(const Eigen::Matrix3d& m);  // throws LogBranchError

/// Gauss rules on standard intervals (Golub-Welsch).
void gauss_legendre(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights);
void gauss_laguerre(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights);
void gauss_hermite(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights);

/// Uniform random rotation / unit vector from an Rng stream.
class Rng;
Eigen::Matrix3d random_rotation(Rng& rng);
Eigen::Vector3d random_unit_vector(Rng& rng);
/// Random symmetric matrix with N(0,1) diagonal and N(0,1/2) off-diagonal
/// entries (isotropic for the Frobenius inner product on symmetric matrices).
Eigen::Matrix3d random_symmetric(Rng& rng, double sigma = 1.0);

}  // namespace corrnet
