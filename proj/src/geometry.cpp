#include "corrnet/geometry.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <string>

#include "corrnet/rng.hpp"

namespace corrnet {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;
constexpr double kEigenvalueFloor = 1e-12;

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d s;
  s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return s;
}

double clamp_unit(double x) { return x < -1.0 ? -1.0 : (x > 1.0 ? 1.0 : x); }

// Great-circle angle via atan2, stable near 0 and pi, unlike plain acos.
double sphere_angle(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

}  // namespace

const char* to_string(SpaceKind kind) {
  switch (kind) {
    case SpaceKind::Sphere2: return "sphere2";
    case SpaceKind::PositiveHalfLine: return "positive_half_line";
    case SpaceKind::ProductS2RPlus: return "product_s2_rplus";
    case SpaceKind::SPD3: return "spd3";
  }
  return "?";
}

const char* to_string(GroupKind kind) {
  switch (kind) {
    case GroupKind::SO3: return "so3";
    case GroupKind::PositiveScale: return "positive_scale";
    case GroupKind::SO3xScale: return "so3_x_scale";
    case GroupKind::GL3: return "gl3";
  }
  return "?";
}

const char* to_string(RadialMeasure m) {
  switch (m) {
    case RadialMeasure::PlainDr: return "plain_dr";
    case RadialMeasure::ScaleInvariant: return "scale_invariant";
    case RadialMeasure::Lebesgue3D: return "lebesgue3d";
  }
  return "?";
}

SpaceKind space_kind_from_string(const std::string& s) {
  if (s == "sphere2") return SpaceKind::Sphere2;
  if (s == "positive_half_line") return SpaceKind::PositiveHalfLine;
  if (s == "product_s2_rplus") return SpaceKind::ProductS2RPlus;
  if (s == "spd3") return SpaceKind::SPD3;
  throw InvalidArgument("unknown space kind: " + s);
}

GroupKind group_kind_from_string(const std::string& s) {
  if (s == "so3") return GroupKind::SO3;
  if (s == "positive_scale") return GroupKind::PositiveScale;
  if (s == "so3_x_scale") return GroupKind::SO3xScale;
  if (s == "gl3") return GroupKind::GL3;
  throw InvalidArgument("unknown group kind: " + s);
}

RadialMeasure radial_measure_from_string(const std::string& s) {
  if (s == "plain_dr") return RadialMeasure::PlainDr;
  if (s == "scale_invariant") return RadialMeasure::ScaleInvariant;
  if (s == "lebesgue3d") return RadialMeasure::Lebesgue3D;
  throw InvalidArgument("unknown radial measure: " + s);
}

int coord_dim(SpaceKind kind) {
  switch (kind) {
    case SpaceKind::Sphere2: return 3;
    case SpaceKind::PositiveHalfLine: return 1;
    case SpaceKind::ProductS2RPlus: return 4;
    case SpaceKind::SPD3: return 9;
  }
  return 0;
}

int algebra_dim(GroupKind kind) {
  switch (kind) {
    case GroupKind::SO3: return 3;
    case GroupKind::PositiveScale: return 1;
    case GroupKind::SO3xScale: return 4;
    case GroupKind::GL3: return 9;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// ManifoldPoint / GroupElement / HomogeneousSpace
// ---------------------------------------------------------------------------

Eigen::Matrix3d ManifoldPoint::spd() const {
  if (coords.size() != 9) throw InvalidArgument("point is not an SPD3 point");
  return Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(coords.data());
}

ManifoldPoint ManifoldPoint::sphere(const Eigen::Vector3d& x) {
  ManifoldPoint p;
  p.coords = x;
  return p;
}

ManifoldPoint ManifoldPoint::half_line(double r) {
  ManifoldPoint p;
  p.coords = Eigen::VectorXd::Constant(1, r);
  return p;
}

ManifoldPoint ManifoldPoint::product(const Eigen::Vector3d& x, double r) {
  ManifoldPoint p;
  p.coords.resize(4);
  p.coords << x(0), x(1), x(2), r;
  return p;
}

ManifoldPoint ManifoldPoint::spd3(const Eigen::Matrix3d& m) {
  ManifoldPoint p;
  p.coords.resize(9);
  Eigen::Map<Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(p.coords.data()) = m;
  return p;
}

GroupElement GroupElement::identity(GroupKind kind) {
  GroupElement g;
  g.kind = kind;
  return g;
}

GroupElement GroupElement::from_rotation(const Eigen::Matrix3d& r) {
  GroupElement g;
  g.kind = GroupKind::SO3;
  g.rotation = r;
  return g;
}

GroupElement GroupElement::from_scale(double s) {
  GroupElement g;
  g.kind = GroupKind::PositiveScale;
  g.scale = s;
  return g;
}

GroupElement GroupElement::rotation_scale(const Eigen::Matrix3d& r, double s) {
  GroupElement g;
  g.kind = GroupKind::SO3xScale;
  g.rotation = r;
  g.scale = s;
  return g;
}

GroupElement GroupElement::from_gl(const Eigen::Matrix3d& m) {
  GroupElement g;
  g.kind = GroupKind::GL3;
  g.gl = m;
  return g;
}

void GroupElement::check() const {
  switch (kind) {
    case GroupKind::SO3:
    case GroupKind::SO3xScale: {
      double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity())
                         .cwiseAbs()
                         .maxCoeff();
      if (ortho >= 1e-10 || rotation.determinant() <= 0.0)
        throw InvalidArgument("rotation component is not in SO(3)");
      if (kind == GroupKind::SO3xScale && scale == 0.0)
        throw SingularGroupElement("scale component is zero");
      break;
    }
    case GroupKind::PositiveScale:
      if (scale == 0.0) throw SingularGroupElement("scale component is zero");
      break;
    case GroupKind::GL3:
      if (std::abs(gl.determinant()) <= 1e-12)
        throw SingularGroupElement("gl component is numerically singular");
      break;
  }
}

HomogeneousSpace HomogeneousSpace::sphere2() {
  return {SpaceKind::Sphere2, GroupKind::SO3,
          ManifoldPoint::sphere(Eigen::Vector3d(0, 0, 1))};
}

HomogeneousSpace HomogeneousSpace::positive_half_line() {
  return {SpaceKind::PositiveHalfLine, GroupKind::PositiveScale,
          ManifoldPoint::half_line(1.0)};
}

HomogeneousSpace HomogeneousSpace::product_s2_rplus() {
  return {SpaceKind::ProductS2RPlus, GroupKind::SO3xScale,
          ManifoldPoint::product(Eigen::Vector3d(0, 0, 1), 1.0)};
}

HomogeneousSpace HomogeneousSpace::spd3() {
  return {SpaceKind::SPD3, GroupKind::GL3,
          ManifoldPoint::spd3(Eigen::Matrix3d::Identity())};
}

HomogeneousSpace HomogeneousSpace::of(SpaceKind kind) {
  switch (kind) {
    case SpaceKind::Sphere2: return sphere2();
    case SpaceKind::PositiveHalfLine: return positive_half_line();
    case SpaceKind::ProductS2RPlus: return product_s2_rplus();
    case SpaceKind::SPD3: return spd3();
  }
  throw InvalidArgument("bad space kind");
}

bool HomogeneousSpace::contains(const ManifoldPoint& x, double tol) const {
  if (x.coords.size() != coord_dim(kind)) return false;
  if (!x.coords.allFinite()) return false;
  switch (kind) {
    case SpaceKind::Sphere2:
      return std::abs(x.coords.norm() - 1.0) < tol;
    case SpaceKind::PositiveHalfLine:
      return x.coords(0) > 0.0;
    case SpaceKind::ProductS2RPlus:
      return std::abs(x.sphere_part().norm() - 1.0) < tol && x.radial_part() > 0.0;
    case SpaceKind::SPD3: {
      Eigen::Matrix3d m = x.spd();
      if ((m - m.transpose()).cwiseAbs().maxCoeff() >= tol) return false;
      Eigen::LLT<Eigen::Matrix3d> llt(m);
      return llt.info() == Eigen::Success;
    }
  }
  return false;
}

// ---------------------------------------------------------------------------
// Actions, composition, distances
// ---------------------------------------------------------------------------

namespace {

void require_compatible(const GroupElement& g, const HomogeneousSpace& space) {
  if (g.kind != space.group_kind)
    throw InvalidArgument("group element kind does not match the space's group");
}

}  // namespace

ManifoldPoint act(const GroupElement& g, const ManifoldPoint& x,
                  const HomogeneousSpace& space) {
  require_compatible(g, space);
  if (x.coords.size() != coord_dim(space.kind))
    throw InvalidArgument("point dimension does not match the space kind");
  switch (space.kind) {
    case SpaceKind::Sphere2:
      return ManifoldPoint::sphere(g.rotation * x.sphere_part());
    case SpaceKind::PositiveHalfLine: {
      if (g.scale == 0.0) throw SingularGroupElement("zero scale");
      return ManifoldPoint::half_line(std::abs(g.scale) * x.coords(0));
    }
    case SpaceKind::ProductS2RPlus: {
      if (g.scale == 0.0) throw SingularGroupElement("zero scale");
      return ManifoldPoint::product(g.rotation * x.sphere_part(),
                                    std::abs(g.scale) * x.radial_part());
    }
    case SpaceKind::SPD3: {
      if (std::abs(g.gl.determinant()) <= 1e-12)
        throw SingularGroupElement("gl element is numerically singular");
      return ManifoldPoint::spd3(g.gl * x.spd() * g.gl.transpose());
    }
  }
  throw InvalidArgument("bad space kind");
}

GroupElement compose(const GroupElement& g1, const GroupElement& g2) {
  if (g1.kind != g2.kind) throw InvalidArgument("composing different group kinds");
  GroupElement g = g1;
  g.rotation = g1.rotation * g2.rotation;
  g.scale = g1.scale * g2.scale;
  g.gl = g1.gl * g2.gl;
  return g;
}

GroupElement inverse(const GroupElement& g) {
  GroupElement h = g;
  h.rotation = g.rotation.transpose();
  if (g.kind == GroupKind::PositiveScale || g.kind == GroupKind::SO3xScale) {
    if (g.scale == 0.0) throw SingularGroupElement("zero scale");
    h.scale = 1.0 / g.scale;
  }
  if (g.kind == GroupKind::GL3) {
    if (std::abs(g.gl.determinant()) <= 1e-12)
      throw SingularGroupElement("gl element is numerically singular");
    h.gl = g.gl.inverse();
  }
  return h;
}

double distance(const ManifoldPoint& x, const ManifoldPoint& y,
                const HomogeneousSpace& space) {
  if (!space.contains(x, 1e-8) || !space.contains(y, 1e-8))
    throw InvalidArgument("distance: input off the manifold");
  switch (space.kind) {
    case SpaceKind::Sphere2:
      return sphere_angle(x.sphere_part(), y.sphere_part());
    case SpaceKind::PositiveHalfLine:
      return std::abs(std::log(x.coords(0) / y.coords(0)));
    case SpaceKind::ProductS2RPlus: {
      double ds = sphere_angle(x.sphere_part(), y.sphere_part());
      double dr = std::log(x.radial_part() / y.radial_part());
      return std::sqrt(ds * ds + dr * dr);
    }
    case SpaceKind::SPD3: {
      // Affine-invariant metric: eigenvalues of X^-1 Y are those of
      // X^-1/2 Y X^-1/2, real and positive for an SPD pair.
      Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::Matrix3d> es(y.spd(), x.spd());
      double d2 = 0.0;
      for (int i = 0; i < 3; ++i) {
        double lam = std::max(es.eigenvalues()(i), kEigenvalueFloor);
        double l = std::log(lam);
        d2 += l * l;
      }
      return std::sqrt(d2);
    }
  }
  throw InvalidArgument("bad space kind");
}

double group_distance(const GroupElement& g1, const GroupElement& g2) {
  if (g1.kind != g2.kind) throw InvalidArgument("group distance: kind mismatch");
  switch (g1.kind) {
    case GroupKind::SO3: {
      double c = clamp_unit(((g1.rotation.transpose() * g2.rotation).trace() - 1.0) / 2.0);
      return std::acos(c);
    }
    case GroupKind::PositiveScale:
      // metric on |s|; the sign acts trivially on R+
      return std::abs(std::log(std::abs(g2.scale / g1.scale)));
    case GroupKind::SO3xScale: {
      double c = clamp_unit(((g1.rotation.transpose() * g2.rotation).trace() - 1.0) / 2.0);
      double a = std::acos(c);
      double l = std::log(std::abs(g2.scale / g1.scale));
      return std::sqrt(a * a + l * l);
    }
    case GroupKind::GL3: {
      Eigen::Matrix3d rel = g1.gl.inverse() * g2.gl;
      return gl3_log(rel).norm();
    }
  }
  throw InvalidArgument("bad group kind");
}

// ---------------------------------------------------------------------------
// exp / log
// ---------------------------------------------------------------------------

Eigen::Matrix3d rotation_x(double a) {
  Eigen::Matrix3d r;
  r << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return r;
}

Eigen::Matrix3d rotation_y(double a) {
  Eigen::Matrix3d r;
  r << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
  return r;
}

Eigen::Matrix3d rotation_z(double a) {
  Eigen::Matrix3d r;
  r << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return r;
}

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& omega) {
  double theta = omega.norm();
  Eigen::Matrix3d k = skew(omega);
  if (theta < 1e-8) {
    return Eigen::Matrix3d::Identity() + k + 0.5 * k * k;
  }
  double a = std::sin(theta) / theta;
  double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Eigen::Matrix3d::Identity() + a * k + b * k * k;
}

Eigen::Vector3d so3_log(const Eigen::Matrix3d& r) {
  double c = clamp_unit((r.trace() - 1.0) / 2.0);
  double theta = std::acos(c);
  Eigen::Vector3d v(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  if (theta < 1e-7) {
    return 0.5 * v;  // leading order, error O(theta^3)
  }
  if (theta > kPi - 1e-7) {
    // Angle-pi branch: axis from the symmetric part, sign fixed by the
    // first component of largest magnitude being positive.
    Eigen::Matrix3d b = 0.5 * (r + Eigen::Matrix3d::Identity());
    Eigen::Vector3d n;
    for (int i = 0; i < 3; ++i) n(i) = std::sqrt(std::max(b(i, i), 0.0));
    int imax = 0;
    b.diagonal().maxCoeff(&imax);
    for (int i = 0; i < 3; ++i) {
      if (i != imax && b(imax, i) < 0.0) n(i) = -n(i);
    }
    if (n.norm() < 1e-12) throw LogBranchError("so3 log: degenerate axis at pi");
    n.normalize();
    return theta * n;
  }
  return (theta / (2.0 * std::sin(theta))) * v;
}

Eigen::Matrix3d spd_sqrt(const Eigen::Matrix3d& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(m);
  Eigen::Vector3d d = es.eigenvalues().cwiseMax(kEigenvalueFloor).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::Matrix3d spd_inv_sqrt(const Eigen::Matrix3d& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(m);
  Eigen::Vector3d d = es.eigenvalues().cwiseMax(kEigenvalueFloor).cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::Matrix3d spd_log(const Eigen::Matrix3d& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(m);
  Eigen::Vector3d d = es.eigenvalues().cwiseMax(kEigenvalueFloor).array().log();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::Matrix3d sym_exp(const Eigen::Matrix3d& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(m);
  Eigen::Vector3d d = es.eigenvalues().array().exp();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::Matrix3d gl3_exp(const Eigen::Matrix3d& m) { return m.exp(); }

Eigen::Matrix3d gl3_log(const Eigen::Matrix3d& m) {
  if (m.determinant() <= 0.0)
    throw LogBranchError("gl3 log: matrix not in the identity component");
  Eigen::EigenSolver<Eigen::Matrix3d> es(m);
  for (int i = 0; i < 3; ++i) {
    std::complex<double> lam = es.eigenvalues()(i);
    if (lam.real() <= 0.0 && std::abs(lam.imag()) < 1e-12 * std::max(1.0, std::abs(lam.real())))
      throw LogBranchError("gl3 log: eigenvalue on the closed negative real axis");
  }
  return m.log();
}

GroupElement group_exp(const Eigen::VectorXd& v, GroupKind kind) {
  if (v.size() != algebra_dim(kind))
    throw InvalidArgument("algebra coordinate dimension mismatch");
  if (!v.allFinite()) throw InvalidArgument("non-finite algebra coordinates");
  GroupElement g = GroupElement::identity(kind);
  switch (kind) {
    case GroupKind::SO3:
      g.rotation = so3_exp(v.head<3>());
      break;
    case GroupKind::PositiveScale:
      g.scale = std::exp(v(0));
      break;
    case GroupKind::SO3xScale:
      g.rotation = so3_exp(v.head<3>());
      g.scale = std::exp(v(3));
      break;
    case GroupKind::GL3:
      g.gl = gl3_exp(Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(v.data()));
      break;
  }
  return g;
}

Eigen::VectorXd group_log(const GroupElement& g) {
  Eigen::VectorXd v(algebra_dim(g.kind));
  switch (g.kind) {
    case GroupKind::SO3:
      v.head<3>() = so3_log(g.rotation);
      break;
    case GroupKind::PositiveScale:
      if (g.scale <= 0.0)
        throw LogBranchError("scale log: element not in the identity component");
      v(0) = std::log(g.scale);
      break;
    case GroupKind::SO3xScale:
      if (g.scale <= 0.0)
        throw LogBranchError("scale log: element not in the identity component");
      v.head<3>() = so3_log(g.rotation);
      v(3) = std::log(g.scale);
      break;
    case GroupKind::GL3: {
      Eigen::Matrix3d l = gl3_log(g.gl);
      Eigen::Map<Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(v.data()) = l;
      break;
    }
  }
  return v;
}

// ---------------------------------------------------------------------------
// Sections and transitivity
// ---------------------------------------------------------------------------

namespace {

Eigen::Matrix3d sphere_section_rotation(const Eigen::Vector3d& x) {
  double theta = std::acos(clamp_unit(x(2)));
  double phi = 0.0;
  if (std::abs(x(0)) > 1e-14 || std::abs(x(1)) > 1e-14) phi = std::atan2(x(1), x(0));
  return rotation_z(phi) * rotation_y(theta);
}

}  // namespace

GroupElement section(const ManifoldPoint& x, const HomogeneousSpace& space) {
  if (!space.contains(x, 1e-8)) throw InvalidArgument("section: point off the manifold");
  switch (space.kind) {
    case SpaceKind::Sphere2:
      return GroupElement::from_rotation(sphere_section_rotation(x.sphere_part()));
    case SpaceKind::PositiveHalfLine:
      return GroupElement::from_scale(x.coords(0));
    case SpaceKind::ProductS2RPlus:
      return GroupElement::rotation_scale(sphere_section_rotation(x.sphere_part()),
                                          x.radial_part());
    case SpaceKind::SPD3:
      return GroupElement::from_gl(spd_sqrt(x.spd()));
  }
  throw InvalidArgument("bad space kind");
}

GroupElement transitive_element(const ManifoldPoint& x, const ManifoldPoint& y,
                                const HomogeneousSpace& space) {
  switch (space.kind) {
    case SpaceKind::Sphere2: {
      Eigen::Vector3d a = x.sphere_part(), b = y.sphere_part();
      Eigen::Vector3d axis = a.cross(b);
      double c = clamp_unit(a.dot(b));
      double angle = std::acos(c);
      if (axis.norm() < 1e-14) {
        if (c > 0.0) return GroupElement::identity(GroupKind::SO3);
        // antipodal: rotate by pi around any axis orthogonal to a
        Eigen::Vector3d ortho = std::abs(a(0)) < 0.9 ? Eigen::Vector3d(1, 0, 0)
                                                     : Eigen::Vector3d(0, 1, 0);
        axis = a.cross(ortho).normalized();
        return GroupElement::from_rotation(so3_exp(kPi * axis));
      }
      return GroupElement::from_rotation(so3_exp(angle * axis.normalized()));
    }
    case SpaceKind::PositiveHalfLine:
      return GroupElement::from_scale(y.coords(0) / x.coords(0));
    case SpaceKind::ProductS2RPlus: {
      auto rot = transitive_element(ManifoldPoint::sphere(x.sphere_part()),
                                    ManifoldPoint::sphere(y.sphere_part()),
                                    HomogeneousSpace::sphere2());
      return GroupElement::rotation_scale(rot.rotation, y.radial_part() / x.radial_part());
    }
    case SpaceKind::SPD3:
      return GroupElement::from_gl(spd_sqrt(y.spd()) * spd_inv_sqrt(x.spd()));
  }
  throw InvalidArgument("bad space kind");
}

// ---------------------------------------------------------------------------
// Quadrature rules (Golub-Welsch on the Jacobi matrix)
// ---------------------------------------------------------------------------

namespace {

void golub_welsch(const Eigen::VectorXd& diag, const Eigen::VectorXd& offdiag,
                  double mu0, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
  const int n = static_cast<int>(diag.size());
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
  jac.diagonal() = diag;
  for (int i = 0; i + 1 < n; ++i) {
    jac(i, i + 1) = offdiag(i);
    jac(i + 1, i) = offdiag(i);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
  nodes = es.eigenvalues();
  weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double v0 = es.eigenvectors()(0, i);
    weights(i) = mu0 * v0 * v0;
  }
}

}  // namespace

void gauss_legendre(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
  if (n < 1) throw InvalidArgument("gauss_legendre: order must be >= 1");
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd off(std::max(n - 1, 0));
  for (int i = 1; i < n; ++i) off(i - 1) = i / std::sqrt(4.0 * i * i - 1.0);
  golub_welsch(diag, off, 2.0, nodes, weights);
}

void gauss_laguerre(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
  if (n < 1) throw InvalidArgument("gauss_laguerre: order must be >= 1");
  Eigen::VectorXd diag(n), off(std::max(n - 1, 0));
  for (int i = 0; i < n; ++i) diag(i) = 2.0 * i + 1.0;
  for (int i = 1; i < n; ++i) off(i - 1) = static_cast<double>(i);
  golub_welsch(diag, off, 1.0, nodes, weights);
}

void gauss_hermite(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
  if (n < 1) throw InvalidArgument("gauss_hermite: order must be >= 1");
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd off(std::max(n - 1, 0));
  for (int i = 1; i < n; ++i) off(i - 1) = std::sqrt(i / 2.0);
  golub_welsch(diag, off, std::sqrt(kPi), nodes, weights);
}

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

namespace {

// Sphere factor: Gauss-Legendre in cos(theta) x uniform azimuth.
void sphere_nodes(int order, std::vector<Eigen::Vector3d>& pts, std::vector<double>& wts) {
  Eigen::VectorXd gl_nodes, gl_weights;
  gauss_legendre(order, gl_nodes, gl_weights);
  const int n_phi = 2 * order;
  const double dphi = 2.0 * kPi / n_phi;
  pts.clear();
  wts.clear();
  for (int i = 0; i < order; ++i) {
    double ct = gl_nodes(i);
    double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
    for (int j = 0; j < n_phi; ++j) {
      double phi = j * dphi;
      pts.emplace_back(st * std::cos(phi), st * std::sin(phi), ct);
      wts.push_back(gl_weights(i) * dphi);
    }
  }
}

// Radial factor under the requested weight convention.
void radial_nodes(int order, RadialMeasure measure, std::vector<double>& r,
                  std::vector<double>& w) {
  r.clear();
  w.clear();
  Eigen::VectorXd nodes, weights;
  switch (measure) {
    case RadialMeasure::PlainDr:
      gauss_laguerre(order, nodes, weights);
      for (int i = 0; i < order; ++i) {
        r.push_back(nodes(i));
        w.push_back(weights(i) * std::exp(nodes(i)));
      }
      break;
    case RadialMeasure::ScaleInvariant:
      // t = log r; Gauss-Hermite in t, weights for plain dt = dr/r.
      gauss_hermite(order, nodes, weights);
      for (int i = 0; i < order; ++i) {
        r.push_back(std::exp(nodes(i)));
        w.push_back(weights(i) * std::exp(nodes(i) * nodes(i)));
      }
      break;
    case RadialMeasure::Lebesgue3D:
      gauss_laguerre(order, nodes, weights);
      for (int i = 0; i < order; ++i) {
        r.push_back(nodes(i));
        w.push_back(weights(i) * std::exp(nodes(i)) * nodes(i) * nodes(i));
      }
      break;
  }
}

}  // namespace

QuadratureGrid build_grid(const HomogeneousSpace& space,
                          const std::vector<int>& resolution,
                          const GridOptions& options) {
  QuadratureGrid grid;
  grid.domain = QuadratureGrid::Domain::Manifold;
  grid.space_kind = space.kind;
  grid.resolution = resolution;
  grid.options = options;

  auto need = [&](std::size_t n) {
    if (resolution.size() != n)
      throw InvalidArgument("build_grid: wrong resolution arity for space kind");
    for (int r : resolution)
      if (r < (space.kind == SpaceKind::SPD3 ? 1 : 2))
        throw InvalidArgument("build_grid: unsupported resolution");
  };

  switch (space.kind) {
    case SpaceKind::Sphere2: {
      need(1);
      std::vector<Eigen::Vector3d> pts;
      std::vector<double> wts;
      sphere_nodes(resolution[0], pts, wts);
      grid.weights.resize(static_cast<int>(pts.size()));
      for (std::size_t i = 0; i < pts.size(); ++i) {
        grid.points.push_back(ManifoldPoint::sphere(pts[i]));
        grid.weights(static_cast<int>(i)) = wts[i];
      }
      break;
    }
    case SpaceKind::PositiveHalfLine: {
      need(1);
      std::vector<double> r, w;
      radial_nodes(resolution[0], options.radial_measure, r, w);
      grid.weights.resize(static_cast<int>(r.size()));
      for (std::size_t i = 0; i < r.size(); ++i) {
        grid.points.push_back(ManifoldPoint::half_line(r[i]));
        grid.weights(static_cast<int>(i)) = w[i];
      }
      break;
    }
    case SpaceKind::ProductS2RPlus: {
      need(2);
      std::vector<Eigen::Vector3d> pts;
      std::vector<double> wts;
      sphere_nodes(resolution[0], pts, wts);
      std::vector<double> r, w;
      radial_nodes(resolution[1], options.radial_measure, r, w);
      grid.weights.resize(static_cast<int>(pts.size() * r.size()));
      int idx = 0;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        for (std::size_t j = 0; j < r.size(); ++j) {
          grid.points.push_back(ManifoldPoint::product(pts[i], r[j]));
          grid.weights(idx++) = wts[i] * w[j];
        }
      }
      break;
    }
    case SpaceKind::SPD3: {
      need(1);
      const int n = resolution[0];
      Rng rng("spd3-grid", options.seed);
      grid.weights = Eigen::VectorXd::Constant(n, 1.0 / n);
      for (int i = 0; i < n; ++i) {
        Eigen::Matrix3d z = random_symmetric(rng, options.spd_sigma);
        grid.points.push_back(ManifoldPoint::spd3(sym_exp(z)));
      }
      break;
    }
  }
  return grid;
}

QuadratureGrid haar_grid(GroupKind kind, const std::vector<int>& resolution,
                         const GridOptions& options) {
  QuadratureGrid grid;
  grid.domain = QuadratureGrid::Domain::Group;
  grid.group_kind = kind;
  grid.resolution = resolution;
  grid.options = options;

  auto so3_part = [&](int na, int nb, int ng, std::vector<GroupElement>* out,
                      std::vector<double>* wts) {
    if (na < 2 || nb < 2 || ng < 2)
      throw InvalidArgument("haar_grid: SO(3) resolution must be >= 2 per angle");
    double total = 0.0;
    std::vector<double> raw;
    std::vector<GroupElement> els;
    for (int ia = 0; ia < na; ++ia) {
      double alpha = 2.0 * kPi * ia / na;
      for (int ib = 0; ib < nb; ++ib) {
        double beta = kPi * (ib + 0.5) / nb;
        for (int ig = 0; ig < ng; ++ig) {
          double gamma = 2.0 * kPi * ig / ng;
          Eigen::Matrix3d r = rotation_z(alpha) * rotation_y(beta) * rotation_z(gamma);
          els.push_back(GroupElement::from_rotation(r));
          raw.push_back(std::sin(beta));
          total += std::sin(beta);
        }
      }
    }
    for (std::size_t i = 0; i < els.size(); ++i) {
      out->push_back(els[i]);
      wts->push_back(raw[i] / total);
    }
  };

  auto scale_part = [&](int m, std::vector<double>* nodes, std::vector<double>* wts) {
    if (m < 1) throw InvalidArgument("haar_grid: scale node count must be >= 1");
    double h = options.scale_log_half_range;
    if (m == 1) {
      nodes->push_back(1.0);
      wts->push_back(1.0);
      return;
    }
    double dt = 2.0 * h / (m - 1);
    for (int i = 0; i < m; ++i) {
      double t = -h + i * dt;
      nodes->push_back(std::exp(t));
      wts->push_back((i == 0 || i == m - 1) ? dt / 2.0 : dt);
    }
  };

  switch (kind) {
    case GroupKind::SO3: {
      if (resolution.size() != 3) throw InvalidArgument("haar_grid: SO(3) needs 3 resolutions");
      std::vector<GroupElement> els;
      std::vector<double> wts;
      so3_part(resolution[0], resolution[1], resolution[2], &els, &wts);
      grid.elements = std::move(els);
      grid.weights = Eigen::Map<Eigen::VectorXd>(wts.data(), static_cast<int>(wts.size()));
      break;
    }
    case GroupKind::PositiveScale: {
      if (resolution.size() != 1) throw InvalidArgument("haar_grid: scale needs 1 resolution");
      std::vector<double> nodes, wts;
      scale_part(resolution[0], &nodes, &wts);
      grid.weights.resize(static_cast<int>(nodes.size()));
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        grid.elements.push_back(GroupElement::from_scale(nodes[i]));
        grid.weights(static_cast<int>(i)) = wts[i];
      }
      break;
    }
    case GroupKind::SO3xScale: {
      if (resolution.size() != 4)
        throw InvalidArgument("haar_grid: SO(3) x scale needs 4 resolutions");
      std::vector<GroupElement> rot;
      std::vector<double> rot_w;
      so3_part(resolution[0], resolution[1], resolution[2], &rot, &rot_w);
      std::vector<double> nodes, wts;
      scale_part(resolution[3], &nodes, &wts);
      grid.weights.resize(static_cast<int>(rot.size() * nodes.size()));
      int idx = 0;
      for (std::size_t i = 0; i < rot.size(); ++i) {
        for (std::size_t j = 0; j < nodes.size(); ++j) {
          grid.elements.push_back(GroupElement::rotation_scale(rot[i].rotation, nodes[j]));
          grid.weights(idx++) = rot_w[i] * wts[j];
        }
      }
      break;
    }
    case GroupKind::GL3: {
      if (resolution.size() != 1) throw InvalidArgument("haar_grid: GL(3) needs 1 resolution");
      const int n = resolution[0];
      if (n < 1) throw InvalidArgument("haar_grid: GL(3) set must be nonempty");
      Rng rng("gl3-grid", options.seed);
      grid.weights = Eigen::VectorXd::Constant(n, 1.0 / n);
      for (int i = 0; i < n; ++i) {
        Eigen::Matrix3d z;
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) z(a, b) = rng.normal();
        grid.elements.push_back(GroupElement::from_gl(gl3_exp(options.gl_epsilon * z)));
      }
      break;
    }
  }
  return grid;
}

// ---------------------------------------------------------------------------
// Random elements
// ---------------------------------------------------------------------------

Eigen::Vector3d random_unit_vector(Rng& rng) {
  while (true) {
    Eigen::Vector3d v(rng.normal(), rng.normal(), rng.normal());
    double n = v.norm();
    if (n > 1e-8) return v / n;
  }
}

Eigen::Matrix3d random_rotation(Rng& rng) {
  Eigen::Vector3d axis = random_unit_vector(rng);
  double angle = rng.uniform(0.0, kPi);
  return so3_exp(angle * axis);
}

Eigen::Matrix3d random_symmetric(Rng& rng, double sigma) {
  Eigen::Matrix3d z;
  const double off = sigma / std::sqrt(2.0);
  for (int i = 0; i < 3; ++i) z(i, i) = sigma * rng.normal();
  z(0, 1) = z(1, 0) = off * rng.normal();
  z(0, 2) = z(2, 0) = off * rng.normal();
  z(1, 2) = z(2, 1) = off * rng.normal();
  return z;
}

}  // namespace corrnet
