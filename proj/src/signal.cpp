#include "corrnet/signal.hpp"

#include <cmath>

#include "corrnet/rng.hpp"

namespace corrnet {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

// Fully normalized associated Legendre N_l^m(cos theta) for m >= 0, no
// Condon-Shortley phase: N_l^m = sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!) P_l^m.
double normalized_assoc_legendre(int l, int m, double ct, double st) {
  double pmm = std::sqrt(1.0 / (4.0 * kPi));
  for (int k = 1; k <= m; ++k) {
    pmm *= st * std::sqrt((2.0 * k + 1.0) / (2.0 * k));
  }
  if (l == m) return pmm;
  double pmm1 = ct * std::sqrt(2.0 * m + 3.0) * pmm;
  if (l == m + 1) return pmm1;
  for (int k = m + 2; k <= l; ++k) {
    double a = std::sqrt((4.0 * k * k - 1.0) / (static_cast<double>(k) * k - m * m));
    double b = std::sqrt(((k - 1.0) * (k - 1.0) - m * m) / (4.0 * (k - 1.0) * (k - 1.0) - 1.0));
    double pk = a * (ct * pmm1 - b * pmm);
    pmm = pmm1;
    pmm1 = pk;
  }
  return pmm1;
}

bool grids_compatible(const QuadratureGrid& a, const QuadratureGrid& b) {
  if (&a == &b) return true;
  if (a.domain != b.domain || a.size() != b.size()) return false;
  if (a.domain == QuadratureGrid::Domain::Manifold && a.space_kind != b.space_kind)
    return false;
  if (a.domain == QuadratureGrid::Domain::Group && a.group_kind != b.group_kind)
    return false;
  return (a.weights - b.weights).cwiseAbs().maxCoeff() == 0.0;
}

}  // namespace

// ---------------------------------------------------------------------------
// BumpMask
// ---------------------------------------------------------------------------

Eigen::VectorXd BumpMask::bump_values(const ManifoldPoint& x) const {
  if (on_group) throw InvalidArgument("mask is anchored on a group, not a manifold");
  const int k = n_anchors();
  Eigen::VectorXd b(k);
  const double inv = 1.0 / (2.0 * tau * tau);
  for (int i = 0; i < k; ++i) {
    double d = distance(x, anchors[i], space);
    b(i) = std::exp(-d * d * inv);
  }
  return b;
}

Eigen::VectorXd BumpMask::bump_values(const GroupElement& h) const {
  if (!on_group) throw InvalidArgument("mask is anchored on a manifold, not a group");
  const int k = n_anchors();
  Eigen::VectorXd b(k);
  const double inv = 1.0 / (2.0 * tau * tau);
  for (int i = 0; i < k; ++i) {
    double d = group_distance(h, group_anchors[i]);
    b(i) = std::exp(-d * d * inv);
  }
  return b;
}

double BumpMask::evaluate(int co, int ci, const ManifoldPoint& x) const {
  return coefficients.row(co).segment(ci * n_anchors(), n_anchors()).dot(bump_values(x));
}

double BumpMask::evaluate(int co, int ci, const GroupElement& h) const {
  return coefficients.row(co).segment(ci * n_anchors(), n_anchors()).dot(bump_values(h));
}

void BumpMask::check() const {
  if (tau <= 0.0) throw InvalidArgument("mask width tau must be positive");
  if (n_anchors() == 0) throw InvalidArgument("mask needs at least one anchor");
  if (coefficients.cols() != static_cast<Eigen::Index>(channels_in()) * n_anchors())
    throw InvalidArgument("mask coefficient shape mismatch");
  if (!coefficients.allFinite()) throw InvalidArgument("non-finite mask coefficients");
  if (!on_group) {
    for (const auto& a : anchors)
      if (!space.contains(a, 1e-8))
        throw InvalidArgument("mask anchor off the declared manifold");
  }
}

BumpMask make_manifold_mask(const HomogeneousSpace& space,
                            std::vector<ManifoldPoint> anchors, double tau,
                            Eigen::MatrixXd coefficients) {
  BumpMask w;
  w.on_group = false;
  w.space = space;
  w.anchors = std::move(anchors);
  w.tau = tau;
  w.coefficients = std::move(coefficients);
  w.check();
  return w;
}

BumpMask make_group_mask(GroupKind kind, std::vector<GroupElement> anchors, double tau,
                         Eigen::MatrixXd coefficients) {
  BumpMask w;
  w.on_group = true;
  w.group_kind = kind;
  w.group_anchors = std::move(anchors);
  w.tau = tau;
  w.coefficients = std::move(coefficients);
  w.check();
  return w;
}

std::vector<ManifoldPoint> random_anchors(const HomogeneousSpace& space, int count,
                                          Rng& rng, double radial_spread,
                                          double spd_spread) {
  std::vector<ManifoldPoint> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    switch (space.kind) {
      case SpaceKind::Sphere2:
        out.push_back(ManifoldPoint::sphere(random_unit_vector(rng)));
        break;
      case SpaceKind::PositiveHalfLine:
        out.push_back(ManifoldPoint::half_line(
            std::exp(rng.uniform(-radial_spread, radial_spread))));
        break;
      case SpaceKind::ProductS2RPlus:
        out.push_back(ManifoldPoint::product(
            random_unit_vector(rng), std::exp(rng.uniform(-radial_spread, radial_spread))));
        break;
      case SpaceKind::SPD3:
        out.push_back(ManifoldPoint::spd3(sym_exp(random_symmetric(rng, spd_spread))));
        break;
    }
  }
  return out;
}

std::vector<GroupElement> random_group_anchors(GroupKind kind, int count, Rng& rng,
                                               double spread) {
  std::vector<GroupElement> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    switch (kind) {
      case GroupKind::SO3:
        out.push_back(GroupElement::from_rotation(
            so3_exp(rng.uniform(0.0, spread) * random_unit_vector(rng))));
        break;
      case GroupKind::PositiveScale:
        out.push_back(GroupElement::from_scale(std::exp(rng.uniform(-spread, spread))));
        break;
      case GroupKind::SO3xScale:
        out.push_back(GroupElement::rotation_scale(
            so3_exp(rng.uniform(0.0, spread) * random_unit_vector(rng)),
            std::exp(rng.uniform(-spread, spread))));
        break;
      case GroupKind::GL3: {
        Eigen::Matrix3d z;
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) z(a, b) = rng.normal();
        double n = z.norm();
        if (n > 0) z *= spread * rng.uniform() / n;
        out.push_back(GroupElement::from_gl(gl3_exp(z)));
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Basis families
// ---------------------------------------------------------------------------

double eval_sph_harmonic(int l, int m, const Eigen::Vector3d& x) {
  if (l < 0 || std::abs(m) > l) throw InvalidArgument("spherical harmonic index out of range");
  double ct = x(2);
  double st = std::sqrt(std::max(0.0, x(0) * x(0) + x(1) * x(1)));
  int am = std::abs(m);
  double n = normalized_assoc_legendre(l, am, ct, st);
  if (m == 0) return n;
  double phi = std::atan2(x(1), x(0));
  return std::sqrt(2.0) * n * (m > 0 ? std::cos(am * phi) : std::sin(am * phi));
}

Eigen::VectorXd sph_harmonics_all(int L, const Eigen::Vector3d& x) {
  if (L < 0) throw InvalidArgument("spherical harmonic degree out of range");
  const double ct = x(2);
  const double st = std::sqrt(std::max(0.0, x(0) * x(0) + x(1) * x(1)));
  const double phi = std::atan2(x(1), x(0));

  // normalized associated Legendre for all (l, m), m-major recurrences
  Eigen::MatrixXd nlm = Eigen::MatrixXd::Zero(L + 1, L + 1);  // (l, m)
  nlm(0, 0) = std::sqrt(1.0 / (4.0 * kPi));
  for (int m = 1; m <= L; ++m)
    nlm(m, m) = nlm(m - 1, m - 1) * st * std::sqrt((2.0 * m + 1.0) / (2.0 * m));
  for (int m = 0; m < L; ++m) {
    nlm(m + 1, m) = ct * std::sqrt(2.0 * m + 3.0) * nlm(m, m);
    for (int l = m + 2; l <= L; ++l) {
      double a = std::sqrt((4.0 * l * l - 1.0) / (static_cast<double>(l) * l - m * m));
      double b =
          std::sqrt(((l - 1.0) * (l - 1.0) - m * m) / (4.0 * (l - 1.0) * (l - 1.0) - 1.0));
      nlm(l, m) = a * (ct * nlm(l - 1, m) - b * nlm(l - 2, m));
    }
  }

  Eigen::VectorXd cos_m(L + 1), sin_m(L + 1);
  cos_m(0) = 1.0;
  sin_m(0) = 0.0;
  if (L >= 1) {
    cos_m(1) = std::cos(phi);
    sin_m(1) = std::sin(phi);
    for (int m = 2; m <= L; ++m) {  // angle-addition recurrence
      cos_m(m) = 2.0 * cos_m(1) * cos_m(m - 1) - cos_m(m - 2);
      sin_m(m) = 2.0 * cos_m(1) * sin_m(m - 1) - sin_m(m - 2);
    }
  }

  const double root2 = std::sqrt(2.0);
  Eigen::VectorXd y((L + 1) * (L + 1));
  int idx = 0;
  for (int l = 0; l <= L; ++l)
    for (int m = -l; m <= l; ++m, ++idx) {
      int am = std::abs(m);
      if (m == 0)
        y(idx) = nlm(l, 0);
      else if (m > 0)
        y(idx) = root2 * nlm(l, am) * cos_m(am);
      else
        y(idx) = root2 * nlm(l, am) * sin_m(am);
    }
  return y;
}

double eval_radial(int n, double r) {
  if (n < 0) throw InvalidArgument("radial index out of range");
  // r = 0 is a removable boundary value: L_n(0) e^0 is well-defined.
  if (r < 0.0) throw InvalidArgument("radial coordinate must be nonnegative");
  double p0 = 1.0, p1 = 1.0 - r;
  double l = (n == 0) ? p0 : p1;
  for (int k = 2; k <= n; ++k) {
    double p2 = ((2.0 * k - 1.0 - r) * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
    l = p2;
  }
  return l * std::exp(-r / 2.0);
}

double eval_log_radial(int n, double r) {
  if (n < 0) throw InvalidArgument("radial index out of range");
  if (r <= 0.0) throw InvalidArgument("radial coordinate must be positive");
  double t = std::log(r);
  double h0 = std::pow(kPi, -0.25) * std::exp(-t * t / 2.0);
  if (n == 0) return h0;
  double h1 = std::sqrt(2.0) * t * h0;
  for (int k = 2; k <= n; ++k) {
    double h2 = t * std::sqrt(2.0 / k) * h1 - std::sqrt((k - 1.0) / k) * h0;
    h0 = h1;
    h1 = h2;
  }
  return h1;
}

BasisSet sphere_basis(int L) {
  if (L < 0) throw InvalidArgument("sphere basis degree must be >= 0");
  BasisSet basis;
  basis.domain = "sphere2";
  basis.band_limit = L;
  for (int l = 0; l <= L; ++l)
    for (int m = -l; m <= l; ++m)
      basis.funcs.push_back([l, m](const ManifoldPoint& p) {
        return eval_sph_harmonic(l, m, p.sphere_part());
      });
  basis.bulk = [L](const std::vector<ManifoldPoint>& points) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(points.size()), (L + 1) * (L + 1));
    for (std::size_t i = 0; i < points.size(); ++i)
      out.row(static_cast<Eigen::Index>(i)) =
          sph_harmonics_all(L, points[i].sphere_part()).transpose();
    return out;
  };
  return basis;
}

BasisSet product_basis(int L, int N_r, RadialMeasure measure) {
  if (L < 0 || N_r < 1) throw InvalidArgument("product basis needs L >= 0, N_r >= 1");
  BasisSet basis;
  basis.domain = "product_s2_rplus";
  basis.band_limit = L;
  basis.radial_order = N_r;
  const bool log_radial = (measure == RadialMeasure::ScaleInvariant);
  for (int n = 0; n < N_r; ++n)
    for (int l = 0; l <= L; ++l)
      for (int m = -l; m <= l; ++m)
        basis.funcs.push_back([n, l, m, log_radial](const ManifoldPoint& p) {
          double radial = log_radial ? eval_log_radial(n, p.radial_part())
                                     : eval_radial(n, p.radial_part());
          return eval_sph_harmonic(l, m, p.sphere_part()) * radial;
        });
  basis.bulk = [L, N_r, log_radial](const std::vector<ManifoldPoint>& points) {
    const int per_shell = (L + 1) * (L + 1);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(points.size()),
                        static_cast<Eigen::Index>(N_r) * per_shell);
    for (std::size_t i = 0; i < points.size(); ++i) {
      Eigen::VectorXd y = sph_harmonics_all(L, points[i].sphere_part());
      for (int n = 0; n < N_r; ++n) {
        double radial = log_radial ? eval_log_radial(n, points[i].radial_part())
                                   : eval_radial(n, points[i].radial_part());
        out.row(static_cast<Eigen::Index>(i)).segment(n * per_shell, per_shell) =
            radial * y.transpose();
      }
    }
    return out;
  };
  return basis;
}

BasisSet shore_basis(int L, int N_r) { return product_basis(L, N_r, RadialMeasure::PlainDr); }

Eigen::MatrixXd evaluate_basis(const BasisSet& basis, const QuadratureGrid& grid) {
  const auto n = static_cast<Eigen::Index>(grid.size());
  const auto nb = static_cast<Eigen::Index>(basis.size());
  Eigen::MatrixXd b(n, nb);
  if (grid.domain == QuadratureGrid::Domain::Manifold) {
    if (basis.on_group()) throw InvalidArgument("group basis evaluated on a manifold grid");
    if (basis.bulk) return basis.bulk(grid.points);
    for (Eigen::Index a = 0; a < nb; ++a)
      for (Eigen::Index i = 0; i < n; ++i) b(i, a) = basis.funcs[a](grid.points[i]);
  } else {
    if (!basis.on_group()) throw InvalidArgument("manifold basis evaluated on a group grid");
    for (Eigen::Index a = 0; a < nb; ++a)
      for (Eigen::Index i = 0; i < n; ++i) b(i, a) = basis.group_funcs[a](grid.elements[i]);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Inner products, fitting, synthesis
// ---------------------------------------------------------------------------

Eigen::MatrixXd inner_product(const SampledFunction& f1, const SampledFunction& f2) {
  if (!f1.grid || !f2.grid || !grids_compatible(*f1.grid, *f2.grid))
    throw InvalidArgument("inner_product: grid mismatch");
  return f1.values * f1.grid->weights.asDiagonal() * f2.values.transpose();
}

Eigen::MatrixXd fit_coefficients(const SampledFunction& f, const BasisSet& basis) {
  if (!f.grid) throw InvalidArgument("fit_coefficients: missing grid");
  Eigen::MatrixXd b = evaluate_basis(basis, *f.grid);
  return f.values * f.grid->weights.asDiagonal() * b;
}

SampledFunction synthesize(const Eigen::MatrixXd& coeffs, const BasisSet& basis,
                           GridPtr grid) {
  if (!grid) throw InvalidArgument("synthesize: missing grid");
  if (coeffs.cols() != static_cast<Eigen::Index>(basis.size()))
    throw InvalidArgument("synthesize: coefficient count does not match basis size");
  SampledFunction f;
  f.grid = std::move(grid);
  f.values = coeffs * evaluate_basis(basis, *f.grid).transpose();
  return f;
}

// ---------------------------------------------------------------------------
// Induced bases
// ---------------------------------------------------------------------------

namespace {

InducedBasis induce_impl(const BasisSet& group_basis,
                         std::function<GroupElement(const ManifoldPoint&)> sect,
                         GridPtr grid, std::string domain) {
  if (!group_basis.on_group())
    throw InvalidArgument("induce_basis: the source basis must live on a group");
  if (!grid || grid->domain != QuadratureGrid::Domain::Manifold)
    throw InvalidArgument("induce_basis: need a manifold grid");

  InducedBasis out;
  out.basis.domain = std::move(domain);
  out.basis.band_limit = group_basis.band_limit;
  out.basis.radial_order = group_basis.radial_order;
  for (const auto& v : group_basis.group_funcs)
    out.basis.funcs.push_back(
        [v, sect](const ManifoldPoint& x) { return v(sect(x)); });

  Eigen::MatrixXd b = evaluate_basis(out.basis, *grid);
  out.gram = b.transpose() * grid->weights.asDiagonal() * b;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(out.gram);
  out.min_singular_value = svd.singularValues().minCoeff();
  return out;
}

}  // namespace

InducedBasis induce_basis(const BasisSet& group_basis, const HomogeneousSpace& space,
                          GridPtr grid) {
  if (grid && grid->domain == QuadratureGrid::Domain::Manifold &&
      grid->space_kind != space.kind)
    throw InvalidArgument("induce_basis: grid does not match the space");
  auto sect = [space](const ManifoldPoint& x) { return section(x, space); };
  return induce_impl(group_basis, sect, std::move(grid), to_string(space.kind));
}

InducedBasis induce_basis(const BasisSet& group_basis,
                          const std::function<GroupElement(const ManifoldPoint&)>& sect,
                          GridPtr grid) {
  return induce_impl(group_basis, sect, std::move(grid), "custom");
}

// ---------------------------------------------------------------------------
// Deltas and pushforwards
// ---------------------------------------------------------------------------

SampledFunction delta_at(std::size_t index, GridPtr grid) {
  if (!grid) throw InvalidArgument("delta_at: missing grid");
  if (index >= grid->size()) throw InvalidArgument("delta_at: index out of range");
  SampledFunction f;
  f.grid = std::move(grid);
  f.values = Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(f.grid->size()));
  f.values(0, static_cast<Eigen::Index>(index)) =
      1.0 / f.grid->weights(static_cast<Eigen::Index>(index));
  return f;
}

BumpMask pushforward(const GroupElement& g, const BumpMask& w) {
  BumpMask out = w;
  if (w.on_group) {
    for (auto& a : out.group_anchors) a = compose(g, a);
  } else {
    if (g.kind != w.space.group_kind)
      throw InvalidArgument("pushforward: group element does not act on the mask domain");
    for (auto& a : out.anchors) a = act(g, a, w.space);
  }
  return out;
}

SampledFunction pushforward(const GroupElement& g, const SampledFunction& f,
                            const BasisSet& basis) {
  if (!f.grid || f.grid->domain != QuadratureGrid::Domain::Manifold)
    throw UnsupportedResample("pushforward: sampled function must live on a manifold grid");
  auto space = HomogeneousSpace::of(f.grid->space_kind);
  if (g.kind != space.group_kind)
    throw InvalidArgument("pushforward: group element does not act on the function domain");

  Eigen::MatrixXd coeffs = fit_coefficients(f, basis);

  // Span-membership check: the refit must reproduce f on its own grid.
  Eigen::MatrixXd b = evaluate_basis(basis, *f.grid);
  double resid = (coeffs * b.transpose() - f.values).cwiseAbs().maxCoeff();
  double scale = std::max(1.0, f.values.cwiseAbs().maxCoeff());
  if (resid > 1e-8 * scale)
    throw UnsupportedResample("pushforward: function is not band-limited in the given basis");

  GroupElement ginv = inverse(g);
  SampledFunction out;
  out.grid = f.grid;
  const auto n = static_cast<Eigen::Index>(f.grid->size());
  const auto nb = static_cast<Eigen::Index>(basis.size());
  std::vector<ManifoldPoint> moved;
  moved.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    moved.push_back(act(ginv, f.grid->points[i], space));
  if (basis.bulk) {
    out.values = coeffs * basis.bulk(moved).transpose();
  } else {
    out.values.resize(f.values.rows(), f.values.cols());
    Eigen::VectorXd basis_at(nb);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index a = 0; a < nb; ++a) basis_at(a) = basis.funcs[a](moved[i]);
      out.values.col(i) = coeffs * basis_at;
    }
  }
  return out;
}

BasisSet random_group_functions(GroupKind kind, int count, Rng& rng, double tau) {
  BasisSet basis;
  basis.domain = to_string(kind);
  // anchors spread across the group; narrow bumps keep the family well separated
  auto anchors = random_group_anchors(kind, count, rng, 3.0);
  for (int i = 0; i < count; ++i) {
    GroupElement a = anchors[i];
    basis.group_funcs.push_back([a, tau](const GroupElement& h) {
      double d = group_distance(a, h);
      return std::exp(-d * d / (2.0 * tau * tau));
    });
  }
  return basis;
}

}  // namespace corrnet
