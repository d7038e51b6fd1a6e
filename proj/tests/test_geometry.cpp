#include "corrnet/geometry.hpp"

#include <cmath>

#include "corrnet/rng.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace corrnet;

namespace {
constexpr double kPi = 3.14159265358979323846;

ManifoldPoint random_point(const HomogeneousSpace& space, Rng& rng) {
  switch (space.kind) {
    case SpaceKind::Sphere2:
      return ManifoldPoint::sphere(random_unit_vector(rng));
    case SpaceKind::PositiveHalfLine:
      return ManifoldPoint::half_line(std::exp(rng.normal()));
    case SpaceKind::ProductS2RPlus:
      return ManifoldPoint::product(random_unit_vector(rng), std::exp(rng.normal()));
    case SpaceKind::SPD3:
      return ManifoldPoint::spd3(sym_exp(random_symmetric(rng, 0.7)));
  }
  throw std::logic_error("bad kind");
}

GroupElement random_element(GroupKind kind, Rng& rng) {
  switch (kind) {
    case GroupKind::SO3:
      return GroupElement::from_rotation(random_rotation(rng));
    case GroupKind::PositiveScale:
      return GroupElement::from_scale(std::exp(rng.normal()));
    case GroupKind::SO3xScale:
      return GroupElement::rotation_scale(random_rotation(rng), std::exp(rng.normal()));
    case GroupKind::GL3: {
      Eigen::Matrix3d z;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) z(i, j) = 0.3 * rng.normal();
      return GroupElement::from_gl(gl3_exp(z));
    }
  }
  throw std::logic_error("bad kind");
}
}  // namespace

TEST_CASE("act: identity and axis rotations") {
  auto s2 = HomogeneousSpace::sphere2();
  auto north = ManifoldPoint::sphere(Eigen::Vector3d(0, 0, 1));
  auto moved = act(GroupElement::identity(GroupKind::SO3), north, s2);
  CHECK((moved.coords - north.coords).norm() == doctest::Approx(0.0));

  auto rz = GroupElement::from_rotation(rotation_z(kPi / 2));
  auto ex = ManifoldPoint::sphere(Eigen::Vector3d(1, 0, 0));
  auto ey = act(rz, ex, s2);
  CHECK((ey.coords - Eigen::Vector3d(0, 1, 0)).norm() < 1e-14);
}

TEST_CASE("act: GL(3) on the identity SPD matrix gives g g^T, SPD by eigenvalues") {
  auto p3 = HomogeneousSpace::spd3();
  Rng rng("act-gl3", 11);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::Matrix3d g;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) g(i, j) = rng.normal();
    if (std::abs(g.determinant()) < 1e-3) continue;
    auto out = act(GroupElement::from_gl(g), p3.origin, p3);
    Eigen::Matrix3d expected = g * g.transpose();
    CHECK((out.spd() - expected).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(out.spd());
    CHECK(es.eigenvalues().minCoeff() > 0.0);
  }
}

TEST_CASE("act: scale acts through absolute value") {
  auto hl = HomogeneousSpace::positive_half_line();
  auto r = ManifoldPoint::half_line(2.0);
  auto out = act(GroupElement::from_scale(-3.0), r, hl);
  CHECK(out.coords(0) == doctest::Approx(6.0));
}

TEST_CASE("compose/inverse: group laws") {
  Rng rng("group-laws", 3);
  for (auto kind : {GroupKind::SO3, GroupKind::PositiveScale, GroupKind::SO3xScale,
                    GroupKind::GL3}) {
    auto g = random_element(kind, rng);
    auto e = GroupElement::identity(kind);

    auto ge = compose(g, e);
    CHECK((ge.rotation - g.rotation).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(ge.scale == doctest::Approx(g.scale));
    CHECK((ge.gl - g.gl).cwiseAbs().maxCoeff() < 1e-15);

    auto gi = compose(g, inverse(g));
    CHECK((gi.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(gi.scale == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((gi.gl - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);

    // associativity
    auto g2 = random_element(kind, rng);
    auto g3 = random_element(kind, rng);
    auto lhs = compose(compose(g, g2), g3);
    auto rhs = compose(g, compose(g2, g3));
    CHECK((lhs.rotation - rhs.rotation).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(lhs.scale == doctest::Approx(rhs.scale).epsilon(1e-12));
    CHECK((lhs.gl - rhs.gl).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("compose: Rz(a) Rz(b) = Rz(a+b) against the direct product oracle") {
  auto a = GroupElement::from_rotation(rotation_z(0.4));
  auto b = GroupElement::from_rotation(rotation_z(1.1));
  auto ab = compose(a, b);
  CHECK((ab.rotation - oracles::rot_z(1.5)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("inverse: random gl against Gaussian elimination oracle") {
  Rng rng("inverse-gl", 5);
  for (int rep = 0; rep < 20; ++rep) {
    auto g = random_element(GroupKind::GL3, rng);
    auto inv = inverse(g);
    CHECK((inv.gl - oracles::gauss_inverse(g.gl)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("distance: basic identities and the diag(e^2,1,1) closed form") {
  auto s2 = HomogeneousSpace::sphere2();
  auto north = ManifoldPoint::sphere(Eigen::Vector3d(0, 0, 1));
  auto south = ManifoldPoint::sphere(Eigen::Vector3d(0, 0, -1));
  CHECK(distance(north, north, s2) == doctest::Approx(0.0));
  CHECK(distance(north, south, s2) == doctest::Approx(kPi));

  auto p3 = HomogeneousSpace::spd3();
  Eigen::Matrix3d d = Eigen::Vector3d(std::exp(2.0), 1.0, 1.0).asDiagonal();
  CHECK(distance(p3.origin, ManifoldPoint::spd3(d), p3) == doctest::Approx(2.0).epsilon(1e-12));

  auto hl = HomogeneousSpace::positive_half_line();
  CHECK(distance(ManifoldPoint::half_line(2.0), ManifoldPoint::half_line(8.0), hl) ==
        doctest::Approx(std::log(4.0)));
}

TEST_CASE("isometry property: d(x,z) = d(g.x, g.z) on every space kind") {
  Rng rng("isometry", 17);
  for (auto kind : {SpaceKind::Sphere2, SpaceKind::PositiveHalfLine,
                    SpaceKind::ProductS2RPlus, SpaceKind::SPD3}) {
    auto space = HomogeneousSpace::of(kind);
    double worst = 0.0;
    for (int rep = 0; rep < 1000; ++rep) {
      auto x = random_point(space, rng);
      auto z = random_point(space, rng);
      auto g = random_element(space.group_kind, rng);
      double before = distance(x, z, space);
      double after = distance(act(g, x, space), act(g, z, space), space);
      worst = std::max(worst, std::abs(before - after));
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("transitivity: constructed g maps x to y within 1e-9") {
  Rng rng("transitivity", 23);
  for (auto kind : {SpaceKind::Sphere2, SpaceKind::PositiveHalfLine,
                    SpaceKind::ProductS2RPlus, SpaceKind::SPD3}) {
    auto space = HomogeneousSpace::of(kind);
    for (int rep = 0; rep < 100; ++rep) {
      auto x = random_point(space, rng);
      auto y = random_point(space, rng);
      auto g = transitive_element(x, y, space);
      CHECK(distance(act(g, x, space), y, space) < 1e-9);
    }
  }
}

TEST_CASE("group_exp: so(3) coords (0,0,theta) matches the Rodrigues oracle") {
  Eigen::VectorXd v(3);
  v << 0, 0, 0.7;
  auto g = group_exp(v, GroupKind::SO3);
  CHECK((g.rotation - oracles::rodrigues(Eigen::Vector3d(0, 0, 0.7))).cwiseAbs().maxCoeff() <
        1e-14);
  CHECK((g.rotation - oracles::rot_z(0.7)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("group_log: identity maps to zero for all kinds") {
  for (auto kind : {GroupKind::SO3, GroupKind::PositiveScale, GroupKind::SO3xScale,
                    GroupKind::GL3}) {
    auto v = group_log(GroupElement::identity(kind));
    CHECK(v.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    CHECK(v.size() == algebra_dim(kind));
  }
}

TEST_CASE("gl(3) exp/log roundtrip on 100 near-identity elements vs series oracle") {
  Rng rng("gl3-roundtrip", 29);
  double worst_rt = 0.0, worst_exp = 0.0, worst_log = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    Eigen::Matrix3d z;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) z(i, j) = 0.2 * rng.normal();
    worst_exp = std::max(worst_exp, (gl3_exp(z) - oracles::series_exp(z)).cwiseAbs().maxCoeff());
    auto g = GroupElement::from_gl(gl3_exp(z));
    Eigen::VectorXd v = group_log(g);
    auto back = group_exp(v, GroupKind::GL3);
    worst_rt = std::max(worst_rt, (back.gl - g.gl).cwiseAbs().maxCoeff());
    worst_log = std::max(worst_log, (gl3_log(g.gl) - oracles::series_log(g.gl)).cwiseAbs().maxCoeff());
  }
  CHECK(worst_exp < 1e-12);
  CHECK(worst_rt < 1e-9);
  CHECK(worst_log < 1e-9);
}

TEST_CASE("gl(3) log rejects arguments outside the principal branch") {
  Eigen::Matrix3d neg = Eigen::Vector3d(-1.0, -1.0, 1.0).asDiagonal();
  CHECK_THROWS_AS(gl3_log(neg), LogBranchError);
  Eigen::Matrix3d refl = Eigen::Vector3d(-1.0, 1.0, 1.0).asDiagonal();
  CHECK_THROWS_AS(gl3_log(refl), LogBranchError);  // det < 0
  CHECK_THROWS_AS(group_log(GroupElement::from_scale(-2.0)), LogBranchError);
}

TEST_CASE("so(3) exp/log roundtrip including the angle-pi branch") {
  Rng rng("so3-roundtrip", 31);
  for (int rep = 0; rep < 200; ++rep) {
    Eigen::Vector3d w = rng.uniform(0.0, kPi - 1e-3) * random_unit_vector(rng);
    Eigen::Matrix3d r = so3_exp(w);
    CHECK((so3_exp(so3_log(r)) - r).cwiseAbs().maxCoeff() < 1e-10);
  }
  // exactly pi about a coordinate axis
  Eigen::Matrix3d rpi = so3_exp(Eigen::Vector3d(0, 0, kPi));
  Eigen::Vector3d l = so3_log(rpi);
  CHECK(l.norm() == doctest::Approx(kPi).epsilon(1e-9));
  CHECK((so3_exp(l) - rpi).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("build_grid: Sphere2 point count and surface area") {
  auto grid = build_grid(HomogeneousSpace::sphere2(), {8});
  CHECK(grid.size() == 128);
  CHECK(grid.weights.sum() == doctest::Approx(4.0 * kPi).epsilon(1e-12));
  CHECK(grid.weights.minCoeff() > 0.0);
}

TEST_CASE("build_grid: half line integrates exp(-r) exactly") {
  auto grid = build_grid(HomogeneousSpace::positive_half_line(), {6});
  double integral = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i)
    integral += grid.weights(static_cast<int>(i)) * std::exp(-grid.points[i].coords(0));
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("build_grid: product tensor structure and SPD3 Monte Carlo") {
  auto prod = build_grid(HomogeneousSpace::product_s2_rplus(), {4, 3});
  CHECK(prod.size() == 4 * 8 * 3);

  GridOptions opt;
  opt.seed = 5;
  auto mc = build_grid(HomogeneousSpace::spd3(), {50}, opt);
  CHECK(mc.size() == 50);
  CHECK(mc.weights.sum() == doctest::Approx(1.0));
  auto spd_space = HomogeneousSpace::spd3();
  for (const auto& p : mc.points) CHECK(spd_space.contains(p));
  // determinism
  auto mc2 = build_grid(HomogeneousSpace::spd3(), {50}, opt);
  CHECK((mc.points[17].coords - mc2.points[17].coords).norm() == 0.0);
}

TEST_CASE("integral invariance on Sphere2 for band-limited integrands") {
  const int order = 8;
  auto grid = build_grid(HomogeneousSpace::sphere2(), {order});
  Rng rng("integral-invariance", 41);
  // f = polynomial of degree <= 7 in the coordinates, rotated vs not.
  for (int rep = 0; rep < 5; ++rep) {
    Eigen::Matrix3d r = random_rotation(rng);
    Eigen::Vector3d a = random_unit_vector(rng);
    auto f = [&](const Eigen::Vector3d& x) {
      double t = a.dot(x);
      return 0.3 + t + 0.5 * t * t * t + 0.1 * std::pow(t, 7);
    };
    double plain = 0.0, moved = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      plain += grid.weights(static_cast<int>(i)) * f(grid.points[i].sphere_part());
      moved += grid.weights(static_cast<int>(i)) * f(r * grid.points[i].sphere_part());
    }
    CHECK(std::abs(plain - moved) < 1e-8);
  }
}

TEST_CASE("haar_grid: SO(3) normalization and near-invariance for low-degree functions") {
  auto grid = haar_grid(GroupKind::SO3, {6, 6, 6});
  CHECK(grid.size() == 216);
  CHECK(grid.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));

  // band-limited f on SO(3): matrix coefficients up to degree 2
  Rng rng("haar-invariance", 43);
  Eigen::Matrix3d g0 = random_rotation(rng);
  Eigen::Vector3d u = random_unit_vector(rng), v = random_unit_vector(rng);
  auto f = [&](const Eigen::Matrix3d& r) {
    double t = u.dot(r * v);
    return 1.0 + r(0, 0) + 0.5 * t * t;
  };
  double plain = 0.0, translated = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    plain += grid.weights(static_cast<int>(i)) * f(grid.elements[i].rotation);
    translated += grid.weights(static_cast<int>(i)) * f(g0 * grid.elements[i].rotation);
  }
  CHECK(std::abs(plain - translated) < 1e-2);
}

TEST_CASE("haar_grid: scale nodes 2^-2 .. 2^2 and positive weights") {
  auto grid = haar_grid(GroupKind::PositiveScale, {5});
  REQUIRE(grid.size() == 5);
  CHECK(grid.elements.front().scale == doctest::Approx(0.25));
  CHECK(grid.elements.back().scale == doctest::Approx(4.0));
  CHECK(grid.elements[2].scale == doctest::Approx(1.0));
  CHECK(grid.weights.minCoeff() > 0.0);
}

TEST_CASE("haar_grid: product group and GL(3) seeded set") {
  auto prod = haar_grid(GroupKind::SO3xScale, {3, 3, 3, 3});
  CHECK(prod.size() == 27 * 3);
  GridOptions opt;
  opt.seed = 9;
  opt.gl_epsilon = 0.3;
  auto gl = haar_grid(GroupKind::GL3, {16}, opt);
  CHECK(gl.size() == 16);
  for (const auto& e : gl.elements) CHECK(std::abs(e.gl.determinant()) > 1e-12);
}

TEST_CASE("section: right inverse of the projection on every kind") {
  Rng rng("section", 47);
  for (auto kind : {SpaceKind::Sphere2, SpaceKind::PositiveHalfLine,
                    SpaceKind::ProductS2RPlus, SpaceKind::SPD3}) {
    auto space = HomogeneousSpace::of(kind);
    auto at_origin = section(space.origin, space);
    auto back = act(at_origin, space.origin, space);
    CHECK(distance(back, space.origin, space) < 1e-10);
    for (int rep = 0; rep < 50; ++rep) {
      auto x = random_point(space, rng);
      CHECK(distance(act(section(x, space), space.origin, space), x, space) < 1e-10);
    }
  }
  // section at the origin is the identity rotation by the pole convention
  auto s2 = HomogeneousSpace::sphere2();
  auto g = section(s2.origin, s2);
  CHECK((g.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("section: south pole maps north to south, SPD3 uses the symmetric root") {
  auto s2 = HomogeneousSpace::sphere2();
  auto south = ManifoldPoint::sphere(Eigen::Vector3d(0, 0, -1));
  auto g = section(south, s2);
  auto moved = act(g, s2.origin, s2);
  CHECK((moved.coords - south.coords).norm() < 1e-10);

  Rng rng("section-spd", 51);
  auto p3 = HomogeneousSpace::spd3();
  auto x = random_point(p3, rng);
  auto s = section(x, p3);
  CHECK((s.gl - s.gl.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(x.spd());
  Eigen::Matrix3d root = es.eigenvectors() *
                         es.eigenvalues().cwiseSqrt().asDiagonal() *
                         es.eigenvectors().transpose();
  CHECK((s.gl - root).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("section property holds on grid points") {
  auto space = HomogeneousSpace::product_s2_rplus();
  auto grid = build_grid(space, {4, 3});
  for (const auto& x : grid.points)
    CHECK(distance(act(section(x, space), space.origin, space), x, space) < 1e-10);
}

TEST_CASE("errors: kind mismatches and singular elements") {
  auto s2 = HomogeneousSpace::sphere2();
  CHECK_THROWS_AS(act(GroupElement::from_scale(2.0), s2.origin, s2), InvalidArgument);
  CHECK_THROWS_AS(compose(GroupElement::identity(GroupKind::SO3),
                          GroupElement::identity(GroupKind::GL3)),
                  InvalidArgument);
  CHECK_THROWS_AS(inverse(GroupElement::from_gl(Eigen::Matrix3d::Zero())),
                  SingularGroupElement);
  CHECK_THROWS_AS(build_grid(s2, {1}), InvalidArgument);
  auto bad = ManifoldPoint::sphere(Eigen::Vector3d(0, 0, 2));
  CHECK_THROWS_AS(distance(bad, s2.origin, s2), InvalidArgument);
}

TEST_CASE("gauss rules: polynomial exactness") {
  Eigen::VectorXd x, w;
  gauss_legendre(6, x, w);
  double s = 0.0;
  for (int i = 0; i < 6; ++i) s += w(i) * std::pow(x(i), 10);
  CHECK(s == doctest::Approx(2.0 / 11.0).epsilon(1e-12));

  gauss_laguerre(5, x, w);
  s = 0.0;  // integral of x^3 e^-x = 3! = 6
  for (int i = 0; i < 5; ++i) s += w(i) * std::pow(x(i), 3);
  CHECK(s == doctest::Approx(6.0).epsilon(1e-12));

  gauss_hermite(5, x, w);
  s = 0.0;  // integral of x^4 e^-x^2 = 3 sqrt(pi) / 4
  for (int i = 0; i < 5; ++i) s += w(i) * std::pow(x(i), 4);
  CHECK(s == doctest::Approx(0.75 * std::sqrt(kPi)).epsilon(1e-12));
}

TEST_CASE("scale-invariant radial grid integrates dr/r test functions") {
  GridOptions opt;
  opt.radial_measure = RadialMeasure::ScaleInvariant;
  auto grid = build_grid(HomogeneousSpace::positive_half_line(), {16}, opt);
  // integral of exp(-(log r)^2) dr/r = sqrt(pi)
  double s = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double t = std::log(grid.points[i].coords(0));
    s += grid.weights(static_cast<int>(i)) * std::exp(-t * t);
  }
  CHECK(s == doctest::Approx(std::sqrt(kPi)).epsilon(1e-12));
}
