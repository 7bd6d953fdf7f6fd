#include <cmath>
#include <random>

#include "doctest.h"
#include "qlm/ambient.hpp"

using namespace qlm;

TEST_CASE("static equation and scalar curvature vanish identically") {
  const AmbientGeometry amb(1.0);
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const AmbientPoint p{2.0 + 0.05 + 18.0 * u(gen),
                         std::acos(1.0 - 2.0 * u(gen)) * 0.98 + 0.01,
                         2.0 * M_PI * u(gen)};
    CHECK(amb.static_residual(p).cwiseAbs().maxCoeff() < 1e-12);
    // Vanishing scalar curvature: trace of the mixed Ricci tensor.
    const Mat3 mixed = amb.metric_inverse(p) * amb.ricci(p);
    CHECK(std::abs(mixed.trace()) < 1e-13);
  }
}

TEST_CASE("cartesian metric acts as 1/Vbar^2 radially, identity tangentially") {
  const AmbientGeometry amb(0.7);
  const Vec3 x = 4.1 * unit_direction(1.3, 2.2);
  const double r = x.norm();
  const Vec3 xhat = x / r;
  const Mat3 g = amb.metric_cartesian(x);

  const double vbar2 = 1.0 - 2.0 * amb.mass() / r;
  CHECK((g * xhat - xhat / vbar2).cwiseAbs().maxCoeff() < 1e-14);
  const Vec3 t = xhat.cross(Vec3::UnitZ()).normalized();
  CHECK((g * t - t).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((amb.metric_inverse_cartesian(x) * g - Mat3::Identity())
            .cwiseAbs()
            .maxCoeff() < 1e-14);
}

TEST_CASE("cartesian Ricci eigenstructure and norm") {
  const AmbientGeometry amb(1.0);
  const double r = 5.0;
  const Vec3 x = r * unit_direction(0.8, 0.3);
  const Vec3 xhat = x / r;
  const Mat3 ric = amb.ricci_cartesian(x);

  // Radial eigenvalue -2m/(r^3 Vbar^2), tangential m/r^3.
  const double vbar2 = 1.0 - 2.0 / r;
  CHECK((ric * xhat - (-2.0 / (r * r * r * vbar2)) * xhat)
            .cwiseAbs()
            .maxCoeff() < 1e-15);
  const Vec3 t = xhat.cross(Vec3::UnitX()).normalized();
  CHECK((ric * t - (1.0 / (r * r * r)) * t).cwiseAbs().maxCoeff() < 1e-15);

  // Mixed-index eigenvalues (-2m/r^3, m/r^3, m/r^3) give
  // |Ric|^2 = 6 m^2 / r^6.
  CHECK(amb.ricci_norm_sq(r) ==
        doctest::Approx(6.0 / std::pow(r, 6)).epsilon(1e-14));
  const Mat3 mixed = amb.metric_inverse_cartesian(x) * ric;
  CHECK((mixed * mixed).trace() ==
        doctest::Approx(amb.ricci_norm_sq(r)).epsilon(1e-13));
}

TEST_CASE("assembled Ricci agrees with the closed form to rounding") {
  const AmbientGeometry amb(1.4);
  // Includes a point close to the horizon (r = 2m + 0.18 m), where a
  // finite-difference assembly would lose digits but the exact one must
  // not.
  for (const double r : {3.1, 5.7, 20.0, 2.0 * 1.4 + 0.25}) {
    const Vec3 x = r * unit_direction(1.05, 4.4);
    const Mat3 diff = ricci_assembled(amb, x) - amb.ricci_cartesian(x);
    CHECK(diff.cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("finite-difference Ricci assembly converges at second order") {
  const AmbientGeometry amb(1.0);
  const Vec3 x = 5.0 * unit_direction(1.1, 0.7);
  const Mat3 exact = amb.ricci_cartesian(x);
  const double e1 =
      (ricci_assembled_fd(amb, x, 1e-2) - exact).cwiseAbs().maxCoeff();
  const double e2 =
      (ricci_assembled_fd(amb, x, 5e-3) - exact).cwiseAbs().maxCoeff();
  CHECK(e1 / e2 > 3.5);  // measured 4.000
  CHECK(e1 / e2 < 4.5);
  CHECK(e2 < 1e-6);
}

TEST_CASE("flat limit: identity metric, zero connection and curvature") {
  const AmbientGeometry flat(0.0);
  const Vec3 x(1.0, -2.0, 0.5);
  CHECK((flat.metric_cartesian(x) - Mat3::Identity()).cwiseAbs().maxCoeff() <
        1e-15);
  const Christoffel3 gamma = flat.christoffel_cartesian(x);
  for (const Mat3& g : gamma) {
    CHECK(g.cwiseAbs().maxCoeff() < 1e-15);
  }
  CHECK(flat.ricci_cartesian(x).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(flat.static_potential(0.3) == 1.0);
}

TEST_CASE("potential derivatives are consistent with finite differences") {
  const AmbientGeometry amb(1.0);
  const double r = 3.7;
  const double h = 1e-4;
  const double fd1 =
      (amb.static_potential(r + h) - amb.static_potential(r - h)) / (2.0 * h);
  CHECK(amb.static_potential_dr(r) == doctest::Approx(fd1).epsilon(1e-8));
  const double fd2 = (amb.static_potential(r + h) -
                      2.0 * amb.static_potential(r) +
                      amb.static_potential(r - h)) /
                     (h * h);
  CHECK(amb.static_potential_d2r(r) == doctest::Approx(fd2).epsilon(1e-5));
}

TEST_CASE("domain guards: horizon and polar axis") {
  const AmbientGeometry amb(1.0);
  CHECK_THROWS_AS(amb.require_exterior(2.0), HorizonViolation);
  CHECK_THROWS_AS(amb.require_exterior(1.2), HorizonViolation);
  CHECK_NOTHROW(amb.require_exterior(2.0 + 1e-9));
  CHECK_THROWS_AS(AmbientGeometry::require_off_axis(0.0), PoleSingularity);
  CHECK_THROWS_AS(AmbientGeometry::require_off_axis(M_PI), PoleSingularity);
  CHECK_NOTHROW(AmbientGeometry::require_off_axis(0.5));
}

TEST_CASE("rotations preserve radius and compose orthogonally") {
  const Rotation rot = Rotation::about_axis(Vec3(1.0, 2.0, -0.5), 0.9);
  CHECK((rot.matrix() * rot.matrix().transpose() - Mat3::Identity())
            .cwiseAbs()
            .maxCoeff() < 1e-15);
  CHECK((rot.inverse().matrix() - rot.matrix().transpose())
            .cwiseAbs()
            .maxCoeff() < 1e-14);

  const AmbientPoint p{4.2, 1.1, 0.6};
  const AmbientPoint q = apply_rotation(rot, p);
  CHECK(q.r == doctest::Approx(4.2).epsilon(1e-14));
  CHECK((cartesian_from_point(q) - rot.matrix() * cartesian_from_point(p))
            .cwiseAbs()
            .maxCoeff() < 1e-13);

  // Round trip through the chart conversions.
  const Vec3 x = cartesian_from_point(p);
  const AmbientPoint back = point_from_cartesian(x);
  CHECK(back.r == doctest::Approx(p.r).epsilon(1e-14));
  CHECK(back.theta == doctest::Approx(p.theta).epsilon(1e-13));
  CHECK(back.phi == doctest::Approx(p.phi).epsilon(1e-13));
}
