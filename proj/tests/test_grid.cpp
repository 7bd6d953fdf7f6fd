#include <cmath>
#include <random>

#include "doctest.h"
#include "qlm/sphere_grid.hpp"

using namespace qlm;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("grid layout: sizes, ordering, node flattening") {
  const SphereGrid grid(15);
  CHECK(grid.bandlimit() == 15);
  CHECK(grid.n_lat() == 16);
  CHECK(grid.n_lon() == 32);
  CHECK(grid.n_nodes() == 512);
  CHECK(grid.n_coeff() == 256);

  // Colatitudes ascend and avoid the poles; longitudes are equispaced
  // starting at zero.
  for (int i = 0; i + 1 < grid.n_lat(); ++i) {
    CHECK(grid.theta(i) < grid.theta(i + 1));
  }
  CHECK(grid.theta(0) > 0.0);
  CHECK(grid.theta(grid.n_lat() - 1) < kPi);
  CHECK(grid.phi(0) == doctest::Approx(0.0));
  CHECK(grid.phi(1) == doctest::Approx(2.0 * kPi / grid.n_lon()));

  // Latitude-major flattening.
  const int k = grid.node_index(3, 7);
  CHECK(k == 3 * grid.n_lon() + 7);
  CHECK(grid.node_theta(k) == grid.theta(3));
  CHECK(grid.node_phi(k) == grid.phi(7));

  CHECK(SphereGrid::coeff_index(0, 0) == 0);
  CHECK(SphereGrid::coeff_index(2, -2) == 4);
  CHECK(SphereGrid::coeff_index(2, 2) == 8);
  CHECK(SphereGrid::coeff_index(5, 1) == 31);
}

TEST_CASE("quadrature weights integrate constants and harmonics exactly") {
  const SphereGrid grid(9);
  CHECK(grid.quad_weights().sum() ==
        doctest::Approx(4.0 * kPi).epsilon(1e-14));

  // The squared l = 3, m = 2 basis function integrates to one
  // (orthonormality), a degree-6 integrand the quadrature must nail.
  VecX c = VecX::Zero(grid.n_coeff());
  c(SphereGrid::coeff_index(3, 2)) = 1.0;
  const VecX vals = grid.synthesis(c);
  CHECK(grid.integrate(vals.cwiseProduct(vals)) ==
        doctest::Approx(1.0).epsilon(1e-14));
  // And to zero against a different harmonic.
  VecX c2 = VecX::Zero(grid.n_coeff());
  c2(SphereGrid::coeff_index(4, -1)) = 1.0;
  const VecX vals2 = grid.synthesis(c2);
  CHECK(std::abs(grid.integrate(vals.cwiseProduct(vals2))) < 1e-14);
}

TEST_CASE("analysis inverts synthesis to rounding for band-limited data") {
  const SphereGrid grid(12);
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  VecX c(grid.n_coeff());
  for (int q = 0; q < c.size(); ++q) {
    c(q) = u(gen);
  }
  const VecX round_trip = grid.analysis(grid.synthesis(c));
  CHECK((round_trip - c).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("synthesis derivatives match closed forms of low harmonics") {
  const SphereGrid grid(8);
  // B_{1,0} = sqrt(3 / 4 pi) cos(theta).
  const double a10 = std::sqrt(3.0 / (4.0 * kPi));
  VecX c = VecX::Zero(grid.n_coeff());
  c(SphereGrid::coeff_index(1, 0)) = 1.0;
  const VecX v = grid.synthesis(c);
  const VecX dth = grid.synthesis_d(c, 1, 0);
  const VecX dphph = grid.synthesis_d(c, 0, 2);
  for (int k = 0; k < grid.n_nodes(); ++k) {
    const double th = grid.node_theta(k);
    CHECK(v(k) == doctest::Approx(a10 * std::cos(th)).epsilon(1e-13));
    CHECK(dth(k) == doctest::Approx(-a10 * std::sin(th)).epsilon(1e-13));
    CHECK(std::abs(dphph(k)) < 1e-13);  // no phi dependence
  }

  // B_{2,-2} = Theta_{2,2}(theta) sin(2 phi) / sqrt(pi): two phi
  // derivatives multiply by -4.
  VecX c2 = VecX::Zero(grid.n_coeff());
  c2(SphereGrid::coeff_index(2, -2)) = 1.0;
  const VecX v2 = grid.synthesis(c2);
  const VecX v2_dpp = grid.synthesis_d(c2, 0, 2);
  CHECK((v2_dpp + 4.0 * v2).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("pointwise evaluation agrees with synthesis and closed forms") {
  const SphereGrid grid(6);
  VecX c = VecX::Zero(grid.n_coeff());
  c(SphereGrid::coeff_index(0, 0)) = 2.0;
  c(SphereGrid::coeff_index(1, 0)) = -0.7;

  // At grid nodes evaluation reproduces synthesis.
  const VecX v = grid.synthesis(c);
  const int k = grid.node_index(2, 5);
  CHECK(grid.evaluate(c, grid.node_theta(k), grid.node_phi(k)) ==
        doctest::Approx(v(k)).epsilon(1e-14));

  // Off-grid, against the closed form.
  const double th = 0.9137;
  const double ph = 2.5;
  const double expected = 2.0 / std::sqrt(4.0 * kPi) -
                          0.7 * std::sqrt(3.0 / (4.0 * kPi)) * std::cos(th);
  CHECK(grid.evaluate(c, th, ph) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(grid.evaluate(c, th, ph, 1, 0) ==
        doctest::Approx(0.7 * std::sqrt(3.0 / (4.0 * kPi)) * std::sin(th))
            .epsilon(1e-13));
}

TEST_CASE("basis tables cover sub-bandlimits with consistent derivatives") {
  const SphereGrid grid(10);
  const auto& tables = grid.basis_tables(4);
  CHECK(tables.val.rows() == grid.n_nodes());
  CHECK(tables.val.cols() == 25);

  // Column q of `val` samples basis function q; check against synthesis
  // on the full grid, and `dth` against the derivative synthesis.
  VecX c = VecX::Zero(grid.n_coeff());
  const int q = SphereGrid::coeff_index(3, -1);
  c(q) = 1.0;
  CHECK((tables.val.col(q) - grid.synthesis(c)).cwiseAbs().maxCoeff() <
        1e-13);
  CHECK((tables.dth.col(q) - grid.synthesis_d(c, 1, 0))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  CHECK((tables.dphph.col(q) - grid.synthesis_d(c, 0, 2))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
}
