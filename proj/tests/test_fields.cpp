#include <cmath>

#include "doctest.h"
#include "qlm/fields.hpp"

using namespace qlm;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("scalar field construction, extrema, and coefficient caching") {
  const SphereGrid grid(7);
  const ScalarField one = ScalarField::constant(grid, 1.5);
  CHECK(one.min_value() == 1.5);
  CHECK(one.max_value() == 1.5);
  CHECK(one.sup_norm() == 1.5);
  // A constant is pure l = 0: coefficient 1.5 * sqrt(4 pi).
  CHECK(one.coeffs()(0) ==
        doctest::Approx(1.5 * std::sqrt(4.0 * kPi)).epsilon(1e-14));
  CHECK(one.coeffs().tail(grid.n_coeff() - 1).cwiseAbs().maxCoeff() < 1e-14);

  VecX c = VecX::Zero(grid.n_coeff());
  c(SphereGrid::coeff_index(2, 1)) = -0.8;
  const ScalarField f = ScalarField::from_coeffs(grid, c);
  CHECK((f.coeffs() - c).cwiseAbs().maxCoeff() < 1e-13);
  CHECK(f.min_value() < 0.0);
  CHECK(f.max_value() > 0.0);
}

TEST_CASE("field derivatives match closed forms through third order") {
  const SphereGrid grid(9);
  // f = sin^3(theta) cos(3 phi) is proportional to the l = 3, m = 3 basis
  // function, so it is band-limited and every derivative is exact.
  VecX vals(grid.n_nodes());
  for (int k = 0; k < grid.n_nodes(); ++k) {
    const double th = grid.node_theta(k);
    const double ph = grid.node_phi(k);
    vals(k) = std::pow(std::sin(th), 3) * std::cos(3.0 * ph);
  }
  const ScalarField f(grid, vals);

  const VecX dth = f.derivative(1, 0);
  const VecX dph = f.derivative(0, 1);
  const VecX dthph = f.derivative(1, 1);
  const VecX dphphph = f.derivative(0, 3);
  for (int k = 0; k < grid.n_nodes(); ++k) {
    const double th = grid.node_theta(k);
    const double ph = grid.node_phi(k);
    const double s = std::sin(th);
    CHECK(dth(k) == doctest::Approx(3.0 * s * s * std::cos(th) *
                                    std::cos(3.0 * ph))
                        .epsilon(1e-12));
    CHECK(dph(k) ==
          doctest::Approx(-3.0 * s * s * s * std::sin(3.0 * ph))
              .epsilon(1e-12));
    CHECK(dthph(k) == doctest::Approx(-9.0 * s * s * std::cos(th) *
                                      std::sin(3.0 * ph))
                          .epsilon(1e-12));
    CHECK(dphphph(k) ==
          doctest::Approx(27.0 * s * s * s * std::sin(3.0 * ph))
              .epsilon(1e-12));
  }

  // Off-grid evaluation of the same closed form.
  CHECK(f.evaluate(1.2, 0.4) ==
        doctest::Approx(std::pow(std::sin(1.2), 3) * std::cos(1.2))
            .epsilon(1e-12));
}

TEST_CASE("symmetric tensor fields: components, norms, arithmetic") {
  const SphereGrid grid(5);
  const ScalarField a = ScalarField::constant(grid, 2.0);
  const ScalarField b = ScalarField::constant(grid, -3.0);
  const ScalarField z = ScalarField::constant(grid, 0.5);
  const SymTensorField s(a, z, b);
  CHECK(s.aa().value(0) == 2.0);
  CHECK(s.ab().value(0) == 0.5);
  CHECK(s.bb().value(0) == -3.0);
  CHECK(s.sup_norm() == 3.0);

  const SymTensorField sum = s + s;
  CHECK(sum.bb().value(0) == -6.0);
  const SymTensorField diff = sum - s;
  CHECK(diff.sup_norm() == doctest::Approx(3.0));
  const SymTensorField scaled = s * (-2.0);
  CHECK(scaled.aa().value(0) == -4.0);
  CHECK(scaled.sup_norm() == 6.0);
}
