#include <cmath>

#include "doctest.h"
#include "qlm/isometry.hpp"
#include "qlm/surface.hpp"

using namespace qlm;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Round sphere of the given radius with a relative quadrupole ripple of
// size `amp` (same convention as the CLI's "perturbed" preset).
SurfaceGeometry make_surface(const AmbientGeometry& amb,
                             const SphereGrid& grid, double radius,
                             double amp) {
  VecX c = VecX::Zero(grid.n_coeff());
  c(0) = radius * std::sqrt(4.0 * kPi);
  c(SphereGrid::coeff_index(2, 2)) += radius * amp / std::sqrt(2.0);
  return SurfaceGeometry(amb, grid, ScalarField::from_coeffs(grid, c));
}

// Shared fixtures: solver factorizations dominate this file's runtime, so
// each is built once.
const SphereGrid& grid15() {
  static const SphereGrid g(15);
  return g;
}

const SurfaceGeometry& perturbed15() {
  static const AmbientGeometry amb(1.0);
  static const SurfaceGeometry s = make_surface(amb, grid15(), 3.0, 0.05);
  return s;
}

const VariationSolver& perturbed_solver15() {
  static const VariationSolver solver(perturbed15());
  return solver;
}

}  // namespace

TEST_CASE("rotation data is metric-silent on round and perturbed surfaces") {
  const AmbientGeometry amb(1.0);
  for (const double amp : {0.0, 0.05}) {
    const SurfaceGeometry s = make_surface(amb, grid15(), 3.0, amp);
    for (const Vec3& axis :
         {Vec3(0.0, 0.0, 1.0), Vec3(1.0, 0.0, 0.0), Vec3(0.5, -1.0, 0.7)}) {
      const auto [g, p] = rotation_data(s, axis);
      CHECK(metric_variation(s, g, p).sup_norm() < 1e-8);
    }
  }
}

TEST_CASE("translation data is metric-silent only in the flat ambient") {
  const Vec3 dir(0.0, 0.0, 1.0);

  const AmbientGeometry flat(0.0);
  const SurfaceGeometry sf = make_surface(flat, grid15(), 3.0, 0.05);
  const auto [gf, pf] = translation_data(sf, dir);
  CHECK(metric_variation(sf, gf, pf).sup_norm() < 1e-8);

  const AmbientGeometry curved(1.0);
  const SurfaceGeometry sc = make_surface(curved, grid15(), 3.0, 0.05);
  const auto [gc, pc] = translation_data(sc, dir);
  CHECK(metric_variation(sc, gc, pc).sup_norm() > 1e-4);
}

TEST_CASE("metric variation matches finite differences at second order") {
  const SurfaceGeometry& s = perturbed15();
  const SphereGrid& grid = s.grid();

  // Smooth low-degree deformation data.
  VecX gc = VecX::Zero(grid.n_coeff());
  gc(SphereGrid::coeff_index(2, 0)) = 0.3;
  gc(SphereGrid::coeff_index(1, 1)) = -0.2;
  const ScalarField g = ScalarField::from_coeffs(grid, gc);
  VecX fc = VecX::Zero(grid.n_coeff());
  VecX uc = VecX::Zero(grid.n_coeff());
  fc(SphereGrid::coeff_index(2, -1)) = 0.25;
  uc(SphereGrid::coeff_index(2, 1)) = 0.15;
  const TangentField p = s.realize_tangent(fc, uc);

  const SymTensorField predicted = metric_variation(s, g, p);

  // Displace along G nu + P and difference the induced metrics; the
  // centered quotient approaches the linearization at O(step^2).
  const auto fd_at = [&](double step) {
    const VecX up_th = s.ginv_tt().cwiseProduct(p.cov_theta()) +
                       s.ginv_tp().cwiseProduct(p.cov_phi());
    const VecX up_ph = s.ginv_tp().cwiseProduct(p.cov_theta()) +
                       s.ginv_pp().cwiseProduct(p.cov_phi());
    MatX w(grid.n_nodes(), 3);
    for (int k = 0; k < grid.n_nodes(); ++k) {
      w.row(k) = g.values()(k) * s.normal().row(k) +
                 up_th(k) * s.tangent_theta().row(k) +
                 up_ph(k) * s.tangent_phi().row(k);
    }
    const SurfaceGeometry plus = s.displaced(step * w);
    const SurfaceGeometry minus = s.displaced(-step * w);
    return (plus.metric() - minus.metric()) * (1.0 / (2.0 * step));
  };

  const double e1 = (fd_at(1e-3) - predicted).sup_norm();
  const double e2 = (fd_at(5e-4) - predicted).sup_norm();
  CHECK(e1 / e2 > 3.5);
  CHECK(e1 / e2 < 4.5);
  CHECK(e2 < 1e-8);
}

TEST_CASE("solver kernel: six on a round sphere, three once resolved") {
  const AmbientGeometry amb(1.0);

  // Exactly round: the three rotations plus the umbilic bending family
  // (degree-one data, exact at any bandlimit).
  const VariationSolver round_solver(
      VariationSolver(make_surface(amb, grid15(), 3.0, 0.0)));
  CHECK(round_solver.kernel_dim() == 6);

  // Perturbed at this bandlimit: the bendings are no longer exact and
  // only the rotations are detected.
  CHECK(perturbed_solver15().kernel_dim() == 3);

  // Flat ambient: the translations are Killing, so six on any shape.
  const AmbientGeometry flat(0.0);
  const VariationSolver flat_solver(
      VariationSolver(make_surface(flat, grid15(), 3.0, 0.05)));
  CHECK(flat_solver.kernel_dim() == 6);
}

TEST_CASE("congruent pairs: the matching solve recovers G = F, P = 0") {
  const SurfaceGeometry& s = perturbed15();
  const SphereGrid& grid = s.grid();

  VecX fc = VecX::Zero(grid.n_coeff());
  fc(0) = 1.0 * std::sqrt(4.0 * kPi);
  fc(SphereGrid::coeff_index(2, 2)) = 0.3;
  fc(SphereGrid::coeff_index(4, 0)) = -0.2;
  const ScalarField f = ScalarField::from_coeffs(grid, fc);

  const VariationSolver& solver = perturbed_solver15();

  SUBCASE("against itself") {
    const VariationDatum d = solver.solve(s, f);
    CHECK(d.residual_norm < 1e-10);
    CHECK((d.G.values() - f.values()).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(d.P.sup_norm() < 1e-8);
    CHECK(d.kernel_dim == 3);
  }

  SUBCASE("against a rotated copy") {
    // The congruence preserves h in coordinates, so the same exact
    // solution applies.
    const SurfaceGeometry rot =
        s.rotated(Rotation::about_axis(Vec3(0.2, 1.0, -0.4), 0.8));
    const VariationDatum d = solver.solve(rot, f);
    CHECK(d.residual_norm < 1e-9);
    CHECK((d.G.values() - f.values()).cwiseAbs().maxCoeff() < 1e-7);
    CHECK(d.P.sup_norm() < 1e-7);
  }
}

TEST_CASE("matching solves are linear in the data") {
  const SurfaceGeometry& s = perturbed15();
  const SphereGrid& grid = s.grid();
  const AmbientGeometry& amb = s.ambient();
  const SurfaceGeometry target = make_surface(amb, grid, 3.0, 0.048);
  const VariationSolver& solver = perturbed_solver15();

  VecX f1c = VecX::Zero(grid.n_coeff());
  VecX f2c = VecX::Zero(grid.n_coeff());
  f1c(0) = std::sqrt(4.0 * kPi);
  f1c(SphereGrid::coeff_index(2, 1)) = 0.4;
  f2c(SphereGrid::coeff_index(1, -1)) = 0.6;
  f2c(SphereGrid::coeff_index(3, 0)) = -0.3;
  const ScalarField f1 = ScalarField::from_coeffs(grid, f1c);
  const ScalarField f2 = ScalarField::from_coeffs(grid, f2c);
  const ScalarField f12 = ScalarField::from_coeffs(grid, f1c + f2c);

  const VariationDatum d1 = solver.solve(target, f1);
  const VariationDatum d2 = solver.solve(target, f2);
  const VariationDatum d12 = solver.solve(target, f12);
  CHECK((d12.G.values() - d1.G.values() - d2.G.values())
            .cwiseAbs()
            .maxCoeff() < 1e-8);
  CHECK((d12.P.cov_theta() - d1.P.cov_theta() - d2.P.cov_theta())
            .cwiseAbs()
            .maxCoeff() < 1e-8);
  CHECK((d12.P.cov_phi() - d1.P.cov_phi() - d2.P.cov_phi())
            .cwiseAbs()
            .maxCoeff() < 1e-8);
}

TEST_CASE("gauge projection annihilates kernel-direction targets") {
  const SurfaceGeometry& s = perturbed15();
  const VariationSolver& solver = perturbed_solver15();

  // The metric variation of rotation data is zero up to truncation, so
  // the solve of that target must return (numerically) nothing.
  const auto [g, p] = rotation_data(s, Vec3(0.0, 0.0, 1.0));
  const SymTensorField target = metric_variation(s, g, p);
  auto [g_sol, p_sol] = solver.solve_displacement(target);
  CHECK(g_sol.sup_norm() < 1e-7);
  CHECK(p_sol.sup_norm() < 1e-7);
}

TEST_CASE("kernel fields are metric-silent and L2-orthonormal") {
  const SurfaceGeometry& s = perturbed15();
  const VariationSolver& solver = perturbed_solver15();
  REQUIRE(solver.kernel_dim() == 3);
  for (const auto& [g, p] : solver.kernel_fields()) {
    CHECK(metric_variation(s, g, p).sup_norm() < 1e-7);
    // Unit norm in the induced L2 inner product (normal part plus the
    // tangential part contracted with the inverse metric).
    const VecX pt = p.cov_theta();
    const VecX pp = p.cov_phi();
    const VecX p_sq = s.ginv_tt().cwiseProduct(pt.cwiseProduct(pt)) +
                      2.0 * s.ginv_tp().cwiseProduct(pt.cwiseProduct(pp)) +
                      s.ginv_pp().cwiseProduct(pp.cwiseProduct(pp));
    const double norm_sq =
        s.integrate(g.values().cwiseProduct(g.values()) + p_sq);
    CHECK(norm_sq == doctest::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("the solver refuses non-convex surfaces") {
  const AmbientGeometry amb(1.0);
  const SphereGrid grid(9);
  const SurfaceGeometry bad = make_surface(amb, grid, 4.0, 0.4);
  REQUIRE_FALSE(bad.strictly_convex());
  CHECK_THROWS_AS(VariationSolver{bad}, ConvexityViolation);
}

TEST_CASE("variation residual is relative and falls back when F vanishes") {
  const AmbientGeometry amb(1.0);
  const SphereGrid grid(9);
  const SurfaceGeometry s = make_surface(amb, grid, 3.0, 0.05);
  const ScalarField zero = ScalarField::constant(grid, 0.0);
  const TangentField p0 = s.realize_tangent(VecX::Zero(grid.n_coeff()),
                                            VecX::Zero(grid.n_coeff()));
  // Zero data against a zero target: zero absolute residual.
  CHECK(variation_residual(s, s, zero, zero, p0) == 0.0);
}
