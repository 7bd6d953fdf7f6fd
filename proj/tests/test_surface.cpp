#include <cmath>

#include "doctest.h"
#include "qlm/surface.hpp"

using namespace qlm;

namespace {

constexpr double kPi = 3.14159265358979323846;

ScalarField round_rho(const SphereGrid& grid, double radius) {
  VecX c = VecX::Zero(grid.n_coeff());
  c(0) = radius * std::sqrt(4.0 * kPi);
  return ScalarField::from_coeffs(grid, c);
}

ScalarField perturbed_rho(const SphereGrid& grid, double radius, double amp,
                          int l, int m) {
  VecX c = VecX::Zero(grid.n_coeff());
  c(0) = radius * std::sqrt(4.0 * kPi);
  c(SphereGrid::coeff_index(l, m)) += radius * amp;
  return ScalarField::from_coeffs(grid, c);
}

double sup(const VecX& v) { return v.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("round sphere: every curvature quantity hits its closed form") {
  const AmbientGeometry amb(1.0);
  const SphereGrid grid(15);
  const SurfaceGeometry s(amb, grid, round_rho(grid, 3.0));

  // rho = 3, m = 1: Vbar = sqrt(1/3), H = 2 Vbar / rho, K = 1 / rho^2,
  // nu(Vbar) = m / rho^2, Ric(nu, nu) = -2m / rho^3, area = 4 pi rho^2.
  const double vbar = 0.5773502691896258;
  CHECK(sup(s.potential() - VecX::Constant(s.grid().n_nodes(), vbar)) <
        1e-13);
  CHECK(sup(s.mean_curvature() -
            VecX::Constant(s.grid().n_nodes(), 0.38490017945975055)) < 1e-12);
  CHECK(sup(s.gauss_curvature() -
            VecX::Constant(s.grid().n_nodes(), 1.0 / 9.0)) < 1e-13);
  CHECK(sup(s.normal_potential_derivative() -
            VecX::Constant(s.grid().n_nodes(), 1.0 / 9.0)) < 1e-13);
  CHECK(sup(s.ricci_normal_normal() -
            VecX::Constant(s.grid().n_nodes(), -2.0 / 27.0)) < 1e-14);
  CHECK(s.area() == doctest::Approx(36.0 * kPi).epsilon(1e-13));
  // Umbilic degeneracy: extracting the equal principal curvatures from
  // the shape operator is square-root sensitive to the discretization
  // floor, so the split tolerance is much looser than the fields above.
  CHECK(s.min_principal_curvature() ==
        doctest::Approx(vbar / 3.0).epsilon(1e-6));
  CHECK(s.strictly_convex());
  // |h|^2 = H^2 / 2 on an umbilic surface.
  CHECK(sup(s.h_norm_sq() - VecX::Constant(s.grid().n_nodes(),
                                           0.38490017945975055 *
                                               0.38490017945975055 / 2.0)) <
        1e-12);
}

TEST_CASE("flat round sphere: unit potential and Euclidean curvatures") {
  const AmbientGeometry flat(0.0);
  const SphereGrid grid(9);
  const SurfaceGeometry s(flat, grid, round_rho(grid, 2.5));
  CHECK(sup(s.potential() - VecX::Ones(s.grid().n_nodes())) < 1e-14);
  CHECK(sup(s.mean_curvature() -
            VecX::Constant(s.grid().n_nodes(), 2.0 / 2.5)) < 1e-12);
  CHECK(sup(s.gauss_curvature() -
            VecX::Constant(s.grid().n_nodes(), 1.0 / 6.25)) < 1e-13);
  CHECK(sup(s.ricci_normal_normal()) < 1e-15);
  CHECK(sup(s.gauss_residual()) < 1e-12);
}

TEST_CASE("congruent copies: rotation preserves node-wise geometry") {
  const AmbientGeometry amb(1.0);
  const SphereGrid grid(11);
  const SurfaceGeometry s(amb, grid, perturbed_rho(grid, 3.0, 0.05, 2, 2));
  const Rotation rot = Rotation::about_axis(Vec3(0.3, -1.0, 0.8), 1.1);
  const SurfaceGeometry r = s.rotated(rot);

  // Node k of the copy is the rotated image of node k.
  CHECK((r.points() - s.points() * rot.matrix().transpose())
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  // The ambient is rotationally symmetric, so the congruence preserves
  // the first and second fundamental forms in coordinates.
  CHECK((r.metric() - s.metric()).sup_norm() < 1e-11);
  CHECK((r.second_fundamental_form() - s.second_fundamental_form())
            .sup_norm() < 1e-11);
  CHECK(r.area() == doctest::Approx(s.area()).epsilon(1e-13));
  CHECK(sup(r.potential() - s.potential()) < 1e-13);
}

TEST_CASE("displacement along the normal reproduces the radial closed form") {
  const AmbientGeometry amb(1.0);
  const SphereGrid grid(9);
  const SurfaceGeometry s(amb, grid, round_rho(grid, 3.0));

  // x + eps nu has radius rho + eps Vbar on a round sphere (the normal is
  // ghat-unit, so its Euclidean length is Vbar).
  const double eps = 0.01;
  const SurfaceGeometry moved = s.displaced(eps * s.normal());
  CHECK(sup(moved.radius() -
            VecX::Constant(grid.n_nodes(), 3.0057735026918962)) < 1e-13);

  // Zero displacement is exact.
  const SurfaceGeometry same = s.displaced(MatX::Zero(grid.n_nodes(), 3));
  CHECK((same.points() - s.points()).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("component-coefficient constructor round-trips the embedding") {
  const AmbientGeometry amb(1.0);
  const SphereGrid grid(9);
  const SurfaceGeometry s(amb, grid, perturbed_rho(grid, 3.0, 0.03, 3, -1));
  const SurfaceGeometry t =
      SurfaceGeometry::from_components(amb, grid, s.component_coeffs());
  CHECK((t.points() - s.points()).cwiseAbs().maxCoeff() < 1e-13);
  CHECK((t.metric() - s.metric()).sup_norm() < 1e-12);
}

TEST_CASE("structure identity residuals decay spectrally with bandlimit") {
  const AmbientGeometry amb(1.0);
  const SphereGrid coarse(9), fine(19);
  const SurfaceGeometry a(amb, coarse, perturbed_rho(coarse, 3.0, 0.05, 2, 2));
  const SurfaceGeometry b(amb, fine, perturbed_rho(fine, 3.0, 0.05, 2, 2));

  // Measured factors are ~1e6 over this refinement; 1e3 leaves two
  // orders of margin while still requiring genuinely spectral decay.
  CHECK(sup(a.gauss_residual()) / sup(b.gauss_residual()) > 1e3);
  const auto [act, acp] = a.codazzi_residual();
  const auto [bct, bcp] = b.codazzi_residual();
  CHECK(std::max(sup(act), sup(acp)) / std::max(sup(bct), sup(bcp)) > 1e3);
  CHECK(sup(a.potential_laplace_residual()) /
            sup(b.potential_laplace_residual()) > 1e3);
  const auto [agt, agp] = a.potential_gradient_residual();
  const auto [bgt, bgp] = b.potential_gradient_residual();
  CHECK(std::max(sup(agt), sup(agp)) / std::max(sup(bgt), sup(bgp)) > 1e3);

  // The refined residuals themselves are already tiny.
  CHECK(sup(b.gauss_residual()) < 1e-10);
  CHECK(sup(b.potential_laplace_residual()) < 1e-10);
}

TEST_CASE("area element is consistent with the ambient volume form") {
  const AmbientGeometry amb(1.0);
  const SphereGrid grid(11);
  const SurfaceGeometry s(amb, grid, perturbed_rho(grid, 3.0, 0.05, 2, 2));
  CHECK(sup(s.det_consistency_residual()) < 1e-11);
}

TEST_CASE("Gauss--Bonnet and integration on a perturbed surface") {
  const AmbientGeometry amb(1.0);
  const SphereGrid grid(15);
  const SurfaceGeometry s(amb, grid, perturbed_rho(grid, 3.0, 0.05, 2, 2));
  CHECK(s.integrate(s.gauss_curvature()) ==
        doctest::Approx(4.0 * kPi).epsilon(1e-10));
  CHECK(s.integrate(VecX::Ones(grid.n_nodes())) ==
        doctest::Approx(s.area()).epsilon(1e-14));
  CHECK(s.integration_weights().sum() ==
        doctest::Approx(s.area()).epsilon(1e-14));
}

TEST_CASE("intrinsic operators: Laplacian, Hessian trace, gradient, norms") {
  const AmbientGeometry flat(0.0);
  const SphereGrid grid(11);
  const SurfaceGeometry s(flat, grid, round_rho(grid, 2.0));

  // On a round sphere of radius rho the Laplace--Beltrami operator has
  // eigenvalue -l(l+1)/rho^2 on degree-l harmonics.
  VecX c = VecX::Zero(grid.n_coeff());
  c(SphereGrid::coeff_index(3, 2)) = 1.0;
  const ScalarField f = ScalarField::from_coeffs(grid, c);
  CHECK(sup(s.laplace_beltrami(f) + (12.0 / 4.0) * f.values()) < 1e-12);

  // The metric trace of the Hessian is the Laplacian on any surface.
  const SymTensorField hess = s.hessian(f);
  const VecX trace = s.ginv_tt().cwiseProduct(hess.aa().values()) +
                     2.0 * s.ginv_tp().cwiseProduct(hess.ab().values()) +
                     s.ginv_pp().cwiseProduct(hess.bb().values());
  CHECK(sup(trace - s.laplace_beltrami(f)) < 1e-11);

  // |g|^2 = 2 in the induced metric, for any surface.
  CHECK(sup(s.tensor_norm_sq(s.metric()) -
            VecX::Constant(grid.n_nodes(), 2.0)) < 1e-12);

  // Gradient against the closed form of a degree-1 harmonic:
  // f = cos(theta) has df/dtheta = -sin(theta), df/dphi = 0.
  VecX vals(grid.n_nodes());
  for (int k = 0; k < grid.n_nodes(); ++k) {
    vals(k) = std::cos(grid.node_theta(k));
  }
  const auto [gth, gph] = s.gradient(ScalarField(grid, vals));
  for (int k = 0; k < grid.n_nodes(); ++k) {
    CHECK(gth(k) == doctest::Approx(-std::sin(grid.node_theta(k)))
                        .epsilon(1e-11));
  }
  CHECK(sup(gph) < 1e-12);
}

TEST_CASE("tangent plumbing: Helmholtz round trip and Poisson solve") {
  const AmbientGeometry amb(1.0);
  const SphereGrid grid(9);

  VecX fc = VecX::Zero(grid.n_coeff());
  VecX uc = VecX::Zero(grid.n_coeff());
  fc(SphereGrid::coeff_index(2, 1)) = 0.7;
  fc(SphereGrid::coeff_index(4, -3)) = -0.2;
  uc(SphereGrid::coeff_index(1, 0)) = 0.4;
  uc(SphereGrid::coeff_index(3, 3)) = 0.9;

  // On a round sphere the decomposition operators are diagonal in the
  // harmonic basis, so the round trip is exact to rounding.
  const SurfaceGeometry r(amb, grid, round_rho(grid, 3.0));
  const TangentField pr = r.realize_tangent(fc, uc);
  const TangentField qr = r.helmholtz_decompose(pr.cov_theta(), pr.cov_phi());
  CHECK(sup(qr.cov_theta() - pr.cov_theta()) < 1e-10);
  CHECK(sup(qr.cov_phi() - pr.cov_phi()) < 1e-10);
  CHECK(sup(qr.potential_f().values() - pr.potential_f().values()) < 1e-10);
  CHECK(sup(qr.potential_u().values() - pr.potential_u().values()) < 1e-10);

  // On a perturbed surface the recovery carries spectral truncation from
  // the metric products (measured ~2e-5 at this bandlimit and shape).
  const SurfaceGeometry s(amb, grid, perturbed_rho(grid, 3.0, 0.05, 2, 2));
  const TangentField p = s.realize_tangent(fc, uc);
  const TangentField q = s.helmholtz_decompose(p.cov_theta(), p.cov_phi());
  CHECK(sup(q.cov_theta() - p.cov_theta()) < 1e-4);
  CHECK(sup(q.cov_phi() - p.cov_phi()) < 1e-4);

  // The returned field is self-consistent: realizing its potentials
  // reproduces its components identically.
  const TangentField q2 = s.realize_tangent(q.potential_f().coeffs(),
                                            q.potential_u().coeffs());
  CHECK(sup(q2.cov_theta() - q.cov_theta()) < 1e-13);
  CHECK(sup(q2.cov_phi() - q.cov_phi()) < 1e-13);

  // divergence(P) equals the Laplacian of the gradient potential.
  CHECK(sup(s.divergence(p) - s.laplace_beltrami(p.potential_f())) < 1e-10);

  // poisson_solve inverts laplace_beltrami up to the gauged mean.
  const ScalarField f0 = ScalarField::from_coeffs(grid, fc);
  const ScalarField sol = s.poisson_solve(s.laplace_beltrami(f0));
  CHECK(sup(sol.values() - f0.values()) < 1e-9);
}

TEST_CASE("a strongly perturbed surface loses strict convexity") {
  const AmbientGeometry amb(1.0);
  const SphereGrid grid(9);
  const SurfaceGeometry s(amb, grid, perturbed_rho(grid, 4.0, 0.4, 2, 2));
  CHECK_FALSE(s.strictly_convex());
  CHECK(s.min_principal_curvature() < 0.0);
  CHECK(s.radius().minCoeff() > 2.0);  // still well outside the horizon
}

TEST_CASE("surfaces inside the horizon are rejected") {
  const AmbientGeometry amb(1.0);
  const SphereGrid grid(7);
  CHECK_THROWS_AS(SurfaceGeometry(amb, grid, round_rho(grid, 1.9)),
                  HorizonViolation);
}
