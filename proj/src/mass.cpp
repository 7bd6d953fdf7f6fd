#include "qlm/mass.hpp"

#include <algorithm>
#include <cmath>

#include "qlm/errors.hpp"

namespace qlm {

namespace {

// The pair contract identifies nodes by equal grid parameters, so both
// surfaces must live over structurally identical grids.
void require_same_grid(const SurfaceGeometry& a, const SurfaceGeometry& b) {
  const SphereGrid& ga = a.grid();
  const SphereGrid& gb = b.grid();
  if (ga.bandlimit() != gb.bandlimit() || ga.n_lat() != gb.n_lat() ||
      ga.n_lon() != gb.n_lon()) {
    throw ConfigError("surface pair does not share a parameter grid");
  }
}

}  // namespace

MassReport quasilocal_mass(const SurfaceGeometry& sigma,
                           const SurfaceGeometry& sigma_prime) {
  require_same_grid(sigma, sigma_prime);

  const VecX& v = sigma.potential();
  const VecX& h = sigma.mean_curvature();
  const VecX& h_prime = sigma_prime.mean_curvature();

  MassReport report;
  report.energy = sigma.integrate(v.cwiseProduct(h - h_prime));
  report.scale = sigma.integrate(v.cwiseProduct(h));
  report.h_min = h.minCoeff();
  report.h_prime_min = h_prime.minCoeff();
  report.ric_nu_max = sigma.ricci_normal_normal().maxCoeff();

  report.sigma_convex = sigma.strictly_convex();
  report.sigma_prime_convex = sigma_prime.strictly_convex();
  report.sigma_prime_mean_convex = report.h_prime_min > 0.0;
  report.ric_nu_nonpositive = report.ric_nu_max <= 0.0;
  report.hypotheses_met = report.sigma_convex &&
                          report.sigma_prime_mean_convex &&
                          report.ric_nu_nonpositive;
  if (report.hypotheses_met) {
    report.penrose_margin = report.energy;
  }
  return report;
}

const char* to_string(PenroseVerdict verdict) {
  switch (verdict) {
    case PenroseVerdict::kHolds:
      return "holds";
    case PenroseVerdict::kViolated:
      return "violated";
    case PenroseVerdict::kHypothesesNotMet:
      return "hypotheses-not-met";
  }
  return "hypotheses-not-met";
}

PenroseVerdict penrose_check(const MassReport& report) {
  if (!report.hypotheses_met) {
    return PenroseVerdict::kHypothesesNotMet;
  }
  const double tol_abs = 1e-8 * std::abs(report.scale);
  return report.energy < -tol_abs ? PenroseVerdict::kViolated
                                  : PenroseVerdict::kHolds;
}

ScalarField mean_curvature_variation(const SurfaceGeometry& surf,
                                     const ScalarField& g_normal,
                                     const TangentField& p) {
  const VecX lap_g = surf.laplace_beltrami(g_normal);
  const VecX zeroth = (surf.ricci_normal_normal() + surf.h_norm_sq())
                          .cwiseProduct(g_normal.values());

  // Transport term P . grad H with the index raised by the inverse metric.
  const ScalarField h_field(surf.grid(), surf.mean_curvature());
  const VecX h_th = h_field.derivative(1, 0);
  const VecX h_ph = h_field.derivative(0, 1);
  const VecX p_up_th = surf.ginv_tt().cwiseProduct(p.cov_theta()) +
                       surf.ginv_tp().cwiseProduct(p.cov_phi());
  const VecX p_up_ph = surf.ginv_tp().cwiseProduct(p.cov_theta()) +
                       surf.ginv_pp().cwiseProduct(p.cov_phi());
  const VecX transport =
      p_up_th.cwiseProduct(h_th) + p_up_ph.cwiseProduct(h_ph);

  return ScalarField(surf.grid(), -lap_g - zeroth + transport);
}

double first_variation_rhs(const SurfaceGeometry& sigma,
                           const SymTensorField& h_prime,
                           const ScalarField& f) {
  const SymTensorField diff = h_prime - sigma.second_fundamental_form();
  const VecX norm_sq = sigma.tensor_norm_sq(diff);
  const VecX integrand =
      f.values().cwiseProduct(sigma.potential()).cwiseProduct(norm_sq);
  return 0.5 * sigma.integrate(integrand);
}

double first_variation_rhs(const SurfaceGeometry& sigma,
                           const SurfaceGeometry& sigma_prime,
                           const ScalarField& f) {
  require_same_grid(sigma, sigma_prime);
  return first_variation_rhs(sigma, sigma_prime.second_fundamental_form(), f);
}

ScalarField gauss_subtraction_check(const SurfaceGeometry& sigma,
                                    const SurfaceGeometry& sigma_prime) {
  require_same_grid(sigma, sigma_prime);
  const VecX residual =
      0.5 * (sigma_prime.h_norm_sq() - sigma.h_norm_sq()) -
      (sigma.ricci_normal_normal() - sigma_prime.ricci_normal_normal());
  return ScalarField(sigma.grid(), residual);
}

}  // namespace qlm
