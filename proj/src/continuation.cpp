#include "qlm/continuation.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>

#include <fmt/format.h>

#include "qlm/errors.hpp"
#include "qlm/mass.hpp"

namespace qlm {

namespace {

void require_same_grid(const SphereGrid& a, const SphereGrid& b,
                       const char* what) {
  if (a.bandlimit() != b.bandlimit() || a.n_lat() != b.n_lat() ||
      a.n_lon() != b.n_lon()) {
    throw ConfigError(fmt::format("{} does not share the family grid", what));
  }
}

// ghat-unit outward normal of the immersion at arbitrary parameters, from
// the exact point derivatives: the Euclidean cross product annihilates the
// tangent plane as a covector, the inverse ambient metric raises it.
Vec3 unit_normal_at(const SurfaceGeometry& surf, const Vec3& x, const Vec3& xt,
                    const Vec3& xp) {
  const Mat3 gh = surf.ambient().metric_cartesian(x);
  Vec3 n = gh.inverse() * xt.cross(xp);
  n /= std::sqrt(n.dot(gh * n));
  if (n.dot(x) < 0.0) {
    n = -n;
  }
  return n;
}

// Tangential components re-realized in `surf`'s own frame; deformation
// fields coming out of a chord solver carry the factored surface's
// realization, and the potentials are the transferable data.
TangentField re_realize(const SurfaceGeometry& surf, const TangentField& p) {
  return surf.realize_tangent(p.potential_f().coeffs(),
                              p.potential_u().coeffs());
}

}  // namespace

MatX displacement_vectors(const SurfaceGeometry& surf,
                          const ScalarField& g_normal, const TangentField& p,
                          double scale) {
  const VecX up_th = surf.ginv_tt().cwiseProduct(p.cov_theta()) +
                     surf.ginv_tp().cwiseProduct(p.cov_phi());
  const VecX up_ph = surf.ginv_tp().cwiseProduct(p.cov_theta()) +
                     surf.ginv_pp().cwiseProduct(p.cov_phi());
  const int n = surf.grid().n_nodes();
  MatX w(n, 3);
  for (int k = 0; k < n; ++k) {
    w.row(k) = scale * (g_normal.values()(k) * surf.normal().row(k) +
                        up_th(k) * surf.tangent_theta().row(k) +
                        up_ph(k) * surf.tangent_phi().row(k));
  }
  return w;
}

namespace {

// Right-hand side 2 F h' of the matching system, pulled back through the
// node identification.
SymTensorField matching_target(const SurfaceGeometry& sigma_prime,
                               const ScalarField& f) {
  const SphereGrid& grid = sigma_prime.grid();
  const VecX two_f = 2.0 * f.values();
  return SymTensorField(
      ScalarField(grid, two_f.cwiseProduct(sigma_prime.h_tt())),
      ScalarField(grid, two_f.cwiseProduct(sigma_prime.h_tp())),
      ScalarField(grid, two_f.cwiseProduct(sigma_prime.h_pp())));
}

// Chord solve with iterative refinement: the factored operator supplies
// the approximate inverse while the exact operator on `sigma` is applied
// through metric_variation.  Stalls refactor the chord on the current
// surface (at most once per call); `chord_base` keeps the factored
// surface alive.
VariationDatum refined_solve(std::optional<VariationSolver>& chord,
                             SurfaceGeometry& chord_base, int band,
                             const SurfaceGeometry& sigma,
                             const SurfaceGeometry& sigma_prime,
                             const ScalarField& f) {
  const SymTensorField target = matching_target(sigma_prime, f);
  const double target_scale = target.sup_norm();

  VecX gauge = VecX::Zero(chord->kernel_dim());
  auto [g_normal, p] = chord->solve_displacement(target, &gauge);
  bool refactored = false;
  double prev_defect = target_scale;
  for (int iter = 0; iter < 8; ++iter) {
    const SymTensorField defect =
        target - metric_variation(sigma, g_normal, p);
    const double defect_norm = defect.sup_norm();
    if (defect_norm <= 1e-12 * std::max(target_scale, 1e-30)) {
      break;
    }
    if (defect_norm > 0.5 * prev_defect) {
      // No factor-two progress.  At a small relative defect this is the
      // least-squares floor of the exact operator; refactoring cannot
      // lower it, so accept the converged solution.  At a large defect
      // the chord inverse has gone stale: refactor once on the current
      // surface and keep refining.
      if (defect_norm <= 1e-6 * target_scale || refactored) {
        break;
      }
      chord_base = sigma;
      chord.emplace(chord_base, band);
      gauge = VecX::Zero(chord->kernel_dim());
      refactored = true;
    }
    prev_defect = defect_norm;
    VecX dgauge = VecX::Zero(chord->kernel_dim());
    auto [dg, dp] = chord->solve_displacement(defect, &dgauge);
    // Condition guard: a correction far larger than the defect that
    // produced it means the solve leaked into near-singular directions
    // (deformations that barely move the metric, e.g. the bending family
    // on an almost-round surface).  Applying it would pollute the datum
    // without lowering the defect, so stop at the current solution.
    if (std::max(dg.sup_norm(), dp.sup_norm()) >
        1e4 * std::max(defect_norm, 1e-30)) {
      break;
    }
    gauge += dgauge;
    g_normal = ScalarField(sigma.grid(), g_normal.values() + dg.values());
    p = sigma.realize_tangent(
        p.potential_f().coeffs() + dp.potential_f().coeffs(),
        p.potential_u().coeffs() + dp.potential_u().coeffs());
  }
  p = re_realize(sigma, p);
  const double residual = variation_residual(sigma, sigma_prime, f, g_normal, p);
  return VariationDatum{f, g_normal, std::move(p), residual,
                        chord->kernel_dim(), std::move(gauge)};
}

// Gauss--Newton pull-back onto the isometry constraint; see
// drift_correction for the contract.  The solver may be factored on a
// nearby surface (chord Gauss--Newton); the stall guard catches the case
// where that approximation stops contracting.
SurfaceGeometry correct_with(const VariationSolver& solver,
                             SurfaceGeometry current,
                             const SymTensorField& target, double tol_abs,
                             std::vector<double>* history) {
  std::vector<double> drifts;
  drifts.push_back((target - current.metric()).sup_norm());
  while (drifts.back() > tol_abs) {
    if (drifts.size() > 10 &&
        drifts.back() > 0.1 * drifts[drifts.size() - 11]) {
      throw DriftUncorrectable(
          fmt::format("drift correction stalled at {:.3e} (tolerance {:.3e})",
                      drifts.back(), tol_abs));
    }
    if (drifts.size() > 60) {
      throw DriftUncorrectable(fmt::format(
          "drift correction exceeded iteration budget at {:.3e}",
          drifts.back()));
    }
    const SymTensorField mismatch = target - current.metric();
    auto [g_normal, p] = solver.solve_displacement(mismatch);
    // Same condition guard as the refinement loop: a step vastly larger
    // than the mismatch would send the iterate far from the constraint
    // set instead of toward it.
    if (std::max(g_normal.sup_norm(), p.sup_norm()) >
        1e4 * std::max(drifts.back(), 1e-30)) {
      throw DriftUncorrectable(fmt::format(
          "drift correction solve leaked into near-singular directions "
          "(correction {:.3e} for mismatch {:.3e})",
          std::max(g_normal.sup_norm(), p.sup_norm()), drifts.back()));
    }
    p = re_realize(current, p);
    current =
        current.displaced(displacement_vectors(current, g_normal, p, 1.0));
    drifts.push_back((target - current.metric()).sup_norm());
  }
  if (history != nullptr) {
    *history = std::move(drifts);
  }
  return current;
}

}  // namespace

SurfaceGeometry normal_flow_step(const SurfaceGeometry& surf,
                                 const ScalarField& f, double ds) {
  const SphereGrid& grid = surf.grid();
  require_same_grid(grid, f.grid(), "speed field");
  if (ds == 0.0 || f.sup_norm() == 0.0) {
    return surf;  // the flow is exactly the identity; skip the ray solves
  }
  const double two_m = 2.0 * surf.ambient().mass();

  VecX rho_new(grid.n_nodes());
  for (int k = 0; k < grid.n_nodes(); ++k) {
    const double th0 = grid.node_theta(k);
    const double ph0 = grid.node_phi(k);
    const Vec3 ray = unit_direction(th0, ph0);
    // Orthonormal complement of the ray; the displaced image must leave
    // both of these directions.
    const Vec3 t1(std::cos(th0) * std::cos(ph0), std::cos(th0) * std::sin(ph0),
                  -std::sin(th0));
    const Vec3 t2 = ray.cross(t1);

    double th = th0;
    double ph = ph0;
    bool converged = false;
    Vec3 moved = Vec3::Zero();
    for (int iter = 0; iter < 30; ++iter) {
      const Vec3 x = surf.point_at(th, ph);
      const Vec3 xt = surf.point_at(th, ph, 1, 0);
      const Vec3 xp = surf.point_at(th, ph, 0, 1);
      const Vec3 nu = unit_normal_at(surf, x, xt, xp);
      moved = x + ds * f.evaluate(th, ph) * nu;
      const Eigen::Vector2d residual(t1.dot(moved), t2.dot(moved));
      if (residual.norm() <= 1e-13 * moved.norm()) {
        converged = true;
        break;
      }
      // Jacobian of the graph part plus the speed gradient; the normal's
      // own parameter derivative is dropped (quasi-Newton with an O(ds)
      // defect, quadratic-in-practice for the small steps taken here).
      const Vec3 st = xt + ds * f.evaluate(th, ph, 1, 0) * nu;
      const Vec3 sp = xp + ds * f.evaluate(th, ph, 0, 1) * nu;
      Eigen::Matrix2d jac;
      jac << t1.dot(st), t1.dot(sp), t2.dot(st), t2.dot(sp);
      const double det = jac.determinant();
      if (std::abs(det) < 1e-14 * st.norm() * sp.norm()) {
        break;
      }
      const Eigen::Vector2d delta = jac.inverse() * residual;
      th -= delta(0);
      ph -= delta(1);
    }
    if (!converged) {
      throw StarShapeLost(fmt::format(
          "normal flow broke graph representability near node {} "
          "(theta={:.6f}, phi={:.6f})",
          k, th0, ph0));
    }
    const double rho = moved.norm();
    if (!(rho > two_m)) {
      throw HorizonViolation(fmt::format(
          "normal flow pushed node {} to radius {:.6f} <= 2m = {:.6f}", k, rho,
          two_m));
    }
    rho_new(k) = rho;
  }
  return SurfaceGeometry(surf.ambient(), grid, ScalarField(grid, rho_new));
}

SurfaceGeometry drift_correction(const SurfaceGeometry& surf,
                                 const SymTensorField& target_metric,
                                 double drift_tol_rel,
                                 std::vector<double>* drift_history) {
  require_same_grid(surf.grid(), target_metric.grid(), "target metric");
  const double tol_abs = drift_tol_rel * target_metric.sup_norm();
  const double initial = (target_metric - surf.metric()).sup_norm();
  if (initial <= tol_abs) {
    if (drift_history != nullptr) {
      *drift_history = {initial};
    }
    return surf;
  }
  const VariationSolver solver(surf);
  return correct_with(solver, surf, target_metric, tol_abs, drift_history);
}

ContinuationFamily isometric_continuation(const SurfaceGeometry& sigma0,
                                          const SurfaceGeometry& sigma_prime0,
                                          const ScalarField& f, double s_max,
                                          int n_steps,
                                          const ContinuationOptions& options) {
  if (n_steps < 1) {
    throw ConfigError("continuation step count must be at least 1");
  }
  if (!(s_max > 0.0)) {
    throw ConfigError("continuation s_max must be positive");
  }
  require_same_grid(sigma0.grid(), sigma_prime0.grid(), "second surface");
  require_same_grid(sigma0.grid(), f.grid(), "speed field");

  const double ds = s_max / n_steps;
  const double tol_abs =
      options.drift_tol_rel * sigma0.metric().sup_norm();

  FlowMap flow = options.flow;
  if (!flow) {
    flow = [&f](const SurfaceGeometry& sp, double /*s*/, double step) {
      return normal_flow_step(sp, f, step);
    };
  }

  SurfaceGeometry sigma = sigma0;
  SurfaceGeometry sigma_prime = sigma_prime0;
  const double initial_drift =
      (sigma_prime.metric() - sigma.metric()).sup_norm();
  if (initial_drift > tol_abs) {
    throw ConfigError(fmt::format(
        "initial pair is not isometric within the drift tolerance "
        "({:.3e} > {:.3e})",
        initial_drift, tol_abs));
  }

  SurfaceGeometry chord_base = sigma0;
  std::optional<VariationSolver> chord;
  chord.emplace(chord_base, options.solver_band);

  ContinuationFamily family;
  family.ds = ds;
  family.n_steps = n_steps;
  family.steps.reserve(n_steps + 1);

  for (int i = 0; i <= n_steps; ++i) {
    const double s = i * ds;
    VariationDatum datum =
        refined_solve(chord, chord_base, options.solver_band, sigma,
                      sigma_prime, f);
    const double drift = (sigma_prime.metric() - sigma.metric()).sup_norm();
    const double energy = quasilocal_mass(sigma, sigma_prime).energy;
    family.steps.push_back(
        ContinuationStep{s, sigma, sigma_prime, std::move(datum), drift,
                         energy});
    if (i == n_steps) {
      break;
    }

    const ContinuationStep& record = family.steps.back();
    SurfaceGeometry sigma_prime_next = flow(sigma_prime, s, ds);
    const MatX move =
        displacement_vectors(sigma, record.datum.G, record.datum.P, ds);
    // An exactly zero move keeps the surface bit-identical instead of
    // round-tripping it through the bandlimit projection.
    SurfaceGeometry predicted =
        move.cwiseAbs().maxCoeff() == 0.0 ? sigma : sigma.displaced(move);
    const SymTensorField target = sigma_prime_next.metric();
    try {
      sigma = correct_with(*chord, predicted, target, tol_abs, nullptr);
    } catch (const DriftUncorrectable&) {
      // Chord operator too stale for this step: refactor on the current
      // surface and retry once before giving up.
      chord_base = sigma;
      chord.emplace(chord_base, options.solver_band);
      sigma = correct_with(*chord, predicted, target, tol_abs, nullptr);
    }
    sigma_prime = std::move(sigma_prime_next);
  }
  return family;
}

MassDerivative fd_mass_derivative(const ContinuationFamily& family) {
  if (family.steps.size() < 5) {
    throw ConfigError(
        "mass derivative needs at least five retained steps");
  }
  const double h = family.ds;
  const double e0 = family.steps[0].energy;
  const double e1 = family.steps[1].energy;
  const double e2 = family.steps[2].energy;
  const double e4 = family.steps[4].energy;
  const double d_h = (-3.0 * e0 + 4.0 * e1 - e2) / (2.0 * h);
  const double d_2h = (-3.0 * e0 + 4.0 * e2 - e4) / (4.0 * h);
  MassDerivative out;
  out.value = (4.0 * d_h - d_2h) / 3.0;
  out.error = std::abs(d_h - d_2h) / 3.0;
  return out;
}

}  // namespace qlm
