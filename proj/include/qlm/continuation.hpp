#pragma once

// Continuation of an isometric surface pair along a prescribed normal flow.
//
// The second surface Sigma' evolves by ds * F * nu' per step; the first is
// continued so that its induced metric keeps matching Sigma''s through the
// shared-grid identification: each step solves the linearized matching
// problem, advances by an explicit Euler move, and then pulls the surface
// back onto the isometry constraint with a Gauss--Newton drift correction.
// First-order stepping suffices because the quantity under study, the
// energy derivative at s = 0, needs only first-order family accuracy; the
// drift correction controls constraint error independently of the
// integrator order.

#include <functional>
#include <vector>

#include "qlm/fields.hpp"
#include "qlm/isometry.hpp"
#include "qlm/surface.hpp"

namespace qlm {

// One retained state of a family.  `datum` is the linearized matching solve
// computed at this state (the data used to advance from s); `drift` is the
// metric mismatch sup-norm after correction, and `energy` the quasi-local
// energy of the pair.  Records are immutable once emitted.
struct ContinuationStep {
  double s;
  SurfaceGeometry sigma;
  SurfaceGeometry sigma_prime;
  VariationDatum datum;
  double drift;
  double energy;
};

// A completed family: n_steps + 1 records at s = 0, ds, ..., s_max.  Every
// retained record satisfies drift <= drift_tol; a step that cannot be
// corrected aborts the build instead of being retained.
struct ContinuationFamily {
  double ds = 0.0;
  int n_steps = 0;
  std::vector<ContinuationStep> steps;
};

// Replaces the default Euler normal flow of Sigma': given the current
// Sigma'(s) and the step, produce Sigma'(s + ds).  Families whose second
// surface moves on an exactly known orbit (an ambient rotation, say) supply
// the exact motion here; the fixed-speed Euler default is first-order
// accurate and would leave such an orbit at O(s * ds).
using FlowMap = std::function<SurfaceGeometry(
    const SurfaceGeometry& sigma_prime, double s, double ds)>;

struct ContinuationOptions {
  // Per-step drift budget, relative to ‖g‖_sup of the starting surface.
  double drift_tol_rel = 1e-7;
  // Sigma' propagator; empty means normal_flow_step with the family speed.
  FlowMap flow;
  // Unknown bandlimit of the matching solves (-1: the grid bandlimit).
  int solver_band = -1;
};

// Cartesian node displacements realizing the deformation data
// scale * (G nu + P), with P raised out of its covariant components; rows
// follow the grid's node order.  Feeding the result to
// SurfaceGeometry::displaced produces the Euler move of the family.
MatX displacement_vectors(const SurfaceGeometry& surf,
                          const ScalarField& g_normal, const TangentField& p,
                          double scale = 1.0);

// Moves every point of the surface by ds * F * nu and re-represents the
// result as a star-shaped graph: for each grid node a two-variable Newton
// iteration locates the parameter point whose displaced image lies on the
// node's coordinate ray, the new radius is read off there, and the radius
// field is refit spectrally.  Throws StarShapeLost if a ray solve fails to
// converge (the displaced surface is no longer a graph) and
// HorizonViolation if any new radius falls inside the horizon.
SurfaceGeometry normal_flow_step(const SurfaceGeometry& surf,
                                 const ScalarField& f, double ds);

// Gauss--Newton correction of the induced metric toward `target_metric`:
// repeatedly solves the linearized matching problem for the current metric
// mismatch and applies the resulting displacement, until the mismatch
// sup-norm drops below drift_tol_rel * ‖target‖_sup.  Intended for small
// initial mismatch (about 1e-3 of the metric scale or less); throws
// DriftUncorrectable when the iteration stalls (no factor-10 decrease over
// ten consecutive iterations).  `drift_history`, when given, receives the
// mismatch sup-norm before each iterate and after the last.
SurfaceGeometry drift_correction(const SurfaceGeometry& surf,
                                 const SymTensorField& target_metric,
                                 double drift_tol_rel = 1e-7,
                                 std::vector<double>* drift_history = nullptr);

// Builds the family: per step, solve the linearized matching problem on the
// current pair, move Sigma by ds * (G nu + P), flow Sigma' (see FlowMap),
// and drift-correct Sigma against the flowed metric.  One matching operator
// is factored at the start and reused as a chord inverse with iterative
// refinement (the exact operator is applied through metric_variation);
// refinement stalls trigger a refactor on the current surface.  The initial
// pair must already satisfy the drift budget.  Throws ConfigError for
// invalid arguments or a non-isometric start, and propagates solver,
// star-shape, and drift errors from the steps.
ContinuationFamily isometric_continuation(const SurfaceGeometry& sigma0,
                                          const SurfaceGeometry& sigma_prime0,
                                          const ScalarField& f, double s_max,
                                          int n_steps,
                                          const ContinuationOptions& options = {});

// Derivative estimate with an error bar from step halving.
struct MassDerivative {
  double value = 0.0;
  double error = 0.0;
};

// Second-order one-sided estimate of E'(0) from the first five retained
// energies: three-point stencils at spacings ds and 2 ds, combined by
// Richardson extrapolation; the error bar is a third of their spread.
// Throws ConfigError if fewer than five records are available.
MassDerivative fd_mass_derivative(const ContinuationFamily& family);

}  // namespace qlm
