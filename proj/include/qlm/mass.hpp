#pragma once

// Quasi-local energy of a surface pair, the hypothesis-gated Penrose sign
// check, the first variation of the energy along normal flows, and the
// mean-curvature variation formula for general deformation data.
//
// A "pair" is two surfaces over the same parameter grid; fields of the second
// surface are pulled back through the node identification (equal (theta, phi)
// parameters), which is also how the continuation module produces pairs.

#include <optional>

#include "qlm/fields.hpp"
#include "qlm/surface.hpp"

namespace qlm {

// Scalar summary of a pair (Sigma, Sigma').  `energy` integrates Sigma's
// static potential against the mean-curvature deficit,
//
//   energy = integral of V (H - H') dsigma,
//
// with V and the area element taken from Sigma and H' pulled back from
// Sigma'.  `scale` is the same integral with H in place of H - H'; it sets
// the natural magnitude against which `energy` is judged.  The boolean flags
// record the hypotheses of the sign check: Sigma strictly convex, Sigma'
// mean convex (H' > 0 at every node), and Ric(nu, nu) <= 0 on Sigma.
// `penrose_margin` holds `energy` when all hypotheses are met and is empty
// otherwise.  Field names are stable; the JSON form in qlm/io.hpp uses them
// verbatim.
struct MassReport {
  double energy = 0.0;
  double scale = 0.0;
  double h_min = 0.0;        // min over nodes of Sigma's mean curvature
  double h_prime_min = 0.0;  // min over nodes of Sigma''s mean curvature
  double ric_nu_max = 0.0;   // max over nodes of Ric(nu, nu) on Sigma

  bool sigma_convex = false;
  bool sigma_prime_convex = false;
  bool sigma_prime_mean_convex = false;
  bool ric_nu_nonpositive = false;
  bool hypotheses_met = false;

  std::optional<double> penrose_margin;
};

// Builds the report for a pair over a shared grid.  Recomputing the report
// from the same surfaces reproduces `energy` exactly (pure quadrature, no
// hidden state).  Throws ConfigError if the grids differ.
MassReport quasilocal_mass(const SurfaceGeometry& sigma,
                           const SurfaceGeometry& sigma_prime);

// Sign verdict of the energy, gated on the report's hypothesis flags.
// "violated" requires the hypotheses to hold AND energy < -1e-8 * scale;
// anything above that threshold counts as "holds" (the equality case of a
// congruent pair lands here), and missing hypotheses suppress the verdict.
enum class PenroseVerdict { kHolds, kViolated, kHypothesesNotMet };

const char* to_string(PenroseVerdict verdict);

PenroseVerdict penrose_check(const MassReport& report);

// First variation of the mean curvature under the deformation G nu + P:
//
//   dH = -lap G - (Ric(nu, nu) + |h|^2) G + P . grad H,
//
// the material derivative at a grid node carried along with the deformation
// (the same identification SurfaceGeometry::displaced uses).  Killing data
// gives zero; the transport term P . grad H vanishes for normal-only flows.
ScalarField mean_curvature_variation(const SurfaceGeometry& surf,
                                     const ScalarField& g_normal,
                                     const TangentField& p);

// Right-hand side of the energy's first variation along a normal flow with
// speed F through isometric pairs with matching mean curvature:
//
//   value = 1/2 * integral of F V |h - h'|^2 dsigma,
//
// where h' is pulled back through the node identification and the norm is
// taken with sigma's inverse metric.  Linear in F, and nonnegative whenever
// F >= 0 since V > 0 outside the horizon.
double first_variation_rhs(const SurfaceGeometry& sigma,
                           const SymTensorField& h_prime,
                           const ScalarField& f);

// Convenience overload pulling h' from the second surface of a pair.
double first_variation_rhs(const SurfaceGeometry& sigma,
                           const SurfaceGeometry& sigma_prime,
                           const ScalarField& f);

// Residual of subtracting the two traced Gauss equations at identified
// nodes:
//
//   1/2 (|h'|^2 - |h|^2) - (Ric(nu, nu) - Ric(nu', nu')),
//
// each norm taken with its own surface's metric.  Combining both Gauss
// equations gives the exact pointwise identity
//
//   residual = 1/2 (H'^2 - H^2) - (K' - K)
//
// for any pair, so for an isometric pair with matching mean curvature the
// residual reduces to the Gauss-curvature difference and is bounded by the
// metric mismatch plus discretization error.
ScalarField gauss_subtraction_check(const SurfaceGeometry& sigma,
                                    const SurfaceGeometry& sigma_prime);

}  // namespace qlm
