#pragma once

// Batch experiment driver behind the CLI: config parsing with environment
// overrides, surface presets, and the four experiment suites.
//
// Each suite writes a JSON report (to the configured path, or stdout when no
// path is set) in which every pass/fail entry carries the tolerance it was
// judged against, and returns a process exit code: 0 when every check
// passed, 1 when a check failed or a guarded runtime error surfaced, 2 when
// the configuration itself was rejected.  Reports are byte-identical across
// runs of the same config except for the "generated_at" timestamp field.

#include <cstdint>
#include <string>

#include "qlm/ambient.hpp"
#include "qlm/io.hpp"
#include "qlm/sphere_grid.hpp"
#include "qlm/surface.hpp"

namespace qlm {

// Tolerances a config may override (all must stay positive).  Defaults are
// the contract values the test suites pin.
struct ToleranceSet {
  double ambient_static_abs = 1e-10;  // static-equation residual sup-norm
  double ambient_trace_abs = 1e-12;   // scalar-curvature (Ricci trace) sup
  double ambient_assembly_abs = 1e-8; // closed form vs FD-assembled Ricci
  double identity_abs = 1e-10;        // surface identity residual sup-norms
  double decay_factor = 50.0;         // required coarse/fine residual ratio
  double gauss_bonnet_abs = 1e-8;     // |integral of K dsigma - 4 pi|
  double lemma2_rel = 1e-6;           // |E'(0)| against the energy scale
  double congruent_rhs_abs = 1e-12;   // first_variation_rhs on congruent pairs
  double synthetic_rel = 1e-3;        // FD vs rhs for the synthetic check
  double drift_rel = 1e-7;            // drift against ||g||_sup per step
  double energy_rel = 1e-8;           // E(s) floor against the energy scale
  double min_mean_curvature = 0.1;    // near-horizon guard on min H
};

// One experiment: which suite to run, on what surface, at what resolution,
// with which seed.  `surface` accepts the presets
//
//   "round R"                  sphere of radius R
//   "perturbed R AMP YLM"      R (1 + AMP * basis harmonic LM), e.g. Y22
//   "import PATH"              radius samples from a surface JSON document
//
// and `surface_prime` (sign-check suite only) the same grammar, defaulting
// to `surface`.  `variant` selects the flow data: for the first-variation
// suite "congruent" (seeded random speed), "synthetic" (injected shape
// tensor), or "zero"; for the continuation suite "one" (unit speed),
// "random", or "zero".
struct ExperimentConfig {
  int schema_version = 1;
  std::string generator = "qlm-rng-v1";  // pinned random-field algorithm
  std::string kind = "identities";  // identities|lemma2|continuation|penrose
  double mass = 1.0;
  int bandlimit = 15;
  std::string surface = "round 3";
  std::string surface_prime;
  std::string variant;
  std::string out;
  std::uint64_t seed = 1;
  double s_max = 0.05;
  int n_steps = 50;
  ToleranceSet tol;
};

// Strict parse: unknown keys, wrong types, or out-of-range values throw
// ConfigError naming the offending field.  Missing keys keep defaults.
ExperimentConfig config_from_json(const Json& doc);

Json config_to_json(const ExperimentConfig& config);

// QLM_-prefixed environment overrides (QLM_MASS, QLM_BANDLIMIT, QLM_SEED,
// QLM_SURFACE, QLM_KIND, QLM_OUT); applied between config file and CLI
// flags, so precedence is flags > environment > config file > defaults.
void apply_env_overrides(ExperimentConfig& config);

// Range and enum checks shared by every entry point; throws ConfigError
// naming the field (bandlimit >= 7, tolerances > 0, known kind/variant,
// schema_version 1, generator "qlm-rng-v1", n_steps >= 1, s_max > 0).
void validate(const ExperimentConfig& config);

// Builds a surface from a preset string.  Throws ConfigError for a malformed
// spec and propagates geometric guards (e.g. HorizonViolation) unchanged.
SurfaceGeometry build_surface(const AmbientGeometry& ambient,
                              const SphereGrid& grid,
                              const ExperimentConfig& config,
                              const std::string& spec);

// First-variation check against an injected shape tensor: perturbs the
// surface's second fundamental form by epsilon times a fixed smooth
// trace-free tensor (the trace-free Hessian of a low-degree harmonic),
// solves the linearized matching problem for that target, and compares the
// finite-difference energy derivative of the resulting first-order family
// (step fd_step, five records) against the closed first-variation integral.
// The fictitious second surface enters only through its first-order data:
// its ambient curvature term is the one a genuine isometric reference would
// carry (equal intrinsic curvature), and its mean curvature evolves by the
// corresponding variation formula.  `solve_defect` reports how completely
// the injected tensor was matched.
struct SyntheticVariationCheck {
  double fd = 0.0;           // finite-difference energy derivative at s = 0
  double fd_error = 0.0;     // step-halving error estimate
  double rhs = 0.0;          // closed-form first variation
  double solve_defect = 0.0; // sup-norm of the unmatched target residue
};

SyntheticVariationCheck synthetic_variation_check(const SurfaceGeometry& sigma,
                                                  double epsilon = 0.05,
                                                  double fd_step = 1e-3);

// Suite drivers.  Each validates the config, runs, writes the report, and
// returns the exit code.  Guarded runtime errors propagate as exceptions;
// use run_guarded for the CLI's exit-code mapping.
int run_identities(const ExperimentConfig& config);
int run_lemma2(const ExperimentConfig& config);
int run_continuation(const ExperimentConfig& config);
int run_penrose(const ExperimentConfig& config);

// Dispatch on config.kind.
int run_experiment(const ExperimentConfig& config);

// run_experiment with the exception-to-exit-code policy applied:
// ConfigError -> 2, any other error -> 1, diagnostic carried alongside.
struct RunOutcome {
  int exit_code = 0;
  std::string diagnostic;
};

RunOutcome run_guarded(const ExperimentConfig& config);

}  // namespace qlm
