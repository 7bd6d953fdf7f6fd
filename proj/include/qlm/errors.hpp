#pragma once

#include <stdexcept>
#include <string>

namespace qlm {

// Domain and solver failures are reported through typed exceptions so callers
// (and the CLI) can map each failure mode to a diagnostic and an exit code.

// A point or a surface node reached r <= 2m.
struct HorizonViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Evaluation requested on the polar axis where the ambient spherical chart
// degenerates (|sin theta| below threshold).
struct PoleSingularity : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An operation required h_ab > 0 (strict convexity) and the surface failed it.
struct ConvexityViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The least-squares system lost more rank than the expected Killing kernel,
// or a dense factorization failed outright.
struct SolverFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// min |H| fell below threshold, so dividing the trace relation by H is
// meaningless; we refuse to regularize.
struct MeanCurvatureDegenerate : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A displaced surface could not be re-represented as a radial graph, or an
// induced metric stopped being positive definite.
struct StarShapeLost : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Gauss-Newton drift correction stalled above tolerance.
struct DriftUncorrectable : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or out-of-contract configuration input (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace qlm
