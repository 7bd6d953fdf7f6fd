#pragma once

// JSON serialization: mass reports, surfaces, and continuation step logs.
//
// All documents use nlohmann's ordered_json so key order is the insertion
// order fixed here; combined with the library's shortest-round-trip double
// formatting, identical inputs yield byte-identical documents.  Reports add a
// single nondeterministic field, "generated_at" (see write_report in the
// experiment module), which consumers strip before diffing.

#include <string>

#include <json.hpp>

#include "qlm/continuation.hpp"
#include "qlm/fields.hpp"
#include "qlm/mass.hpp"
#include "qlm/sphere_grid.hpp"
#include "qlm/surface.hpp"

namespace qlm {

using Json = nlohmann::ordered_json;

// Mass report with the struct's field names verbatim; penrose_margin is
// null when the hypotheses fail.
Json to_json(const MassReport& report);

// Star-shaped surface as {"mass", "bandlimit", "n_lat", "n_lon", "rho"} with
// the radius sampled row-major over the grid (latitude-major, the grid's
// node order).
Json surface_to_json(const SurfaceGeometry& surf);

// Radius field from a surface document, re-expressed on `grid`: the stored
// samples are analyzed on the document's own grid and the coefficients
// carried over degree by degree (degrees above the target bandlimit are
// dropped).  Throws ConfigError if required keys are missing, sizes are
// inconsistent, or the document's mass differs from expected_mass by more
// than 1e-12.
ScalarField rho_from_json(const Json& doc, const SphereGrid& grid,
                          double expected_mass);

// One continuation step as a flat record: {"s", "energy", "drift", "h_min",
// "h_prime_min", "sigma_convex", "sigma_prime_convex", "solver_residual",
// "kernel_dim"}.
Json step_to_json(const ContinuationStep& step);

// JSON-lines step log, one compact step record per line.
void write_family_log(const std::string& path,
                      const ContinuationFamily& family);

// Pretty-printed document with a trailing newline.  Throws ConfigError if
// the path cannot be opened.
void save_json(const std::string& path, const Json& doc);

// Parses a JSON file; throws ConfigError with the parser's diagnostic on
// failure or if the file cannot be read.
Json load_json(const std::string& path);

// Current UTC time, ISO 8601 (the one field that varies between runs).
std::string timestamp_utc();

}  // namespace qlm
