#pragma once

// Seeded random band-limited fields for the verification suites.
//
// Every random quantity in the project flows through RandomStream so that a
// config seed fully determines pass/fail.  The algorithm is frozen under the
// name "qlm-rng-v1" (the config schema pins that name): changing any detail
// below is a format break and requires a new version string.
//
//   - std::mt19937_64 seeded directly with the 64-bit seed;
//   - uniforms in [0, 1) as (x >> 11) * 2^-53 from raw engine output;
//   - normals by the Box-Muller transform from uniform pairs.
//
// Box-Muller is spelled out instead of std::normal_distribution because the
// standard leaves that distribution's algorithm unspecified, which would make
// seeded results differ across toolchains.

#include <cstdint>
#include <random>

#include "qlm/fields.hpp"
#include "qlm/sphere_grid.hpp"

namespace qlm {

class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1), 53-bit resolution.
  double uniform();

  // Standard normal.  Box-Muller produces pairs; the second value is cached,
  // so draws stay aligned with the stream only through this interface.
  double normal();

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// Highest harmonic degree carried by random fields.  Coefficients are always
// drawn for every degree up to this cap, in ascending (l, m) order with m
// running -l..l, so the stream position after a draw does not depend on the
// grid; degrees above the grid's bandlimit are discarded.  A given seed hence
// produces the same field on every grid with bandlimit >= 8.
inline constexpr int kRandomFieldDegree = 8;

// Band-limited scalar field with coefficient c_{lm} = N(0,1) / (1 + l(l+1)).
ScalarField random_scalar_field(const SphereGrid& grid, RandomStream& stream);

// Same draw, then shifted by -min + margin so the result is >= margin
// everywhere (flow speeds constrained to be nonnegative use this).
ScalarField random_positive_field(const SphereGrid& grid, RandomStream& stream,
                                  double margin = 0.1);

}  // namespace qlm
