#include "qlm/random_fields.hpp"

#include <cmath>

namespace qlm {

double RandomStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RandomStream::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  // Box-Muller; reject u1 == 0 so the log stays finite.
  double u1 = uniform();
  while (u1 == 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * M_PI * u2;
  cached_ = radius * std::sin(angle);
  has_cached_ = true;
  return radius * std::cos(angle);
}

ScalarField random_scalar_field(const SphereGrid& grid, RandomStream& stream) {
  VecX coeffs = VecX::Zero(grid.n_coeff());
  for (int l = 0; l <= kRandomFieldDegree; ++l) {
    const double decay = 1.0 / (1.0 + l * (l + 1));
    for (int m = -l; m <= l; ++m) {
      const double draw = stream.normal();  // consumed even when discarded
      if (l <= grid.bandlimit()) {
        coeffs(SphereGrid::coeff_index(l, m)) = decay * draw;
      }
    }
  }
  return ScalarField::from_coeffs(grid, coeffs);
}

ScalarField random_positive_field(const SphereGrid& grid, RandomStream& stream,
                                  double margin) {
  const ScalarField draw = random_scalar_field(grid, stream);
  return ScalarField(grid,
                     draw.values().array() - draw.min_value() + margin);
}

}  // namespace qlm
