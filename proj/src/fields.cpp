#include "qlm/fields.hpp"

#include <fmt/format.h>

namespace qlm {

ScalarField::ScalarField(const SphereGrid& grid, VecX values)
    : grid_(&grid), values_(std::move(values)) {
  if (values_.size() != grid.n_nodes()) {
    throw ConfigError(fmt::format(
        "scalar field has {} values, grid expects {}", values_.size(),
        grid.n_nodes()));
  }
  if (!values_.allFinite()) {
    throw ConfigError("scalar field contains non-finite values");
  }
}

ScalarField ScalarField::from_coeffs(const SphereGrid& grid,
                                     const VecX& coeffs) {
  ScalarField field(grid, grid.synthesis(coeffs));
  field.coeffs_ = coeffs;
  return field;
}

ScalarField ScalarField::constant(const SphereGrid& grid, double value) {
  return ScalarField(grid, VecX::Constant(grid.n_nodes(), value));
}

const VecX& ScalarField::coeffs() const {
  if (!coeffs_) coeffs_ = grid_->analysis(values_);
  return *coeffs_;
}

VecX ScalarField::derivative(int n_dth, int n_dph) const {
  return grid_->synthesis_d(coeffs(), n_dth, n_dph);
}

double ScalarField::evaluate(double theta, double phi, int n_dth,
                             int n_dph) const {
  return grid_->evaluate(coeffs(), theta, phi, n_dth, n_dph);
}

namespace {

void require_same_grid(const SphereGrid& a, const SphereGrid& b) {
  if (&a != &b) {
    throw ConfigError("fields live on different grids");
  }
}

}  // namespace

SymTensorField::SymTensorField(ScalarField aa, ScalarField ab, ScalarField bb)
    : aa_(std::move(aa)), ab_(std::move(ab)), bb_(std::move(bb)) {
  require_same_grid(aa_.grid(), ab_.grid());
  require_same_grid(aa_.grid(), bb_.grid());
}

double SymTensorField::sup_norm() const {
  return std::max({aa_.sup_norm(), ab_.sup_norm(), bb_.sup_norm()});
}

SymTensorField SymTensorField::operator-(const SymTensorField& other) const {
  require_same_grid(grid(), other.grid());
  return SymTensorField(
      ScalarField(grid(), aa_.values() - other.aa_.values()),
      ScalarField(grid(), ab_.values() - other.ab_.values()),
      ScalarField(grid(), bb_.values() - other.bb_.values()));
}

SymTensorField SymTensorField::operator+(const SymTensorField& other) const {
  require_same_grid(grid(), other.grid());
  return SymTensorField(
      ScalarField(grid(), aa_.values() + other.aa_.values()),
      ScalarField(grid(), ab_.values() + other.ab_.values()),
      ScalarField(grid(), bb_.values() + other.bb_.values()));
}

SymTensorField SymTensorField::operator*(double scale) const {
  return SymTensorField(ScalarField(grid(), aa_.values() * scale),
                        ScalarField(grid(), ab_.values() * scale),
                        ScalarField(grid(), bb_.values() * scale));
}

TangentField::TangentField(ScalarField f, ScalarField u, VecX cov_theta,
                           VecX cov_phi)
    : f_(std::move(f)),
      u_(std::move(u)),
      cov_theta_(std::move(cov_theta)),
      cov_phi_(std::move(cov_phi)) {
  require_same_grid(f_.grid(), u_.grid());
  const int n = f_.grid().n_nodes();
  if (cov_theta_.size() != n || cov_phi_.size() != n) {
    throw ConfigError("tangent field components do not match the grid");
  }
  const double mean_scale =
      std::max({1.0, f_.sup_norm(), u_.sup_norm()});
  if (std::abs(f_.coeffs()(0)) > 1e-10 * mean_scale ||
      std::abs(u_.coeffs()(0)) > 1e-10 * mean_scale) {
    throw ConfigError("tangent-field potentials must have zero mean");
  }
}

double TangentField::sup_norm() const {
  return std::max(cov_theta_.cwiseAbs().maxCoeff(),
                  cov_phi_.cwiseAbs().maxCoeff());
}

}  // namespace qlm
