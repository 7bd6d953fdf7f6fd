#pragma once

#include <optional>

#include "qlm/sphere_grid.hpp"

namespace qlm {

// Real scalar field sampled at every grid node.  Immutable; the spectral
// coefficients are computed on first use and cached, so repeated
// differentiation of one field analyses it only once.
class ScalarField {
 public:
  ScalarField(const SphereGrid& grid, VecX values);
  static ScalarField from_coeffs(const SphereGrid& grid, const VecX& coeffs);
  static ScalarField constant(const SphereGrid& grid, double value);

  const SphereGrid& grid() const { return *grid_; }
  const VecX& values() const { return values_; }
  double value(int node) const { return values_(node); }
  const VecX& coeffs() const;

  // Node values of d^a/dtheta^a d^b/dphi^b of the band-limited
  // interpolant, a + b <= 3.
  VecX derivative(int n_dth, int n_dph) const;
  double evaluate(double theta, double phi, int n_dth = 0,
                  int n_dph = 0) const;

  double min_value() const { return values_.minCoeff(); }
  double max_value() const { return values_.maxCoeff(); }
  double sup_norm() const { return values_.cwiseAbs().maxCoeff(); }

 private:
  const SphereGrid* grid_;
  VecX values_;
  mutable std::optional<VecX> coeffs_;
};

// Symmetric 2-tensor field in the (theta, phi) coordinate frame; aa, ab,
// bb are the theta-theta, theta-phi, phi-phi components.
class SymTensorField {
 public:
  SymTensorField(ScalarField aa, ScalarField ab, ScalarField bb);

  const SphereGrid& grid() const { return aa_.grid(); }
  const ScalarField& aa() const { return aa_; }
  const ScalarField& ab() const { return ab_; }
  const ScalarField& bb() const { return bb_; }

  // Largest absolute coordinate component over all nodes.
  double sup_norm() const;
  SymTensorField operator-(const SymTensorField& other) const;
  SymTensorField operator+(const SymTensorField& other) const;
  SymTensorField operator*(double scale) const;

 private:
  ScalarField aa_, ab_, bb_;
};

// Tangential vector field on an embedded surface, carried by its
// Helmholtz potentials (f, u) with respect to the surface metric,
//
//   P_a = grad_a f + eps_a{}^b grad_b u,
//
// together with the realized covariant coordinate components produced by
// the owning surface.  Both potentials are gauged to zero round-sphere
// mean (their l = 0 coefficient vanishes); surfaces construct instances
// via SurfaceGeometry::realize_tangent / helmholtz_decompose.
class TangentField {
 public:
  TangentField(ScalarField f, ScalarField u, VecX cov_theta, VecX cov_phi);

  const SphereGrid& grid() const { return f_.grid(); }
  const ScalarField& potential_f() const { return f_; }
  const ScalarField& potential_u() const { return u_; }
  const VecX& cov_theta() const { return cov_theta_; }
  const VecX& cov_phi() const { return cov_phi_; }

  double sup_norm() const;

 private:
  ScalarField f_, u_;
  VecX cov_theta_, cov_phi_;
};

}  // namespace qlm
