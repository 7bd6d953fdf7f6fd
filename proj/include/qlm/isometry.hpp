#pragma once

#include <memory>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qlm/surface.hpp"

namespace qlm {

// First-order deformation data tying a reference surface Sigma' to a
// matching surface Sigma: F is the normal speed driving Sigma', while
// (G, P) are the normal and tangential components of the deformation of
// Sigma that keeps the induced metrics equal to first order,
//
//   2 G h_ab + nabla_a P_b + nabla_b P_a  =  2 F h'_ab.
//
// residual_norm is the relative L2(dsigma) residual of that system,
// recomputed from the returned fields.  The solution is gauge-fixed
// orthogonal (in the induced L2 inner product) to the detected kernel of
// metric-preserving data; the components removed are kept in
// gauge_report, one entry per kernel direction.
struct VariationDatum {
  ScalarField F;
  ScalarField G;
  TangentField P;
  double residual_norm = 0.0;
  int kernel_dim = 0;
  VecX gauge_report;
};

// Symmetrized covariant gradient nabla_a P_b + nabla_b P_a, computed
// through the field's Helmholtz potentials: the gradient part contributes
// twice its covariant Hessian and the curl part an epsilon-rotated
// Hessian, both exact in band.
SymTensorField symmetric_gradient(const SurfaceGeometry& surf,
                                  const TangentField& p);

// First-order change of the induced metric under the deformation
// G nu + P:  delta g_ab = 2 G h_ab + nabla_a P_b + nabla_b P_a.
SymTensorField metric_variation(const SurfaceGeometry& surf,
                                const ScalarField& g_normal,
                                const TangentField& p);

// Relative L2(dsigma) residual of the matching system for the given
// fields: |metric_variation(sigma, G, P) - 2 F h'| / |2 F h'|.  Falls
// back to the absolute residual when the right-hand side vanishes.
double variation_residual(const SurfaceGeometry& sigma,
                          const SurfaceGeometry& sigma_prime,
                          const ScalarField& f, const ScalarField& g_normal,
                          const TangentField& p);

// Deformation data induced by the ambient rotation field X = axis x
// position, a Killing field of the rotationally symmetric ambient:
// G = <X, nu> and P the tangential part of X (projected through its
// Helmholtz potentials).  metric_variation of this data vanishes up to
// spectral truncation on any surface.
std::pair<ScalarField, TangentField> rotation_data(const SurfaceGeometry& surf,
                                                   const Vec3& axis);

// Same for a constant translation field; an ambient Killing field only in
// the flat (m = 0) limit.
std::pair<ScalarField, TangentField> translation_data(
    const SurfaceGeometry& surf, const Vec3& direction);

// Dense least-squares solver for the linearized matching system over the
// spherical-harmonic coefficients of (G, f, u), where (f, u) are the
// Helmholtz potentials of P, up to a configurable solver band (default:
// the grid bandlimit).  Rows are weighted so the minimized quantity is
// the L2(dsigma) norm of the symmetric-tensor residual; columns are
// scaled by 1/(1 + l(l+1)) on the potential blocks to balance the two
// derivative orders.
//
// A rank-revealing factorization (blocked QR, then an SVD of the
// triangular factor) detects the kernel -- deformation data that do not
// change the metric.  Generic convex surfaces carry exactly the three
// ambient rotations; round spheres add an umbilic bending family of
// degree-one data (aligned with the translations in the flat limit), and
// the flat ambient adds the translations themselves, so up to six
// directions are legitimate.  A kernel larger than six means the system
// is defective -> SolverFailure.  The detected dimension is reported, not
// assumed.
class VariationSolver {
 public:
  // Factors the operator of sigma; throws ConvexityViolation unless sigma
  // is strictly convex, SolverFailure on a defective kernel.
  explicit VariationSolver(const SurfaceGeometry& sigma, int band = -1);

  const SurfaceGeometry& sigma() const { return *sigma_; }
  int band() const { return band_; }
  int kernel_dim() const { return kernel_dim_; }
  // Detected kernel realized as deformation fields, orthonormal in the
  // induced L2 inner product.
  const std::vector<std::pair<ScalarField, TangentField>>& kernel_fields()
      const {
    return kernel_fields_;
  }

  // Least-squares (G, P) with metric_variation(sigma, G, P) ~ target,
  // gauge-fixed against the kernel; the removed components are written to
  // gauge_report when given.
  std::pair<ScalarField, TangentField> solve_displacement(
      const SymTensorField& target, VecX* gauge_report = nullptr) const;

  // Full solve against the right-hand side 2 F h'_ab; sigma_prime must
  // live on the same grid.
  VariationDatum solve(const SurfaceGeometry& sigma_prime,
                       const ScalarField& f) const;

 private:
  VecX least_squares(const VecX& packed_rhs) const;
  VecX project_out_kernel(VecX coeffs, VecX* gauge_report) const;
  std::pair<ScalarField, TangentField> realize(const VecX& coeffs) const;
  VecX pack_rows(const SymTensorField& s) const;

  const SurfaceGeometry* sigma_;
  int band_ = 0;
  int nb_ = 0;      // (band+1)^2 coefficients per block
  int n_cols_ = 0;  // 3 nb - 2 unknowns (potentials drop l = 0)
  VecX col_scale_;
  VecX lw11_, lw21_, lw22_, lw31_, lw32_, lw33_;  // weighted row Cholesky
  std::shared_ptr<Eigen::HouseholderQR<MatX>> qr_;
  std::shared_ptr<Eigen::BDCSVD<MatX>> svd_;
  int kernel_dim_ = 0;
  std::vector<VecX> kernel_coeffs_;  // unscaled, L2-orthonormalized
  std::vector<std::pair<ScalarField, TangentField>> kernel_fields_;
};

// One-shot convenience wrapper: factor sigma's operator and solve for the
// deformation matching sigma_prime under normal speed F.
VariationDatum solve_linearized_isometry(const SurfaceGeometry& sigma,
                                         const SurfaceGeometry& sigma_prime,
                                         const ScalarField& f);

// Normal speed recovered from the trace of the matching system,
// F = G + (div P) / H.  Throws MeanCurvatureDegenerate when min |H| falls
// below h_floor: the division is meaningless near a degenerate mean
// curvature and we refuse to regularize it.
ScalarField trace_reduction(const SurfaceGeometry& surf,
                            const ScalarField& g_normal, const TangentField& p,
                            double h_floor = 1e-8);

// Residual of the trace-eliminated form of the matching system,
//   2 F (h' - h)_ab - (nabla_a P_b + nabla_b P_a - 2 (h_ab / H) div P),
// which vanishes exactly on solutions with equal mean curvatures.  Bounded
// by a grid constant times the matching residual for solver output.
SymTensorField traceless_residual(const SurfaceGeometry& sigma,
                                  const SurfaceGeometry& sigma_prime,
                                  const ScalarField& f,
                                  const ScalarField& g_normal,
                                  const TangentField& p,
                                  double h_floor = 1e-8);

}  // namespace qlm
