#pragma once

#include <memory>
#include <optional>
#include <utility>

#include "qlm/ambient.hpp"
#include "qlm/fields.hpp"

namespace qlm {

// A closed surface embedded in the ambient manifold, represented by the
// spectral coefficients of its Cartesian embedding components
// X^i: S^2 -> R^3 and sampled on the grid.  Star-shaped graphs
// X = rho(omega) nhat(omega) are the primary construction; congruent
// copies (rotated()) and displaced immersions reuse the same parameter
// identification, so two surfaces built on one grid are always compared
// node-by-node.
//
// Everything cached here is pointwise geometry: first/second fundamental
// forms, outward unit normal, mean and Gauss curvature, the restricted
// static potential and its normal derivative, ambient curvature
// contractions, coordinate Christoffel symbols, and the first partial
// derivatives of the metric (exact closed forms pushed through the chain
// rule, never finite differences).  All spectral differentiation happens
// on globally smooth scalars (the Cartesian components of points, normals
// and tangent fields), keeping every operator uniformly accurate up to
// the grid's polar caps.
class SurfaceGeometry {
 public:
  // Star-shaped graph over the coordinate sphere.
  SurfaceGeometry(const AmbientGeometry& ambient, const SphereGrid& grid,
                  const ScalarField& rho);
  // Immersion from Cartesian component coefficients (n_coeff x 3).
  static SurfaceGeometry from_components(const AmbientGeometry& ambient,
                                         const SphereGrid& grid,
                                         const MatX& xyz_coeffs);
  // Congruent copy under an ambient isometry; node k of the copy is the
  // rotated image of node k, so the shared-grid identification is the
  // congruence itself.
  SurfaceGeometry rotated(const Rotation& rot) const;
  // Surface moved by a per-node Cartesian displacement (projected back
  // to the grid bandlimit), keeping the material identification.
  SurfaceGeometry displaced(const MatX& node_displacement) const;

  const AmbientGeometry& ambient() const { return *ambient_; }
  const SphereGrid& grid() const { return *grid_; }

  // --- embedding -------------------------------------------------------
  const MatX& component_coeffs() const { return coeffs_; }
  const MatX& points() const { return points_; }         // n_nodes x 3
  const VecX& radius() const { return radius_; }
  // Radius values as a field; for graph-built surfaces this is the
  // defining rho.
  const ScalarField& rho() const { return rho_; }
  Vec3 point_at(double theta, double phi, int n_dth = 0, int n_dph = 0) const;
  const MatX& tangent_theta() const { return e_th_; }
  const MatX& tangent_phi() const { return e_ph_; }
  const MatX& normal() const { return normal_; }

  // --- first fundamental form ------------------------------------------
  const VecX& g_tt() const { return g_tt_; }
  const VecX& g_tp() const { return g_tp_; }
  const VecX& g_pp() const { return g_pp_; }
  const VecX& ginv_tt() const { return ginv_tt_; }
  const VecX& ginv_tp() const { return ginv_tp_; }
  const VecX& ginv_pp() const { return ginv_pp_; }
  // Area element sqrt(det g); integrate() divides out the round sin so
  // only smooth quantities multiply the quadrature weights.
  const VecX& area_element() const { return sqrt_det_g_; }
  SymTensorField metric() const;
  // Pointwise |sqrt(det g) - volume-form evaluation|: an independent
  // consistency check of the area element against the ambient volume
  // form contracted with the normal.
  VecX det_consistency_residual() const;

  // --- second fundamental form and curvature ---------------------------
  const VecX& h_tt() const { return h_tt_; }
  const VecX& h_tp() const { return h_tp_; }
  const VecX& h_pp() const { return h_pp_; }
  SymTensorField second_fundamental_form() const;
  const VecX& mean_curvature() const { return mean_curv_; }
  const VecX& h_norm_sq() const { return h_norm_sq_; }
  // Gauss curvature through the ambient curvature and fundamental forms.
  const VecX& gauss_curvature() const { return gauss_; }
  // Smallest principal curvature over all nodes; > 0 means strictly
  // convex.
  double min_principal_curvature() const { return min_principal_; }
  bool strictly_convex() const { return min_principal_ > 0.0; }

  // --- ambient restrictions --------------------------------------------
  const VecX& potential() const { return potential_; }              // V
  const VecX& normal_potential_derivative() const {                 // nu(Vbar)
    return normal_dpot_;
  }
  const VecX& ricci_normal_normal() const { return ric_nn_; }       // R_nunu
  const VecX& ricci_tangent_theta() const { return ric_tnu_th_; }   // R_thnu
  const VecX& ricci_tangent_phi() const { return ric_tnu_ph_; }     // R_phnu

  // --- coordinate connection -------------------------------------------
  const VecX& gamma_t_tt() const { return gamma_t_tt_; }
  const VecX& gamma_t_tp() const { return gamma_t_tp_; }
  const VecX& gamma_t_pp() const { return gamma_t_pp_; }
  const VecX& gamma_p_tt() const { return gamma_p_tt_; }
  const VecX& gamma_p_tp() const { return gamma_p_tp_; }
  const VecX& gamma_p_pp() const { return gamma_p_pp_; }

  // --- intrinsic operators ---------------------------------------------
  double integrate(const VecX& node_values) const;
  // Per-node quadrature weights against dsigma; integrate() is their dot
  // product with the integrand.
  const VecX& integration_weights() const { return int_w_; }
  double area() const { return area_; }
  // Pointwise squared norm g^{ac} g^{bd} S_ab S_cd of a symmetric tensor
  // in the induced metric.
  VecX tensor_norm_sq(const SymTensorField& s) const;
  // Covariant gradient components (df/dtheta, df/dphi).
  std::pair<VecX, VecX> gradient(const ScalarField& f) const;
  VecX laplace_beltrami(const ScalarField& f) const;
  // Divergence of a tangent field; exact image of the Helmholtz
  // decomposition (div P = Laplacian of the gradient potential).
  VecX divergence(const TangentField& field) const;
  // Surface covariant Hessian of a scalar, as a symmetric tensor field.
  SymTensorField hessian(const ScalarField& f) const;

  // --- tangent-field plumbing ------------------------------------------
  // Realize a tangent field from spectral potential coefficients (the
  // l = 0 modes are gauged away).
  TangentField realize_tangent(const VecX& f_coeffs,
                               const VecX& u_coeffs) const;
  // Recover potentials for given covariant components by two weighted
  // spectral Poisson solves; the returned field carries the realized
  // (re-synthesized) components.
  TangentField helmholtz_decompose(const VecX& cov_theta,
                                   const VecX& cov_phi) const;
  // Least-squares spectral solve of (Laplace-Beltrami) f = rhs with zero
  // round-sphere mean; the dense factorization is cached per surface.
  ScalarField poisson_solve(const VecX& rhs) const;

  // --- identity residuals ----------------------------------------------
  // The residual operators measure how well the bandlimited spectral
  // representation of the geometry satisfies the structure identities.
  // The curvature and potential fields being tested (smooth scalars on the
  // sphere) are projected to degree <= L and differentiated spectrally,
  // while frame-dependent quantities (metric components, Christoffels) are
  // evaluated exactly, so the residuals report pure truncation error and
  // decay spectrally under bandlimit refinement.  They are evaluated in
  // extended precision to keep the rounding floor below that signal.

  // Extrinsic-minus-intrinsic Gauss curvature (intrinsic side from the
  // metric components alone via the Brioschi formula).
  VecX gauss_residual() const;
  // div h - grad H - Ric(., nu) as covariant (theta, phi) components.
  std::pair<VecX, VecX> codazzi_residual() const;
  // Laplacian identity for the restricted potential:
  // Delta V + Ric(nu,nu) V + H nu(Vbar).
  VecX potential_laplace_residual() const;
  // Gradient identity for the normal potential derivative:
  // grad_a nu(Vbar) - Ric(e_a, nu) V - h_ab grad^b V.
  std::pair<VecX, VecX> potential_gradient_residual() const;

 private:
  struct IdentityResiduals {
    VecX gauss;
    VecX codazzi_th, codazzi_ph;
    VecX lap_v;
    VecX grad_v_th, grad_v_ph;
  };

  SurfaceGeometry(const AmbientGeometry& ambient, const SphereGrid& grid,
                  MatX coeffs, std::optional<ScalarField> graph_rho);
  void build();
  const Eigen::ColPivHouseholderQR<MatX>& poisson_qr() const;
  const IdentityResiduals& identity_residuals() const;

  const AmbientGeometry* ambient_;
  const SphereGrid* grid_;
  MatX coeffs_;  // n_coeff x 3 Cartesian component coefficients

  MatX points_, e_th_, e_ph_, normal_;
  MatX d2_tt_, d2_tp_, d2_pp_;  // second partials of X, n_nodes x 3
  ScalarField rho_;
  VecX radius_;
  VecX g_tt_, g_tp_, g_pp_, ginv_tt_, ginv_tp_, ginv_pp_, sqrt_det_g_;
  VecX dg_t_tt_, dg_t_tp_, dg_t_pp_, dg_p_tt_, dg_p_tp_, dg_p_pp_;
  VecX h_tt_, h_tp_, h_pp_, mean_curv_, h_norm_sq_, gauss_;
  VecX potential_, normal_dpot_, ric_nn_, ric_tnu_th_, ric_tnu_ph_;
  VecX gamma_t_tt_, gamma_t_tp_, gamma_t_pp_;
  VecX gamma_p_tt_, gamma_p_tp_, gamma_p_pp_;
  VecX lap_t_, lap_p_;  // g^{ab} Gamma^c_ab, the Laplacian drift terms
  VecX int_w_;          // quadrature weights against dsigma
  double min_principal_ = 0.0;
  double area_ = 0.0;

  mutable std::shared_ptr<Eigen::ColPivHouseholderQR<MatX>> poisson_qr_;
  mutable std::shared_ptr<const IdentityResiduals> identity_residuals_;
};

}  // namespace qlm
