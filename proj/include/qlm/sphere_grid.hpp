#pragma once

#include <array>
#include <map>

#include <Eigen/Dense>

#include "qlm/errors.hpp"

namespace qlm {

using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

// Gauss--Legendre x equispaced-longitude grid on the unit sphere together
// with exact real spherical-harmonic transforms up to a fixed bandlimit L.
//
// Layout
//   * n_lat = L + 1 colatitudes theta_i (ascending), the Gauss--Legendre
//     nodes of degree n_lat in x = cos(theta); n_lon = 2 n_lat equispaced
//     longitudes phi_j = 2 pi j / n_lon.  Nodes are flattened row-major,
//     k = i * n_lon + j (latitude-major).
//   * Coefficients use the real orthonormal basis
//       B_{l,0}  = Theta_{l,0}(theta) / sqrt(2 pi),
//       B_{l,+m} = Theta_{l,m}(theta) cos(m phi) / sqrt(pi),
//       B_{l,-m} = Theta_{l,m}(theta) sin(m phi) / sqrt(pi),
//     with Theta normalised so that int_0^pi Theta^2 sin(theta) dtheta = 1,
//     stored at coeff_index(l, m) = l^2 + l + m.
//
// The quadrature integrates products of two basis functions exactly, so
// analysis() inverts synthesis() to rounding error for band-limited data.
class SphereGrid {
 public:
  explicit SphereGrid(int bandlimit);

  int bandlimit() const { return L_; }
  int n_lat() const { return n_lat_; }
  int n_lon() const { return n_lon_; }
  int n_nodes() const { return n_lat_ * n_lon_; }
  int n_coeff() const { return (L_ + 1) * (L_ + 1); }

  static int coeff_index(int l, int m) { return l * l + l + m; }
  int node_index(int i, int j) const { return i * n_lon_ + j; }

  double theta(int i) const { return theta_(i); }
  double phi(int j) const { return phi_(j); }
  double node_theta(int k) const { return theta_(k / n_lon_); }
  double node_phi(int k) const { return phi_(k % n_lon_); }
  // Quadrature weight of node k; sum_k quad_weight(k) f(k) integrates f
  // over the round unit sphere.
  double quad_weight(int k) const { return qw_(k); }
  const VecX& quad_weights() const { return qw_; }

  // Node values -> coefficients (length n_coeff).
  VecX analysis(const VecX& values) const;
  // Coefficients -> node values; synthesis_d applies d^a/dtheta^a
  // d^b/dphi^b first, a + b <= 3.
  VecX synthesis(const VecX& coeffs) const { return synthesis_d(coeffs, 0, 0); }
  VecX synthesis_d(const VecX& coeffs, int n_dth, int n_dph) const;

  // Pointwise evaluation of a coefficient vector at an arbitrary
  // direction, with optional derivatives (a + b <= 3).  Derivatives in
  // theta require the direction to stay off the polar axis.
  double evaluate(const VecX& coeffs, double theta, double phi,
                  int n_dth = 0, int n_dph = 0) const;

  double integrate(const VecX& values) const { return qw_.dot(values); }

  // Basis functions of a sub-bandlimit evaluated at every node, with all
  // partial derivatives through second order: each matrix is
  // n_nodes x (sub_bandlimit+1)^2, column q = coeff_index(l, m).  Tables
  // are built once per sub-bandlimit and cached.
  struct BasisTables {
    MatX val, dth, dph, dthth, dthph, dphph;
  };
  const BasisTables& basis_tables(int sub_bandlimit) const;

 private:
  static int tri_index(int l, int m) { return l * (l + 1) / 2 + m; }
  // Theta_{l,m}(theta) and theta-derivatives through order max_order for
  // all 0 <= m <= l <= L_, written into rows[d][tri_index(l, m)].
  void legendre_block(double theta, int max_order,
                      std::array<VecX, 4>& rows) const;
  // Coefficients with d/dphi applied n times (cos/sin rotation by m).
  VecX phi_derivative(const VecX& coeffs, int n_dph) const;

  int L_;
  int n_lat_;
  int n_lon_;
  VecX gl_x_, gl_w_;  // Gauss--Legendre nodes (descending) and weights
  VecX theta_, phi_, qw_;
  std::array<MatX, 4> leg_;    // n_lat x n_tri, theta-derivative order 0..3
  MatX cos_table_, sin_table_; // (L+1) x n_lon: cos(m phi_j), sin(m phi_j)
  mutable std::map<int, BasisTables> tables_;
};

}  // namespace qlm
