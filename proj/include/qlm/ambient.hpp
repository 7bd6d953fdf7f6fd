#pragma once

#include <Eigen/Dense>
#include <array>

#include "qlm/errors.hpp"

namespace qlm {

// Point of the spatial slice in the (r, theta, phi) chart, r > 2m.
struct AmbientPoint {
  double r = 0.0;
  double theta = 0.0;
  double phi = 0.0;
};

// Element of O(3) acting on the spherical factor.  Reflections (det = -1)
// are admitted; only orthogonality is required.
class Rotation {
 public:
  Rotation() : mat_(Eigen::Matrix3d::Identity()) {}
  explicit Rotation(const Eigen::Matrix3d& mat);

  static Rotation identity() { return Rotation(); }
  static Rotation about_axis(const Eigen::Vector3d& axis, double angle);

  const Eigen::Matrix3d& matrix() const { return mat_; }
  Rotation inverse() const { return Rotation(mat_.transpose()); }
  Rotation operator*(const Rotation& other) const {
    return Rotation(mat_ * other.mat_);
  }

 private:
  Eigen::Matrix3d mat_;
};

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
// Christoffel symbols Gamma[i](j,k) = Gamma^i_{jk}.
using Christoffel3 = std::array<Mat3, 3>;

// The spatial Schwarzschild slice of mass m >= 0:
//
//   g = Vbar^{-2} dr^2 + r^2 (dtheta^2 + sin^2 theta dphi^2),
//   Vbar(r) = sqrt(1 - 2m/r),  r > 2m.
//
// m = 0 is flat space in spherical coordinates.  Every curvature quantity
// below is a closed form; the same slice is also exposed in the global
// Cartesian chart x = r nhat, where
//
//   g_ij = delta_ij + c(r) xhat_i xhat_j,   c(r) = 2m/(r - 2m),
//
// which is free of coordinate singularities away from the horizon and is
// what the embedded-surface calculus consumes.
class AmbientGeometry {
 public:
  explicit AmbientGeometry(double mass);

  double mass() const { return m_; }

  // --- static potential -----------------------------------------------
  double static_potential(double r) const;       // Vbar
  double static_potential_dr(double r) const;    // Vbar'
  double static_potential_d2r(double r) const;   // Vbar''

  // --- spherical chart ------------------------------------------------
  Mat3 metric(const AmbientPoint& p) const;
  Mat3 metric_inverse(const AmbientPoint& p) const;
  Christoffel3 christoffel(const AmbientPoint& p) const;
  Mat3 ricci(const AmbientPoint& p) const;
  // Hessian(Vbar) - Ric * Vbar; identically zero for the exact slice.
  Mat3 static_residual(const AmbientPoint& p) const;
  // |Ric|^2 = 6 m^2 / r^6.
  double ricci_norm_sq(double r) const;

  // --- Cartesian chart ------------------------------------------------
  double conformal_factor(double r) const;      // c(r) = 2m/(r-2m)
  double conformal_factor_dr(double r) const;   // c'(r)
  // Ric = alpha xhat xhat^T + beta (I - xhat xhat^T)
  double ricci_radial(double r) const;          // alpha = -2m/(r^3 Vbar^2)
  double ricci_tangential(double r) const;      // beta  =  m/r^3
  Mat3 metric_cartesian(const Vec3& x) const;
  Mat3 metric_inverse_cartesian(const Vec3& x) const;
  // Gamma^i_{jk} = 1/2 Vbar^2 (c' xhat_j xhat_k + (2c/r) Pi_jk) xhat^i.
  Christoffel3 christoffel_cartesian(const Vec3& x) const;
  Mat3 ricci_cartesian(const Vec3& x) const;
  // First and second coordinate derivatives of the Cartesian metric:
  // d1[k](i,j) = d g_ij / d x^k, d2[k][l](i,j) = d^2 g_ij / d x^k d x^l.
  std::array<Mat3, 3> metric_cartesian_d1(const Vec3& x) const;
  std::array<std::array<Mat3, 3>, 3> metric_cartesian_d2(const Vec3& x) const;

  // Guards: throw HorizonViolation / PoleSingularity.
  void require_exterior(double r) const;
  static void require_off_axis(double theta);

  static constexpr double pole_tolerance = 1e-12;

 private:
  double m_;
};

// Rotate a point about the coordinate origin; the radius is preserved.
AmbientPoint apply_rotation(const Rotation& rot, const AmbientPoint& p);

// Ricci tensor assembled through the standard curvature formula
// R_jk = d_i Gamma^i_jk - d_j Gamma^i_ik + Gamma Gamma from the closed
// first and second metric derivatives.  An independent cross-check of
// ricci_cartesian (which uses the radial/tangential eigenstructure
// instead); agrees to rounding.
Mat3 ricci_assembled(const AmbientGeometry& ambient, const Vec3& x);

// Same contraction but with the Christoffel derivatives taken by central
// finite differences of christoffel_cartesian (step `step` per
// coordinate); matches ricci_cartesian to O(step^2) and anchors the
// step-halving order checks.
Mat3 ricci_assembled_fd(const AmbientGeometry& ambient, const Vec3& x,
                        double step);

Vec3 unit_direction(double theta, double phi);
AmbientPoint point_from_cartesian(const Vec3& x);
Vec3 cartesian_from_point(const AmbientPoint& p);

}  // namespace qlm
