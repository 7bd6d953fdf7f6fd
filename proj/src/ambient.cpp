#include "qlm/ambient.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace qlm {

Rotation::Rotation(const Eigen::Matrix3d& mat) {
  const double defect = (mat.transpose() * mat - Eigen::Matrix3d::Identity())
                            .cwiseAbs()
                            .maxCoeff();
  if (defect > 1e-12) {
    throw ConfigError(
        fmt::format("rotation matrix is not orthogonal (defect {:.3e})",
                    defect));
  }
  // Snap to the nearest orthogonal matrix (polar factor) so that composed
  // rotations never drift away from orthogonality.
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      mat, Eigen::ComputeFullU | Eigen::ComputeFullV);
  mat_ = svd.matrixU() * svd.matrixV().transpose();
}

Rotation Rotation::about_axis(const Eigen::Vector3d& axis, double angle) {
  const double n = axis.norm();
  if (n <= 0.0) throw ConfigError("rotation axis must be nonzero");
  return Rotation(Eigen::AngleAxisd(angle, axis / n).toRotationMatrix());
}

AmbientGeometry::AmbientGeometry(double mass) : m_(mass) {
  if (!(mass >= 0.0) || !std::isfinite(mass)) {
    throw ConfigError(fmt::format("mass must be finite and >= 0, got {}",
                                  mass));
  }
}

void AmbientGeometry::require_exterior(double r) const {
  if (!(r > 2.0 * m_)) {
    throw HorizonViolation(
        fmt::format("radius {} is not outside the horizon r = {}", r,
                    2.0 * m_));
  }
}

void AmbientGeometry::require_off_axis(double theta) {
  if (std::abs(std::sin(theta)) < pole_tolerance) {
    throw PoleSingularity(
        fmt::format("theta = {} lies on the polar axis", theta));
  }
}

double AmbientGeometry::static_potential(double r) const {
  require_exterior(r);
  return std::sqrt(1.0 - 2.0 * m_ / r);
}

double AmbientGeometry::static_potential_dr(double r) const {
  require_exterior(r);
  return m_ / (r * r * std::sqrt(1.0 - 2.0 * m_ / r));
}

double AmbientGeometry::static_potential_d2r(double r) const {
  require_exterior(r);
  const double vb = std::sqrt(1.0 - 2.0 * m_ / r);
  return -2.0 * m_ / (r * r * r * vb) -
         m_ * m_ / (r * r * r * r * vb * vb * vb);
}

Mat3 AmbientGeometry::metric(const AmbientPoint& p) const {
  require_exterior(p.r);
  require_off_axis(p.theta);
  const double s = std::sin(p.theta);
  Mat3 g = Mat3::Zero();
  g(0, 0) = 1.0 / (1.0 - 2.0 * m_ / p.r);
  g(1, 1) = p.r * p.r;
  g(2, 2) = p.r * p.r * s * s;
  return g;
}

Mat3 AmbientGeometry::metric_inverse(const AmbientPoint& p) const {
  require_exterior(p.r);
  require_off_axis(p.theta);
  const double s = std::sin(p.theta);
  Mat3 gi = Mat3::Zero();
  gi(0, 0) = 1.0 - 2.0 * m_ / p.r;
  gi(1, 1) = 1.0 / (p.r * p.r);
  gi(2, 2) = 1.0 / (p.r * p.r * s * s);
  return gi;
}

Christoffel3 AmbientGeometry::christoffel(const AmbientPoint& p) const {
  require_exterior(p.r);
  require_off_axis(p.theta);
  const double r = p.r;
  const double s = std::sin(p.theta);
  const double c = std::cos(p.theta);
  const double vb2 = 1.0 - 2.0 * m_ / r;

  Christoffel3 gam{Mat3::Zero(), Mat3::Zero(), Mat3::Zero()};
  // Upper index r.
  gam[0](0, 0) = -m_ / (r * (r - 2.0 * m_));
  gam[0](1, 1) = -vb2 * r;
  gam[0](2, 2) = -vb2 * r * s * s;
  // Upper index theta.
  gam[1](0, 1) = gam[1](1, 0) = 1.0 / r;
  gam[1](2, 2) = -s * c;
  // Upper index phi.
  gam[2](0, 2) = gam[2](2, 0) = 1.0 / r;
  gam[2](1, 2) = gam[2](2, 1) = c / s;
  return gam;
}

Mat3 AmbientGeometry::ricci(const AmbientPoint& p) const {
  require_exterior(p.r);
  require_off_axis(p.theta);
  const double r = p.r;
  const double s = std::sin(p.theta);
  Mat3 ric = Mat3::Zero();
  if (m_ != 0.0) {
    ric(0, 0) = -2.0 * m_ / (r * r * r * (1.0 - 2.0 * m_ / r));
    ric(1, 1) = m_ / r;
    ric(2, 2) = m_ / r * s * s;
  }
  return ric;
}

Mat3 AmbientGeometry::static_residual(const AmbientPoint& p) const {
  const double vb = static_potential(p.r);
  const double dv = static_potential_dr(p.r);
  const double d2v = static_potential_d2r(p.r);
  const Christoffel3 gam = christoffel(p);

  // Vbar depends on r only, so Hess_ij = d2v delta_i^r delta_j^r
  // - Gamma^r_ij * dv.
  Mat3 hess = -gam[0] * dv;
  hess(0, 0) += d2v;
  return hess - ricci(p) * vb;
}

double AmbientGeometry::ricci_norm_sq(double r) const {
  require_exterior(r);
  const double r3 = r * r * r;
  return 6.0 * m_ * m_ / (r3 * r3);
}

double AmbientGeometry::conformal_factor(double r) const {
  require_exterior(r);
  return m_ == 0.0 ? 0.0 : 2.0 * m_ / (r - 2.0 * m_);
}

double AmbientGeometry::conformal_factor_dr(double r) const {
  require_exterior(r);
  const double d = r - 2.0 * m_;
  return m_ == 0.0 ? 0.0 : -2.0 * m_ / (d * d);
}

double AmbientGeometry::ricci_radial(double r) const {
  require_exterior(r);
  return m_ == 0.0 ? 0.0
                   : -2.0 * m_ / (r * r * r * (1.0 - 2.0 * m_ / r));
}

double AmbientGeometry::ricci_tangential(double r) const {
  require_exterior(r);
  return m_ / (r * r * r);
}

Mat3 AmbientGeometry::metric_cartesian(const Vec3& x) const {
  const double r = x.norm();
  require_exterior(r);
  const Vec3 xh = x / r;
  return Mat3::Identity() + conformal_factor(r) * (xh * xh.transpose());
}

Mat3 AmbientGeometry::metric_inverse_cartesian(const Vec3& x) const {
  const double r = x.norm();
  require_exterior(r);
  const Vec3 xh = x / r;
  return Mat3::Identity() - (2.0 * m_ / r) * (xh * xh.transpose());
}

Christoffel3 AmbientGeometry::christoffel_cartesian(const Vec3& x) const {
  const double r = x.norm();
  require_exterior(r);
  const Vec3 xh = x / r;
  const double vb2 = 1.0 - 2.0 * m_ / r;
  const double c = conformal_factor(r);
  const double cp = conformal_factor_dr(r);
  const Mat3 proj = Mat3::Identity() - xh * xh.transpose();
  const Mat3 radial =
      0.5 * vb2 * (cp * (xh * xh.transpose()) + (2.0 * c / r) * proj);
  Christoffel3 gam;
  for (int i = 0; i < 3; ++i) gam[i] = radial * xh(i);
  return gam;
}

std::array<Mat3, 3> AmbientGeometry::metric_cartesian_d1(const Vec3& x) const {
  const double r = x.norm();
  require_exterior(r);
  const Vec3 xh = x / r;
  const double c = conformal_factor(r);
  const double cp = conformal_factor_dr(r);
  const Mat3 proj = Mat3::Identity() - xh * xh.transpose();
  std::array<Mat3, 3> d1;
  for (int k = 0; k < 3; ++k) {
    Mat3 m = cp * xh(k) * (xh * xh.transpose());
    // c(r)/r * (Pi_ki xhat_j + Pi_kj xhat_i) from differentiating xhat.
    m += (c / r) * (proj.col(k) * xh.transpose() + xh * proj.col(k).transpose());
    d1[k] = m;
  }
  return d1;
}

std::array<std::array<Mat3, 3>, 3> AmbientGeometry::metric_cartesian_d2(
    const Vec3& x) const {
  const double r = x.norm();
  require_exterior(r);
  const Vec3 xh = x / r;
  const double d = r - 2.0 * m_;
  const double c = conformal_factor(r);
  const double cp = conformal_factor_dr(r);
  const double cpp = m_ == 0.0 ? 0.0 : 4.0 * m_ / (d * d * d);
  const Mat3 proj = Mat3::Identity() - xh * xh.transpose();

  std::array<std::array<Mat3, 3>, 3> d2;
  for (int k = 0; k < 3; ++k) {
    const Vec3 pk = proj.col(k);
    for (int l = 0; l <= k; ++l) {
      const Vec3 pl = proj.col(l);
      const Mat3 rad = xh * xh.transpose();
      Mat3 m = cpp * xh(l) * xh(k) * rad;
      m += (cp / r) * (proj(k, l) * rad +
                       xh(k) * (pl * xh.transpose() + xh * pl.transpose()));
      m += (cp / r - c / (r * r)) * xh(l) *
           (pk * xh.transpose() + xh * pk.transpose());
      // d/dx^l of (c/r)(Pi_ki xhat_j + Pi_kj xhat_i) at fixed c/r, using
      // dPi_ki/dx^l = -(Pi_kl xhat_i + Pi_il xhat_k)/r and
      // dxhat_j/dx^l = Pi_jl/r.
      Mat3 t = -(proj(k, l) * xh + xh(k) * pl) * xh.transpose() +
               pk * pl.transpose();
      m += (c / (r * r)) * (t + t.transpose());
      d2[k][l] = m;
      d2[l][k] = m;
    }
  }
  return d2;
}

Mat3 AmbientGeometry::ricci_cartesian(const Vec3& x) const {
  const double r = x.norm();
  require_exterior(r);
  const Vec3 xh = x / r;
  const Mat3 rad = xh * xh.transpose();
  return ricci_radial(r) * rad +
         ricci_tangential(r) * (Mat3::Identity() - rad);
}

namespace {

// R_jk = d_i Gamma^i_jk - d_j Gamma^i_ik + Gamma^i_ip Gamma^p_jk
//        - Gamma^i_jp Gamma^p_ik, with dgamma[d][i](j,k) = d_d Gamma^i_jk.
Mat3 ricci_contraction(const Christoffel3& gamma,
                       const std::array<Christoffel3, 3>& dgamma) {
  Vec3 contracted = Vec3::Zero();  // Gamma^i_ip
  for (int p = 0; p < 3; ++p) {
    for (int i = 0; i < 3; ++i) contracted(p) += gamma[i](i, p);
  }

  Mat3 ricci = Mat3::Zero();
  for (int j = 0; j < 3; ++j) {
    for (int k = 0; k < 3; ++k) {
      double value = 0.0;
      for (int i = 0; i < 3; ++i) {
        value += dgamma[i][i](j, k) - dgamma[j][i](i, k);
      }
      for (int p = 0; p < 3; ++p) {
        value += contracted(p) * gamma[p](j, k);
        for (int i = 0; i < 3; ++i) {
          value -= gamma[i](j, p) * gamma[p](i, k);
        }
      }
      ricci(j, k) = value;
    }
  }
  return ricci;
}

}  // namespace

Mat3 ricci_assembled(const AmbientGeometry& ambient, const Vec3& x) {
  const Mat3 ginv = ambient.metric_inverse_cartesian(x);
  const std::array<Mat3, 3> d1 = ambient.metric_cartesian_d1(x);
  const auto d2 = ambient.metric_cartesian_d2(x);

  // Gamma^i_jk = 1/2 g^il (d_j g_lk + d_k g_lj - d_l g_jk), then its
  // coordinate derivative by the product rule with
  // d_d g^il = -(ginv d1[d] ginv)^il.
  const auto bracket = [&](const std::array<Mat3, 3>& dg, int l, int j,
                           int k) {
    return dg[j](l, k) + dg[k](l, j) - dg[l](j, k);
  };
  Christoffel3 gamma;
  for (int i = 0; i < 3; ++i) {
    gamma[i].setZero();
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) {
        for (int l = 0; l < 3; ++l) {
          gamma[i](j, k) += 0.5 * ginv(i, l) * bracket(d1, l, j, k);
        }
      }
    }
  }

  std::array<Christoffel3, 3> dgamma;
  for (int d = 0; d < 3; ++d) {
    const Mat3 dginv = -ginv * d1[d] * ginv;
    for (int i = 0; i < 3; ++i) {
      dgamma[d][i].setZero();
      for (int j = 0; j < 3; ++j) {
        for (int k = 0; k < 3; ++k) {
          for (int l = 0; l < 3; ++l) {
            dgamma[d][i](j, k) +=
                0.5 * dginv(i, l) * bracket(d1, l, j, k) +
                0.5 * ginv(i, l) * bracket(d2[d], l, j, k);
          }
        }
      }
    }
  }
  return ricci_contraction(gamma, dgamma);
}

Mat3 ricci_assembled_fd(const AmbientGeometry& ambient, const Vec3& x,
                        double step) {
  const Christoffel3 gamma = ambient.christoffel_cartesian(x);
  std::array<Christoffel3, 3> dgamma;
  for (int d = 0; d < 3; ++d) {
    Vec3 xp = x, xm = x;
    xp(d) += step;
    xm(d) -= step;
    const Christoffel3 plus = ambient.christoffel_cartesian(xp);
    const Christoffel3 minus = ambient.christoffel_cartesian(xm);
    for (int i = 0; i < 3; ++i) {
      dgamma[d][i] = (plus[i] - minus[i]) / (2.0 * step);
    }
  }
  return ricci_contraction(gamma, dgamma);
}

Vec3 unit_direction(double theta, double phi) {
  const double s = std::sin(theta);
  return Vec3(s * std::cos(phi), s * std::sin(phi), std::cos(theta));
}

AmbientPoint point_from_cartesian(const Vec3& x) {
  const double r = x.norm();
  AmbientPoint p;
  p.r = r;
  p.theta = std::acos(std::clamp(x(2) / r, -1.0, 1.0));
  p.phi = std::atan2(x(1), x(0));
  if (p.phi < 0.0) p.phi += 2.0 * M_PI;
  return p;
}

Vec3 cartesian_from_point(const AmbientPoint& p) {
  return p.r * unit_direction(p.theta, p.phi);
}

AmbientPoint apply_rotation(const Rotation& rot, const AmbientPoint& p) {
  return point_from_cartesian(rot.matrix() * cartesian_from_point(p));
}

}  // namespace qlm
