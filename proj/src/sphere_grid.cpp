#include "qlm/sphere_grid.hpp"

#include <cmath>

#include <fmt/format.h>

#include "qlm/detail/legendre.hpp"

namespace qlm {

SphereGrid::SphereGrid(int bandlimit) : L_(bandlimit) {
  if (bandlimit < 1) {
    throw ConfigError(
        fmt::format("bandlimit must be at least 1, got {}", bandlimit));
  }
  n_lat_ = L_ + 1;
  n_lon_ = 2 * n_lat_;

  // Gauss--Legendre nodes of degree n_lat in x = cos(theta); roots come
  // out in descending x, i.e. ascending theta.
  detail::gauss_legendre<double>(n_lat_, gl_x_, gl_w_);

  theta_.resize(n_lat_);
  for (int i = 0; i < n_lat_; ++i) theta_(i) = std::acos(gl_x_(i));
  phi_.resize(n_lon_);
  for (int j = 0; j < n_lon_; ++j) phi_(j) = 2.0 * M_PI * j / n_lon_;

  qw_.resize(n_nodes());
  const double lon_w = 2.0 * M_PI / n_lon_;
  for (int i = 0; i < n_lat_; ++i)
    for (int j = 0; j < n_lon_; ++j) qw_(node_index(i, j)) = gl_w_(i) * lon_w;

  const int n_tri = (L_ + 1) * (L_ + 2) / 2;
  for (auto& mat : leg_) mat.resize(n_lat_, n_tri);
  std::array<VecX, 4> rows;
  for (int i = 0; i < n_lat_; ++i) {
    legendre_block(theta_(i), 3, rows);
    for (int d = 0; d < 4; ++d) leg_[d].row(i) = rows[d].transpose();
  }

  cos_table_.resize(L_ + 1, n_lon_);
  sin_table_.resize(L_ + 1, n_lon_);
  for (int m = 0; m <= L_; ++m)
    for (int j = 0; j < n_lon_; ++j) {
      cos_table_(m, j) = std::cos(m * phi_(j));
      sin_table_(m, j) = std::sin(m * phi_(j));
    }
}

void SphereGrid::legendre_block(double theta, int max_order,
                                std::array<VecX, 4>& rows) const {
  detail::legendre_block<double>(L_, theta, max_order, rows);
}

VecX SphereGrid::phi_derivative(const VecX& coeffs, int n_dph) const {
  VecX b = coeffs;
  for (int it = 0; it < n_dph; ++it) {
    VecX c = VecX::Zero(b.size());
    for (int l = 1; l <= L_; ++l) {
      for (int m = 1; m <= l; ++m) {
        c(coeff_index(l, m)) = m * b(coeff_index(l, -m));
        c(coeff_index(l, -m)) = -m * b(coeff_index(l, m));
      }
    }
    b.swap(c);
  }
  return b;
}

VecX SphereGrid::synthesis_d(const VecX& coeffs, int n_dth, int n_dph) const {
  if (coeffs.size() != n_coeff()) {
    throw ConfigError(fmt::format(
        "coefficient vector has length {}, grid expects {}", coeffs.size(),
        n_coeff()));
  }
  if (n_dth < 0 || n_dph < 0 || n_dth + n_dph > 3) {
    throw ConfigError(fmt::format(
        "derivative order ({}, {}) outside the supported range", n_dth,
        n_dph));
  }
  const VecX b = phi_derivative(coeffs, n_dph);
  const MatX& tab = leg_[n_dth];
  const double k0 = 1.0 / std::sqrt(2.0 * M_PI);
  const double k1 = 1.0 / std::sqrt(M_PI);

  MatX gc = MatX::Zero(n_lat_, L_ + 1);
  MatX gs = MatX::Zero(n_lat_, L_ + 1);
  for (int m = 0; m <= L_; ++m) {
    for (int l = m; l <= L_; ++l) {
      const int t = tri_index(l, m);
      if (m == 0) {
        gc.col(0) += (k0 * b(coeff_index(l, 0))) * tab.col(t);
      } else {
        gc.col(m) += (k1 * b(coeff_index(l, m))) * tab.col(t);
        gs.col(m) += (k1 * b(coeff_index(l, -m))) * tab.col(t);
      }
    }
  }
  const MatX vals = gc * cos_table_ + gs * sin_table_;
  VecX out(n_nodes());
  for (int i = 0; i < n_lat_; ++i)
    out.segment(i * n_lon_, n_lon_) = vals.row(i).transpose();
  return out;
}

VecX SphereGrid::analysis(const VecX& values) const {
  if (values.size() != n_nodes()) {
    throw ConfigError(fmt::format(
        "value vector has length {}, grid expects {}", values.size(),
        n_nodes()));
  }
  MatX vmat(n_lat_, n_lon_);
  for (int i = 0; i < n_lat_; ++i)
    vmat.row(i) = values.segment(i * n_lon_, n_lon_).transpose();

  const double lon_w = 2.0 * M_PI / n_lon_;
  const MatX fc = lon_w * (vmat * cos_table_.transpose());
  const MatX fs = lon_w * (vmat * sin_table_.transpose());
  const double k0 = 1.0 / std::sqrt(2.0 * M_PI);
  const double k1 = 1.0 / std::sqrt(M_PI);

  VecX a = VecX::Zero(n_coeff());
  for (int m = 0; m <= L_; ++m) {
    for (int l = m; l <= L_; ++l) {
      const int t = tri_index(l, m);
      const VecX wth = gl_w_.cwiseProduct(leg_[0].col(t));
      if (m == 0) {
        a(coeff_index(l, 0)) = k0 * wth.dot(fc.col(0));
      } else {
        a(coeff_index(l, m)) = k1 * wth.dot(fc.col(m));
        a(coeff_index(l, -m)) = k1 * wth.dot(fs.col(m));
      }
    }
  }
  return a;
}

double SphereGrid::evaluate(const VecX& coeffs, double theta, double phi,
                            int n_dth, int n_dph) const {
  if (coeffs.size() != n_coeff()) {
    throw ConfigError(fmt::format(
        "coefficient vector has length {}, grid expects {}", coeffs.size(),
        n_coeff()));
  }
  if (n_dth < 0 || n_dph < 0 || n_dth + n_dph > 3) {
    throw ConfigError(fmt::format(
        "derivative order ({}, {}) outside the supported range", n_dth,
        n_dph));
  }
  if (n_dth > 0 && std::abs(std::sin(theta)) < 1e-12) {
    throw PoleSingularity(fmt::format(
        "theta-derivative evaluation at theta = {} on the polar axis",
        theta));
  }
  const VecX b = phi_derivative(coeffs, n_dph);
  std::array<VecX, 4> rows;
  legendre_block(theta, n_dth, rows);
  const VecX& tab = rows[n_dth];
  const double k0 = 1.0 / std::sqrt(2.0 * M_PI);
  const double k1 = 1.0 / std::sqrt(M_PI);

  double acc = 0.0;
  for (int m = 0; m <= L_; ++m) {
    double cm = 0.0, sm = 0.0;
    for (int l = m; l <= L_; ++l) {
      const int t = tri_index(l, m);
      if (m == 0) {
        cm += k0 * b(coeff_index(l, 0)) * tab(t);
      } else {
        cm += k1 * b(coeff_index(l, m)) * tab(t);
        sm += k1 * b(coeff_index(l, -m)) * tab(t);
      }
    }
    acc += cm * std::cos(m * phi) + sm * std::sin(m * phi);
  }
  return acc;
}

const SphereGrid::BasisTables& SphereGrid::basis_tables(
    int sub_bandlimit) const {
  if (sub_bandlimit < 0 || sub_bandlimit > L_) {
    throw ConfigError(fmt::format(
        "sub-bandlimit {} outside [0, {}]", sub_bandlimit, L_));
  }
  auto it = tables_.find(sub_bandlimit);
  if (it != tables_.end()) return it->second;

  const int nb = (sub_bandlimit + 1) * (sub_bandlimit + 1);
  BasisTables tab;
  for (MatX* mat : {&tab.val, &tab.dth, &tab.dph, &tab.dthth, &tab.dthph,
                    &tab.dphph}) {
    mat->resize(n_nodes(), nb);
  }
  const double k0 = 1.0 / std::sqrt(2.0 * M_PI);
  const double k1 = 1.0 / std::sqrt(M_PI);
  for (int i = 0; i < n_lat_; ++i) {
    for (int j = 0; j < n_lon_; ++j) {
      const int k = node_index(i, j);
      for (int l = 0; l <= sub_bandlimit; ++l) {
        for (int m = 0; m <= l; ++m) {
          const int t = tri_index(l, m);
          const double th0 = leg_[0](i, t);
          const double th1 = leg_[1](i, t);
          const double th2 = leg_[2](i, t);
          const double c = cos_table_(m, j);
          const double s = sin_table_(m, j);
          if (m == 0) {
            const int q = coeff_index(l, 0);
            tab.val(k, q) = k0 * th0;
            tab.dth(k, q) = k0 * th1;
            tab.dph(k, q) = 0.0;
            tab.dthth(k, q) = k0 * th2;
            tab.dthph(k, q) = 0.0;
            tab.dphph(k, q) = 0.0;
          } else {
            const int qc = coeff_index(l, m);
            const int qs = coeff_index(l, -m);
            tab.val(k, qc) = k1 * th0 * c;
            tab.val(k, qs) = k1 * th0 * s;
            tab.dth(k, qc) = k1 * th1 * c;
            tab.dth(k, qs) = k1 * th1 * s;
            tab.dph(k, qc) = -m * k1 * th0 * s;
            tab.dph(k, qs) = m * k1 * th0 * c;
            tab.dthth(k, qc) = k1 * th2 * c;
            tab.dthth(k, qs) = k1 * th2 * s;
            tab.dthph(k, qc) = -m * k1 * th1 * s;
            tab.dthph(k, qs) = m * k1 * th1 * c;
            tab.dphph(k, qc) = -m * m * k1 * th0 * c;
            tab.dphph(k, qs) = -m * m * k1 * th0 * s;
          }
        }
      }
    }
  }
  auto [pos, inserted] = tables_.emplace(sub_bandlimit, std::move(tab));
  return pos->second;
}

}  // namespace qlm
