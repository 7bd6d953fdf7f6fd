#pragma once

// Precision-templated building blocks shared by the spherical-harmonic
// machinery: Gauss--Legendre nodes/weights and normalized associated
// Legendre function rows.  Instantiated with double by the main transform
// engine, and with long double by the identity-residual instruments, which
// evaluate the discrete identities in extended precision so that the
// bandlimit truncation error is measured well above the rounding floor.

#include <array>
#include <cmath>
#include <limits>
#include <utility>

#include <Eigen/Dense>

namespace qlm::detail {

template <typename Real>
using VecR = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

// Packed (l, m) index for m >= 0 triangles, row l starting at l(l+1)/2.
inline int tri_index(int l, int m) { return l * (l + 1) / 2 + m; }

// P_n(x) and P_{n-1}(x) via the three-term recurrence.
template <typename Real>
std::pair<Real, Real> legendre_pair(int n, Real x) {
  Real p_prev = Real(1);
  Real p = x;
  for (int k = 2; k <= n; ++k) {
    const Real p_next = ((2 * k - 1) * x * p - (k - 1) * p_prev) / Real(k);
    p_prev = p;
    p = p_next;
  }
  return {p, p_prev};
}

// Gauss--Legendre nodes (descending in x = cos(theta), i.e. ascending
// colatitude) and weights, by Newton iteration from the Chebyshev-like
// initial guess.
template <typename Real>
void gauss_legendre(int n, VecR<Real>& x, VecR<Real>& w) {
  x.resize(n);
  w.resize(n);
  const Real pi = std::acos(Real(-1));
  const Real tol = Real(10) * std::numeric_limits<Real>::epsilon();
  for (int i = 0; i < n; ++i) {
    Real xi = std::cos(pi * (Real(i) + Real(0.75)) / (Real(n) + Real(0.5)));
    Real dp = Real(0);
    for (int it = 0; it < 200; ++it) {
      const auto [p, p_prev] = legendre_pair(n, xi);
      dp = Real(n) * (xi * p - p_prev) / (xi * xi - Real(1));
      const Real dx = p / dp;
      xi -= dx;
      if (std::abs(dx) < tol) break;
    }
    const auto [p, p_prev] = legendre_pair(n, xi);
    dp = Real(n) * (xi * p - p_prev) / (xi * xi - Real(1));
    x(i) = xi;
    w(i) = Real(2) / ((Real(1) - xi * xi) * dp * dp);
  }
}

// Normalized associated Legendre functions Theta_lm (unit L2 norm against
// sin(theta) dtheta) and their colatitude derivatives up to max_order at a
// single colatitude, for all 0 <= m <= l <= bandlimit, tri-indexed.
//
// d/dtheta uses (l x Theta_lm - gamma_lm Theta_{l-1,m}) / sin(theta) with
// gamma_lm = sqrt((l^2 - m^2)(2l + 1)/(2l - 1)); higher orders follow from
// the associated Legendre equation
//   Theta'' + cot(theta) Theta' + (l(l+1) - m^2/sin^2) Theta = 0.
template <typename Real>
void legendre_block(int bandlimit, Real theta, int max_order,
                    std::array<VecR<Real>, 4>& rows) {
  const int L = bandlimit;
  const int n_tri = (L + 1) * (L + 2) / 2;
  const Real x = std::cos(theta);
  const Real s = std::sin(theta);

  VecR<Real>& v = rows[0];
  v.resize(n_tri);
  v(tri_index(0, 0)) = Real(1) / std::sqrt(Real(2));
  for (int m = 1; m <= L; ++m) {
    v(tri_index(m, m)) = std::sqrt((2 * Real(m) + 1) / (2 * Real(m))) * s *
                         v(tri_index(m - 1, m - 1));
  }
  for (int m = 0; m < L; ++m) {
    v(tri_index(m + 1, m)) =
        std::sqrt(2 * Real(m) + 3) * x * v(tri_index(m, m));
  }
  for (int m = 0; m <= L; ++m) {
    for (int l = m + 2; l <= L; ++l) {
      const Real a = std::sqrt((4 * Real(l) * l - 1) /
                               (Real(l) * l - Real(m) * m));
      const Real b = std::sqrt((Real(l - 1) * (l - 1) - Real(m) * m) /
                               (4 * Real(l - 1) * (l - 1) - 1));
      v(tri_index(l, m)) =
          a * (x * v(tri_index(l - 1, m)) - b * v(tri_index(l - 2, m)));
    }
  }
  if (max_order < 1) return;

  VecR<Real>& d1 = rows[1];
  d1.resize(n_tri);
  for (int m = 0; m <= L; ++m) {
    for (int l = m; l <= L; ++l) {
      Real acc = Real(l) * x * v(tri_index(l, m));
      if (l > m) {
        const Real gamma = std::sqrt((Real(l) * l - Real(m) * m) *
                                     (2 * Real(l) + 1) / (2 * Real(l) - 1));
        acc -= gamma * v(tri_index(l - 1, m));
      }
      d1(tri_index(l, m)) = acc / s;
    }
  }
  if (max_order < 2) return;

  VecR<Real>& d2 = rows[2];
  d2.resize(n_tri);
  for (int m = 0; m <= L; ++m) {
    for (int l = m; l <= L; ++l) {
      const int t = tri_index(l, m);
      const Real lam = Real(l) * (l + 1);
      d2(t) = -(x / s) * d1(t) + (Real(m) * m / (s * s) - lam) * v(t);
    }
  }
  if (max_order < 3) return;

  VecR<Real>& d3 = rows[3];
  d3.resize(n_tri);
  for (int m = 0; m <= L; ++m) {
    for (int l = m; l <= L; ++l) {
      const int t = tri_index(l, m);
      const Real lam = Real(l) * (l + 1);
      d3(t) = d1(t) / (s * s) - (x / s) * d2(t) +
              (Real(m) * m / (s * s) - lam) * d1(t) -
              2 * Real(m) * m * (x / (s * s * s)) * v(t);
    }
  }
}

}  // namespace qlm::detail
