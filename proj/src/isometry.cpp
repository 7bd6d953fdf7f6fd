#include "qlm/isometry.hpp"

#include <cmath>
#include <functional>

#include <fmt/format.h>

#include "qlm/errors.hpp"

namespace qlm {

namespace {

// Grids of equal bandlimit are structurally identical by construction, so
// two surfaces are "on the same grid" iff the layouts agree.
bool same_grid(const SphereGrid& a, const SphereGrid& b) {
  return &a == &b || (a.bandlimit() == b.bandlimit() &&
                      a.n_lat() == b.n_lat() && a.n_lon() == b.n_lon());
}

void require_same_grid(const SurfaceGeometry& sigma,
                       const SurfaceGeometry& sigma_prime) {
  if (!same_grid(sigma.grid(), sigma_prime.grid())) {
    throw ConfigError("surfaces do not share a parameter grid");
  }
}

int coeff_degree(int q) { return static_cast<int>(std::sqrt(double(q))); }

// Induced L2 inner product of two deformation fields,
// int (G G' + g^{ab} P_a P'_b) dsigma.
double deformation_inner(const SurfaceGeometry& surf, const ScalarField& ga,
                         const TangentField& pa, const ScalarField& gb,
                         const TangentField& pb) {
  const VecX scalar = ga.values().cwiseProduct(gb.values());
  const VecX vector =
      surf.ginv_tt().cwiseProduct(pa.cov_theta().cwiseProduct(pb.cov_theta())) +
      surf.ginv_tp().cwiseProduct(pa.cov_theta().cwiseProduct(pb.cov_phi()) +
                                  pa.cov_phi().cwiseProduct(pb.cov_theta())) +
      surf.ginv_pp().cwiseProduct(pa.cov_phi().cwiseProduct(pb.cov_phi()));
  return surf.integrate(scalar + vector);
}

double l2_tensor_norm(const SurfaceGeometry& surf, const SymTensorField& s) {
  return std::sqrt(std::max(0.0, surf.integrate(surf.tensor_norm_sq(s))));
}

// Deformation data of an ambient vector field X along the surface:
// G = ghat(X, nu) and the covariant tangential components ghat(X, e_a),
// with the tangential part returned through its Helmholtz potentials.
std::pair<ScalarField, TangentField> field_data(
    const SurfaceGeometry& surf, const std::function<Vec3(const Vec3&)>& x_of) {
  const int n = surf.grid().n_nodes();
  VecX g_vals(n), cov_t(n), cov_p(n);
  for (int k = 0; k < n; ++k) {
    const Vec3 x = surf.points().row(k);
    const Mat3 gh = surf.ambient().metric_cartesian(x);
    const Vec3 gx = gh * x_of(x);
    g_vals(k) = gx.dot(surf.normal().row(k));
    cov_t(k) = gx.dot(surf.tangent_theta().row(k));
    cov_p(k) = gx.dot(surf.tangent_phi().row(k));
  }
  return {ScalarField(surf.grid(), g_vals),
          surf.helmholtz_decompose(cov_t, cov_p)};
}

constexpr double kKernelRelTol = 1e-8;
constexpr int kMaxKernelDim = 6;

}  // namespace

SymTensorField symmetric_gradient(const SurfaceGeometry& surf,
                                  const TangentField& p) {
  if (!same_grid(surf.grid(), p.grid())) {
    throw ConfigError("tangent field does not live on the surface grid");
  }
  const SymTensorField hf = surf.hessian(p.potential_f());
  const SymTensorField hu = surf.hessian(p.potential_u());
  const VecX& s = surf.area_element();
  const VecX& a = surf.ginv_tt();
  const VecX& b = surf.ginv_tp();
  const VecX& c = surf.ginv_pp();
  // nabla_a (eps_b{}^c nabla_c u) = eps_b{}^c Hess_ac u, with
  // eps_t{}^t = s B, eps_t{}^p = s C, eps_p{}^t = -s A, eps_p{}^p = -s B.
  const VecX tt =
      2.0 * (hf.aa().values() +
             s.cwiseProduct(b.cwiseProduct(hu.aa().values()) +
                            c.cwiseProduct(hu.ab().values())));
  const VecX tp = 2.0 * hf.ab().values() +
                  s.cwiseProduct(c.cwiseProduct(hu.bb().values()) -
                                 a.cwiseProduct(hu.aa().values()));
  const VecX pp =
      2.0 * (hf.bb().values() -
             s.cwiseProduct(a.cwiseProduct(hu.ab().values()) +
                            b.cwiseProduct(hu.bb().values())));
  const SphereGrid& grid = surf.grid();
  return SymTensorField(ScalarField(grid, tt), ScalarField(grid, tp),
                        ScalarField(grid, pp));
}

SymTensorField metric_variation(const SurfaceGeometry& surf,
                                const ScalarField& g_normal,
                                const TangentField& p) {
  if (!same_grid(surf.grid(), g_normal.grid())) {
    throw ConfigError("normal speed does not live on the surface grid");
  }
  const SymTensorField sym = symmetric_gradient(surf, p);
  const VecX& g = g_normal.values();
  const SphereGrid& grid = surf.grid();
  return SymTensorField(
      ScalarField(grid,
                  2.0 * g.cwiseProduct(surf.h_tt()) + sym.aa().values()),
      ScalarField(grid,
                  2.0 * g.cwiseProduct(surf.h_tp()) + sym.ab().values()),
      ScalarField(grid,
                  2.0 * g.cwiseProduct(surf.h_pp()) + sym.bb().values()));
}

double variation_residual(const SurfaceGeometry& sigma,
                          const SurfaceGeometry& sigma_prime,
                          const ScalarField& f, const ScalarField& g_normal,
                          const TangentField& p) {
  require_same_grid(sigma, sigma_prime);
  const SphereGrid& grid = sigma.grid();
  const VecX two_f = 2.0 * f.values();
  const SymTensorField rhs(
      ScalarField(grid, two_f.cwiseProduct(sigma_prime.h_tt())),
      ScalarField(grid, two_f.cwiseProduct(sigma_prime.h_tp())),
      ScalarField(grid, two_f.cwiseProduct(sigma_prime.h_pp())));
  const double num =
      l2_tensor_norm(sigma, metric_variation(sigma, g_normal, p) - rhs);
  const double den = l2_tensor_norm(sigma, rhs);
  return den > 0.0 ? num / den : num;
}

std::pair<ScalarField, TangentField> rotation_data(const SurfaceGeometry& surf,
                                                   const Vec3& axis) {
  return field_data(surf, [&axis](const Vec3& x) { return axis.cross(x); });
}

std::pair<ScalarField, TangentField> translation_data(
    const SurfaceGeometry& surf, const Vec3& direction) {
  return field_data(surf, [&direction](const Vec3&) { return direction; });
}

VariationSolver::VariationSolver(const SurfaceGeometry& sigma, int band)
    : sigma_(&sigma) {
  const SphereGrid& grid = sigma.grid();
  band_ = band < 0 ? grid.bandlimit() : band;
  if (band_ < 1 || band_ > grid.bandlimit()) {
    throw ConfigError(
        fmt::format("solver band {} outside 1..{}", band_, grid.bandlimit()));
  }
  if (!sigma.strictly_convex()) {
    throw ConvexityViolation(
        fmt::format("matching solve requires a strictly convex surface "
                    "(min principal curvature {:.3e})",
                    sigma.min_principal_curvature()));
  }

  const int n = grid.n_nodes();
  nb_ = (band_ + 1) * (band_ + 1);
  n_cols_ = 3 * nb_ - 2;

  // Row weights: per node the Cholesky factor of the symmetric-tensor
  // Gram matrix M (so that |rows|^2 integrates the squared tensor norm
  // against dsigma).
  lw11_.resize(n); lw21_.resize(n); lw22_.resize(n);
  lw31_.resize(n); lw32_.resize(n); lw33_.resize(n);
  for (int k = 0; k < n; ++k) {
    const double a = sigma.ginv_tt()(k);
    const double b = sigma.ginv_tp()(k);
    const double c = sigma.ginv_pp()(k);
    Mat3 m;
    m << a * a, 2.0 * a * b, b * b,
         2.0 * a * b, 2.0 * (a * c + b * b), 2.0 * b * c,
         b * b, 2.0 * b * c, c * c;
    const Eigen::LLT<Mat3> llt(m);
    if (llt.info() != Eigen::Success) {
      throw SolverFailure("tensor norm weight is not positive definite");
    }
    const Mat3 l = llt.matrixL();
    const double sw = std::sqrt(sigma.integration_weights()(k));
    lw11_(k) = sw * l(0, 0);
    lw21_(k) = sw * l(1, 0);
    lw22_(k) = sw * l(1, 1);
    lw31_(k) = sw * l(2, 0);
    lw32_(k) = sw * l(2, 1);
    lw33_(k) = sw * l(2, 2);
  }

  col_scale_ = VecX::Ones(n_cols_);
  for (int q = 1; q < nb_; ++q) {
    const int l = coeff_degree(q);
    const double scale = 1.0 / (1.0 + double(l) * (l + 1));
    col_scale_(nb_ + (q - 1)) = scale;
    col_scale_(nb_ + (nb_ - 1) + (q - 1)) = scale;
  }

  const auto& tab = grid.basis_tables(band_);
  MatX op(3 * n, n_cols_);
  const auto pack = [&](int col, const VecX& v1, const VecX& v2,
                        const VecX& v3) {
    const double scale = col_scale_(col);
    for (int k = 0; k < n; ++k) {
      op(3 * k + 0, col) =
          scale * (lw11_(k) * v1(k) + lw21_(k) * v2(k) + lw31_(k) * v3(k));
      op(3 * k + 1, col) = scale * (lw22_(k) * v2(k) + lw32_(k) * v3(k));
      op(3 * k + 2, col) = scale * lw33_(k) * v3(k);
    }
  };

  for (int q = 0; q < nb_; ++q) {
    pack(q, 2.0 * sigma.h_tt().cwiseProduct(tab.val.col(q)),
         2.0 * sigma.h_tp().cwiseProduct(tab.val.col(q)),
         2.0 * sigma.h_pp().cwiseProduct(tab.val.col(q)));
  }
  const VecX& s = sigma.area_element();
  const VecX& a = sigma.ginv_tt();
  const VecX& b = sigma.ginv_tp();
  const VecX& c = sigma.ginv_pp();
  for (int q = 1; q < nb_; ++q) {
    // Covariant Hessian of basis function q, then the gradient-potential
    // column 2 Hess and the curl-potential column eps-rotated Hess.
    const VecX h1 = tab.dthth.col(q) -
                    sigma.gamma_t_tt().cwiseProduct(tab.dth.col(q)) -
                    sigma.gamma_p_tt().cwiseProduct(tab.dph.col(q));
    const VecX h2 = tab.dthph.col(q) -
                    sigma.gamma_t_tp().cwiseProduct(tab.dth.col(q)) -
                    sigma.gamma_p_tp().cwiseProduct(tab.dph.col(q));
    const VecX h3 = tab.dphph.col(q) -
                    sigma.gamma_t_pp().cwiseProduct(tab.dth.col(q)) -
                    sigma.gamma_p_pp().cwiseProduct(tab.dph.col(q));
    pack(nb_ + (q - 1), 2.0 * h1, 2.0 * h2, 2.0 * h3);
    pack(nb_ + (nb_ - 1) + (q - 1),
         2.0 * s.cwiseProduct(b.cwiseProduct(h1) + c.cwiseProduct(h2)),
         s.cwiseProduct(c.cwiseProduct(h3) - a.cwiseProduct(h1)),
         -2.0 * s.cwiseProduct(a.cwiseProduct(h2) + b.cwiseProduct(h3)));
  }

  qr_ = std::make_shared<Eigen::HouseholderQR<MatX>>(std::move(op));
  MatX r = qr_->matrixQR()
               .topRows(n_cols_)
               .template triangularView<Eigen::Upper>();
  svd_ = std::make_shared<Eigen::BDCSVD<MatX>>(
      r, Eigen::ComputeThinU | Eigen::ComputeThinV);

  const VecX& sv = svd_->singularValues();
  const double thresh = kKernelRelTol * sv(0);
  std::vector<VecX> raw;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) < thresh) {
      raw.push_back(col_scale_.cwiseProduct(svd_->matrixV().col(i)));
    }
  }
  kernel_dim_ = static_cast<int>(raw.size());
  if (kernel_dim_ > kMaxKernelDim) {
    throw SolverFailure(
        fmt::format("matching operator kernel has dimension {} (> {}): "
                    "system is rank-deficient beyond isometry-preserving data",
                    kernel_dim_, kMaxKernelDim));
  }

  // Orthonormalize the kernel in the induced L2 inner product so gauge
  // projection is a plain expansion.
  if (kernel_dim_ > 0) {
    std::vector<std::pair<ScalarField, TangentField>> fields;
    fields.reserve(raw.size());
    for (const VecX& v : raw) fields.push_back(realize(v));
    MatX gram(kernel_dim_, kernel_dim_);
    for (int i = 0; i < kernel_dim_; ++i) {
      for (int j = 0; j <= i; ++j) {
        gram(i, j) = gram(j, i) =
            deformation_inner(sigma, fields[i].first, fields[i].second,
                              fields[j].first, fields[j].second);
      }
    }
    const Eigen::LLT<MatX> llt(gram);
    if (llt.info() != Eigen::Success) {
      throw SolverFailure("kernel Gram matrix is not positive definite");
    }
    // gram = T T^t; the columns of T^{-t} recombine the raw vectors into
    // an orthonormal set.
    const MatX w = llt.matrixL()
                       .transpose()
                       .template solve<Eigen::OnTheLeft>(
                           MatX::Identity(kernel_dim_, kernel_dim_));
    for (int j = 0; j < kernel_dim_; ++j) {
      VecX combo = VecX::Zero(n_cols_);
      for (int i = 0; i < kernel_dim_; ++i) combo += w(i, j) * raw[i];
      kernel_coeffs_.push_back(combo);
      kernel_fields_.push_back(realize(combo));
    }
  }
}

VecX VariationSolver::pack_rows(const SymTensorField& si) const {
  const int n = sigma_->grid().n_nodes();
  const VecX& v1 = si.aa().values();
  const VecX& v2 = si.ab().values();
  const VecX& v3 = si.bb().values();
  VecX rows(3 * n);
  for (int k = 0; k < n; ++k) {
    rows(3 * k + 0) = lw11_(k) * v1(k) + lw21_(k) * v2(k) + lw31_(k) * v3(k);
    rows(3 * k + 1) = lw22_(k) * v2(k) + lw32_(k) * v3(k);
    rows(3 * k + 2) = lw33_(k) * v3(k);
  }
  return rows;
}

VecX VariationSolver::least_squares(const VecX& packed_rhs) const {
  const VecX qtb =
      (qr_->householderQ().transpose() * packed_rhs).head(n_cols_);
  const VecX& sv = svd_->singularValues();
  const double thresh = kKernelRelTol * sv(0);
  VecX utb = svd_->matrixU().transpose() * qtb;
  for (int i = 0; i < sv.size(); ++i) {
    utb(i) = sv(i) < thresh ? 0.0 : utb(i) / sv(i);
  }
  return col_scale_.cwiseProduct(svd_->matrixV() * utb);
}

std::pair<ScalarField, TangentField> VariationSolver::realize(
    const VecX& coeffs) const {
  const SphereGrid& grid = sigma_->grid();
  VecX cg = VecX::Zero(grid.n_coeff());
  VecX cf = VecX::Zero(grid.n_coeff());
  VecX cu = VecX::Zero(grid.n_coeff());
  cg.head(nb_) = coeffs.head(nb_);
  cf.segment(1, nb_ - 1) = coeffs.segment(nb_, nb_ - 1);
  cu.segment(1, nb_ - 1) = coeffs.segment(nb_ + (nb_ - 1), nb_ - 1);
  return {ScalarField::from_coeffs(grid, cg),
          sigma_->realize_tangent(cf, cu)};
}

VecX VariationSolver::project_out_kernel(VecX coeffs,
                                         VecX* gauge_report) const {
  VecX gauge = VecX::Zero(kernel_dim_);
  if (kernel_dim_ > 0) {
    const auto fields = realize(coeffs);
    for (int j = 0; j < kernel_dim_; ++j) {
      gauge(j) = deformation_inner(*sigma_, fields.first, fields.second,
                                   kernel_fields_[j].first,
                                   kernel_fields_[j].second);
      coeffs -= gauge(j) * kernel_coeffs_[j];
    }
  }
  if (gauge_report != nullptr) *gauge_report = gauge;
  return coeffs;
}

std::pair<ScalarField, TangentField> VariationSolver::solve_displacement(
    const SymTensorField& target, VecX* gauge_report) const {
  if (!same_grid(sigma_->grid(), target.grid())) {
    throw ConfigError("target tensor does not live on the surface grid");
  }
  const VecX coeffs =
      project_out_kernel(least_squares(pack_rows(target)), gauge_report);
  return realize(coeffs);
}

VariationDatum VariationSolver::solve(const SurfaceGeometry& sigma_prime,
                                      const ScalarField& f) const {
  require_same_grid(*sigma_, sigma_prime);
  if (!same_grid(sigma_->grid(), f.grid())) {
    throw ConfigError("normal speed does not live on the surface grid");
  }
  const SphereGrid& grid = sigma_->grid();
  const VecX two_f = 2.0 * f.values();
  const SymTensorField target(
      ScalarField(grid, two_f.cwiseProduct(sigma_prime.h_tt())),
      ScalarField(grid, two_f.cwiseProduct(sigma_prime.h_tp())),
      ScalarField(grid, two_f.cwiseProduct(sigma_prime.h_pp())));
  VecX gauge;
  auto fields = solve_displacement(target, &gauge);
  const double residual = variation_residual(*sigma_, sigma_prime, f,
                                             fields.first, fields.second);
  return VariationDatum{f,
                        std::move(fields.first),
                        std::move(fields.second),
                        residual,
                        kernel_dim_,
                        std::move(gauge)};
}

VariationDatum solve_linearized_isometry(const SurfaceGeometry& sigma,
                                         const SurfaceGeometry& sigma_prime,
                                         const ScalarField& f) {
  return VariationSolver(sigma).solve(sigma_prime, f);
}

ScalarField trace_reduction(const SurfaceGeometry& surf,
                            const ScalarField& g_normal, const TangentField& p,
                            double h_floor) {
  const double h_min = surf.mean_curvature().cwiseAbs().minCoeff();
  if (h_min < h_floor) {
    throw MeanCurvatureDegenerate(
        fmt::format("min |H| = {:.3e} below {:.3e}: trace reduction divides "
                    "by the mean curvature",
                    h_min, h_floor));
  }
  const VecX f = g_normal.values() +
                 surf.divergence(p).cwiseQuotient(surf.mean_curvature());
  return ScalarField(surf.grid(), f);
}

SymTensorField traceless_residual(const SurfaceGeometry& sigma,
                                  const SurfaceGeometry& sigma_prime,
                                  const ScalarField& f,
                                  const ScalarField& g_normal,
                                  const TangentField& p, double h_floor) {
  require_same_grid(sigma, sigma_prime);
  (void)g_normal;  // the trace-eliminated form is independent of G
  const double h_min = sigma.mean_curvature().cwiseAbs().minCoeff();
  if (h_min < h_floor) {
    throw MeanCurvatureDegenerate(
        fmt::format("min |H| = {:.3e} below {:.3e}: trace elimination "
                    "divides by the mean curvature",
                    h_min, h_floor));
  }
  const SymTensorField sym = symmetric_gradient(sigma, p);
  const VecX ratio =
      sigma.divergence(p).cwiseQuotient(sigma.mean_curvature());
  const VecX two_f = 2.0 * f.values();
  const SphereGrid& grid = sigma.grid();
  const auto component = [&](const VecX& hp, const VecX& h,
                             const VecX& sym_c) {
    return ScalarField(
        grid, two_f.cwiseProduct(hp - h) - sym_c + 2.0 * h.cwiseProduct(ratio));
  };
  return SymTensorField(
      component(sigma_prime.h_tt(), sigma.h_tt(), sym.aa().values()),
      component(sigma_prime.h_tp(), sigma.h_tp(), sym.ab().values()),
      component(sigma_prime.h_pp(), sigma.h_pp(), sym.bb().values()));
}

}  // namespace qlm
