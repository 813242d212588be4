#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "cmclab/immersion.hpp"

namespace cmclab {

// Tangential/normal split h = v + z n along the round sphere, n = f0.
struct Decomposition {
  AmbientField v;
  ScalarField z;
};

inline Decomposition decompose(const AmbientField& h) {
  const SphereGrid& g = *h.grid;
  Eigen::ArrayXd z = h.comp[0] * g.nx() + h.comp[1] * g.ny() + h.comp[2] * g.nz();
  AmbientField v = {h.grid,
                    {h.comp[0] - z * g.nx(), h.comp[1] - z * g.ny(), h.comp[2] - z * g.nz()}};
  return {std::move(v), ScalarField{h.grid, std::move(z)}};
}

// The six conformal Killing fields of S^2: the rotation generators A_k f0 = e_k x x
// followed by the coordinate gradients grad x^i = e_i - x^i x.
inline std::array<AmbientField, 6> ckf_basis(const GridPtr& g) {
  const Eigen::ArrayXd &x = g->nx(), &y = g->ny(), &z = g->nz();
  Eigen::ArrayXd zero = Eigen::ArrayXd::Zero(g->n_nodes());
  std::array<AmbientField, 6> out;
  out[0] = {g, {zero, -z, y}};                           // e1 x x
  out[1] = {g, {z, zero, -x}};                           // e2 x x
  out[2] = {g, {-y, x, zero}};                           // e3 x x
  out[3] = {g, {1.0 - x * x, -x * y, -x * z}};           // grad x^1
  out[4] = {g, {-y * x, 1.0 - y * y, -y * z}};           // grad x^2
  out[5] = {g, {-z * x, -z * y, 1.0 - z * z}};           // grad x^3
  return out;
}

// Symmetric trace-free 2-tensor field in the orthonormal frame (e_theta, e_phi):
// components (t11, t12) with t22 = -t11. Inner products use the Frobenius
// pairing S:T = 2 (S11 T11 + S12 T12) under quadrature.
struct TracelessTensorField {
  GridPtr grid;
  Eigen::ArrayXd t11, t12;
};

inline double tensor_inner(const TracelessTensorField& a, const TracelessTensorField& b) {
  return (a.grid->weights() * 2.0 * (a.t11 * b.t11 + a.t12 * b.t12)).sum();
}

inline double tensor_norm(const TracelessTensorField& a) {
  return std::sqrt(tensor_inner(a, a));
}

// Cauchy-Riemann operator D v = (L_v g)_0 on tangent fields:
//   (Dv)_11 = v_{1,1} - v_{2,2},  (Dv)_12 = v_{1,2} + v_{2,1},
// computed from spectral chart derivatives of the ambient components.
inline TracelessTensorField cr_apply(const AmbientField& vt) {
  const SphereGrid& g = *vt.grid;
  Eigen::ArrayXd vn =
      (vt.comp[0] * g.nx() + vt.comp[1] * g.ny() + vt.comp[2] * g.nz()).abs();
  if (vn.maxCoeff() > 1e-8) throw DomainError("cr_apply requires a tangent field");

  auto c = analyze(vt);
  std::array<Eigen::ArrayXd, 3> dt, dp;
  for (int k = 0; k < 3; ++k) {
    dt[k] = synthesize_deriv(c[k], vt.grid, Deriv::d_theta).values;
    dp[k] = synthesize_deriv(c[k], vt.grid, Deriv::d_phi).values / g.sin_theta();
  }
  auto frame_dot = [&](const std::array<Eigen::ArrayXd, 3>& a, const Eigen::ArrayXd& ex,
                       const Eigen::ArrayXd& ey, const Eigen::ArrayXd& ez) {
    return (a[0] * ex + a[1] * ey + a[2] * ez).eval();
  };
  Eigen::ArrayXd v11 = frame_dot(dt, g.e1x(), g.e1y(), g.e1z());
  Eigen::ArrayXd v22 = frame_dot(dp, g.e2x(), g.e2y(), g.e2z());
  Eigen::ArrayXd v12 = frame_dot(dp, g.e1x(), g.e1y(), g.e1z());
  Eigen::ArrayXd v21 = frame_dot(dt, g.e2x(), g.e2y(), g.e2z());
  return {vt.grid, v11 - v22, v12 + v21};
}

// Trace-free quadratic form Q(dh) = -(dh (x) dh)_0:
//   Q11 = -(|h_1|^2 - |h_2|^2)/2,  Q12 = -<h_1, h_2>,  h_i = dh(e_i).
inline TracelessTensorField q_form(const AmbientField& h) {
  const SphereGrid& g = *h.grid;
  auto c = analyze(h);
  std::array<Eigen::ArrayXd, 3> h1, h2;
  for (int k = 0; k < 3; ++k) {
    h1[k] = synthesize_deriv(c[k], h.grid, Deriv::d_theta).values;
    h2[k] = synthesize_deriv(c[k], h.grid, Deriv::d_phi).values / g.sin_theta();
  }
  Eigen::ArrayXd n1 = h1[0] * h1[0] + h1[1] * h1[1] + h1[2] * h1[2];
  Eigen::ArrayXd n2 = h2[0] * h2[0] + h2[1] * h2[1] + h2[2] * h2[2];
  Eigen::ArrayXd n12 = h1[0] * h2[0] + h1[1] * h2[1] + h1[2] * h2[2];
  return {h.grid, -0.5 * (n1 - n2), -n12};
}

// Least-squares inverse of D with kernel projection.
//
// Tangent fields are represented in the vector-harmonic basis
//   Psi_lm = grad Y_lm / sqrt(lambda_l),  Phi_lm = n x grad Y_lm / sqrt(lambda_l),
// for 2 <= l <= grid band limit - 1 (so ambient components stay band-limited).
// The l = 1 elements span ker D (the conformal Killing fields) and are excluded,
// which makes every solution L^2-orthogonal to the kernel. D acts on the basis
// through covariant Hessians of the scalar harmonics; the normal equations
// D*D v = D*Q are solved by conjugate gradient with the (near-spectral)
// diagonal preconditioner.
class CrSolver {
 public:
  explicit CrSolver(const GridPtr& grid) : grid_(grid) {
    const SphereGrid& g = *grid;
    const int L = g.band_limit(), lmax = L - 1, nt = g.n_theta(), np = g.n_phi();
    for (int l = 2; l <= lmax; ++l)
      for (int m = -l; m <= l; ++m) lm_.emplace_back(l, m);
    const int nb = int(lm_.size());
    const int n = g.n_nodes();
    B_.resize(2 * n, 2 * nb);

    const double sqrt2 = std::numbers::sqrt2;
    for (int i = 0; i < nt; ++i) {
      const double* P = g.legendre_row(i);
      const double* dP = g.legendre_dtheta_row(i);
      const double* d2P = g.legendre_d2theta_row(i);
      const double st = std::sin(g.theta(i)), ct = std::cos(g.theta(i));
      for (int j = 0; j < np; ++j) {
        const int k = i * np + j;
        for (int b = 0; b < nb; ++b) {
          auto [l, m] = lm_[b];
          const int am = std::abs(m), ti = tri_idx(l, am);
          double trig, dtrig;  // phi factor and its derivative
          if (m == 0) {
            trig = 1.0;
            dtrig = 0.0;
          } else if (m > 0) {
            trig = sqrt2 * g.cos_m_phi(am, j);
            dtrig = -sqrt2 * am * g.sin_m_phi(am, j);
          } else {
            trig = sqrt2 * g.sin_m_phi(am, j);
            dtrig = sqrt2 * am * g.cos_m_phi(am, j);
          }
          const double Yt = dP[ti] * trig;
          const double Ytt = d2P[ti] * trig;
          const double Yp = P[ti] * dtrig;
          const double Ytp = dP[ti] * dtrig;
          const double Ypp = -double(am) * am * P[ti] * trig;
          const double A11 = Ytt;
          const double A12 = (Ytp - (ct / st) * Yp) / st;
          const double A22 = Ypp / (st * st) + (ct / st) * Yt;
          const double inv = 1.0 / std::sqrt(double(l) * (l + 1));
          B_(k, b) = (A11 - A22) * inv;          // grad-type column, t11 row
          B_(n + k, b) = 2.0 * A12 * inv;        // grad-type column, t12 row
          B_(k, nb + b) = -2.0 * A12 * inv;      // curl-type column, t11 row
          B_(n + k, nb + b) = (A11 - A22) * inv;  // curl-type column, t12 row
        }
      }
    }

    w2_.resize(2 * n);
    w2_.head(n) = 2.0 * g.weights().matrix();
    w2_.tail(n) = 2.0 * g.weights().matrix();
    diag_ = (B_.array().square().colwise() * w2_.array()).colwise().sum();
  }

  int n_basis() const { return int(2 * lm_.size()); }
  const std::vector<std::pair<int, int>>& modes() const { return lm_; }

  AmbientField synth_tangent(const Eigen::VectorXd& x) const {
    const SphereGrid& g = *grid_;
    const int nb = int(lm_.size()), nt = g.n_theta(), np = g.n_phi();
    const double sqrt2 = std::numbers::sqrt2;
    AmbientField out = zero_ambient(grid_);
    for (int i = 0; i < nt; ++i) {
      const double* P = g.legendre_row(i);
      const double* dP = g.legendre_dtheta_row(i);
      const double st = std::sin(g.theta(i));
      for (int j = 0; j < np; ++j) {
        const int k = i * np + j;
        double a1 = 0.0, a2 = 0.0;  // frame components along e_theta, e_phi
        for (int b = 0; b < nb; ++b) {
          auto [l, m] = lm_[b];
          const int am = std::abs(m), ti = tri_idx(l, am);
          double trig, dtrig;
          if (m == 0) {
            trig = 1.0;
            dtrig = 0.0;
          } else if (m > 0) {
            trig = sqrt2 * g.cos_m_phi(am, j);
            dtrig = -sqrt2 * am * g.sin_m_phi(am, j);
          } else {
            trig = sqrt2 * g.sin_m_phi(am, j);
            dtrig = sqrt2 * am * g.cos_m_phi(am, j);
          }
          const double Yt = dP[ti] * trig;
          const double Yp_over_s = P[ti] * dtrig / st;
          const double inv = 1.0 / std::sqrt(double(l) * (l + 1));
          // grad: Yt e1 + (Yp/s) e2; curl: -(Yp/s) e1 + Yt e2.
          a1 += inv * (x[b] * Yt - x[nb + b] * Yp_over_s);
          a2 += inv * (x[b] * Yp_over_s + x[nb + b] * Yt);
        }
        out.comp[0][k] = a1 * g.e1x()[k] + a2 * g.e2x()[k];
        out.comp[1][k] = a1 * g.e1y()[k] + a2 * g.e2y()[k];
        out.comp[2][k] = a1 * g.e1z()[k] + a2 * g.e2z()[k];
      }
    }
    return out;
  }

  struct Result {
    AmbientField v;
    Eigen::VectorXd coeffs;
    double normal_residual_rel = 0.0;  // CG residual on the normal equations
    double w12_norm = 0.0;             // ||v||_{W^{1,2}}, stability witness
    int iterations = 0;
  };

  Result solve(const TracelessTensorField& Q, double rtol = 1e-12,
               int max_iters = 500) const {
    Eigen::VectorXd q(B_.rows());
    q.head(Q.t11.size()) = Q.t11.matrix();
    q.tail(Q.t12.size()) = Q.t12.matrix();
    Eigen::VectorXd rhs = B_.transpose() * w2_.cwiseProduct(q);
    const double rhs_norm = rhs.norm();
    Result res;
    res.coeffs = Eigen::VectorXd::Zero(B_.cols());
    if (rhs_norm == 0.0) {
      res.v = zero_ambient(grid_);
      return res;
    }
    auto apply = [&](const Eigen::VectorXd& x) {
      return (B_.transpose() * w2_.cwiseProduct(B_ * x)).eval();
    };
    Eigen::VectorXd x = Eigen::VectorXd::Zero(B_.cols());
    Eigen::VectorXd r = rhs;
    Eigen::VectorXd z = r.cwiseQuotient(diag_);
    Eigen::VectorXd p = z;
    double rz = r.dot(z);
    int it = 0;
    for (; it < max_iters; ++it) {
      if (r.norm() <= rtol * rhs_norm) break;
      Eigen::VectorXd Mp = apply(p);
      double alpha = rz / p.dot(Mp);
      x += alpha * p;
      r -= alpha * Mp;
      z = r.cwiseQuotient(diag_);
      double rz_new = r.dot(z);
      p = z + (rz_new / rz) * p;
      rz = rz_new;
    }
    if (r.norm() > rtol * rhs_norm)
      throw SolverError("cr_solve conjugate gradient did not converge");
    res.coeffs = x;
    res.normal_residual_rel = r.norm() / rhs_norm;
    res.iterations = it;
    res.v = synth_tangent(x);
    res.w12_norm = sobolev_norm(res.v, 1);
    return res;
  }

 private:
  GridPtr grid_;
  std::vector<std::pair<int, int>> lm_;
  Eigen::MatrixXd B_;
  Eigen::VectorXd w2_, diag_;
};

inline AmbientField cr_solve(const TracelessTensorField& Q) {
  return CrSolver(Q.grid).solve(Q).v;
}

// L^2 projection onto the conformal Killing kernel (l = 1 vector harmonics).
inline AmbientField kernel_projection(const AmbientField& w) {
  const GridPtr& g = w.grid;
  SpectralCoeffs y1[3];
  for (int m = -1; m <= 1; ++m) {
    SpectralCoeffs c = SpectralCoeffs::zeros(g->band_limit());
    c.at(1, m) = 1.0;
    y1[m + 1] = c;
  }
  AmbientField out = zero_ambient(g);
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  for (int m = 0; m < 3; ++m) {
    AmbientField grad = surface_gradient(y1[m], g);
    AmbientField curl = cross(unit_sphere_map(g), grad);
    for (AmbientField* b : {&grad, &curl}) {
      for (int k = 0; k < 3; ++k) b->comp[k] *= inv_sqrt2;  // normalize: |grad Y_1m|_{L^2}^2 = 2
      double coef = integrate(g, dot(w, *b));
      for (int k = 0; k < 3; ++k) out.comp[k] += coef * b->comp[k];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Conformalization of star-shaped surfaces
// ---------------------------------------------------------------------------

// A star-shaped surface given by scale * { rho(u) u : u in S^2 } + shift.
struct RadialSurface {
  SpectralCoeffs rho;
  double scale = 1.0;
  Eigen::Vector3d shift = Eigen::Vector3d::Zero();

  // Radius r > 0 with r p on the surface (Newton; |shift| assumed small).
  double radius_along(const Eigen::Vector3d& p) const {
    double r = scale + p.dot(shift);
    for (int it = 0; it < 30; ++it) {
      Eigen::Vector3d q = r * p - shift;
      double qn = q.norm();
      Eigen::Vector3d u = q / qn;
      double th = std::atan2(std::hypot(u[0], u[1]), u[2]);
      double ph = std::atan2(u[1], u[0]);
      PointEvaluator ev(rho.band_limit, th, ph);
      Jet1 jet = ev.jet(rho);
      double F = qn - scale * jet.f;
      if (std::abs(F) < 1e-14 * scale) return r;
      double st = std::max(std::sin(th), 1e-12);
      Eigen::Vector3d e1(std::cos(th) * std::cos(ph), std::cos(th) * std::sin(ph),
                         -std::sin(th));
      Eigen::Vector3d e2(-std::sin(ph), std::cos(ph), 0.0);
      Eigen::Vector3d grad_rho = e1 * jet.ft + e2 * (jet.fp / st);
      Eigen::Vector3d du_dr = (p - u * u.dot(p)) / qn;
      double dF = p.dot(u) - scale * grad_rho.dot(du_dr);
      r -= F / dF;
    }
    throw ConformalizationError("radial projection did not converge");
  }
};

struct ConformalizeResult {
  Immersion immersion;
  int iterations = 0;
  double final_defect = 0.0;
};

// Picard iteration: replace the tangential part by the CR solution of the
// trace-free conformality condition D v = Q(dh), then reproject radially so the
// iterate stays exactly on the target surface.
inline ConformalizeResult conformalize_on(const RadialSurface& surface,
                                          const AmbientField& f_init, const CrSolver& solver,
                                          double tol = 1e-8, int max_iters = 50) {
  const GridPtr& g = f_init.grid;
  const SphereGrid& grid = *g;
  AmbientField f = f_init;
  AmbientField f0 = unit_sphere_map(g);
  double prev = std::numeric_limits<double>::infinity();
  double prev2 = std::numeric_limits<double>::infinity();
  for (int k = 0;; ++k) {
    Immersion imm = make_immersion(f);
    double d = imm.conformal_defect();
    if (d <= tol || k >= max_iters) return {std::move(imm), k, d};
    if (d > prev && prev > prev2)
      throw ConformalizationError("conformal defect increased twice consecutively");
    prev2 = prev;
    prev = d;

    AmbientField h = {g, {f.comp[0] - f0.comp[0], f.comp[1] - f0.comp[1],
                          f.comp[2] - f0.comp[2]}};
    AmbientField v = solver.solve(q_form(h)).v;
    Eigen::ArrayXd z =
        h.comp[0] * grid.nx() + h.comp[1] * grid.ny() + h.comp[2] * grid.nz();
    std::array<Eigen::ArrayXd, 3> cand = {
        f0.comp[0] + v.comp[0] + z * grid.nx(), f0.comp[1] + v.comp[1] + z * grid.ny(),
        f0.comp[2] + v.comp[2] + z * grid.nz()};
    for (int node = 0; node < grid.n_nodes(); ++node) {
      Eigen::Vector3d c(cand[0][node], cand[1][node], cand[2][node]);
      Eigen::Vector3d p = c.normalized();
      double r = surface.radius_along(p);
      for (int q = 0; q < 3; ++q) f.comp[q][node] = r * p[q];
    }
  }
}

// Conformal parametrization of the star-shaped surface { rho(p) p }.
inline ConformalizeResult conformalize(const ScalarField& rho, double tol = 1e-8,
                                       int max_iters = 50) {
  const GridPtr& g = rho.grid;
  if (rho.values.minCoeff() <= 0.0)
    throw DomainError("radial profile must be positive");
  SpectralCoeffs rc = analyze(rho);
  SpectralCoeffs dev = rc;
  dev.at(0, 0) -= std::sqrt(four_pi);
  if (sobolev_sq(dev, 2) > 0.5 * 0.5 + 1e-15)
    throw OutOfRegimeError("||rho - 1||_{W^{2,2}} exceeds 0.5");
  AmbientField f_init = {g, {rho.values * g->nx(), rho.values * g->ny(),
                             rho.values * g->nz()}};
  CrSolver solver(g);
  return conformalize_on(RadialSurface{rc}, f_init, solver, tol, max_iters);
}

// ---------------------------------------------------------------------------
// Normal deviation nu = n_f - n and its comparison with -grad z
// ---------------------------------------------------------------------------

struct NuResidual {
  AmbientField nu;
  double l2 = 0.0;
  double l4 = 0.0;
};

inline NuResidual nu_residual(const Immersion& imm, const Decomposition& dec) {
  const GridPtr& g = imm.grid();
  AmbientField f0 = unit_sphere_map(g);
  AmbientField nu = {g,
                     {imm.unit_normal().comp[0] - f0.comp[0],
                      imm.unit_normal().comp[1] - f0.comp[1],
                      imm.unit_normal().comp[2] - f0.comp[2]}};
  AmbientField gz = surface_gradient(dec.z);
  AmbientField r = {g, {nu.comp[0] + gz.comp[0], nu.comp[1] + gz.comp[1],
                        nu.comp[2] + gz.comp[2]}};
  Eigen::ArrayXd rsq = dot(r, r);
  NuResidual out;
  out.nu = std::move(nu);
  out.l2 = std::sqrt(integrate(g, rsq));
  out.l4 = std::pow(integrate(g, rsq.square()), 0.25);
  return out;
}

}  // namespace cmclab
