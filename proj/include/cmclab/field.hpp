#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "cmclab/grid.hpp"

namespace cmclab {

// Flat index map for real spherical-harmonic coefficients:
//   index(l, m) = l*l + l + m,  0 <= l <= L,  -l <= m <= l.
// m > 0 are the sqrt(2) P(l,m) cos(m phi) harmonics, m < 0 the sin ones.
constexpr int coeff_index(int l, int m) { return l * l + l + m; }
constexpr int coeff_count(int L) { return (L + 1) * (L + 1); }

struct SpectralCoeffs {
  int band_limit = 0;
  Eigen::VectorXd c;

  static SpectralCoeffs zeros(int L) {
    return SpectralCoeffs{L, Eigen::VectorXd::Zero(coeff_count(L))};
  }
  double& at(int l, int m) { return c[coeff_index(l, m)]; }
  double at(int l, int m) const { return c[coeff_index(l, m)]; }
};

struct ScalarField {
  GridPtr grid;
  Eigen::ArrayXd values;
};

struct AmbientField {
  GridPtr grid;
  std::array<Eigen::ArrayXd, 3> comp;
};

inline ScalarField zero_field(const GridPtr& g) {
  return {g, Eigen::ArrayXd::Zero(g->n_nodes())};
}

inline AmbientField zero_ambient(const GridPtr& g) {
  return {g, {Eigen::ArrayXd::Zero(g->n_nodes()), Eigen::ArrayXd::Zero(g->n_nodes()),
              Eigen::ArrayXd::Zero(g->n_nodes())}};
}

// Standard embedding f0(x) = x.
inline AmbientField unit_sphere_map(const GridPtr& g) {
  return {g, {g->nx(), g->ny(), g->nz()}};
}

inline Eigen::ArrayXd dot(const AmbientField& a, const AmbientField& b) {
  return a.comp[0] * b.comp[0] + a.comp[1] * b.comp[1] + a.comp[2] * b.comp[2];
}

inline AmbientField cross(const AmbientField& a, const AmbientField& b) {
  return {a.grid,
          {a.comp[1] * b.comp[2] - a.comp[2] * b.comp[1],
           a.comp[2] * b.comp[0] - a.comp[0] * b.comp[2],
           a.comp[0] * b.comp[1] - a.comp[1] * b.comp[0]}};
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

inline double integrate(const ScalarField& f) { return (f.grid->weights() * f.values).sum(); }

inline double inner(const ScalarField& a, const ScalarField& b) {
  return (a.grid->weights() * a.values * b.values).sum();
}

inline double integrate(const GridPtr& g, const Eigen::ArrayXd& v) {
  return (g->weights() * v).sum();
}

// ---------------------------------------------------------------------------
// Analysis / synthesis
// ---------------------------------------------------------------------------

inline SpectralCoeffs analyze(const ScalarField& f) {
  const SphereGrid& g = *f.grid;
  const int L = g.band_limit(), nt = g.n_theta(), np = g.n_phi();
  const double dphi = 2.0 * pi / np;
  const double sqrt2 = std::numbers::sqrt2;

  Eigen::MatrixXd Fc = Eigen::MatrixXd::Zero(nt, L + 1);
  Eigen::MatrixXd Fs = Eigen::MatrixXd::Zero(nt, L + 1);
  for (int i = 0; i < nt; ++i)
    for (int m = 0; m <= L; ++m) {
      double sc = 0.0, ss = 0.0;
      for (int j = 0; j < np; ++j) {
        double v = f.values[i * np + j];
        sc += v * g.cos_m_phi(m, j);
        ss += v * g.sin_m_phi(m, j);
      }
      Fc(i, m) = sc * dphi;
      Fs(i, m) = ss * dphi;
    }

  SpectralCoeffs out = SpectralCoeffs::zeros(L);
  for (int m = 0; m <= L; ++m)
    for (int l = m; l <= L; ++l) {
      double sc = 0.0, ss = 0.0;
      for (int i = 0; i < nt; ++i) {
        double p = g.theta_weight(i) * g.legendre_row(i)[tri_idx(l, m)];
        sc += p * Fc(i, m);
        ss += p * Fs(i, m);
      }
      if (m == 0) {
        out.at(l, 0) = sc;
      } else {
        out.at(l, m) = sqrt2 * sc;
        out.at(l, -m) = sqrt2 * ss;
      }
    }
  return out;
}

inline std::array<SpectralCoeffs, 3> analyze(const AmbientField& f) {
  return {analyze(ScalarField{f.grid, f.comp[0]}), analyze(ScalarField{f.grid, f.comp[1]}),
          analyze(ScalarField{f.grid, f.comp[2]})};
}

// Chart-derivative flavor of a synthesis.
enum class Deriv { value, d_theta, d_phi, d_theta2, d_thetaphi, d_phi2 };

inline ScalarField synthesize_deriv(const SpectralCoeffs& coeffs, const GridPtr& grid,
                                    Deriv mode) {
  const SphereGrid& g = *grid;
  const int Lc = coeffs.band_limit, nt = g.n_theta(), np = g.n_phi();
  if (Lc > g.band_limit())
    throw ResolutionError("coefficient band limit exceeds grid band limit");
  const double sqrt2 = std::numbers::sqrt2;

  const bool use_dP = (mode == Deriv::d_theta || mode == Deriv::d_thetaphi);
  const bool use_d2P = (mode == Deriv::d_theta2);
  const bool phi_rotate = (mode == Deriv::d_phi || mode == Deriv::d_thetaphi);
  const bool phi_sq = (mode == Deriv::d_phi2);

  Eigen::MatrixXd Gc = Eigen::MatrixXd::Zero(nt, Lc + 1);
  Eigen::MatrixXd Gs = Eigen::MatrixXd::Zero(nt, Lc + 1);
  for (int i = 0; i < nt; ++i) {
    const double* T = use_dP    ? g.legendre_dtheta_row(i)
                      : use_d2P ? g.legendre_d2theta_row(i)
                                : g.legendre_row(i);
    for (int m = 0; m <= Lc; ++m) {
      double sc = 0.0, ss = 0.0;
      for (int l = m; l <= Lc; ++l) {
        double p = T[tri_idx(l, m)];
        sc += coeffs.at(l, m) * p;
        if (m > 0) ss += coeffs.at(l, -m) * p;
      }
      Gc(i, m) = sc;
      Gs(i, m) = ss;
    }
  }

  ScalarField out = zero_field(grid);
  for (int i = 0; i < nt; ++i)
    for (int j = 0; j < np; ++j) {
      double v = 0.0;
      if (!phi_rotate) {
        v = Gc(i, 0) * (phi_sq ? 0.0 : 1.0);
        for (int m = 1; m <= Lc; ++m) {
          double t = Gc(i, m) * g.cos_m_phi(m, j) + Gs(i, m) * g.sin_m_phi(m, j);
          v += sqrt2 * (phi_sq ? -double(m) * m * t : t);
        }
      } else {
        for (int m = 1; m <= Lc; ++m)
          v += sqrt2 * m *
               (-Gc(i, m) * g.sin_m_phi(m, j) + Gs(i, m) * g.cos_m_phi(m, j));
      }
      out.values[i * np + j] = v;
    }
  return out;
}

inline ScalarField synthesize(const SpectralCoeffs& coeffs, const GridPtr& grid) {
  return synthesize_deriv(coeffs, grid, Deriv::value);
}

inline AmbientField synthesize(const std::array<SpectralCoeffs, 3>& c, const GridPtr& grid) {
  return {grid,
          {synthesize(c[0], grid).values, synthesize(c[1], grid).values,
           synthesize(c[2], grid).values}};
}

// ---------------------------------------------------------------------------
// Sobolev norms via spectral multipliers: ||f||^2_{W^{s,2}} = sum (1+l(l+1))^s |c|^2
// ---------------------------------------------------------------------------

inline double sobolev_sq(const SpectralCoeffs& coeffs, int s) {
  double acc = 0.0;
  for (int l = 0; l <= coeffs.band_limit; ++l) {
    double mult = std::pow(1.0 + double(l) * (l + 1), s);
    for (int m = -l; m <= l; ++m) acc += mult * coeffs.at(l, m) * coeffs.at(l, m);
  }
  return acc;
}

inline double sobolev_norm(const ScalarField& f, int s) {
  return std::sqrt(sobolev_sq(analyze(f), s));
}

inline double sobolev_norm(const AmbientField& f, int s) {
  auto c = analyze(f);
  return std::sqrt(sobolev_sq(c[0], s) + sobolev_sq(c[1], s) + sobolev_sq(c[2], s));
}

inline SpectralCoeffs truncated(const SpectralCoeffs& coeffs, int lmax_keep) {
  SpectralCoeffs out = coeffs;
  for (int l = lmax_keep + 1; l <= coeffs.band_limit; ++l)
    for (int m = -l; m <= l; ++m) out.at(l, m) = 0.0;
  return out;
}

// Fraction of L^2 energy at degrees >= l_from (aliasing monitor).
inline double tail_energy_fraction(const SpectralCoeffs& coeffs, int l_from) {
  double tail = 0.0, total = 0.0;
  for (int l = 0; l <= coeffs.band_limit; ++l)
    for (int m = -l; m <= l; ++m) {
      double e = coeffs.at(l, m) * coeffs.at(l, m);
      total += e;
      if (l >= l_from) tail += e;
    }
  return total > 0.0 ? tail / total : 0.0;
}

// ---------------------------------------------------------------------------
// Point evaluation (off-grid): value and first-order chart jet.
// ---------------------------------------------------------------------------

struct Jet1 {
  double f = 0.0, ft = 0.0, fp = 0.0;  // value, d/dtheta, d/dphi
};

class PointEvaluator {
 public:
  PointEvaluator(int L, double theta, double phi) : L_(L) {
    P_.resize(tri_size(L));
    dP_.resize(tri_size(L));
    legendre_theta(L, theta, P_.data(), dP_.data(), nullptr);
    cosm_.resize(L + 1);
    sinm_.resize(L + 1);
    for (int m = 0; m <= L; ++m) {
      cosm_[m] = std::cos(m * phi);
      sinm_[m] = std::sin(m * phi);
    }
  }

  double value(const SpectralCoeffs& c) const {
    const double sqrt2 = std::numbers::sqrt2;
    double v = 0.0;
    for (int l = 0; l <= c.band_limit; ++l) v += c.at(l, 0) * P_[tri_idx(l, 0)];
    for (int m = 1; m <= c.band_limit; ++m) {
      double sc = 0.0, ss = 0.0;
      for (int l = m; l <= c.band_limit; ++l) {
        sc += c.at(l, m) * P_[tri_idx(l, m)];
        ss += c.at(l, -m) * P_[tri_idx(l, m)];
      }
      v += sqrt2 * (sc * cosm_[m] + ss * sinm_[m]);
    }
    return v;
  }

  Jet1 jet(const SpectralCoeffs& c) const {
    const double sqrt2 = std::numbers::sqrt2;
    Jet1 out;
    for (int l = 0; l <= c.band_limit; ++l) {
      out.f += c.at(l, 0) * P_[tri_idx(l, 0)];
      out.ft += c.at(l, 0) * dP_[tri_idx(l, 0)];
    }
    for (int m = 1; m <= c.band_limit; ++m) {
      double sc = 0.0, ss = 0.0, dc = 0.0, ds = 0.0;
      for (int l = m; l <= c.band_limit; ++l) {
        sc += c.at(l, m) * P_[tri_idx(l, m)];
        ss += c.at(l, -m) * P_[tri_idx(l, m)];
        dc += c.at(l, m) * dP_[tri_idx(l, m)];
        ds += c.at(l, -m) * dP_[tri_idx(l, m)];
      }
      out.f += sqrt2 * (sc * cosm_[m] + ss * sinm_[m]);
      out.ft += sqrt2 * (dc * cosm_[m] + ds * sinm_[m]);
      out.fp += sqrt2 * m * (-sc * sinm_[m] + ss * cosm_[m]);
    }
    return out;
  }

 private:
  int L_;
  std::vector<double> P_, dP_, cosm_, sinm_;
};

inline double evaluate(const SpectralCoeffs& c, double theta, double phi) {
  return PointEvaluator(c.band_limit, theta, phi).value(c);
}

// Sup-norm proxy: max |f| over a grid refined 2x by spectral resampling.
inline double sup_norm_refined(const SpectralCoeffs& coeffs) {
  int Lr = std::min(2 * std::max(coeffs.band_limit, 4), 256);
  GridPtr fine = build_grid(Lr);
  ScalarField f = synthesize(coeffs, fine);
  return f.values.abs().maxCoeff();
}

inline double sup_norm_refined(const ScalarField& f) { return sup_norm_refined(analyze(f)); }

}  // namespace cmclab
