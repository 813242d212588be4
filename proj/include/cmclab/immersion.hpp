#pragma once

#include "cmclab/operators.hpp"

namespace cmclab {

// Differential geometry of an immersion f: S^2 -> R^3 sampled on a quadrature
// grid. All derivatives are taken spectrally in the (theta, phi) chart.
//
// Conventions:
//   - unit normal chosen outward (positive flux); H = 2 on the unit sphere;
//   - area_element = d mu / d Omega, the density against the round measure;
//   - conformal_factor u = (1/4) log(det g / det g_round), which coincides
//     with the conformal factor when f is conformal;
//   - conformal_defect = L^2 norm of the trace-free part of the pullback
//     metric expressed in the round orthonormal frame.
class Immersion {
 public:
  explicit Immersion(const AmbientField& f, double min_area_element = 1e-6)
      : f_(f), coeffs_(analyze(f)) {
    const SphereGrid& g = *f.grid;
    const int n = g.n_nodes();

    std::array<Eigen::ArrayXd, 3> ft, fp, ftt, ftp, fpp;
    for (int k = 0; k < 3; ++k) {
      ft[k] = synthesize_deriv(coeffs_[k], f.grid, Deriv::d_theta).values;
      fp[k] = synthesize_deriv(coeffs_[k], f.grid, Deriv::d_phi).values;
      ftt[k] = synthesize_deriv(coeffs_[k], f.grid, Deriv::d_theta2).values;
      ftp[k] = synthesize_deriv(coeffs_[k], f.grid, Deriv::d_thetaphi).values;
      fpp[k] = synthesize_deriv(coeffs_[k], f.grid, Deriv::d_phi2).values;
    }

    g11_ = ft[0] * ft[0] + ft[1] * ft[1] + ft[2] * ft[2];
    g12_ = ft[0] * fp[0] + ft[1] * fp[1] + ft[2] * fp[2];
    g22_ = fp[0] * fp[0] + fp[1] * fp[1] + fp[2] * fp[2];
    Eigen::ArrayXd det = g11_ * g22_ - g12_ * g12_;
    if (det.minCoeff() <= 0.0)
      throw DegenerateImmersionError("pullback metric is not positive definite");
    Eigen::ArrayXd sqrt_det = det.sqrt();
    area_element_ = sqrt_det / g.sin_theta();
    if (area_element_.minCoeff() < min_area_element)
      throw DegenerateImmersionError("area element below degeneracy threshold");

    normal_ = AmbientField{f.grid,
                           {(ft[1] * fp[2] - ft[2] * fp[1]) / sqrt_det,
                            (ft[2] * fp[0] - ft[0] * fp[2]) / sqrt_det,
                            (ft[0] * fp[1] - ft[1] * fp[0]) / sqrt_det}};

    // Outward orientation by positive flux.
    double flux = (g.weights() * area_element_ * dot(f_, normal_)).sum() / 3.0;
    if (flux < 0.0) {
      for (int k = 0; k < 3; ++k) normal_.comp[k] = -normal_.comp[k];
      flux = -flux;
    }
    if (flux == 0.0) throw OrientationError("enclosed volume vanishes");

    Eigen::ArrayXd b11(n), b12(n), b22(n);
    b11 = normal_.comp[0] * ftt[0] + normal_.comp[1] * ftt[1] + normal_.comp[2] * ftt[2];
    b12 = normal_.comp[0] * ftp[0] + normal_.comp[1] * ftp[1] + normal_.comp[2] * ftp[2];
    b22 = normal_.comp[0] * fpp[0] + normal_.comp[1] * fpp[1] + normal_.comp[2] * fpp[2];
    H_ = ScalarField{f.grid, -(g22_ * b11 - 2.0 * g12_ * b12 + g11_ * b22) / det};

    u_ = ScalarField{f.grid, 0.5 * area_element_.log()};

    // Trace-free part of the pullback metric in the round orthonormal frame.
    Eigen::ArrayXd G11 = g11_;
    Eigen::ArrayXd G12 = g12_ / g.sin_theta();
    Eigen::ArrayXd G22 = g22_ / (g.sin_theta() * g.sin_theta());
    Eigen::ArrayXd t11 = 0.5 * (G11 - G22);
    conformal_defect_ =
        std::sqrt((g.weights() * 2.0 * (t11 * t11 + G12 * G12)).sum());
  }

  const GridPtr& grid() const { return f_.grid; }
  const AmbientField& map() const { return f_; }
  const std::array<SpectralCoeffs, 3>& map_coeffs() const { return coeffs_; }
  const AmbientField& unit_normal() const { return normal_; }
  const ScalarField& mean_curvature() const { return H_; }
  const ScalarField& conformal_factor() const { return u_; }
  const Eigen::ArrayXd& area_element() const { return area_element_; }
  const Eigen::ArrayXd& g11() const { return g11_; }
  const Eigen::ArrayXd& g12() const { return g12_; }
  const Eigen::ArrayXd& g22() const { return g22_; }
  double conformal_defect() const { return conformal_defect_; }

  // Integral of a node array against the induced area measure d mu.
  double integrate_dmu(const Eigen::ArrayXd& v) const {
    return (f_.grid->weights() * area_element_ * v).sum();
  }

 private:
  AmbientField f_;
  std::array<SpectralCoeffs, 3> coeffs_;
  AmbientField normal_{};
  ScalarField H_{}, u_{};
  Eigen::ArrayXd g11_, g12_, g22_, area_element_;
  double conformal_defect_ = 0.0;
};

inline Immersion make_immersion(const AmbientField& f, double min_area_element = 1e-6) {
  return Immersion(f, min_area_element);
}

struct GeometrySummary {
  double area = 0.0;
  double volume = 0.0;
  double willmore = 0.0;
  double H_bar = 0.0;
  double cmc_defect_l2 = 0.0;
};

inline GeometrySummary geometry_summary(const Immersion& imm) {
  GeometrySummary s;
  const Eigen::ArrayXd ones = Eigen::ArrayXd::Ones(imm.grid()->n_nodes());
  s.area = imm.integrate_dmu(ones);
  s.volume = imm.integrate_dmu(dot(imm.map(), imm.unit_normal())) / 3.0;
  const Eigen::ArrayXd& H = imm.mean_curvature().values;
  s.willmore = imm.integrate_dmu(H * H);
  s.H_bar = imm.integrate_dmu(H) / s.area;
  s.cmc_defect_l2 = std::sqrt(imm.integrate_dmu((H - s.H_bar).square()));
  return s;
}

inline AmbientField scaled(const AmbientField& f, double lambda) {
  return {f.grid, {lambda * f.comp[0], lambda * f.comp[1], lambda * f.comp[2]}};
}

inline AmbientField translated(const AmbientField& f, const Eigen::Vector3d& a) {
  return {f.grid, {f.comp[0] + a[0], f.comp[1] + a[1], f.comp[2] + a[2]}};
}

// Rescale so the enclosed volume is 4 pi / 3.
inline Immersion normalize_volume(const Immersion& imm) {
  double vol = geometry_summary(imm).volume;
  if (vol <= 0.0) throw OrientationError("cannot normalize non-positive volume");
  double lambda = std::cbrt(four_pi / 3.0 / vol);
  return make_immersion(scaled(imm.map(), lambda));
}

// Minkowski-formula residual: int H (n_f . f) dmu - 2 area.
inline double minkowski_residual(const Immersion& imm) {
  const Eigen::ArrayXd phi = dot(imm.unit_normal(), imm.map());
  double lhs = imm.integrate_dmu(imm.mean_curvature().values * phi);
  double area = imm.integrate_dmu(Eigen::ArrayXd::Ones(imm.grid()->n_nodes()));
  return lhs - 2.0 * area;
}

// int H^2 dmu - [ int (H - Hbar)^2 dmu + Hbar^2 area ]; exact algebra.
inline double h2_splitting_residual(const Immersion& imm) {
  GeometrySummary s = geometry_summary(imm);
  return s.willmore - (s.cmc_defect_l2 * s.cmc_defect_l2 + s.H_bar * s.H_bar * s.area);
}

struct WillmoreThreshold {
  double willmore = 0.0;
  double threshold = 0.0;
  double single_bubble_product = 0.0;  // Hbar^2 * area, ~16 pi for one bubble
  bool passes = false;
};

inline WillmoreThreshold willmore_threshold_check(const Immersion& imm, double alpha) {
  if (!(alpha > 0.0 && alpha < 0.5)) throw ConfigError("alpha must lie in (0, 1/2)");
  GeometrySummary s = geometry_summary(imm);
  WillmoreThreshold out;
  out.willmore = s.willmore;
  out.threshold = 32.0 * pi * (1.0 - alpha);
  out.single_bubble_product = s.H_bar * s.H_bar * s.area;
  out.passes = out.willmore < out.threshold;
  return out;
}

}  // namespace cmclab
