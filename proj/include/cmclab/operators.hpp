#pragma once

#include "cmclab/field.hpp"

namespace cmclab {

// Laplace-Beltrami on S^2: coefficient-wise multiplication by -l(l+1).
inline SpectralCoeffs laplacian(const SpectralCoeffs& coeffs) {
  SpectralCoeffs out = coeffs;
  for (int l = 0; l <= coeffs.band_limit; ++l) {
    double lam = -double(l) * (l + 1);
    for (int m = -l; m <= l; ++m) out.at(l, m) *= lam;
  }
  return out;
}

inline ScalarField laplacian(const ScalarField& f) {
  return synthesize(laplacian(analyze(f)), f.grid);
}

inline AmbientField laplacian(const AmbientField& f) {
  auto c = analyze(f);
  return synthesize({laplacian(c[0]), laplacian(c[1]), laplacian(c[2])}, f.grid);
}

// Chart derivatives of a scalar field on its own grid.
inline ScalarField d_theta(const ScalarField& f) {
  return synthesize_deriv(analyze(f), f.grid, Deriv::d_theta);
}
inline ScalarField d_phi(const ScalarField& f) {
  return synthesize_deriv(analyze(f), f.grid, Deriv::d_phi);
}

// Surface gradient, as an ambient tangent field:
//   grad f = e_theta df/dtheta + e_phi (1/sin theta) df/dphi.
inline AmbientField surface_gradient(const SpectralCoeffs& coeffs, const GridPtr& grid) {
  const SphereGrid& g = *grid;
  Eigen::ArrayXd ft = synthesize_deriv(coeffs, grid, Deriv::d_theta).values;
  Eigen::ArrayXd fp = synthesize_deriv(coeffs, grid, Deriv::d_phi).values / g.sin_theta();
  return {grid,
          {g.e1x() * ft + g.e2x() * fp, g.e1y() * ft + g.e2y() * fp,
           g.e1z() * ft + g.e2z() * fp}};
}

inline AmbientField surface_gradient(const ScalarField& f) {
  return surface_gradient(analyze(f), f.grid);
}

// |grad f|^2 pointwise for an ambient field (component-wise sum).
inline Eigen::ArrayXd grad_norm_sq(const std::array<SpectralCoeffs, 3>& c,
                                   const GridPtr& grid) {
  const SphereGrid& g = *grid;
  Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(g.n_nodes());
  for (int k = 0; k < 3; ++k) {
    Eigen::ArrayXd ft = synthesize_deriv(c[k], grid, Deriv::d_theta).values;
    Eigen::ArrayXd fp = synthesize_deriv(c[k], grid, Deriv::d_phi).values / g.sin_theta();
    acc += ft * ft + fp * fp;
  }
  return acc;
}

inline Eigen::ArrayXd grad_norm_sq(const SpectralCoeffs& c, const GridPtr& grid) {
  const SphereGrid& g = *grid;
  Eigen::ArrayXd ft = synthesize_deriv(c, grid, Deriv::d_theta).values;
  Eigen::ArrayXd fp = synthesize_deriv(c, grid, Deriv::d_phi).values / g.sin_theta();
  return ft * ft + fp * fp;
}

// Resample a field onto another grid through its coefficients.
inline ScalarField resample(const ScalarField& f, const GridPtr& target) {
  return synthesize(analyze(f), target);
}

inline AmbientField resample(const AmbientField& f, const GridPtr& target) {
  return synthesize(analyze(f), target);
}

}  // namespace cmclab
