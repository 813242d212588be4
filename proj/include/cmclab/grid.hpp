#pragma once

#include <Eigen/Core>
#include <memory>
#include <vector>

#include "cmclab/errors.hpp"
#include "cmclab/legendre.hpp"

namespace cmclab {

class SphereGrid;
using GridPtr = std::shared_ptr<const SphereGrid>;

// Gauss-Legendre x uniform-longitude quadrature grid on S^2.
//
// n_theta = L+1 Gauss-Legendre colatitudes (all interior, no poles) and
// n_phi = 2L+2 equispaced longitudes integrate spherical-harmonic products of
// total degree <= 2L exactly. Node index: k = i_theta * n_phi + j_phi,
// colatitudes ascending. Weights sum to 4*pi.
//
// The grid also carries normalized Legendre tables (values plus first and
// second theta-derivatives) for every colatitude row, and the orthonormal
// coordinate frame e_theta, e_phi at every node.
class SphereGrid {
 public:
  explicit SphereGrid(int band_limit)
      : L_(band_limit), n_theta_(band_limit + 1), n_phi_(2 * band_limit + 2) {
    if (band_limit < 4 || band_limit > 256)
      throw ConfigError("band_limit must lie in [4, 256]");

    std::vector<double> xgl, wgl;
    gauss_legendre(n_theta_, xgl, wgl);
    theta_.resize(n_theta_);
    wtheta_.resize(n_theta_);
    for (int i = 0; i < n_theta_; ++i) {
      theta_[i] = std::acos(xgl[n_theta_ - 1 - i]);
      wtheta_[i] = wgl[n_theta_ - 1 - i];
    }
    phi_.resize(n_phi_);
    for (int j = 0; j < n_phi_; ++j) phi_[j] = 2.0 * pi * j / n_phi_;

    const int ts = tri_size(L_);
    P_.resize(size_t(n_theta_) * ts);
    dP_.resize(size_t(n_theta_) * ts);
    d2P_.resize(size_t(n_theta_) * ts);
    for (int i = 0; i < n_theta_; ++i)
      legendre_theta(L_, theta_[i], &P_[size_t(i) * ts], &dP_[size_t(i) * ts],
                     &d2P_[size_t(i) * ts]);

    cosm_.resize(size_t(L_ + 1) * n_phi_);
    sinm_.resize(size_t(L_ + 1) * n_phi_);
    for (int m = 0; m <= L_; ++m)
      for (int j = 0; j < n_phi_; ++j) {
        cosm_[size_t(m) * n_phi_ + j] = std::cos(m * phi_[j]);
        sinm_[size_t(m) * n_phi_ + j] = std::sin(m * phi_[j]);
      }

    const int n = n_nodes();
    weight_.resize(n);
    sin_theta_.resize(n);
    cos_theta_.resize(n);
    for (auto* a : {&nx_, &ny_, &nz_, &e1x_, &e1y_, &e1z_, &e2x_, &e2y_, &e2z_})
      a->resize(n);
    const double dphi = 2.0 * pi / n_phi_;
    for (int i = 0; i < n_theta_; ++i) {
      double st = std::sin(theta_[i]), ct = std::cos(theta_[i]);
      for (int j = 0; j < n_phi_; ++j) {
        int k = i * n_phi_ + j;
        double cp = std::cos(phi_[j]), sp = std::sin(phi_[j]);
        weight_[k] = wtheta_[i] * dphi;
        sin_theta_[k] = st;
        cos_theta_[k] = ct;
        nx_[k] = st * cp;
        ny_[k] = st * sp;
        nz_[k] = ct;
        e1x_[k] = ct * cp;
        e1y_[k] = ct * sp;
        e1z_[k] = -st;
        e2x_[k] = -sp;
        e2y_[k] = cp;
        e2z_[k] = 0.0;
      }
    }
  }

  int band_limit() const { return L_; }
  int n_theta() const { return n_theta_; }
  int n_phi() const { return n_phi_; }
  int n_nodes() const { return n_theta_ * n_phi_; }

  double theta(int i) const { return theta_[i]; }
  double phi(int j) const { return phi_[j]; }
  double theta_weight(int i) const { return wtheta_[i]; }

  const Eigen::ArrayXd& weights() const { return weight_; }
  const Eigen::ArrayXd& sin_theta() const { return sin_theta_; }
  const Eigen::ArrayXd& cos_theta() const { return cos_theta_; }
  // Unit point n = x on S^2 and the orthonormal frame (e_theta, e_phi).
  const Eigen::ArrayXd& nx() const { return nx_; }
  const Eigen::ArrayXd& ny() const { return ny_; }
  const Eigen::ArrayXd& nz() const { return nz_; }
  const Eigen::ArrayXd& e1x() const { return e1x_; }
  const Eigen::ArrayXd& e1y() const { return e1y_; }
  const Eigen::ArrayXd& e1z() const { return e1z_; }
  const Eigen::ArrayXd& e2x() const { return e2x_; }
  const Eigen::ArrayXd& e2y() const { return e2y_; }
  const Eigen::ArrayXd& e2z() const { return e2z_; }

  const double* legendre_row(int i) const { return &P_[size_t(i) * tri_size(L_)]; }
  const double* legendre_dtheta_row(int i) const { return &dP_[size_t(i) * tri_size(L_)]; }
  const double* legendre_d2theta_row(int i) const { return &d2P_[size_t(i) * tri_size(L_)]; }
  double cos_m_phi(int m, int j) const { return cosm_[size_t(m) * n_phi_ + j]; }
  double sin_m_phi(int m, int j) const { return sinm_[size_t(m) * n_phi_ + j]; }

 private:
  int L_, n_theta_, n_phi_;
  std::vector<double> theta_, phi_, wtheta_;
  std::vector<double> P_, dP_, d2P_;
  std::vector<double> cosm_, sinm_;
  Eigen::ArrayXd weight_, sin_theta_, cos_theta_;
  Eigen::ArrayXd nx_, ny_, nz_, e1x_, e1y_, e1z_, e2x_, e2y_, e2z_;
};

inline GridPtr build_grid(int band_limit) {
  return std::make_shared<const SphereGrid>(band_limit);
}

}  // namespace cmclab
