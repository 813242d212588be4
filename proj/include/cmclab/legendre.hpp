#pragma once

#include <cmath>
#include <numbers>
#include <vector>

namespace cmclab {

inline constexpr double pi = std::numbers::pi;
inline constexpr double four_pi = 4.0 * std::numbers::pi;

// Triangular (l, m) layout for 0 <= m <= l <= lmax.
constexpr int tri_idx(int l, int m) { return l * (l + 1) / 2 + m; }
constexpr int tri_size(int lmax) { return (lmax + 1) * (lmax + 2) / 2; }

// Gauss-Legendre nodes (ascending) and weights on [-1, 1]. Newton iteration on P_n.
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double t = std::cos(pi * (i + 0.75) / (n + 0.5));
    double p1 = 0.0, dp = 1.0;
    for (int iter = 0; iter < 64; ++iter) {
      double p0 = 1.0;
      p1 = t;
      for (int l = 2; l <= n; ++l) {
        double p2 = ((2 * l - 1) * t * p1 - (l - 1) * p0) / l;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (t * p1 - p0) / (t * t - 1.0);
      double dt = p1 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-15) break;
    }
    double wi = 2.0 / ((1.0 - t * t) * dp * dp);
    x[n - 1 - i] = t;
    x[i] = -t;
    w[n - 1 - i] = wi;
    w[i] = wi;
  }
}

// Normalized associated Legendre functions at colatitude theta, plus first and
// second theta-derivatives. Condon-Shortley-free, scaled so that
//   Y_{l,0}  = P(l,0)
//   Y_{l,m}  = sqrt(2) P(l,m) cos(m phi)   (m > 0)
//   Y_{l,-m} = sqrt(2) P(l,m) sin(m phi)   (m > 0)
// are orthonormal on S^2. Output arrays use tri_idx layout; dP/d2P may be null.
inline void legendre_theta(int lmax, double theta, double* P, double* dP, double* d2P) {
  const double s = std::sin(theta);
  const double c = std::cos(theta);
  auto set = [&](int l, int m, double p, double q, double r) {
    int k = tri_idx(l, m);
    P[k] = p;
    if (dP) dP[k] = q;
    if (d2P) d2P[k] = r;
  };
  auto get = [&](int l, int m, double& p, double& q, double& r) {
    int k = tri_idx(l, m);
    p = P[k];
    q = dP ? dP[k] : 0.0;
    r = d2P ? d2P[k] : 0.0;
  };

  set(0, 0, std::sqrt(1.0 / four_pi), 0.0, 0.0);
  for (int m = 1; m <= lmax; ++m) {
    double p, q, r;
    get(m - 1, m - 1, p, q, r);
    double cm = std::sqrt((2.0 * m + 1.0) / (2.0 * m));
    set(m, m, cm * s * p, cm * (c * p + s * q), cm * (-s * p + 2.0 * c * q + s * r));
  }
  for (int m = 0; m < lmax; ++m) {
    double p, q, r;
    get(m, m, p, q, r);
    double em = std::sqrt(2.0 * m + 3.0);
    set(m + 1, m, em * c * p, em * (-s * p + c * q), em * (-c * p - 2.0 * s * q + c * r));
  }
  for (int m = 0; m <= lmax; ++m) {
    for (int l = m + 2; l <= lmax; ++l) {
      double p1, q1, r1, p2, q2, r2;
      get(l - 1, m, p1, q1, r1);
      get(l - 2, m, p2, q2, r2);
      double a = std::sqrt((4.0 * l * l - 1.0) / (double(l) * l - double(m) * m));
      double b = std::sqrt((double(l - 1) * (l - 1) - double(m) * m) /
                           (4.0 * double(l - 1) * (l - 1) - 1.0));
      set(l, m, a * (c * p1 - b * p2), a * (-s * p1 + c * q1 - b * q2),
          a * (-c * p1 - 2.0 * s * q1 + c * r1 - b * r2));
    }
  }
}

}  // namespace cmclab
