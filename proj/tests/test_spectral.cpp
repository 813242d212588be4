#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "cmclab/field.hpp"
#include "cmclab/operators.hpp"

using namespace cmclab;

namespace {

ScalarField harmonic(const GridPtr& g, int l, int m) {
  SpectralCoeffs c = SpectralCoeffs::zeros(g->band_limit());
  c.at(l, m) = 1.0;
  return synthesize(c, g);
}

SpectralCoeffs random_coeffs(int L, int lmax, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  SpectralCoeffs c = SpectralCoeffs::zeros(L);
  for (int l = 0; l <= lmax; ++l)
    for (int m = -l; m <= l; ++m) c.at(l, m) = gauss(rng);
  return c;
}

}  // namespace

TEST_CASE("quadrature weights sum to 4pi") {
  for (int L : {4, 8, 16, 33}) {
    GridPtr g = build_grid(L);
    REQUIRE(g->weights().sum() == Catch::Approx(four_pi).epsilon(1e-12));
  }
}

TEST_CASE("grid shape follows band limit") {
  GridPtr g = build_grid(8);
  CHECK(g->n_theta() == 9);
  CHECK(g->n_phi() == 18);
  CHECK(g->n_nodes() == 162);
  CHECK(g->theta(0) > 0.0);
  CHECK(g->theta(g->n_theta() - 1) < pi);
}

TEST_CASE("band limit out of range is a configuration error") {
  CHECK_THROWS_AS(build_grid(3), ConfigError);
  CHECK_THROWS_AS(build_grid(257), ConfigError);
}

TEST_CASE("harmonics are orthonormal under quadrature") {
  GridPtr g = build_grid(8);
  ScalarField y20 = harmonic(g, 2, 0);
  ScalarField y31 = harmonic(g, 3, 1);
  CHECK(inner(y20, y20) == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(inner(y20, y31)) < 1e-12);
}

TEST_CASE("quadrature is exact on all harmonic pairs up to the band limit") {
  const int L = 8;
  GridPtr g = build_grid(L);
  std::vector<ScalarField> basis;
  for (int l = 0; l <= L; ++l)
    for (int m = -l; m <= l; ++m) basis.push_back(harmonic(g, l, m));
  for (size_t a = 0; a < basis.size(); ++a)
    for (size_t b = a; b < basis.size(); ++b) {
      double expected = (a == b) ? 1.0 : 0.0;
      REQUIRE(inner(basis[a], basis[b]) == Catch::Approx(expected).margin(1e-12));
    }
}

TEST_CASE("analysis recovers delta coefficients") {
  GridPtr g = build_grid(8);
  SpectralCoeffs c = analyze(harmonic(g, 2, 0));
  for (int l = 0; l <= 8; ++l)
    for (int m = -l; m <= l; ++m) {
      double expected = (l == 2 && m == 0) ? 1.0 : 0.0;
      REQUIRE(c.at(l, m) == Catch::Approx(expected).margin(1e-12));
    }
}

TEST_CASE("constant field is the l=0 harmonic") {
  GridPtr g = build_grid(8);
  ScalarField f = {g, Eigen::ArrayXd::Constant(g->n_nodes(), 1.0 / std::sqrt(four_pi))};
  SpectralCoeffs c = analyze(f);
  CHECK(c.at(0, 0) == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(c.c.tail(c.c.size() - 1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("synthesize-analyze round trip on random band-limited fields") {
  const int L = 12;
  GridPtr g = build_grid(L);
  SpectralCoeffs c = random_coeffs(L, L - 1, 42);
  SpectralCoeffs back = analyze(synthesize(c, g));
  REQUIRE((back.c - c.c).cwiseAbs().maxCoeff() < 1e-10 * c.c.norm());
}

TEST_CASE("synthesis rejects coefficients beyond the grid resolution") {
  GridPtr g = build_grid(8);
  SpectralCoeffs c = SpectralCoeffs::zeros(10);
  CHECK_THROWS_AS(synthesize(c, g), ResolutionError);
}

TEST_CASE("Parseval holds for random band-limited fields") {
  const int L = 16;
  GridPtr g = build_grid(L);
  for (unsigned seed : {1u, 2u, 3u}) {
    SpectralCoeffs c = random_coeffs(L, L, seed);
    ScalarField f = synthesize(c, g);
    double quad = inner(f, f);
    double spec = c.c.squaredNorm();
    REQUIRE(quad == Catch::Approx(spec).epsilon(1e-10));
  }
}

TEST_CASE("laplacian eigenvalues on low harmonics") {
  GridPtr g = build_grid(8);
  for (int m : {-1, 0, 1}) {
    ScalarField y = harmonic(g, 1, m);
    ScalarField lap = laplacian(y);
    REQUIRE((lap.values + 2.0 * y.values).abs().maxCoeff() < 1e-10);
  }
  for (int m : {-2, 0, 1}) {
    ScalarField y = harmonic(g, 2, m);
    ScalarField lap = laplacian(y);
    REQUIRE((lap.values + 6.0 * y.values).abs().maxCoeff() < 1e-10);
  }
  ScalarField c = {g, Eigen::ArrayXd::Constant(g->n_nodes(), 3.7)};
  CHECK(laplacian(c).values.abs().maxCoeff() < 1e-10);
}

TEST_CASE("laplacian is symmetric and negative semidefinite") {
  const int L = 10;
  GridPtr g = build_grid(L);
  ScalarField a = synthesize(random_coeffs(L, L - 1, 7), g);
  ScalarField b = synthesize(random_coeffs(L, L - 1, 8), g);
  double lhs = inner(laplacian(a), b);
  double rhs = inner(a, laplacian(b));
  CHECK(lhs == Catch::Approx(rhs).epsilon(1e-10));
  CHECK(inner(laplacian(a), a) <= 0.0);
}

TEST_CASE("integration by parts against the laplacian") {
  const int L = 12;
  GridPtr g = build_grid(L);
  ScalarField a = synthesize(random_coeffs(L, L - 1, 21), g);
  AmbientField grad = surface_gradient(a);
  double lhs = integrate(g, dot(grad, grad));
  double rhs = -inner(a, laplacian(a));
  REQUIRE(lhs == Catch::Approx(rhs).epsilon(1e-9));
}

TEST_CASE("surface gradient of a coordinate function") {
  GridPtr g = build_grid(8);
  ScalarField x3 = {g, g->nz()};
  AmbientField grad = surface_gradient(x3);
  // grad x^3 = e_3 - x^3 n, so |grad x^3|^2 = 1 - (x^3)^2.
  Eigen::ArrayXd gx = -g->nz() * g->nx();
  Eigen::ArrayXd gy = -g->nz() * g->ny();
  Eigen::ArrayXd gz = 1.0 - g->nz() * g->nz();
  CHECK((grad.comp[0] - gx).abs().maxCoeff() < 1e-10);
  CHECK((grad.comp[1] - gy).abs().maxCoeff() < 1e-10);
  CHECK((grad.comp[2] - gz).abs().maxCoeff() < 1e-10);
  Eigen::ArrayXd nsq = dot(grad, grad);
  CHECK((nsq - (1.0 - g->nz() * g->nz())).abs().maxCoeff() < 1e-8);
  // Tangency.
  Eigen::ArrayXd tn = grad.comp[0] * g->nx() + grad.comp[1] * g->ny() + grad.comp[2] * g->nz();
  CHECK(tn.abs().maxCoeff() < 1e-10);
}

TEST_CASE("surface gradient of a constant vanishes") {
  GridPtr g = build_grid(8);
  ScalarField c = {g, Eigen::ArrayXd::Constant(g->n_nodes(), 2.5)};
  AmbientField grad = surface_gradient(c);
  CHECK(dot(grad, grad).maxCoeff() < 1e-20);
}

TEST_CASE("Dirichlet energy of Y_{2,0} equals its eigenvalue") {
  GridPtr g = build_grid(8);
  AmbientField grad = surface_gradient(harmonic(g, 2, 0));
  CHECK(integrate(g, dot(grad, grad)) == Catch::Approx(6.0).epsilon(1e-10));
}

TEST_CASE("surface gradient matches one-sided finite differences away from poles") {
  const int L = 16;
  GridPtr g = build_grid(L);
  SpectralCoeffs c = random_coeffs(L, 6, 99);
  AmbientField grad = surface_gradient(c, g);
  // One-sided differences in the (theta, phi) chart at a few interior nodes.
  const double h = 1e-6;
  for (int i : {4, 8, 12}) {
    for (int j : {0, 5, 17}) {
      double th = g->theta(i), ph = g->phi(j);
      double f0 = evaluate(c, th, ph);
      double ft = (evaluate(c, th + h, ph) - f0) / h;
      double fp = (evaluate(c, th, ph + h) - f0) / h;
      int k = i * g->n_phi() + j;
      double st = std::sin(th), ct = std::cos(th), cp = std::cos(ph), sp = std::sin(ph);
      double ex = ct * cp * ft + (-sp) * fp / st;
      double ey = ct * sp * ft + cp * fp / st;
      double ez = -st * ft;
      REQUIRE(grad.comp[0][k] == Catch::Approx(ex).margin(2e-4));
      REQUIRE(grad.comp[1][k] == Catch::Approx(ey).margin(2e-4));
      REQUIRE(grad.comp[2][k] == Catch::Approx(ez).margin(2e-4));
    }
  }
}

TEST_CASE("sobolev norms via spectral multipliers") {
  GridPtr g = build_grid(8);
  CHECK(sobolev_sq(analyze(harmonic(g, 2, 0)), 2) == Catch::Approx(49.0).epsilon(1e-12));
  CHECK(sobolev_sq(analyze(harmonic(g, 1, 0)), 1) == Catch::Approx(3.0).epsilon(1e-12));
  double cval = -0.7;
  ScalarField cf = {g, Eigen::ArrayXd::Constant(g->n_nodes(), cval)};
  for (int s : {0, 1, 2})
    CHECK(sobolev_sq(analyze(cf), s) == Catch::Approx(four_pi * cval * cval).epsilon(1e-12));
}

TEST_CASE("sup norm via refined resampling") {
  GridPtr g = build_grid(8);
  // Y_{1,0} = sqrt(3/4pi) cos(theta): max value sqrt(3/4pi) at the pole,
  // which no quadrature node attains.
  ScalarField y10 = harmonic(g, 1, 0);
  double node_max = y10.values.abs().maxCoeff();
  double refined = sup_norm_refined(y10);
  double truth = std::sqrt(3.0 / four_pi);
  CHECK(refined >= node_max);
  CHECK(refined <= truth + 1e-12);
  CHECK(refined == Catch::Approx(truth).epsilon(0.01));
}
