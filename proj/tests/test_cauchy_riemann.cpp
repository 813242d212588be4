#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "cmclab/cauchy_riemann.hpp"
#include "support/fd_oracles.hpp"

using namespace cmclab;

namespace {

ScalarField harmonic(const GridPtr& g, int l, int m) {
  SpectralCoeffs c = SpectralCoeffs::zeros(g->band_limit());
  c.at(l, m) = 1.0;
  return synthesize(c, g);
}

AmbientField scaled_ambient(const AmbientField& a, double s) {
  return {a.grid, {s * a.comp[0], s * a.comp[1], s * a.comp[2]}};
}

AmbientField sum_ambient(const AmbientField& a, const AmbientField& b) {
  return {a.grid, {a.comp[0] + b.comp[0], a.comp[1] + b.comp[1], a.comp[2] + b.comp[2]}};
}

AmbientField normal_graph(const GridPtr& g, const ScalarField& z) {
  return {g, {z.values * g->nx(), z.values * g->ny(), z.values * g->nz()}};
}

double l2_norm(const AmbientField& a) { return std::sqrt(integrate(a.grid, dot(a, a))); }

Eigen::VectorXd random_tangent_coeffs(const CrSolver& solver, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd x(solver.n_basis());
  for (int i = 0; i < x.size(); ++i) x[i] = gauss(rng);
  return x;
}

}  // namespace

TEST_CASE("decompose splits h into tangential and normal parts") {
  GridPtr g = build_grid(12);
  // Pure normal graph.
  ScalarField z = harmonic(g, 2, 0);
  Decomposition d1 = decompose(normal_graph(g, z));
  CHECK(dot(d1.v, d1.v).maxCoeff() < 1e-24);
  CHECK((d1.z.values - z.values).abs().maxCoeff() < 1e-12);

  // Pure tangent field.
  AmbientField gx1 = surface_gradient(ScalarField{g, g->nx()});
  Decomposition d2 = decompose(gx1);
  CHECK(d2.z.values.abs().maxCoeff() < 1e-12);
  CHECK((d2.v.comp[0] - gx1.comp[0]).abs().maxCoeff() < 1e-12);

  // Constant field: z = x^3, v = e3 - x^3 n.
  AmbientField e3 = {g, {Eigen::ArrayXd::Zero(g->n_nodes()), Eigen::ArrayXd::Zero(g->n_nodes()),
                         Eigen::ArrayXd::Ones(g->n_nodes())}};
  Decomposition d3 = decompose(e3);
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> pick(0, g->n_nodes() - 1);
  for (int s = 0; s < 100; ++s) {
    int k = pick(rng);
    REQUIRE(d3.z.values[k] == Catch::Approx(g->nz()[k]).margin(1e-13));
    REQUIRE(d3.v.comp[0][k] == Catch::Approx(-g->nz()[k] * g->nx()[k]).margin(1e-13));
    REQUIRE(d3.v.comp[2][k] == Catch::Approx(1.0 - g->nz()[k] * g->nz()[k]).margin(1e-13));
  }
  // Reconstruction and tangency invariants.
  Eigen::ArrayXd recon = (d3.v.comp[2] + d3.z.values * g->nz() - 1.0).abs();
  CHECK(recon.maxCoeff() < 1e-12);
  Eigen::ArrayXd vn = d3.v.comp[0] * g->nx() + d3.v.comp[1] * g->ny() + d3.v.comp[2] * g->nz();
  CHECK(vn.abs().maxCoeff() < 1e-10);
}

TEST_CASE("conformal Killing basis") {
  GridPtr g = build_grid(12);
  auto basis = ckf_basis(g);
  // A_3 f0 at x = e1 is e2; grad x^3 at x = e1 is e3. Locate the node nearest e1.
  int best = 0;
  double bd = 1e9;
  for (int k = 0; k < g->n_nodes(); ++k) {
    double d = std::hypot(g->nx()[k] - 1.0, std::hypot(g->ny()[k], g->nz()[k]));
    if (d < bd) {
      bd = d;
      best = k;
    }
  }
  Eigen::Vector3d x(g->nx()[best], g->ny()[best], g->nz()[best]);
  Eigen::Vector3d a3(basis[2].comp[0][best], basis[2].comp[1][best], basis[2].comp[2][best]);
  Eigen::Vector3d expected_a3 = Eigen::Vector3d(0, 0, 1).cross(x);
  CHECK((a3 - expected_a3).norm() < 1e-12);
  Eigen::Vector3d g3(basis[5].comp[0][best], basis[5].comp[1][best], basis[5].comp[2][best]);
  Eigen::Vector3d expected_g3 = Eigen::Vector3d(0, 0, 1) - x[2] * x;
  CHECK((g3 - expected_g3).norm() < 1e-12);

  // All six tangent; Gram matrix nonsingular.
  Eigen::MatrixXd gram(6, 6);
  for (int a = 0; a < 6; ++a) {
    Eigen::ArrayXd tn = basis[a].comp[0] * g->nx() + basis[a].comp[1] * g->ny() +
                        basis[a].comp[2] * g->nz();
    REQUIRE(tn.abs().maxCoeff() < 1e-12);
    for (int b = 0; b < 6; ++b) gram(a, b) = integrate(g, dot(basis[a], basis[b]));
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(gram);
  CHECK(svd.singularValues().minCoeff() > 1.0);

  // D annihilates the kernel.
  for (const auto& b : basis) REQUIRE(tensor_norm(cr_apply(b)) < 1e-8);
}

TEST_CASE("cr_apply rejects non-tangent input") {
  GridPtr g = build_grid(8);
  CHECK_THROWS_AS(cr_apply(unit_sphere_map(g)), DomainError);
}

TEST_CASE("cr_apply matches the finite-difference Lie-derivative oracle") {
  const int L = 16;
  GridPtr g = build_grid(L);
  // Random tangent field with modes up to l = 5, synthesized from a potential pair.
  std::mt19937_64 rng(314);
  std::normal_distribution<double> gauss(0.0, 1.0);
  SpectralCoeffs A = SpectralCoeffs::zeros(L), Bc = SpectralCoeffs::zeros(L);
  for (int l = 1; l <= 5; ++l)
    for (int m = -l; m <= l; ++m) {
      A.at(l, m) = gauss(rng);
      Bc.at(l, m) = gauss(rng);
    }
  AmbientField grad = surface_gradient(A, g);
  AmbientField curl = cross(unit_sphere_map(g), surface_gradient(Bc, g));
  AmbientField v = sum_ambient(grad, curl);
  TracelessTensorField Dv = cr_apply(v);

  auto a3 = analyze(v);
  auto v_eval = [&](const Eigen::Vector3d& x) {
    double th = std::atan2(std::hypot(x[0], x[1]), x[2]);
    double ph = std::atan2(x[1], x[0]);
    PointEvaluator ev(L, th, ph);
    return Eigen::Vector3d(ev.value(a3[0]), ev.value(a3[1]), ev.value(a3[2]));
  };
  for (int i : {4, 8, 12})
    for (int j : {2, 11, 23}) {
      int k = i * g->n_phi() + j;
      Eigen::Vector3d p(g->nx()[k], g->ny()[k], g->nz()[k]);
      Eigen::Vector3d e1(g->e1x()[k], g->e1y()[k], g->e1z()[k]);
      Eigen::Vector3d e2(g->e2x()[k], g->e2y()[k], g->e2z()[k]);
      Eigen::Vector2d fd = testing::fd_lie_derivative_tracefree(v_eval, p, e1, e2);
      REQUIRE(Dv.t11[k] == Catch::Approx(fd[0]).margin(1e-6));
      REQUIRE(Dv.t12[k] == Catch::Approx(fd[1]).margin(1e-6));
    }
}

TEST_CASE("squared CR norm of a gradient harmonic") {
  // For v = grad Y_lm the Frobenius norm is ||Dv||^2 = 2 lambda (lambda - 2);
  // l = 2 gives 48. Pinned against the Lie-derivative oracle above.
  GridPtr g = build_grid(12);
  AmbientField v = surface_gradient(harmonic(g, 2, 0));
  double norm_sq = tensor_inner(cr_apply(v), cr_apply(v));
  CHECK(norm_sq == Catch::Approx(48.0).epsilon(1e-9));
}

TEST_CASE("cr_apply is linear") {
  GridPtr g = build_grid(10);
  AmbientField v1 = surface_gradient(harmonic(g, 2, 1));
  AmbientField v2 = cross(unit_sphere_map(g), surface_gradient(harmonic(g, 3, -2)));
  double a = 1.7, b = -0.4;
  AmbientField comb = sum_ambient(scaled_ambient(v1, a), scaled_ambient(v2, b));
  TracelessTensorField lhs = cr_apply(comb);
  TracelessTensorField d1 = cr_apply(v1), d2 = cr_apply(v2);
  CHECK((lhs.t11 - a * d1.t11 - b * d2.t11).abs().maxCoeff() < 1e-10);
  CHECK((lhs.t12 - a * d1.t12 - b * d2.t12).abs().maxCoeff() < 1e-10);
}

TEST_CASE("q_form basics") {
  GridPtr g = build_grid(12);
  CHECK(tensor_norm(q_form(zero_ambient(g))) == 0.0);

  // Pure normal graph: compare against direct pointwise assembly from jets.
  ScalarField z = harmonic(g, 2, 0);
  AmbientField h = normal_graph(g, z);
  TracelessTensorField Q = q_form(h);
  auto hc = analyze(h);
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> pi_(1, g->n_theta() - 2), pj(0, g->n_phi() - 1);
  for (int s = 0; s < 20; ++s) {
    int i = pi_(rng), j = pj(rng), k = i * g->n_phi() + j;
    PointEvaluator ev(g->band_limit(), g->theta(i), g->phi(j));
    double st = std::sin(g->theta(i));
    Eigen::Vector3d h1, h2;
    for (int c = 0; c < 3; ++c) {
      Jet1 jet = ev.jet(hc[c]);
      h1[c] = jet.ft;
      h2[c] = jet.fp / st;
    }
    REQUIRE(Q.t11[k] == Catch::Approx(-0.5 * (h1.dot(h1) - h2.dot(h2))).margin(1e-10));
    REQUIRE(Q.t12[k] == Catch::Approx(-h1.dot(h2)).margin(1e-10));
  }

  // Quadratic homogeneity.
  TracelessTensorField Qs = q_form(scaled_ambient(h, 3.0));
  CHECK((Qs.t11 - 9.0 * Q.t11).abs().maxCoeff() < 1e-12);
  CHECK((Qs.t12 - 9.0 * Q.t12).abs().maxCoeff() < 1e-12);

  // Pointwise bound |Q| <= |dh|^2.
  auto c = analyze(h);
  Eigen::ArrayXd dh_sq = grad_norm_sq(c, g);
  Eigen::ArrayXd qnorm = (2.0 * (Q.t11.square() + Q.t12.square())).sqrt();
  CHECK((qnorm - dh_sq).maxCoeff() < 1e-10);
}

TEST_CASE("cr_solve round trips") {
  const int L = 16;
  GridPtr g = build_grid(L);
  CrSolver solver(g);

  // Q = 0 -> v = 0.
  TracelessTensorField zero{g, Eigen::ArrayXd::Zero(g->n_nodes()),
                            Eigen::ArrayXd::Zero(g->n_nodes())};
  CHECK(l2_norm(solver.solve(zero).v) == 0.0);

  // Apply-then-solve on grad Y_20 (kernel projection is zero at l = 2).
  AmbientField v20 = surface_gradient(harmonic(g, 2, 0));
  AmbientField rec = solver.solve(cr_apply(v20)).v;
  CHECK(l2_norm(sum_ambient(rec, scaled_ambient(v20, -1.0))) < 1e-7);

  // Random tangent fields: recover the kernel-orthogonal part.
  for (unsigned seed : {11u, 12u, 13u}) {
    Eigen::VectorXd xc = random_tangent_coeffs(solver, seed);
    AmbientField w = solver.synth_tangent(xc);
    // Add a kernel component; the solve must remove it.
    auto ck = ckf_basis(g);
    AmbientField wk = sum_ambient(w, scaled_ambient(ck[seed % 6], 0.3));
    AmbientField sol = solver.solve(cr_apply(wk)).v;
    AmbientField expected = sum_ambient(wk, scaled_ambient(kernel_projection(wk), -1.0));
    REQUIRE(l2_norm(sum_ambient(sol, scaled_ambient(expected, -1.0))) <
            1e-6 * (1.0 + l2_norm(w)));
  }
}

TEST_CASE("discrete adjoint pairing is consistent with quadrature") {
  const int L = 12;
  GridPtr g = build_grid(L);
  CrSolver solver(g);
  Eigen::VectorXd xc = random_tangent_coeffs(solver, 99);
  AmbientField w = solver.synth_tangent(xc);
  // Random band-limited tensor field.
  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  SpectralCoeffs t1 = SpectralCoeffs::zeros(L), t2 = SpectralCoeffs::zeros(L);
  for (int l = 0; l <= 6; ++l)
    for (int m = -l; m <= l; ++m) {
      t1.at(l, m) = gauss(rng);
      t2.at(l, m) = gauss(rng);
    }
  TracelessTensorField T{g, synthesize(t1, g).values, synthesize(t2, g).values};
  // <D w, T> computed by quadrature must match the basis-coefficient pairing
  // <w, D* T> (the vector-harmonic basis is quadrature-orthonormal).
  double lhs = tensor_inner(cr_apply(w), T);
  AmbientField DstarT = solver.solve(T).v;  // projection of T through the normal equations
  // <w, D*T> = <Dw, T> holds when both sides use the same discrete operator;
  // check through the least-squares characterization instead:
  TracelessTensorField Dsol = cr_apply(DstarT);
  double rhs = tensor_inner(cr_apply(w), Dsol);
  CHECK(lhs == Catch::Approx(rhs).margin(1e-8 * (1.0 + std::abs(lhs))));
}

TEST_CASE("D annihilates exactly the conformal Killing span among low modes") {
  const int L = 12;
  GridPtr g = build_grid(L);
  // Tangent basis up to l = 3: 2 * ((3+1)^2 - 1) = 30 elements; kernel dim 6.
  std::vector<AmbientField> basis;
  for (int l = 1; l <= 3; ++l)
    for (int m = -l; m <= l; ++m) {
      SpectralCoeffs c = SpectralCoeffs::zeros(L);
      c.at(l, m) = 1.0;
      AmbientField grad = surface_gradient(c, g);
      basis.push_back(grad);
      basis.push_back(cross(unit_sphere_map(g), grad));
    }
  Eigen::MatrixXd gram(basis.size(), basis.size());
  std::vector<TracelessTensorField> images;
  images.reserve(basis.size());
  for (auto& b : basis) images.push_back(cr_apply(b));
  for (size_t a = 0; a < basis.size(); ++a)
    for (size_t b = 0; b < basis.size(); ++b)
      gram(a, b) = tensor_inner(images[a], images[b]);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  Eigen::VectorXd ev = es.eigenvalues();
  for (int i = 0; i < 6; ++i) REQUIRE(std::abs(ev[i]) < 1e-8);
  REQUIRE(ev[6] > 0.1);
}

TEST_CASE("conformalize fixed points") {
  GridPtr g = build_grid(16);
  ScalarField one = {g, Eigen::ArrayXd::Ones(g->n_nodes())};
  ConformalizeResult r1 = conformalize(one);
  CHECK(r1.iterations == 0);
  CHECK((r1.immersion.map().comp[0] - g->nx()).abs().maxCoeff() < 1e-12);

  ScalarField dil = {g, Eigen::ArrayXd::Constant(g->n_nodes(), 1.03)};
  ConformalizeResult r2 = conformalize(dil);
  CHECK(r2.iterations == 0);
  CHECK(r2.final_defect < 1e-9);
}

TEST_CASE("conformalize a radial graph") {
  GridPtr g = build_grid(16);
  SpectralCoeffs rc = SpectralCoeffs::zeros(16);
  rc.at(0, 0) = std::sqrt(four_pi);
  rc.at(2, 0) = 0.02;
  ScalarField rho = synthesize(rc, g);
  ConformalizeResult res = conformalize(rho);
  CHECK(res.iterations <= 10);
  CHECK(res.final_defect <= 1e-8);

  // Image points stay exactly on the surface: |f| / rho(f/|f|) = 1.
  const AmbientField& f = res.immersion.map();
  for (int k = 0; k < g->n_nodes(); k += 37) {
    Eigen::Vector3d p(f.comp[0][k], f.comp[1][k], f.comp[2][k]);
    double r = p.norm();
    Eigen::Vector3d u = p / r;
    double th = std::atan2(std::hypot(u[0], u[1]), u[2]);
    double ph = std::atan2(u[1], u[0]);
    REQUIRE(r / evaluate(rc, th, ph) == Catch::Approx(1.0).margin(1e-10));
  }

  // Contraction: defect after one step at most half the initial defect.
  AmbientField f_init = {g, {rho.values * g->nx(), rho.values * g->ny(),
                             rho.values * g->nz()}};
  double d0 = make_immersion(f_init).conformal_defect();
  CrSolver solver(g);
  ConformalizeResult one_step = conformalize_on(RadialSurface{rc}, f_init, solver, 1e-30, 1);
  CHECK(one_step.final_defect <= 0.5 * d0);

  // Idempotence: re-running on its own output takes at most one iteration.
  ConformalizeResult again = conformalize_on(RadialSurface{rc}, res.immersion.map(), solver);
  CHECK(again.iterations <= 1);
}

TEST_CASE("conformalize rejects out-of-regime profiles") {
  GridPtr g = build_grid(12);
  SpectralCoeffs rc = SpectralCoeffs::zeros(12);
  rc.at(0, 0) = std::sqrt(four_pi);
  rc.at(2, 0) = 0.3;
  CHECK_THROWS_AS(conformalize(synthesize(rc, g)), OutOfRegimeError);
}

TEST_CASE("CR identity holds at the converged conformal state") {
  GridPtr g = build_grid(16);
  SpectralCoeffs rc = SpectralCoeffs::zeros(16);
  rc.at(0, 0) = std::sqrt(four_pi);
  rc.at(2, 0) = 0.02;
  rc.at(3, 1) = 0.01;
  ConformalizeResult res = conformalize(synthesize(rc, g));
  AmbientField f0 = unit_sphere_map(g);
  AmbientField h = {g,
                    {res.immersion.map().comp[0] - f0.comp[0],
                     res.immersion.map().comp[1] - f0.comp[1],
                     res.immersion.map().comp[2] - f0.comp[2]}};
  Decomposition dec = decompose(h);
  TracelessTensorField Q = q_form(h);
  TracelessTensorField Dv = cr_apply(dec.v);
  TracelessTensorField diff{g, Dv.t11 - Q.t11, Dv.t12 - Q.t12};
  CHECK(tensor_norm(diff) <= 1e-7 * (1.0 + tensor_norm(Q)));
}

TEST_CASE("nu_residual vanishes on the round sphere and scales quadratically") {
  GridPtr g = build_grid(16);
  Immersion round = make_immersion(unit_sphere_map(g));
  AmbientField h0 = zero_ambient(g);
  NuResidual r0 = nu_residual(round, decompose(h0));
  CHECK(r0.l2 < 1e-10);
  CHECK(r0.l4 < 1e-10);

  std::vector<double> res;
  for (double t : {0.02, 0.01}) {
    SpectralCoeffs rc = SpectralCoeffs::zeros(16);
    rc.at(0, 0) = std::sqrt(four_pi);
    rc.at(2, 0) = t;
    ConformalizeResult conf = conformalize(synthesize(rc, g));
    AmbientField f0 = unit_sphere_map(g);
    AmbientField h = {g,
                      {conf.immersion.map().comp[0] - f0.comp[0],
                       conf.immersion.map().comp[1] - f0.comp[1],
                       conf.immersion.map().comp[2] - f0.comp[2]}};
    NuResidual nr = nu_residual(conf.immersion, decompose(h));
    res.push_back(nr.l2);
  }
  double slope = std::log(res[0] / res[1]) / std::log(2.0);
  CHECK(slope == Catch::Approx(2.0).margin(0.3));
}
