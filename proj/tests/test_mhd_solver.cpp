#include <cmath>

#include "doctest.h"
#include "mhdlab/mhd_solver.hpp"

using namespace mhdlab;

namespace {

double max_diff(const SpectralVectorField& a, const SpectralVectorField& b) {
  double m = 0;
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < a.coeffs[c].size(); ++i) m = std::max(m, std::abs(a.coeffs[c][i] - b.coeffs[c][i]));
  return m;
}

double max_coeff(const SpectralVectorField& a) {
  double m = 0;
  for (const auto& c : a.coeffs)
    for (const auto& z : c) m = std::max(m, std::abs(z));
  return m;
}

double state_l2_diff(const MHDState& a, const MHDState& b) {
  const double du = l2_norm(a.u - b.u), dh = l2_norm(a.h - b.h);
  return std::sqrt(du * du + dh * dh);
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
  }
  return sxy / sxx;
}

SpectralVectorField taylor_green(const Grid& g) {
  PhysicalVectorField f = PhysicalVectorField::zeros(g);
  std::size_t idx = 0;
  for (int a = 0; a < g.n1; ++a)
    for (int b = 0; b < g.n2; ++b)
      for (int c = 0; c < g.n3; ++c, ++idx) {
        const double x = g.x(0, a), y = g.x(1, b), z = g.x(2, c);
        f.values[0][idx] = std::sin(x) * std::cos(y) * std::cos(z);
        f.values[1][idx] = -std::cos(x) * std::sin(y) * std::cos(z);
      }
  return forward_transform(f);
}

MHDState small_random(const Grid& g, double amp, std::uint64_t seed) {
  MHDState s = MHDState::zeros(g);
  s.u = leray_project(dealias(random_solenoidal_field(g, seed, 2)));
  s.h = leray_project(dealias(random_solenoidal_field(g, seed + 17, 2)));
  const double nu = l2_norm(s.u), nh = l2_norm(s.h);
  s.u *= amp / nu;
  s.h *= amp / nh;
  return s;
}

}  // namespace

TEST_CASE("equilibrium is a fixed point of rhs, step and run") {
  const Grid g = Grid::cube(16, 2 * kPi);
  const MHDState z = MHDState::zeros(g);
  const RhsResult r = rhs_eval(z);
  CHECK(max_coeff(r.du) == 0.0);
  CHECK(max_coeff(r.dh) == 0.0);
  SolverConfig cfg;
  cfg.grid = g;
  cfg.dt = 0.1;
  cfg.T = 1.0;
  cfg.diagnostics_stride = 2;
  const MHDState s1 = step(z, 0.1, cfg);
  CHECK(max_coeff(s1.u) == 0.0);
  CHECK(max_coeff(s1.h) == 0.0);
  CHECK(s1.t == doctest::Approx(0.1));
  const DiagnosticsSeries d = run(cfg, z);
  REQUIRE(d.t.size() == 6);
  for (std::size_t i = 0; i < d.t.size(); ++i) {
    CHECK(d.u_h2[i] == 0.0);
    CHECK(d.h_h2[i] == 0.0);
    CHECK(d.energy[i] == 0.0);
    CHECK(d.dissipation[i] == 0.0);
    CHECK(d.u_w2inf[i] == 0.0);
  }
  CHECK(d.warnings.empty());
}

TEST_CASE("rhs minus the linearized rhs is quadratic in the amplitude") {
  const Grid g = Grid::cube(16, 2 * kPi);
  const MHDState base = small_random(g, 1.0, 5);
  std::vector<double> eps, err;
  for (double e : {1e-3, 2e-3, 4e-3, 8e-3, 1.6e-2}) {
    MHDState s = base;
    s.u *= e;
    s.h *= e;
    const RhsResult full = rhs_eval(s);
    const RhsResult lin = linear_rhs(s);
    const double du = l2_norm(full.du - lin.du), dh = l2_norm(full.dh - lin.dh);
    eps.push_back(e);
    err.push_back(std::sqrt(du * du + dh * dh));
    CHECK(divergence_defect(full.du) <= 1e-13);
    CHECK(divergence_defect(full.dh) <= 1e-13);
  }
  CHECK(slope(eps, err) == doctest::Approx(2.0).epsilon(0.01));
}

TEST_CASE("h = 0 reduces to Navier-Stokes; divergence and advective forms agree") {
  const Grid g = Grid::cube(16, 2 * kPi);
  MHDState s = MHDState::zeros(g);
  s.u = taylor_green(g);
  const RhsResult r = rhs_eval(s);
  CHECK(max_diff(r.dh, partial(s.u, 2)) <= 1e-12 * max_coeff(s.u));
  const SpectralVectorField adv = advective_nonlinearity(s.u);
  SpectralVectorField expected = laplacian(s.u);
  expected -= adv;
  CHECK(max_diff(r.du, expected) <= 1e-10 * max_coeff(s.u));
  CHECK(max_coeff(adv) >= 1e-3 * max_coeff(s.u));

  // A second, generic field with higher modes.
  MHDState s2 = MHDState::zeros(g);
  s2.u = leray_project(dealias(random_solenoidal_field(g, 9, 3)));
  const RhsResult r2 = rhs_eval(s2);
  SpectralVectorField e2 = laplacian(s2.u);
  e2 -= advective_nonlinearity(s2.u);
  CHECK(max_diff(r2.du, e2) <= 1e-12 * max_coeff(e2));
}

TEST_CASE("integrating factor makes a pure heat mode exact") {
  const Grid g = Grid::cube(16, 2 * kPi);
  MHDState s = MHDState::zeros(g);
  s.u = plane_wave(g, {1, 2, 0}, 2, 0.3);  // u3 cos(x + 2y): k3 = 0, u . grad u = 0
  SolverConfig cfg;
  cfg.grid = g;
  const double dt = 0.2;
  const MHDState s1 = step(s, dt, cfg);
  SpectralVectorField expected = s.u;
  expected *= std::exp(-5.0 * dt);
  CHECK(max_diff(s1.u, expected) <= 1e-13 * max_coeff(s.u));
  CHECK(max_coeff(s1.h) <= 1e-14 * max_coeff(s.u));
}

TEST_CASE("Lawson RK4 converges at fourth order") {
  const Grid g = Grid::cube(16, 2 * kPi);
  MHDState s0 = small_random(g, 0.3, 3);
  SolverConfig cfg;
  cfg.grid = g;
  auto integrate = [&](double dt, int n) {
    MHDState s = s0;
    for (int i = 0; i < n; ++i) s = step(s, dt, cfg);
    return s;
  };
  const MHDState ref = integrate(0.0125, 80);
  const double e1 = state_l2_diff(integrate(0.1, 10), ref);
  const double e2 = state_l2_diff(integrate(0.05, 20), ref);
  const double e3 = state_l2_diff(integrate(0.025, 40), ref);
  const double p12 = std::log2(e1 / e2), p23 = std::log2(e2 / e3);
  MESSAGE("order estimates " << p12 << ", " << p23);
  CHECK(p12 == doctest::Approx(4.0).epsilon(0.1));
  CHECK(p23 == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("linear mode reproduces the exact linear propagator") {
  const Grid g = Grid::cube(16, 4 * kPi);
  const MHDState s0 = small_random(g, 1e-2, 11);
  SolverConfig cfg;
  cfg.grid = g;
  cfg.nonlinear = false;
  cfg.dt = 0.025;
  cfg.T = 2.0;
  cfg.diagnostics_stride = 40;
  const DiagnosticsSeries d = run(cfg, s0, {false});
  const MHDState exact = linear_reference(s0, 2.0);
  const double err = state_l2_diff(d.final_state, exact);
  const double size = std::sqrt(2 * perturbation_energy(s0));
  CHECK(err <= 1e-8 * size);
}

TEST_CASE("nonlinear run departs from the linear oracle at second order in the amplitude") {
  const Grid g = Grid::cube(16, 4 * kPi);
  const MHDState base = small_random(g, 1.0, 13);
  SolverConfig cfg;
  cfg.grid = g;
  cfg.dt = 0.05;
  cfg.T = 2.0;
  cfg.diagnostics_stride = 40;
  std::vector<double> amps, errs;
  for (double a : {1e-3, 2e-3, 4e-3, 8e-3}) {
    MHDState s0 = base;
    s0.u *= a;
    s0.h *= a;
    const DiagnosticsSeries d = run(cfg, s0, {false});
    amps.push_back(a);
    errs.push_back(state_l2_diff(d.final_state, linear_reference(s0, cfg.T)));
  }
  CHECK(slope(amps, errs) == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("energy ledger, divergence, monotone decay and tail convergence") {
  const Grid g = Grid::cube(16, 4 * kPi);
  InitialDataSpec spec;
  spec.u_amplitude = 0.02;
  spec.epsilon = 0.02;
  spec.kmax = 3;
  const MHDState s0 = default_initial_data(g, spec);
  SolverConfig cfg;
  cfg.grid = g;
  cfg.dt = 0.05;
  cfg.T = 8.0;
  cfg.diagnostics_stride = 4;
  const DiagnosticsSeries d = run(cfg, s0);
  CHECK(d.warnings.empty());
  CHECK(d.max_divergence <= 1e-11);
  CHECK(d.ledger_residual <= 1e-6);
  MESSAGE("ledger residual " << d.ledger_residual << ", divergence " << d.max_divergence);
  for (std::size_t i = 1; i < d.t.size(); ++i) {
    CHECK(d.energy[i] <= d.energy[i - 1] * (1 + 1e-12));
    if (d.t[i - 1] >= 1.0) CHECK(d.l2_sum[i] <= d.l2_sum[i - 1] * (1 + 1e-12));
  }
  // Cauchy tails of the dissipation integral shrink.
  const std::size_t n = d.t.size();
  const double tail1 = d.dissipation[n / 2] - d.dissipation[n / 4];
  const double tail2 = d.dissipation[n - 1] - d.dissipation[n / 2];
  CHECK(tail2 < tail1);
  const std::string csv = d.to_csv();
  CHECK(csv.rfind("t,u_h2,h_h2,", 0) == 0);
}

TEST_CASE("without viscosity and nonlinearity the coupled system conserves energy") {
  const Grid g = Grid::cube(16, 2 * kPi);
  const MHDState s0 = small_random(g, 0.1, 21);
  SolverConfig cfg;
  cfg.grid = g;
  cfg.viscous = false;
  cfg.nonlinear = false;
  const double e0 = perturbation_energy(s0);
  const double d1 = std::abs(perturbation_energy(step(s0, 0.2, cfg)) - e0) / e0;
  const double d2 = std::abs(perturbation_energy(step(s0, 0.1, cfg)) - e0) / e0;
  MESSAGE("per-step energy defects " << d1 << ", " << d2);
  CHECK(d1 <= 1e-3);
  CHECK(d1 / d2 >= 16.0);
}

TEST_CASE("initial data: divergence-free, vertical mean zero, scaled, warning on large data") {
  const Grid g = Grid::cube(16, 4 * kPi);
  InitialDataSpec spec;
  const MHDState s = default_initial_data(g, spec);
  CHECK(divergence_defect(s.u) <= 1e-13);
  CHECK(divergence_defect(s.h) <= 1e-13);
  CHECK(hs_norm(s.u, 2) == doctest::Approx(spec.u_amplitude).epsilon(1e-12));
  CHECK(hs_norm(s.h, 2) == doctest::Approx(spec.epsilon).epsilon(1e-12));
  WavenumberTable wt(g);
  double plane = 0;
  wt.for_each_k([&](std::size_t i, const Vec3&, const std::array<int, 3>& k) {
    if (k[2] == 0)
      for (int c = 0; c < 3; ++c) plane = std::max(plane, std::abs(s.h.coeffs[c][i]));
  });
  CHECK(plane <= 1e-14 * max_coeff(s.h));
  CHECK(default_initial_data(g, spec).u.coeffs == s.u.coeffs);

  SolverConfig cfg;
  cfg.grid = g;
  cfg.T = 0.1;
  cfg.dt = 0.05;
  cfg.smallness_threshold = 1e-3;
  const DiagnosticsSeries d = run(cfg, s, {false});
  CHECK(d.warnings.size() == 1);
}

TEST_CASE("configuration and runtime errors") {
  const Grid g = Grid::cube(16, 2 * kPi);
  SolverConfig cfg;
  cfg.grid = g;
  cfg.dt = 1.0;  // max|xi3| = 5 on the kept modes
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.dt = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.dt = 0.05;
  cfg.T = 0.12;
  CHECK_THROWS_AS(run(cfg, MHDState::zeros(g)), ValidationError);

  MHDState bad = MHDState::zeros(g);
  bad.u.coeffs[0][3] = Complex(std::nan(""), 0);
  CHECK_THROWS_AS(rhs_eval(bad), NumericalAbort);
  CHECK_THROWS_AS(rhs_eval(bad, false), NumericalAbort);

  // Large data push the CFL number past the limit.
  MHDState big = small_random(g, 50.0, 2);
  cfg.T = 0.1;
  CHECK_THROWS_AS(step(big, 0.05, cfg), NumericalAbort);

  MHDState divergent = MHDState::zeros(g);
  divergent.u = plane_wave(g, {1, 0, 0}, 0, 1.0);
  CHECK_THROWS_AS(run(cfg, divergent), ValidationError);
}

TEST_CASE("decay report recovers manufactured power laws and guards the window") {
  const Grid g = Grid::cube(16, 8 * kPi);
  const auto [lo, hi] = torus_window(g);
  CHECK(lo == 1.0);
  CHECK(hi == doctest::Approx(16.0).epsilon(1e-14));
  DiagnosticsSeries d;
  for (int i = 0; i <= 200; ++i) {
    const double t = 0.1 * i;
    d.t.push_back(t);
    const double tt = std::max(t, 1e-3);
    d.u_h2.push_back(2 * std::pow(tt, -0.5));
    d.h_h2.push_back(3 * std::pow(tt, -0.5));
    d.grad_u_l2.push_back(std::pow(tt, -1.0));
    d.u_w2inf.push_back(std::pow(tt, -1.25));
    d.h_w2inf.push_back(std::pow(tt, -0.75));
  }
  const DecayReport r = decay_report(d, g, 1.0, 16.0);
  CHECK(r.torus_caveat);
  REQUIRE(r.entries.size() == 6);
  for (const auto& e : r.entries) {
    CHECK(e.fit.exponent == doctest::Approx(e.reference_exponent).epsilon(1e-10));
  }
  CHECK_THROWS_AS(decay_report(d, g, 1.0, 20.0), ValidationError);
  CHECK_THROWS_AS(decay_report(d, g, 0.5, 10.0), ValidationError);
}
