#include <doctest.h>

#include <cmath>

#include "mhdlab/linear_propagator.hpp"

using namespace mhdlab;

TEST_CASE("eigenvalues: closed-form cases") {
  auto e = eigenvalues({1, 0, 0});
  CHECK(e.real_branch);
  CHECK(std::abs(e.lambda1) == 0.0);
  CHECK(e.lambda2.real() == doctest::Approx(-1.0).epsilon(1e-15));

  e = eigenvalues({0, 0, 2});
  CHECK(e.lambda1.real() == doctest::Approx(-2.0).epsilon(1e-15));
  CHECK(e.lambda2.real() == doctest::Approx(-2.0).epsilon(1e-15));

  // Extended-precision reference for xi = (0,0,100).
  long double q = 1e4L, s3 = 1e4L;
  long double lam1 = -q / 2 + std::sqrt(q * q / 4 - s3);
  e = eigenvalues({0, 0, 100});
  CHECK(std::abs(e.lambda1.real() - static_cast<double>(lam1)) < 1e-12);
  CHECK(e.lambda1.real() == doctest::Approx(-1.00010).epsilon(1e-4));
}

TEST_CASE("eigenvalues: Vieta identities and nonpositive real parts") {
  for (double a : {0.01, 0.3, 1.0, 2.5, 40.0})
    for (double b : {0.0, 0.02, 0.7, 1.9, 90.0}) {
      Vec3 xi{a, 0.4 * a, b};
      const double q = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
      auto e = eigenvalues(xi);
      CHECK(std::abs(e.lambda1 + e.lambda2 + q) <= 1e-12 * q);
      CHECK(std::abs(e.lambda1 * e.lambda2 - b * b) <= 1e-12 * std::max(b * b, 1e-300));
      CHECK(e.lambda1.real() <= 0);
      CHECK(e.lambda2.real() <= 0);
    }
}

TEST_CASE("Gamma closed forms") {
  CHECK(gamma_symbol(0.0, {1, 2, 3}) == 0.0);
  CHECK(dt_gamma_symbol(0.0, {1, 2, 3}) == 1.0);
  for (double t : {0.1, 1.0, 7.0}) {
    const double q = 2.0;  // xi3 = 0
    CHECK(gamma_symbol(t, {1, 1, 0}) == doctest::Approx(-std::expm1(-t * q) / q).epsilon(1e-14));
    CHECK(dt_gamma_symbol(t, {1, 1, 0}) == doctest::Approx(std::exp(-t * q)).epsilon(1e-14));
    const double beta = std::sqrt(3.0) / 2;
    CHECK(gamma_symbol(t, {0, 0, 1}) == doctest::Approx(std::exp(-t / 2) * std::sin(beta * t) / beta).epsilon(1e-13));
    CHECK(gamma_symbol(t, {0, 0, 2}) == doctest::Approx(t * std::exp(-2 * t)).epsilon(1e-14));
    CHECK(dt_gamma_symbol(t, {0, 0, 2}) == doctest::Approx((1 - 2 * t) * std::exp(-2 * t)).epsilon(1e-13));
  }
  CHECK_THROWS_AS(gamma_symbol(-1.0, {1, 0, 0}), ValidationError);
}

TEST_CASE("ODE consistency by centered differences") {
  const double h = 1e-4;
  for (double t : {0.3, 1.7, 9.0})
    for (Vec3 xi : {Vec3{0.2, 0.1, 0.05}, Vec3{0.0, 0.3, 1.0}, Vec3{2.0, 1.0, 3.0}, Vec3{0, 0, 2}}) {
      const double q = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
      const double gp = gamma_symbol(t + h, xi), g0 = gamma_symbol(t, xi), gm = gamma_symbol(t - h, xi);
      const double scale = std::abs(g0) + std::abs(dt_gamma_symbol(t, xi)) + 1e-3;
      CHECK(std::abs((gp - gm) / (2 * h) - dt_gamma_symbol(t, xi)) <= 1e-6 * scale * (1 + q));
      const double dd = (gp - 2 * g0 + gm) / (h * h);
      CHECK(std::abs(dd + q * dt_gamma_symbol(t, xi) + xi[2] * xi[2] * g0) <= 1e-5 * scale * (1 + q * q));
    }
}

TEST_CASE("branch continuity across |xi|^2 = 2|xi3|") {
  // Path xi = (x, 0, 2) crosses the surface at x = 0 only from the real side;
  // use xi = (a, 0, b) with a^2 + b^2 = 2b + s for s through zero.
  for (double t : {0.5, 5.0, 50.0}) {
    const double b = 1.3;
    auto at = [&](double s) {
      const double a = std::sqrt(2 * b - b * b + s);
      return std::make_pair(gamma_symbol(t, {a, 0, b}), dt_gamma_symbol(t, {a, 0, b}));
    };
    for (double s : {1e-11, 1e-12, 1e-13}) {
      auto l = at(-s), r = at(s);
      CHECK(std::abs(l.first - r.first) <= 1e-9 * std::max(1.0, std::abs(l.first)));
      CHECK(std::abs(l.second - r.second) <= 1e-9 * std::max(1.0, std::abs(l.second)));
    }
  }
}

TEST_CASE("solve_homogeneous") {
  Grid g = Grid::cube(8, 2 * kPi);
  auto Y1 = plane_wave(g, {1, 2, 0}, 0);
  auto Y0 = SpectralVectorField::zeros(g);
  const double t = 0.8, q = 5.0;
  auto s = solve_homogeneous(Y0, Y1, t);
  const std::size_t i = (1 * 8 + 2) * 5 + 0;
  CHECK(std::abs(s.Y.coeffs[0][i] - (-std::expm1(-t * q) / q) * Y1.coeffs[0][i]) < 1e-12 * std::abs(Y1.coeffs[0][i]));

  auto A = random_smooth_field(g, 1, 3), B = random_smooth_field(g, 2, 3);
  auto s0 = solve_homogeneous(A, B, 0.0);
  CHECK(l2_norm(s0.Y - A) == 0.0);
  CHECK(l2_norm(s0.Y_t - B) == 0.0);
  auto z = solve_homogeneous(Y0, Y0, 3.0);
  CHECK(l2_norm(z.Y) == 0.0);

  // Semigroup property through the state (Y, Y_t).
  auto s1 = solve_homogeneous(A, B, 0.7);
  auto s2 = solve_homogeneous(s1.Y, s1.Y_t, 0.5);
  auto s12 = solve_homogeneous(A, B, 1.2);
  CHECK(l2_norm(s2.Y - s12.Y) <= 1e-12 * l2_norm(s12.Y));
  CHECK(l2_norm(s2.Y_t - s12.Y_t) <= 1e-12 * l2_norm(s12.Y_t));
  CHECK_THROWS_AS(solve_homogeneous(A, random_smooth_field(Grid::cube(4, 1.0), 3, 1), 1.0), ValidationError);
}

TEST_CASE("Duhamel against the analytic antiderivative") {
  Grid g = Grid::cube(8, 2 * kPi);
  const std::array<int, 3> k{1, 1, 0};
  const double q = 2.0;
  auto wave = plane_wave(g, k, 2);
  TimeSampledSource src;
  for (int i = 0; i <= 10; ++i) {
    src.times.push_back(i * 0.1);
    src.samples.push_back(wave);
  }
  src.zero_beyond = true;
  const std::size_t idx = (1 * 8 + 1) * 5 + 0;
  for (double t : {0.5, 1.0, 2.5}) {
    const double m = std::min(t, 1.0);
    // int_0^m (1 - e^{-(t-s) q})/q ds
    const double exact = (m - (std::exp(-(t - m) * q) - std::exp(-t * q)) / q) / q;
    auto Y = solve_duhamel(src, t);
    CHECK(std::abs(Y.coeffs[2][idx] / wave.coeffs[2][idx] - exact) < 1e-8);
  }
  src.zero_beyond = false;
  CHECK_THROWS_AS(solve_duhamel(src, 1.5), ValidationError);
  TimeSampledSource zero{{0.0, 1.0}, {SpectralVectorField::zeros(g), SpectralVectorField::zeros(g)}, true};
  CHECK(l2_norm(solve_duhamel(zero, 2.0)) == 0.0);
}

TEST_CASE("Duhamel recovers a manufactured solution") {
  Grid g = Grid::cube(8, 2 * kPi);
  auto V = random_smooth_field(g, 4, 2);
  // Y(t) = t^2 e^{-t} V has zero data; g = Y_tt - Delta Y_t - d3^2 Y.
  auto src_at = [&](double t) {
    const double a = t * t * std::exp(-t), da = (2 * t - t * t) * std::exp(-t),
                 dda = (2 - 4 * t + t * t) * std::exp(-t);
    SpectralVectorField out = SpectralVectorField::zeros(g);
    WavenumberTable wt(g);
    wt.for_each([&](std::size_t i, const Vec3& xi) {
      const double q = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
      for (int c = 0; c < 3; ++c) out.coeffs[c][i] = (dda + q * da + xi[2] * xi[2] * a) * V.coeffs[c][i];
    });
    return out;
  };
  double prev_err = 0;
  for (int n : {100, 200}) {
    TimeSampledSource src;
    for (int i = 0; i <= n; ++i) {
      src.times.push_back(2.0 * i / n);
      src.samples.push_back(src_at(2.0 * i / n));
    }
    auto Y = solve_duhamel(src, 2.0);
    const double err = l2_norm(Y - (4 * std::exp(-2.0)) * V) / l2_norm(4 * std::exp(-2.0) * V);
    CHECK(err < 1e-3);
    if (prev_err > 0) CHECK(err < prev_err / 3.5);  // second order in the sample spacing
    prev_err = err;
  }
}

TEST_CASE("whole-space norm basics") {
  RadialData data;  // annulus [1,2]
  QuadratureSpec q;
  auto one = [](double, const Vec3&) { return 1.0; };
  const double a = whole_space_norm(one, data, 1.0, q, NormKind::LinfBound);
  const double b = whole_space_norm(one, data, 100.0, q, NormKind::LinfBound);
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
  CHECK(whole_space_norm(standard_weight("y"), data, 0.0, q, NormKind::LinfBound) == 0.0);
  QuadratureSpec bad = q;
  bad.r_max = 1.5;
  CHECK_THROWS_AS(whole_space_norm(one, data, 1.0, bad, NormKind::L2), ValidationError);
  bad = q;
  bad.radial_nodes = 15;
  CHECK_THROWS_AS(whole_space_norm(one, data, 1.0, bad, NormKind::L2), ValidationError);
}

TEST_CASE("whole-space norm self-convergence under node doubling") {
  RadialData ball{RadialData::Shape::Ball, 0.0, 2.0, -0.2};
  RadialData ann;
  QuadratureSpec q;
  for (double t : {10.0, 300.0, 1000.0}) {
    for (const char* w : {"dz", "dzz", "y"}) {
      const double a = whole_space_norm(standard_weight(w), ann, t, q, NormKind::LinfBound);
      const double b = whole_space_norm(standard_weight(w), ann, t, q.refined(), NormKind::LinfBound);
      CHECK(std::abs(a - b) <= 0.01 * b);
    }
    const double a = whole_space_norm(standard_weight("dt"), ball, t, q, NormKind::LinfBound);
    const double b = whole_space_norm(standard_weight("dt"), ball, t, q.refined(), NormKind::LinfBound);
    CHECK(std::abs(a - b) <= 0.01 * b);
  }
}

TEST_CASE("decay_fit recovers exact power laws") {
  DecaySeries s{"p", log_times(10, 1000, 8), {}};
  for (double t : s.t) s.value.push_back(3.0 / t);
  CHECK(decay_fit(s, 10, 1000).exponent == doctest::Approx(-1.0).epsilon(1e-10));
  s.value.clear();
  for (double t : s.t) s.value.push_back(0.5 * std::pow(t, -0.5));
  auto f = decay_fit(s, 10, 1000);
  CHECK(std::abs(f.exponent + 0.5) < 1e-10);
  CHECK(f.prefactor == doctest::Approx(0.5));
  CHECK_THROWS_AS(decay_fit(s, 10, 20), ValidationError);
  s.value[3] = 0.0;
  CHECK_THROWS_AS(decay_fit(s, 10, 1000), ValidationError);
}

TEST_CASE("whole-space dz series decays like 1/t") {
  RadialData ann;
  QuadratureSpec q;
  DecaySeries s{"dz", log_times(10, 1000, 4), {}};
  for (double t : s.t) s.value.push_back(whole_space_norm(standard_weight("dz"), ann, t, q, NormKind::LinfBound));
  auto f = decay_fit(s, 10, 1000);
  CHECK(f.exponent >= -1.1);
  CHECK(f.exponent <= -0.9);
}

TEST_CASE("symbol bound check") {
  // Along xi3 = 0: t q e^{-tq} <= 1/e.
  double sup = 0;
  for (double t = 0.01; t < 100; t *= 1.1)
    for (double r = 0.01; r < 10; r *= 1.1) sup = std::max(sup, t * r * r * std::abs(dt_gamma_symbol(t, {r, 0, 0})));
  CHECK(sup <= std::exp(-1.0) + 1e-12);
  CHECK(0.001 * 1e-4 * std::abs(dt_gamma_symbol(0.001, {0.01, 0, 0})) < 1e-6);
  auto rep = symbol_bound_check({});
  CHECK(rep.pass);
  CHECK(rep.sup_dt_gamma > 0.3);
  CHECK(rep.sup_gamma > 0.1);
}

TEST_CASE("linear energy identity") {
  Grid g = Grid::cube(8, 2 * kPi);
  // k3 = 0 data with Y1 = 0: nothing moves.
  auto Y0 = plane_wave(g, {1, 0, 0}, 1);
  auto rep = linear_energy_identity_check(Y0, SpectralVectorField::zeros(g), 2.0, 0.1);
  CHECK(rep.max_residual == 0.0);
  CHECK(rep.dissipation.back() == 0.0);

  // Single heat mode k3 = 0: energy |Y_t|^2 decays, identity exact up to trapezoid error.
  auto r1 = linear_energy_identity_check(SpectralVectorField::zeros(g), plane_wave(g, {1, 1, 0}, 0), 2.0, 0.01);
  CHECK(r1.energy.back() == doctest::Approx(r1.energy.front() * std::exp(-8.0)).epsilon(1e-10));

  auto A = random_smooth_field(g, 8, 3), B = random_smooth_field(g, 9, 3);
  auto e1 = linear_energy_identity_check(A, B, 2.0, 0.02).max_residual;
  auto e2 = linear_energy_identity_check(A, B, 2.0, 0.01).max_residual;
  CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.05));
}
