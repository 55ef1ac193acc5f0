#include <cmath>
#include <memory>

#include "doctest.h"
#include "mhdlab/lagrangian_transform.hpp"
#include "mhdlab/linear_propagator.hpp"

using namespace mhdlab;

namespace {

InitialMagneticField curl_field(double eps, double K = 4.0) {
  return InitialMagneticField{eps, std::make_shared<CurlBumpProfile>(K), K};
}

ChartSpec small_spec() {
  ChartSpec s;
  s.columns_per_axis = 3;
  return s;
}

const std::vector<std::array<double, 2>> kColumns{{0.3, -0.4}, {-0.8, 0.5}, {1.1, 0.9}};

double slope(const std::vector<double>& x, const std::vector<double>& y) {
  DecaySeries s{"s", {}, {}};
  for (std::size_t i = 0; i < x.size(); ++i) {
    s.t.push_back(x[i]);
    s.value.push_back(y[i]);
  }
  // decay_fit returns the exponent of a power-law fit and needs >= 8 points,
  // so use a plain least-squares slope here.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST_CASE("initial field: divergence, support and nondegeneracy") {
  const InitialMagneticField b0 = curl_field(0.05);
  CHECK(b0.divergence_defect(3.0, 21) <= 1e-12);
  CHECK(b0.support_leak(3.0) == 0.0);
  double phimax = 0;
  const InitialMagneticField unit = curl_field(1.0);
  for (double a = -2; a <= 2; a += 0.1)
    for (double b = -2; b <= 2; b += 0.1)
      for (double c = 0; c <= 2; c += 0.1) {
        const Vec3 v = unit.value({a, b, c});
        phimax = std::max({phimax, std::abs(v[0]), std::abs(v[1]), std::abs(v[2] - 1)});
      }
  CHECK(phimax > 0.1);
  CHECK(b0.min_b3(3.0, 21) >= 1 - 0.05 * phimax - 1e-12);
  InitialMagneticField bad = curl_field(-500.0);
  CHECK_THROWS_AS(bad.validate(3.0), ValidationError);
  InitialMagneticField none{0.1, nullptr, 2.0};
  CHECK_THROWS_AS(none.validate(3.0), ValidationError);
}

TEST_CASE("epsilon = 0: every map is the identity") {
  LagrangianChart chart = integrate_flow(curl_field(0.0), small_spec());
  build_z_coord(chart);
  CHECK(chart.z_ready);
  const CorrectionField corr = correction_term(chart);
  for (const Vec3& w : sample_box(1.5, 3, -1.0, 5.0, 5)) {
    CHECK(chart.y_of_w(w) == w);
    CHECK(chart.z_of_w(w) == w);
    const Vec3 back = chart.w_of_z(w);
    CHECK(std::abs(back[2] - w[2]) <= 1e-14);
    const JacobianMatrices m = jacobian_matrices(chart, w);
    CHECK(max_abs_entry(m.A1) == 1.0);
    CHECK(m.A1 == identity3());
    CHECK(m.A3 == identity3());
    CHECK(m.B == identity3());
    CHECK(max_abs_entry(m.A2) == 0.0);
    const Vec3 y = corr.value(w);
    CHECK(y == Vec3{0, 0, 0});
  }
}

TEST_CASE("shear field: closed-form flow, straight z3 and closed-form correction") {
  const double eps = 0.1, K = 2.0;
  const auto prof = std::make_shared<ShearProfile>(K);
  LagrangianChart chart = integrate_flow(InitialMagneticField{eps, prof, K}, small_spec());
  build_z_coord(chart);
  double flow_err = 0, z_err = 0, corr_err = 0;
  const CorrectionField corr = correction_term(chart);
  for (double w3 = -2.5; w3 <= K + 2.5; w3 += 0.0137) {
    const Vec3 w{0.4, -0.7, w3};
    const Vec3 y = chart.y_of_w(w);
    flow_err = std::max(flow_err, std::abs(y[0] - (w[0] + eps * prof->antiderivative(w3))));
    flow_err = std::max(flow_err, std::abs(y[1] - w[1]));
    CHECK(y[2] == w3);
    z_err = std::max(z_err, std::abs(chart.z_of_w(w)[2] - w3));
    if (w3 > -2.0 && w3 < K + 2.0) {
      const Vec3 Y = corr.value(w);
      const double expect = -eps * CorrectionField::eta(w3, K) * (prof->antiderivative(w3) - prof->antiderivative(K));
      corr_err = std::max({corr_err, std::abs(Y[0] - expect), std::abs(Y[1]), std::abs(Y[2])});
    }
  }
  CHECK(flow_err <= 1e-8);
  CHECK(z_err <= 1e-12);
  CHECK(corr_err <= 1e-8);
  const CorrectionResidual r = verify_correction(corr, chart, {{0.4, -0.7}}, 41, 0.01);
  CHECK(r.first_identity <= 1e-8);
  CHECK(r.second_identity <= 1e-6);
}

TEST_CASE("RK4 flow converges at fourth order under step halving") {
  // An analytic divergence-free field: phi1 depends on (y2, y3), phi2 on (y1, y3).
  const Grid g = Grid::cube(8, 2 * kPi);
  SpectralVectorField F = plane_wave(g, {0, 1, 1}, 0);
  F += 0.5 * plane_wave(g, {1, 0, 1}, 1);
  const InitialMagneticField b0{0.3, std::make_shared<TrigInterpolatedProfile>(F, Vec3{0, 0, 0}), 4.0};
  const FlowColumn ref(b0, 0.3, -0.4, -1.0, 6.0, 0.4 / 512, 0.1);
  auto err = [&](double h) {
    const FlowColumn c(b0, 0.3, -0.4, -1.0, 6.0, h, 0.1);
    double e = 0;
    for (int k = 0; k <= 10; ++k) {
      const Vec3 a = c.at(0.4 * k).y, r = ref.at(0.4 * k).y;
      e = std::max(e, std::abs(a[0] - r[0]) + std::abs(a[1] - r[1]));
    }
    return e;
  };
  const double ea = err(0.1), eb = err(0.05);
  INFO("errors " << ea << " " << eb);
  CHECK(ea / eb == doctest::Approx(16.0).epsilon(0.1));
}

TEST_CASE("z3 is monotone and the inverse map round-trips") {
  LagrangianChart chart = integrate_flow(curl_field(0.08), small_spec());
  build_z_coord(chart);
  double worst = 0;
  for (const auto& c : kColumns)
    for (double w3 = -2.9; w3 <= 6.9; w3 += 0.0731) {
      const Vec3 w{c[0], c[1], w3};
      const Vec3 back = chart.w_of_z(chart.z_of_w(w));
      worst = std::max(worst, std::abs(back[2] - w3));
    }
  CHECK(worst <= 1e-10);
  CHECK_THROWS_AS((void)chart.w_of_z({0.3, -0.4, 100.0}), ValidationError);
  CHECK_THROWS_AS(FlowColumn(curl_field(0.3), 0.3, -0.4, -1.0, 3.0, 0.01, 0.995), NumericalAbort);
}

TEST_CASE("Jacobian matrices: patterns, composition and differencing") {
  const LagrangianChart chart = integrate_flow(curl_field(0.05), small_spec());
  const auto pts = sample_box(1.2, 3, -0.5, 4.5, 4);
  for (const Vec3& z : pts) {
    const JacobianMatrices m = jacobian_matrices(chart, z);
    CHECK(m.A1[0][0] == 1.0);
    CHECK(m.A1[1][1] == 1.0);
    CHECK(m.A1[2][2] == 1.0);
    CHECK(m.A1[1][0] == 0.0);
    CHECK(m.A1[2][0] == 0.0);
    CHECK(m.A1[2][1] == 0.0);
    CHECK(m.A1[0][1] == 0.0);
    CHECK(m.A3[0][1] == 0.0);
    CHECK(m.A3[0][2] == 0.0);
    CHECK(m.A3[1][2] == 0.0);
    const Mat3 direct = matmul(m.A3, inverse3(m.dy_dw));
    Mat3 diff{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) diff[i][j] = direct[i][j] - m.B[i][j];
    CHECK(max_abs_entry(diff) <= 1e-12);
  }
  CHECK(jacobian_fd_residual(chart, pts, 0.02) <= 1e-6);
}

TEST_CASE("B - Id and A2 scale linearly in epsilon; the integral form of A2 differs at second order") {
  const std::vector<double> eps{0.01, 0.02, 0.04, 0.08};
  std::vector<double> dev_b, dev_a2, dev_lit;
  const auto pts = sample_box(1.5, 5, -0.5, 4.5, 7);
  for (double e : eps) {
    const LagrangianChart chart = integrate_flow(curl_field(e), small_spec());
    double b = 0, a2 = 0, lit = 0;
    for (const Vec3& z : pts) {
      const JacobianMatrices m = jacobian_matrices(chart, z);
      Mat3 d = m.B, l{};
      for (int i = 0; i < 3; ++i) {
        d[i][i] -= 1.0;
        for (int j = 0; j < 3; ++j) l[i][j] = m.A2[i][j] - m.A2_literal[i][j];
      }
      b = std::max(b, max_abs_entry(d));
      a2 = std::max(a2, max_abs_entry(m.A2));
      lit = std::max(lit, max_abs_entry(l));
    }
    dev_b.push_back(b);
    dev_a2.push_back(a2);
    dev_lit.push_back(lit);
  }
  CHECK(slope(eps, dev_b) == doctest::Approx(1.0).epsilon(0.1));
  CHECK(slope(eps, dev_a2) == doctest::Approx(1.0).epsilon(0.1));
  CHECK(slope(eps, dev_lit) == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("chain-rule identities") {
  const auto pts = sample_box(1.0, 3, -0.5, 4.5, 4);
  const TestScalar linear{[](const Vec3& y) { return 0.3 * y[0] - 1.2 * y[1] + 0.7 * y[2] + 2.0; },
                          [](const Vec3&) { return Vec3{0.3, -1.2, 0.7}; }};
  const TestScalar s3{[](const Vec3& y) { return std::sin(y[2]); },
                      [](const Vec3& y) { return Vec3{0, 0, std::cos(y[2])}; }};
  const LagrangianChart flat = integrate_flow(curl_field(0.0), small_spec());
  for (const TestScalar* f : {&linear, &s3}) {
    const ChainRuleResidual r = verify_directional_derivative(flat, *f, pts, 1e-3);
    CHECK(r.directional <= 1e-10);
    CHECK(r.gradient <= 1e-10);
  }

  const LagrangianChart chart = integrate_flow(curl_field(0.05), small_spec());
  const ChainRuleResidual lin = verify_directional_derivative(chart, linear, pts, 1e-3);
  CHECK(lin.directional <= 1e-8);
  CHECK(lin.gradient <= 1e-8);

  const TestScalar trig{
      [](const Vec3& y) { return std::sin(y[0] + 0.5 * y[1]) * std::cos(1.3 * y[2]) + std::cos(2 * y[1] - y[2]); },
      [](const Vec3& y) {
        const double a = y[0] + 0.5 * y[1], c = std::cos(1.3 * y[2]), s = std::sin(2 * y[1] - y[2]);
        return Vec3{std::cos(a) * c, 0.5 * std::cos(a) * c - 2 * s, -1.3 * std::sin(a) * std::sin(1.3 * y[2]) + s};
      }};
  const ChainRuleResidual coarse = verify_directional_derivative(chart, trig, pts, 0.1);
  const ChainRuleResidual fine = verify_directional_derivative(chart, trig, pts, 0.05);
  INFO("coarse " << coarse.directional << " " << coarse.gradient << " fine " << fine.directional << " "
                 << fine.gradient);
  CHECK(fine.directional <= 1e-4);
  CHECK(fine.gradient <= 1e-4);
  CHECK(coarse.directional / fine.directional > 12.0);
  CHECK(coarse.gradient / fine.gradient > 12.0);
}

TEST_CASE("correction field: plateau identities, vanishing above the support, linear in epsilon") {
  const std::vector<std::array<double, 2>> zh{{0.3, -0.4}, {-0.8, 0.5}, {0.0, 0.0}};
  const LagrangianChart chart = integrate_flow(curl_field(0.05), small_spec());
  const CorrectionField corr = correction_term(chart);
  const CorrectionResidual r = verify_correction(corr, chart, zh, 31, 0.005);
  CHECK(r.first_identity <= 1e-6);
  CHECK(r.second_identity <= 1e-6);
  for (double z3 = 4.3; z3 < 6.0; z3 += 0.1) {
    const Vec3 Y = corr.value({0.3, -0.4, z3});
    CHECK(std::abs(Y[0]) + std::abs(Y[1]) + std::abs(Y[2]) <= 1e-15);
  }
  CHECK(corr.value({0.3, -0.4, -2.5}) == Vec3{0, 0, 0});

  const std::vector<double> eps{0.01, 0.02, 0.04, 0.08};
  std::vector<double> amp;
  for (double e : eps) {
    const LagrangianChart c = integrate_flow(curl_field(e), small_spec());
    const CorrectionField y = correction_term(c);
    double m = 0;
    for (double z3 = -1; z3 <= 5; z3 += 0.05) {
      const Vec3 v = y.value({0.3, -0.4, z3});
      m = std::max({m, std::abs(v[0]), std::abs(v[1]), std::abs(v[2])});
    }
    amp.push_back(m);
  }
  CHECK(slope(eps, amp) == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("eta has the three-plateau shape") {
  const double K = 2.0;
  CHECK(CorrectionField::eta(-2.0, K) == 0.0);
  CHECK(CorrectionField::eta(-1.0, K) == 1.0);
  CHECK(CorrectionField::eta(0.7, K) == 1.0);
  CHECK(CorrectionField::eta(K + 1.0, K) == 1.0);
  CHECK(CorrectionField::eta(K + 2.0, K) == 0.0);
  double prev = 0;
  for (double z = -2; z <= -1; z += 0.01) {
    CHECK(CorrectionField::eta(z, K) >= prev);
    prev = CorrectionField::eta(z, K);
  }
}

TEST_CASE("trigonometric profile reproduces a torus field and its Jacobian") {
  const Grid g = Grid::cube(8, 2 * kPi);
  const SpectralVectorField F = plane_wave(g, {1, 2, 0}, 2, 0.5);
  const TrigInterpolatedProfile prof(F, {0, 0, 0});
  Vec3 phi;
  Mat3 dphi;
  const Vec3 y{0.37, -1.1, 0.5};
  prof.eval(y, phi, dphi);
  const double arg = y[0] + 2 * y[1];
  CHECK(phi[2] == doctest::Approx(0.5 * std::cos(arg)).epsilon(1e-13));
  CHECK(phi[0] == doctest::Approx(0.0));
  CHECK(dphi[2][0] == doctest::Approx(-0.5 * std::sin(arg)).epsilon(1e-13));
  CHECK(dphi[2][1] == doctest::Approx(-1.0 * std::sin(arg)).epsilon(1e-13));
}
