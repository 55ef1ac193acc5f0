#include <cmath>

#include "doctest.h"
#include "mhdlab/norms.hpp"

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

SpectralScalarField component(const SpectralVectorField& F, int c) { return {F.grid, F.coeffs[c]}; }

}  // namespace

TEST_CASE("dyadic profiles: support, range and partition of unity") {
  CHECK(DyadicPartition::phi(0.75) == 0.0);
  CHECK(DyadicPartition::phi(0.5) == 0.0);
  CHECK(DyadicPartition::phi(8.0 / 3.0) == 0.0);
  CHECK(DyadicPartition::phi(3.0) == 0.0);
  CHECK(DyadicPartition::phi(1.4) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(DyadicPartition::chi(0.7) == 1.0);
  CHECK(DyadicPartition::chi(4.0 / 3.0) == 0.0);
  for (double t = 0.01; t < 4; t += 0.01) {
    CHECK(DyadicPartition::phi(t) >= 0.0);
    CHECK(DyadicPartition::phi(t) <= 1.0);
  }
  CHECK(partition_of_unity_residual(1e-3, 1e3, 4001) <= 1e-10);
}

TEST_CASE("lp_block: plane-wave support, reconstruction and orthogonality") {
  const Grid g = Grid::cube(32, 2 * kPi);
  const SpectralVectorField w = plane_wave(g, {0, 8, 0}, 1);  // |xi| = 2^3
  const DyadicPartition d = DyadicPartition::for_grid(g);
  SpectralVectorField sum = SpectralVectorField::zeros(g);
  for (int j = d.j_min; j <= d.j_max; ++j) {
    const SpectralVectorField b = lp_block(j, w);
    if (j < 2 || j > 4) CHECK(max_coeff(b) == 0.0);
    sum += b;
  }
  CHECK(max_diff(sum, w) <= 1e-14);
  CHECK(max_coeff(lp_block(3, SpectralVectorField::zeros(g))) == 0.0);

  const SpectralVectorField F = random_smooth_field(g, 7, 12);
  SpectralVectorField rec = SpectralVectorField::zeros(g);
  for (int j = d.j_min; j <= d.j_max; ++j) rec += lp_block(j, F);
  CHECK(max_diff(rec, F) <= 1e-10 * max_coeff(F));

  for (int j = d.j_min; j + 2 <= d.j_max; ++j) {
    CHECK(max_coeff(lp_block(j, lp_block(j + 2, F))) == 0.0);
    CHECK(max_coeff(lp_block(j, lp_block(j + 3, F))) == 0.0);
  }

  // Low part plus the blocks reproduces a field with a mean.
  SpectralVectorField G = F;
  G.coeffs[0][0] = Complex(5.0 * static_cast<double>(g.physical_size()));
  SpectralVectorField rec2 = low_part(d.j_min, G);
  for (int j = d.j_min; j <= d.j_max; ++j) rec2 += lp_block(j, G);
  CHECK(max_diff(rec2, G) <= 1e-10 * max_coeff(G));
}

TEST_CASE("vertical blocks: plane waves and commutation") {
  const Grid g = Grid::cube(32, 2 * kPi);
  const DyadicPartition d = DyadicPartition::for_grid(g);
  const SpectralVectorField horiz = plane_wave(g, {1, 0, 0}, 0);
  for (int l = d.l_min; l <= d.l_max; ++l) CHECK(max_coeff(vertical_block(l, horiz)) == 0.0);
  CHECK(max_diff(vertical_low_part(d.l_min, horiz), horiz) == 0.0);

  const SpectralVectorField vert = plane_wave(g, {0, 0, 4}, 0);
  for (int l = d.l_min; l <= d.l_max; ++l) {
    const double m = max_coeff(vertical_block(l, vert));
    if (l == 1 || l == 2)
      CHECK(m > 0.0);
    else
      CHECK(m == 0.0);
  }

  const SpectralVectorField F = random_smooth_field(g, 3, 10);
  for (int j = 0; j <= 3; ++j)
    for (int l = 0; l <= 3; ++l)
      CHECK(max_diff(lp_block(j, vertical_block(l, F)), vertical_block(l, lp_block(j, F))) <= 1e-14 * max_coeff(F));
}

TEST_CASE("besov_norm: basic properties") {
  const Grid g = Grid::cube(16, 2 * kPi);
  const SpectralVectorField F = random_smooth_field(g, 11, 5);
  const SpectralVectorField G = random_smooth_field(g, 12, 5);
  CHECK(besov_norm(SpectralVectorField::zeros(g), {1.0, 2.0, 1.0}) == 0.0);
  for (BesovSpec s : {BesovSpec{0.5, 2, 1}, BesovSpec{1.0, 1, 1}, BesovSpec{-0.5, kInf, 2}, BesovSpec{0.0, 3, kInf}}) {
    const double nf = besov_norm(F, s);
    CHECK(besov_norm(-2.5 * F, s) == doctest::Approx(2.5 * nf).epsilon(1e-12));
    CHECK(besov_norm(F + G, s) <= nf + besov_norm(G, s) + 1e-12);
  }
  CHECK_THROWS_AS(besov_norm(F, {0.0, 0.5, 1.0}), ValidationError);
  CHECK_THROWS_AS(besov_norm(F, {0.0, 2.0, 0.0}), ValidationError);
  SpectralVectorField M = F;
  M.coeffs[2][0] = 1.0;
  CHECK_THROWS_AS(besov_norm(M, {0.0, 2.0, 2.0}), ValidationError);
  CHECK_NOTHROW(besov_norm(M, {0.5, 2.0, 2.0}));
}

TEST_CASE("besov_norm: Parseval route agrees with physical block norms") {
  const Grid g = Grid::cube(16, 2 * kPi);
  const SpectralVectorField F = random_smooth_field(g, 5, 6);
  const DyadicPartition d = DyadicPartition::for_grid(g);
  const double s = 0.75;
  double direct = 0;
  for (int j = d.j_min; j <= d.j_max; ++j) direct += std::pow(2.0, j * s) * l2_norm(inverse_transform(lp_block(j, F)));
  CHECK(besov_norm(F, {s, 2.0, 1.0}) == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("besov_norm: single-block field against direct summation") {
  const Grid g = Grid::cube(32, 2 * kPi);
  // |xi| = 11 lies where phi(2^-3 .) = 1, so only block 3 sees it.
  const SpectralVectorField w = plane_wave(g, {0, 0, 11}, 2, 0.7);
  for (double p : {1.0, 2.0, kInf}) {
    const double expect = std::pow(2.0, 3 * 1.5) * lp_norm(w, p);
    CHECK(besov_norm(w, {1.5, p, 1.0}) == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(besov_norm(w, {0.0, 2.0, 2.0}) == doctest::Approx(l2_norm(w)).epsilon(1e-12));
}

TEST_CASE("B^0_{2,2} equals sum of |F|^2 times sum of phi_j^2 and dominates half the L2 norm") {
  const Grid g = Grid::cube(16, 2 * kPi);
  const SpectralVectorField F = random_smooth_field(g, 21, 6);
  const DyadicPartition d = DyadicPartition::for_grid(g);
  double acc = 0;
  WavenumberTable tab(g);
  tab.for_each_k([&](std::size_t i, const Vec3& xi, const std::array<int, 3>& k) {
    const double r = std::sqrt(xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]);
    double w = 0;
    for (int j = d.j_min; j <= d.j_max; ++j) w += std::pow(DyadicPartition::phi(std::ldexp(r, -j)), 2);
    double e = 0;
    for (int c = 0; c < 3; ++c) e += std::norm(F.coeffs[c][i]);
    acc += (k[2] == 0 || k[2] == g.n3 / 2 ? 1.0 : 2.0) * w * e;
  });
  const double n = static_cast<double>(g.physical_size());
  const double oracle = std::sqrt(acc * g.volume() / (n * n));
  const double b = besov_norm(F, {0.0, 2.0, 2.0});
  CHECK(b == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(b <= l2_norm(F) * (1 + 1e-12));
  CHECK(b >= l2_norm(F) / std::sqrt(2.0));
  CHECK(aniso_norm(F, {0.0, 0.0, 2.0}) <= l2_norm(F));
}

TEST_CASE("aniso_norm: zero field, time-constant series, Chemin-Lerner L2 in time") {
  const Grid g = Grid::cube(16, 2 * kPi);
  const SpectralVectorField F = random_smooth_field(g, 8, 5);
  const AnisoSpec spec{0.5, 0.25, 1.0, kInf};
  CHECK(aniso_norm(SpectralVectorField::zeros(g), spec) == 0.0);
  const double st = aniso_norm(F, spec);
  CHECK(st > 0);
  const std::vector<double> t{0.0, 0.5, 1.5, 2.0};
  const std::vector<SpectralVectorField> series(4, F);
  CHECK(aniso_norm(t, series, spec) == doctest::Approx(st).epsilon(1e-13));
  AnisoSpec q2 = spec;
  q2.q = 2.0;
  CHECK(aniso_norm(t, series, q2) == doctest::Approx(std::sqrt(2.0) * st).epsilon(1e-12));
  CHECK_THROWS_AS(aniso_norm(std::vector<double>{1.0, 0.0}, std::vector<SpectralVectorField>(2, F), spec),
                  ValidationError);
  // Chemin-Lerner with q = inf dominates the sup in time of the static norm.
  const std::vector<SpectralVectorField> varying{F, 0.5 * F, 2.0 * random_smooth_field(g, 9, 5)};
  const std::vector<double> t3{0, 1, 2};
  double sup_static = 0;
  for (const auto& x : varying) sup_static = std::max(sup_static, aniso_norm(x, spec));
  CHECK(aniso_norm(t3, varying, spec) >= sup_static * (1 - 1e-12));
}

TEST_CASE("Sobolev and time-weighted norms") {
  const Grid g = Grid::cube(16, 2 * kPi);
  const SpectralVectorField w = plane_wave(g, {2, 0, 0}, 0);
  const double base = std::sqrt(g.volume() / 2);
  CHECK(wnp_norm(w, 0, 2.0) == doctest::Approx(base).epsilon(1e-13));
  CHECK(wnp_norm(w, 1, 2.0) == doctest::Approx(3 * base).epsilon(1e-13));
  CHECK(wnp_norm(w, 1, kInf) == doctest::Approx(3.0).epsilon(1e-13));
  CHECK(homogeneous_sobolev_norm(w, 2.0) == doctest::Approx(4 * base).epsilon(1e-13));

  const SpectralVectorField v = random_smooth_field(g, 2, 4);
  const double k = 1.5;
  std::vector<double> t{0, 1, 3, 10};
  std::vector<SpectralVectorField> series;
  for (double s : t) series.push_back(std::pow(1 + s, -k) * v);
  CHECK(weighted_sup_norm(t, series, {k, 2, 2.0}) == doctest::Approx(wnp_norm(v, 2, 2.0)).epsilon(1e-12));
  CHECK(weighted_sup_norm(t, series, {0.0, 0, 2.0}) == doctest::Approx(l2_norm(v)).epsilon(1e-12));
  // Faster decay than the weight: the sup sits at the first sample.
  std::vector<SpectralVectorField> fast;
  for (double s : t) fast.push_back(std::pow(1 + s, -2.5) * v);
  CHECK(weighted_sup_norm(t, fast, {1.0, 1, kInf}) == doctest::Approx(wnp_norm(v, 1, kInf)).epsilon(1e-12));
  CHECK_THROWS_AS(weighted_sup_norm({}, {}, {0, 0, 2.0}), ValidationError);
  CHECK_THROWS_AS(weighted_sup_norm(t, fast, {-1.0, 0, 2.0}), ValidationError);
}

TEST_CASE("mixed norms of a constant field") {
  const Grid g{8, 8, 16, 2.0, 3.0, 5.0, 2.0 / 3.0};
  PhysicalVectorField f = PhysicalVectorField::zeros(g);
  std::fill(f.values[1].begin(), f.values[1].end(), 2.0);
  CHECK(mixed_norm(f, 2.0, 2.0) == doctest::Approx(2.0 * std::sqrt(30.0)).epsilon(1e-13));
  CHECK(mixed_norm(f, kInf, 2.0) == doctest::Approx(2.0 * std::sqrt(5.0)).epsilon(1e-13));
  CHECK(mixed_norm(f, 1.0, kInf) == doctest::Approx(2.0 * 6.0).epsilon(1e-13));
}

TEST_CASE("bernstein: plane-wave derivative and block sweeps") {
  const Grid g = Grid::cube(16, 2 * kPi);
  const SpectralVectorField w = plane_wave(g, {3, 4, 0}, 0);
  CHECK(lp_norm(partial(w, 0), kInf) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(lp_norm(partial(w, 0), kInf) <= 5.0);

  std::vector<BernsteinCase> cases;
  for (int j = 0; j <= 3; ++j) cases.push_back({Grid{64, 64, 16, 2 * kPi, 2 * kPi, 2 * kPi, 2.0 / 3.0}, j});
  for (const auto& rep : bernstein_check(cases, BernsteinDirection::Horizontal)) {
    INFO(rep.inequality << " spread " << rep.spread);
    CHECK(rep.pass);
    CHECK(rep.empirical_C.size() == 4);
  }
  std::vector<BernsteinCase> vcases;
  for (int l = 0; l <= 3; ++l) vcases.push_back({Grid{16, 16, 64, 2 * kPi, 2 * kPi, 2 * kPi, 2.0 / 3.0}, l});
  for (const auto& rep : bernstein_check(vcases, BernsteinDirection::Vertical)) {
    INFO(rep.inequality << " spread " << rep.spread);
    CHECK(rep.pass);
  }
  CHECK_THROWS_AS(bernstein_check({{Grid::cube(16, 2 * kPi), 3}}, BernsteinDirection::Horizontal), ValidationError);
}

TEST_CASE("product law: constant factor, symmetry and grid sweep") {
  const Grid g = Grid::cube(16, 2 * kPi);
  const SpectralScalarField b = component(random_smooth_field(g, 4, 4), 0);
  SpectralScalarField a = SpectralScalarField::zeros(g);
  a.coeffs[0] = Complex(-3.0 * static_cast<double>(g.physical_size()));
  const ProductLawSample c = product_law_check(a, b, 0.5);
  CHECK(c.lhs_besov == doctest::Approx(c.rhs_besov).epsilon(1e-12));
  CHECK(c.lhs_besov == doctest::Approx(3.0 * besov_norm(b, {0.5, 2.0, 1.0})).epsilon(1e-12));

  const ProductLawSample ab = product_law_check(b, b, 0.5);
  CHECK(ab.lhs_besov <= ab.rhs_besov);
  CHECK_THROWS_AS(product_law_check(a, b, 0.0), ValidationError);

  InequalityReport rep{"product_besov", {}, {}, {}, {}, 1, false};
  InequalityReport rep1{"product_l1", {}, {}, {}, {}, 1, false};
  for (int n : {16, 32, 64}) {
    const Grid gn = Grid::cube(n, 2 * kPi);
    const SpectralScalarField x = component(random_smooth_field(gn, 100, n / 6), 0);
    const SpectralScalarField y = component(random_smooth_field(gn, 200, n / 6), 1);
    const ProductLawSample sm = product_law_check(x, y, 0.5);
    rep.lhs.push_back(sm.lhs_besov);
    rep.rhs.push_back(sm.rhs_besov);
    rep1.lhs.push_back(sm.lhs_l1);
    rep1.rhs.push_back(sm.rhs_l1);
  }
  finalize_report(rep);
  finalize_report(rep1);
  INFO("spreads " << rep.spread << " " << rep1.spread);
  CHECK(rep.pass);
  CHECK(rep1.pass);
}

TEST_CASE("interpolation: single-mode closed form and scaling") {
  const Grid g = Grid::cube(32, 2 * kPi);
  const SpectralVectorField f = plane_wave(g, {0, 11, 0}, 0);
  const double s = 1.3;
  const double nf = l2_norm(f);
  double lhs = 0;
  for (int j = -2; j <= 6; ++j) lhs += std::pow(2.0, j * s) * DyadicPartition::phi(std::ldexp(11.0, -j));
  const InterpolationSample out = interpolation_check(f, s);
  CHECK(out.lhs == doctest::Approx(lhs * nf).epsilon(1e-12));
  CHECK(out.rhs == doctest::Approx(nf * (1 + 121.0)).epsilon(1e-12));
  const InterpolationSample scaled = interpolation_check(4.0 * f, s);
  CHECK(scaled.lhs / scaled.rhs == doctest::Approx(out.lhs / out.rhs).epsilon(1e-13));
  const InterpolationSample z = interpolation_check(SpectralVectorField::zeros(g), s);
  CHECK(z.lhs == 0.0);
  CHECK(z.rhs == 0.0);
}
