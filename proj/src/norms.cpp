#include "mhdlab/norms.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mhdlab/smooth_profiles.hpp"

namespace mhdlab {

namespace {

constexpr double kChiInner = 0.75;
constexpr double kChiOuter = 4.0 / 3.0;

void check_exponent(double v, const char* name) {
  if (!(v >= 1.0)) {
    std::ostringstream os;
    os << "norm exponent " << name << " = " << v << " must lie in [1, inf]";
    throw ValidationError(os.str());
  }
}

double parseval_factor(const Grid& g) {
  const double n = static_cast<double>(g.physical_size());
  return g.volume() / (n * n);
}

double multiplicity(const Grid& g, int c) { return (c == 0 || c == g.n3 / 2) ? 1.0 : 2.0; }

/// Per-mode data for Parseval-based block norms: |xi|, |xi3| and the
/// multiplicity-weighted squared magnitude summed over components.
struct ModeCache {
  std::vector<double> absxi, absxi3, energy;
  double factor = 0;

  explicit ModeCache(const SpectralVectorField& F) {
    const Grid& g = F.grid;
    const std::size_t n = g.spectral_size();
    absxi.resize(n);
    absxi3.resize(n);
    energy.assign(n, 0.0);
    factor = parseval_factor(g);
    WavenumberTable tab(g);
    tab.for_each_k([&](std::size_t i, const Vec3& xi, const std::array<int, 3>& k) {
      absxi[i] = std::sqrt(xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]);
      absxi3[i] = std::abs(xi[2]);
      double e = 0;
      for (int c = 0; c < 3; ++c) e += std::norm(F.coeffs[c][i]);
      energy[i] = multiplicity(g, k[2]) * e;
    });
  }

  /// L2 norm of the field after the real multiplier m(|xi|, |xi3|).
  template <class M>
  double l2(M&& m) const {
    double s = 0;
    for (std::size_t i = 0; i < energy.size(); ++i) {
      if (energy[i] == 0) continue;
      const double w = m(absxi[i], absxi3[i]);
      s += w * w * energy[i];
    }
    return std::sqrt(s * factor);
  }
};

/// l^r accumulation of nonnegative terms.
class LrSum {
 public:
  explicit LrSum(double r) : r_(r) {}
  void add(double v) {
    if (std::isinf(r_))
      acc_ = std::max(acc_, v);
    else
      acc_ += std::pow(v, r_);
  }
  [[nodiscard]] double value() const { return std::isinf(r_) ? acc_ : std::pow(acc_, 1.0 / r_); }

 private:
  double r_;
  double acc_ = 0;
};

void require_mean_zero_if_needed(const SpectralVectorField& F, double s) {
  if (s > 0) return;
  double mx = 0, mean = 0;
  for (const auto& c : F.coeffs) {
    for (const auto& z : c) mx = std::max(mx, std::abs(z));
    mean = std::max(mean, std::abs(c[0]));
  }
  if (mean > 1e-12 * std::max(mx, 1e-300))
    throw ValidationError("homogeneous norm with s <= 0 requires a mean-zero field");
}

SpectralVectorField embed(const SpectralScalarField& F) {
  SpectralVectorField V = SpectralVectorField::zeros(F.grid);
  V.coeffs[0] = F.coeffs;
  return V;
}

double block_norm(const SpectralVectorField& F, int j, double p) {
  return lp_norm(lp_block(j, F), p);
}

double trapezoid_lq(const std::vector<double>& t, const std::vector<double>& v, double q) {
  if (std::isinf(q)) return *std::max_element(v.begin(), v.end());
  if (t.size() == 1) return 0.0;
  double s = 0;
  for (std::size_t i = 1; i < t.size(); ++i)
    s += 0.5 * (t[i] - t[i - 1]) * (std::pow(v[i], q) + std::pow(v[i - 1], q));
  return std::pow(s, 1.0 / q);
}

double max_abs_xi(const Grid& g) {
  double s = 0;
  for (int a = 0; a < 3; ++a) {
    const double x = g.xi(a, g.n(a) / 2);
    s += x * x;
  }
  return std::sqrt(s);
}

double min_abs_xi(const Grid& g) {
  return std::min({g.xi(0, 1), g.xi(1, 1), g.xi(2, 1)});
}

}  // namespace

// ---------------------------------------------------------------------------
// Partition
// ---------------------------------------------------------------------------

double DyadicPartition::chi(double tau) {
  return 1.0 - profiles::smoothstep((tau - kChiInner) / (kChiOuter - kChiInner));
}

double DyadicPartition::phi(double tau) { return chi(0.5 * tau) - chi(tau); }

DyadicPartition DyadicPartition::for_grid(const Grid& g) {
  g.validate();
  DyadicPartition d;
  d.j_min = static_cast<int>(std::floor(std::log2(3.0 * min_abs_xi(g) / 8.0)));
  d.j_max = static_cast<int>(std::ceil(std::log2(4.0 * max_abs_xi(g) / 3.0)));
  const double x3min = g.xi(2, 1), x3max = g.xi(2, g.n3 / 2);
  d.l_min = static_cast<int>(std::floor(std::log2(3.0 * x3min / 8.0)));
  d.l_max = static_cast<int>(std::ceil(std::log2(4.0 * x3max / 3.0)));
  return d;
}

double partition_of_unity_residual(double tau_lo, double tau_hi, int samples) {
  if (!(tau_lo > 0) || !(tau_hi > tau_lo) || samples < 2)
    throw ValidationError("partition residual needs 0 < tau_lo < tau_hi and >= 2 samples");
  double worst = 0;
  for (int i = 0; i < samples; ++i) {
    const double tau = tau_lo * std::pow(tau_hi / tau_lo, static_cast<double>(i) / (samples - 1));
    const int jlo = static_cast<int>(std::floor(std::log2(3.0 * tau / 8.0))) - 1;
    const int jhi = static_cast<int>(std::ceil(std::log2(4.0 * tau / 3.0))) + 1;
    double all = 0, nonneg = 0;
    for (int j = jlo; j <= jhi; ++j) {
      const double v = DyadicPartition::phi(std::ldexp(tau, -j));
      all += v;
      if (j >= 0) nonneg += v;
    }
    worst = std::max(worst, std::abs(all - 1.0));
    worst = std::max(worst, std::abs(DyadicPartition::chi(tau) + nonneg - 1.0));
  }
  return worst;
}

SpectralVectorField lp_block(int j, const SpectralVectorField& F) {
  const double scale = std::ldexp(1.0, -j);
  return multiplier_apply(F, [scale](const Vec3& xi) {
    return Complex(DyadicPartition::phi(scale * std::sqrt(xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2])));
  });
}

SpectralVectorField low_part(int j, const SpectralVectorField& F) {
  const double scale = std::ldexp(1.0, -j);
  return multiplier_apply(F, [scale](const Vec3& xi) {
    return Complex(DyadicPartition::chi(scale * std::sqrt(xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2])));
  });
}

SpectralVectorField vertical_block(int l, const SpectralVectorField& F) {
  const double scale = std::ldexp(1.0, -l);
  return multiplier_apply(F, [scale](const Vec3& xi) {
    return Complex(DyadicPartition::phi(scale * std::abs(xi[2])));
  });
}

SpectralVectorField vertical_low_part(int l, const SpectralVectorField& F) {
  const double scale = std::ldexp(1.0, -l);
  return multiplier_apply(F, [scale](const Vec3& xi) {
    return Complex(DyadicPartition::chi(scale * std::abs(xi[2])));
  });
}

// ---------------------------------------------------------------------------
// Norms
// ---------------------------------------------------------------------------

double lp_norm(const PhysicalVectorField& f, double p) {
  check_exponent(p, "p");
  const std::size_t n = f.grid.physical_size();
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double m = std::sqrt(f.values[0][i] * f.values[0][i] + f.values[1][i] * f.values[1][i] +
                               f.values[2][i] * f.values[2][i]);
    if (std::isinf(p))
      acc = std::max(acc, m);
    else
      acc += std::pow(m, p);
  }
  if (std::isinf(p)) return acc;
  return std::pow(acc * f.grid.cell_volume(), 1.0 / p);
}

double lp_norm(const SpectralVectorField& F, double p) {
  check_exponent(p, "p");
  if (p == 2.0) return l2_norm(F);
  return lp_norm(inverse_transform(F), p);
}

double mixed_norm(const PhysicalVectorField& f, double p_h, double q_v) {
  check_exponent(p_h, "p");
  check_exponent(q_v, "q");
  const Grid& g = f.grid;
  const double dz = g.l3 / g.n3, dA = (g.l1 / g.n1) * (g.l2 / g.n2);
  LrSum outer(p_h);
  for (int a = 0; a < g.n1; ++a)
    for (int b = 0; b < g.n2; ++b) {
      LrSum inner(q_v);
      const std::size_t base = (static_cast<std::size_t>(a) * g.n2 + b) * g.n3;
      for (int c = 0; c < g.n3; ++c) {
        const std::size_t i = base + c;
        inner.add(std::sqrt(f.values[0][i] * f.values[0][i] + f.values[1][i] * f.values[1][i] +
                            f.values[2][i] * f.values[2][i]));
      }
      double column = inner.value();
      if (!std::isinf(q_v)) column *= std::pow(dz, 1.0 / q_v);
      outer.add(column);
    }
  double v = outer.value();
  if (!std::isinf(p_h)) v *= std::pow(dA, 1.0 / p_h);
  return v;
}

double besov_norm(const SpectralVectorField& F, const BesovSpec& spec) {
  check_exponent(spec.p, "p");
  check_exponent(spec.r, "r");
  require_mean_zero_if_needed(F, spec.s);
  const DyadicPartition d = DyadicPartition::for_grid(F.grid);
  LrSum sum(spec.r);
  if (spec.p == 2.0) {
    const ModeCache cache(F);
    for (int j = d.j_min; j <= d.j_max; ++j) {
      const double sc = std::ldexp(1.0, -j);
      const double b = cache.l2([sc](double r, double) { return DyadicPartition::phi(sc * r); });
      sum.add(std::pow(2.0, j * spec.s) * b);
    }
  } else {
    for (int j = d.j_min; j <= d.j_max; ++j) sum.add(std::pow(2.0, j * spec.s) * block_norm(F, j, spec.p));
  }
  return sum.value();
}

double besov_norm(const SpectralScalarField& F, const BesovSpec& spec) { return besov_norm(embed(F), spec); }

double aniso_norm(const SpectralVectorField& F, const AnisoSpec& spec) {
  return aniso_norm(std::vector<double>{0.0}, std::vector<SpectralVectorField>{F}, spec);
}

double aniso_norm(const std::vector<double>& times, const std::vector<SpectralVectorField>& series,
                  const AnisoSpec& spec) {
  check_exponent(spec.r, "r");
  check_exponent(spec.q, "q");
  if (series.empty() || times.size() != series.size())
    throw ValidationError("aniso_norm: need one time per sample and at least one sample");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1])) throw ValidationError("aniso_norm: times must increase");
  const Grid& g = series.front().grid;
  for (const auto& F : series) {
    if (!(F.grid == g)) throw ValidationError("aniso_norm: samples live on different grids");
    require_mean_zero_if_needed(F, std::min(spec.s1, spec.s2));
  }
  const DyadicPartition d = DyadicPartition::for_grid(g);
  std::vector<ModeCache> caches;
  caches.reserve(series.size());
  for (const auto& F : series) caches.emplace_back(F);

  LrSum sum(spec.r);
  std::vector<double> block(series.size());
  for (int j = d.j_min; j <= d.j_max; ++j) {
    const double sj = std::ldexp(1.0, -j);
    for (int l = d.l_min; l <= std::min(d.l_max, j + 2); ++l) {
      const double sl = std::ldexp(1.0, -l);
      for (std::size_t k = 0; k < series.size(); ++k)
        block[k] = caches[k].l2([sj, sl](double r, double r3) {
          return DyadicPartition::phi(sj * r) * DyadicPartition::phi(sl * r3);
        });
      const double inner = series.size() == 1 ? block[0] : trapezoid_lq(times, block, spec.q);
      sum.add(std::pow(2.0, j * spec.s1) * std::pow(2.0, l * spec.s2) * inner);
    }
  }
  return sum.value();
}

double homogeneous_sobolev_norm(const SpectralVectorField& F, double s) {
  require_mean_zero_if_needed(F, s);
  const ModeCache cache(F);
  return cache.l2([s](double r, double) { return r > 0 ? std::pow(r, s) : 0.0; });
}

double wnp_norm(const SpectralVectorField& F, int N, double p) {
  if (N < 0) throw ValidationError("wnp_norm: N must be >= 0");
  check_exponent(p, "p");
  double total = 0;
  for (int a1 = 0; a1 <= N; ++a1)
    for (int a2 = 0; a1 + a2 <= N; ++a2)
      for (int a3 = 0; a1 + a2 + a3 <= N; ++a3) {
        SpectralVectorField D = F;
        for (int i = 0; i < a1; ++i) D = partial(D, 0);
        for (int i = 0; i < a2; ++i) D = partial(D, 1);
        for (int i = 0; i < a3; ++i) D = partial(D, 2);
        total += lp_norm(D, p);
      }
  return total;
}

double weighted_sup_norm(const std::vector<double>& times, const std::vector<SpectralVectorField>& series,
                         const WeightedNormSpec& spec) {
  if (series.empty()) throw ValidationError("weighted_sup_norm: empty series");
  if (times.size() != series.size()) throw ValidationError("weighted_sup_norm: times/series size mismatch");
  if (!(spec.k >= 0)) throw ValidationError("weighted_sup_norm: k must be >= 0");
  double best = 0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (times[i] < 0) throw ValidationError("weighted_sup_norm: negative time");
    best = std::max(best, std::pow(1.0 + times[i], spec.k) * wnp_norm(series[i], spec.N, spec.p));
  }
  return best;
}

// ---------------------------------------------------------------------------
// Inequality checks
// ---------------------------------------------------------------------------

void finalize_report(InequalityReport& rep) {
  rep.empirical_C.resize(rep.lhs.size());
  double lo = 0, hi = 0;
  for (std::size_t i = 0; i < rep.lhs.size(); ++i) {
    rep.empirical_C[i] = rep.rhs[i] > 0 ? rep.lhs[i] / rep.rhs[i] : 0.0;
    if (i == 0 || rep.empirical_C[i] < lo) lo = rep.empirical_C[i];
    if (i == 0 || rep.empirical_C[i] > hi) hi = rep.empirical_C[i];
  }
  rep.spread = lo > 0 ? hi / lo : std::numeric_limits<double>::infinity();
  rep.pass = !rep.lhs.empty() && lo > 0 && rep.spread <= 4.0;
}

namespace {

/// Real, even, nonnegative spectrum so the field peaks at the origin.
SpectralVectorField localized_field(const Grid& g, int block, BernsteinDirection dir, bool ring) {
  SpectralVectorField F = SpectralVectorField::zeros(g);
  const double sc = std::ldexp(1.0, -block);
  const double other_scale = 1.0 / (2.0 * (dir == BernsteinDirection::Horizontal ? g.xi(2, 1)
                                                                                 : std::max(g.xi(0, 1), g.xi(1, 1))));
  WavenumberTable tab(g);
  tab.for_each([&](std::size_t i, const Vec3& xi) {
    const double h = std::sqrt(xi[0] * xi[0] + xi[1] * xi[1]);
    const double v = std::abs(xi[2]);
    const double main = dir == BernsteinDirection::Horizontal ? h : v;
    const double cross = dir == BernsteinDirection::Horizontal ? v : h;
    const double m = ring ? DyadicPartition::phi(sc * main) : DyadicPartition::chi(sc * main);
    F.coeffs[0][i] = Complex(m * DyadicPartition::chi(other_scale * cross));
  });
  return F;
}

}  // namespace

std::vector<InequalityReport> bernstein_check(const std::vector<BernsteinCase>& cases,
                                              BernsteinDirection direction) {
  const bool horiz = direction == BernsteinDirection::Horizontal;
  const std::string tag = horiz ? "horizontal" : "vertical";
  InequalityReport deriv{"bernstein_ball_derivative_" + tag, {}, {}, {}, {}, 1.0, false};
  InequalityReport lp{"bernstein_ball_l2_to_linf_" + tag, {}, {}, {}, {}, 1.0, false};
  InequalityReport ring{"bernstein_ring_lower_" + tag, {}, {}, {}, {}, 1.0, false};
  for (const auto& cs : cases) {
    const Grid& g = cs.grid;
    g.validate();
    const double top = std::ldexp(8.0 / 3.0, cs.block);
    const double nyq = horiz ? std::min(g.xi(0, g.n1 / 2), g.xi(1, g.n2 / 2)) : g.xi(2, g.n3 / 2);
    const double floor_xi = horiz ? std::max(g.xi(0, 1), g.xi(1, 1)) : g.xi(2, 1);
    if (top >= nyq || std::ldexp(4.0 / 3.0, cs.block) < floor_xi) {
      std::ostringstream os;
      os << "bernstein_check: block " << cs.block << " is not resolved by a " << g.n1 << "x" << g.n2 << "x"
         << g.n3 << " grid";
      throw ValidationError(os.str());
    }
    std::ostringstream label;
    label << "n=" << g.n1 << "x" << g.n2 << "x" << g.n3 << ",block=" << cs.block;
    const double two_k = std::ldexp(1.0, cs.block);

    const SpectralVectorField ball = localized_field(g, cs.block, direction, false);
    const double ball_l2 = l2_norm(ball);
    double dball = 0;
    if (horiz)
      dball = std::max(l2_norm(partial(ball, 0)), l2_norm(partial(ball, 1)));
    else
      dball = l2_norm(partial(ball, 2));
    deriv.sweep.push_back(label.str());
    deriv.lhs.push_back(dball);
    deriv.rhs.push_back(two_k * ball_l2);

    const PhysicalVectorField ball_phys = inverse_transform(ball);
    lp.sweep.push_back(label.str());
    if (horiz) {
      lp.lhs.push_back(mixed_norm(ball_phys, kInf, 2.0));
      lp.rhs.push_back(two_k * mixed_norm(ball_phys, 2.0, 2.0));
    } else {
      lp.lhs.push_back(mixed_norm(ball_phys, 2.0, kInf));
      lp.rhs.push_back(std::sqrt(two_k) * mixed_norm(ball_phys, 2.0, 2.0));
    }

    const SpectralVectorField rg = localized_field(g, cs.block, direction, true);
    double drg = 0;
    if (horiz)
      drg = std::max(l2_norm(partial(rg, 0)), l2_norm(partial(rg, 1)));
    else
      drg = l2_norm(partial(rg, 2));
    ring.sweep.push_back(label.str());
    ring.lhs.push_back(l2_norm(rg) * two_k);
    ring.rhs.push_back(drg);
  }
  finalize_report(deriv);
  finalize_report(lp);
  finalize_report(ring);
  return {deriv, lp, ring};
}

ProductLawSample product_law_check(const SpectralScalarField& a, const SpectralScalarField& b, double s,
                                   double p, double r) {
  if (!(s > 0)) throw ValidationError("product_law_check: s must be > 0");
  if (!(a.grid == b.grid)) throw ValidationError("product_law_check: grid mismatch");
  const PhysicalScalarField pa = inverse_transform(a), pb = inverse_transform(b);
  PhysicalScalarField pab = PhysicalScalarField::zeros(a.grid);
  double amax = 0, bmax = 0;
  for (std::size_t i = 0; i < pab.values.size(); ++i) {
    pab.values[i] = pa.values[i] * pb.values[i];
    amax = std::max(amax, std::abs(pa.values[i]));
    bmax = std::max(bmax, std::abs(pb.values[i]));
  }
  const SpectralScalarField ab = dealias(forward_transform(pab));

  ProductLawSample out;
  const BesovSpec spr{s, p, r};
  out.lhs_besov = besov_norm(ab, spr);
  out.rhs_besov = amax * besov_norm(b, spr) + besov_norm(a, spr) * bmax;

  const BesovSpec s11{s, 1.0, 1.0}, s21{s, 2.0, 1.0};
  const double a0 = l2_norm(a), b0 = l2_norm(b);
  out.lhs_l1 = besov_norm(ab, s11);
  out.rhs_l1 = std::min(amax * besov_norm(b, s11), a0 * besov_norm(b, s21)) + besov_norm(a, s21) * b0;
  return out;
}

InterpolationSample interpolation_check(const SpectralVectorField& f, double s) {
  if (!(s > 0)) throw ValidationError("interpolation_check: s must be > 0");
  require_mean_zero_if_needed(f, 0.0);
  InterpolationSample out;
  out.lhs = besov_norm(f, BesovSpec{s, 2.0, 1.0});
  out.rhs = l2_norm(f) + homogeneous_sobolev_norm(f, std::floor(s) + 1.0);
  return out;
}

}  // namespace mhdlab
