#include "mhdlab/nash_moser.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "mhdlab/linear_propagator.hpp"
#include "mhdlab/norms.hpp"
#include "mhdlab/smooth_profiles.hpp"

namespace mhdlab {

//===----------------------------------------------------------------------===//
// Space-time fields
//===----------------------------------------------------------------------===//

SpaceTimeField SpaceTimeField::zeros(const Grid& g, const std::vector<double>& times, bool with_derivatives) {
  SpaceTimeField f;
  f.grid = g;
  f.times = times;
  f.Y.assign(times.size(), SpectralVectorField::zeros(g));
  if (with_derivatives) {
    f.Y_t = f.Y;
    f.Y_tt = f.Y;
  }
  return f;
}

void SpaceTimeField::validate() const {
  if (times.empty()) throw ValidationError("space-time field: empty time grid");
  if (times.front() != 0.0) throw ValidationError("space-time field: time grid must start at 0");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) throw ValidationError("space-time field: times must increase");
  }
  if (Y.size() != times.size()) throw ValidationError("space-time field: Y has the wrong number of nodes");
  if (!Y_t.empty() && Y_t.size() != times.size()) throw ValidationError("space-time field: Y_t length");
  if (!Y_tt.empty() && Y_tt.size() != times.size()) throw ValidationError("space-time field: Y_tt length");
  for (const auto* level : {&Y, &Y_t, &Y_tt})
    for (const auto& F : *level)
      if (!(F.grid == grid)) throw ValidationError("space-time field: node grid differs from the field grid");
}

namespace {

void require_layout(const SpaceTimeField& a, const SpaceTimeField& b) {
  if (!(a.grid == b.grid) || a.times != b.times) {
    throw ValidationError("space-time field: operands have different grids or time nodes");
  }
}

template <class Op>
void combine_levels(SpaceTimeField& a, const SpaceTimeField& b, Op op) {
  require_layout(a, b);
  for (std::size_t n = 0; n < a.Y.size(); ++n) op(a.Y[n], b.Y[n]);
  if (a.has_dt() && b.has_dt())
    for (std::size_t n = 0; n < a.Y_t.size(); ++n) op(a.Y_t[n], b.Y_t[n]);
  else
    a.Y_t.clear();
  if (a.has_dtt() && b.has_dtt())
    for (std::size_t n = 0; n < a.Y_tt.size(); ++n) op(a.Y_tt[n], b.Y_tt[n]);
  else
    a.Y_tt.clear();
}

}  // namespace

SpaceTimeField& SpaceTimeField::operator+=(const SpaceTimeField& o) {
  combine_levels(*this, o, [](SpectralVectorField& x, const SpectralVectorField& y) { x += y; });
  return *this;
}

SpaceTimeField& SpaceTimeField::operator-=(const SpaceTimeField& o) {
  combine_levels(*this, o, [](SpectralVectorField& x, const SpectralVectorField& y) { x -= y; });
  return *this;
}

SpaceTimeField& SpaceTimeField::operator*=(double a) {
  for (auto* level : {&Y, &Y_t, &Y_tt})
    for (auto& F : *level) F *= a;
  return *this;
}

SpaceTimeField SpaceTimeField::values_only() const {
  SpaceTimeField f;
  f.grid = grid;
  f.times = times;
  f.Y = Y;
  return f;
}

SpaceTimeField operator+(SpaceTimeField a, const SpaceTimeField& b) { return a += b; }
SpaceTimeField operator-(SpaceTimeField a, const SpaceTimeField& b) { return a -= b; }

std::vector<double> uniform_times(double T, int steps) {
  if (!(T > 0) || !std::isfinite(T)) throw ValidationError("uniform_times: T must be positive");
  if (steps < 1) throw ValidationError("uniform_times: steps must be >= 1");
  std::vector<double> t(static_cast<std::size_t>(steps) + 1);
  for (int n = 0; n <= steps; ++n) t[n] = T * n / steps;
  return t;
}

double time_derivative_defect(const SpaceTimeField& F) {
  F.validate();
  if (!F.has_dt()) throw ValidationError("time_derivative_defect: field has no Y_t");
  if (F.nodes() < 3) return 0.0;
  double scale = 0, worst = 0;
  for (const auto& v : F.Y_t) scale = std::max(scale, l2_norm(v));
  for (std::size_t n = 1; n + 1 < F.nodes(); ++n) {
    SpectralVectorField d = F.Y[n + 1] - F.Y[n - 1];
    d *= 1.0 / (F.times[n + 1] - F.times[n - 1]);
    d -= F.Y_t[n];
    worst = std::max(worst, l2_norm(d));
  }
  return scale > 0 ? worst / scale : worst;
}

double wn2_norm(const SpectralVectorField& F, int N) {
  if (N < 0) throw ValidationError("wn2_norm: N must be >= 0");
  const Grid& g = F.grid;
  const double pf = g.volume() / (static_cast<double>(g.physical_size()) * static_cast<double>(g.physical_size()));
  // One pass over the modes accumulating every multi-index at once.
  std::vector<std::array<int, 3>> alphas;
  for (int a1 = 0; a1 <= N; ++a1)
    for (int a2 = 0; a1 + a2 <= N; ++a2)
      for (int a3 = 0; a1 + a2 + a3 <= N; ++a3) alphas.push_back({a1, a2, a3});
  std::vector<double> sums(alphas.size(), 0.0);
  std::vector<double> pw[3];
  for (auto& v : pw) v.resize(static_cast<std::size_t>(N) + 1);
  WavenumberTable wt(g);
  const int last = g.nh3() - 1;
  wt.for_each_k([&](std::size_t i, const Vec3& xi, const std::array<int, 3>& k) {
    const double e = std::norm(F.coeffs[0][i]) + std::norm(F.coeffs[1][i]) + std::norm(F.coeffs[2][i]);
    if (e == 0) return;
    const double mult = (k[2] == 0 || k[2] == last) ? 1.0 : 2.0;
    for (int ax = 0; ax < 3; ++ax) {
      pw[ax][0] = 1.0;
      for (int j = 1; j <= N; ++j) pw[ax][j] = pw[ax][j - 1] * xi[ax] * xi[ax];
    }
    for (std::size_t q = 0; q < alphas.size(); ++q) {
      sums[q] += mult * e * pw[0][alphas[q][0]] * pw[1][alphas[q][1]] * pw[2][alphas[q][2]];
    }
  });
  double total = 0;
  for (double v : sums) total += std::sqrt(v * pf);
  return total;
}

double weighted_sup_norm(const SpaceTimeField& F, double k, int N) {
  F.validate();
  double best = 0;
  for (std::size_t n = 0; n < F.nodes(); ++n) {
    best = std::max(best, std::pow(1.0 + F.times[n], k) * wn2_norm(F.Y[n], N));
  }
  return best;
}

double weighted_lp_time_norm(const SpaceTimeField& F, double k, double N, double p) {
  F.validate();
  if (!(p >= 1)) throw ValidationError("weighted_lp_time_norm: p must be >= 1");
  std::vector<double> v(F.nodes());
  for (std::size_t n = 0; n < F.nodes(); ++n) {
    const double w = std::pow(1.0 + F.times[n] * F.times[n], 0.5 * k);
    v[n] = std::pow(w * hs_norm(F.Y[n], N), p);
  }
  double s = 0;
  for (std::size_t n = 1; n < F.nodes(); ++n) s += 0.5 * (F.times[n] - F.times[n - 1]) * (v[n] + v[n - 1]);
  return std::pow(s, 1.0 / p);
}

double spacetime_l2(const SpaceTimeField& F) {
  F.validate();
  if (F.nodes() == 1) return l2_norm(F.Y[0]);
  double s = 0;
  double prev = std::pow(l2_norm(F.Y[0]), 2);
  for (std::size_t n = 1; n < F.nodes(); ++n) {
    const double cur = std::pow(l2_norm(F.Y[n]), 2);
    s += 0.5 * (F.times[n] - F.times[n - 1]) * (prev + cur);
    prev = cur;
  }
  return std::sqrt(s);
}

//===----------------------------------------------------------------------===//
// Smoothing operators
//===----------------------------------------------------------------------===//

double time_cutoff(double tau) { return 1.0 - profiles::smoothstep(2 * tau - 1); }
double time_cutoff_d1(double tau) { return -2.0 * profiles::smoothstep_d1(2 * tau - 1); }
double space_cutoff(double rho) { return 1.0 - profiles::smoothstep(2 * rho - 1); }

SpaceTimeField smooth_time(double theta, const SpaceTimeField& F) {
  if (!(theta > 0)) throw ValidationError("smooth_time: theta must be positive");
  F.validate();
  SpaceTimeField out = F;
  out.Y_tt.clear();
  for (std::size_t n = 0; n < F.nodes(); ++n) {
    const double tau = F.times[n] / theta;
    const double c = time_cutoff(tau);
    out.Y[n] *= c;
    if (F.has_dt()) {
      out.Y_t[n] *= c;
      out.Y_t[n].axpy(time_cutoff_d1(tau) / theta, F.Y[n]);
    }
  }
  return out;
}

SpectralVectorField smooth_space(double theta_prime, const SpectralVectorField& F) {
  if (!(theta_prime > 0)) throw ValidationError("smooth_space: theta' must be positive");
  SpectralVectorField out = F;
  WavenumberTable wt(F.grid);
  wt.for_each([&](std::size_t i, const Vec3& xi) {
    const double m = space_cutoff(std::sqrt(xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]) / theta_prime);
    for (int c = 0; c < 3; ++c) out.coeffs[c][i] *= m;
  });
  return out;
}

SpaceTimeField smooth_space(double theta_prime, const SpaceTimeField& F) {
  F.validate();
  SpaceTimeField out = F;
  for (auto* level : {&out.Y, &out.Y_t, &out.Y_tt})
    for (auto& v : *level) v = smooth_space(theta_prime, v);
  return out;
}

SmoothingParams SmoothingParams::stage(int p, double eps_bar, double theta_prime_scale) {
  SmoothingParams s;
  s.p = p;
  s.eps_bar = eps_bar;
  s.theta = std::ldexp(1.0, p);
  s.theta_prime = theta_prime_scale * std::pow(2.0, eps_bar * p);
  s.validate();
  return s;
}

void SmoothingParams::validate() const {
  if (p < 0) throw ValidationError("smoothing: stage index must be >= 0");
  if (!(eps_bar > 0 && eps_bar <= 0.05)) throw ValidationError("smoothing: eps_bar must lie in (0, 1/20]");
  if (!(theta >= 1)) throw ValidationError("smoothing: theta must be >= 1");
  if (!(theta_prime > 0)) throw ValidationError("smoothing: theta' must be positive");
}

SpaceTimeField smooth(const SmoothingParams& params, const SpaceTimeField& F) {
  params.validate();
  return smooth_time(params.theta, smooth_space(params.theta_prime, F));
}

double s2_kernel(double r) {
  // phi(r) = (2 pi^2 r)^{-1} int_0^1 phi-hat(rho) rho sin(rho r) d rho; the
  // transition band [1/2, 1] gets its own Gauss panels.
  static std::vector<double> x, w;
  if (x.empty()) gauss_legendre(64, x, w);
  const int panels = 8 + static_cast<int>(r);
  auto integrate = [&](auto&& fn) {
    double s = 0;
    for (int p = 0; p < panels; ++p) {
      const double a = static_cast<double>(p) / panels, b = static_cast<double>(p + 1) / panels;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double rho = 0.5 * (a + b) + 0.5 * (b - a) * x[i];
        s += 0.5 * (b - a) * w[i] * fn(rho);
      }
    }
    return s;
  };
  if (r < 1e-8) return integrate([](double rho) { return space_cutoff(rho) * rho * rho; }) / (2 * kPi * kPi);
  return integrate([&](double rho) { return space_cutoff(rho) * rho * std::sin(rho * r); }) / (2 * kPi * kPi * r);
}

KernelMoments s2_kernel_moments() {
  // The Gaussian window exp(-(r/24)^2) makes the radial integrals converge
  // fast. On the frequency side it convolves phi-hat with a bump of width
  // ~1/24, which leaves the flat region around 0 untouched up to exp(-36).
  KernelMoments m;
  static std::vector<double> x, w;
  if (x.empty()) gauss_legendre(16, x, w);
  const double Rw = 24.0, R = 6.5 * Rw, h = 0.25;
  for (double a = 0; a < R; a += h) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = a + 0.5 * h * (1 + x[i]);
      const double wt = 0.5 * h * w[i] * 4 * kPi * r * r * std::exp(-(r / Rw) * (r / Rw));
      const double phi = s2_kernel(r);
      m.zeroth += wt * phi;
      m.second += wt * r * r * phi;
      m.second_abs += wt * r * r * std::abs(phi);
    }
  }
  return m;
}

namespace {

// Sum of cos(k y1) e2 over 1 <= k < n1/2 with amplitude <k>^{-a}.
SpectralVectorField power_law_field(const Grid& g, double a) {
  SpectralVectorField F = SpectralVectorField::zeros(g);
  for (int k = 1; k < g.n1 / 2; ++k) {
    F += plane_wave(g, {k, 0, 0}, 1, std::pow(1.0 + static_cast<double>(k) * k, -0.5 * a));
  }
  return F;
}

SpaceTimeField time_profile(const Grid& g, const std::vector<double>& times, const SpectralVectorField& F,
                            const std::function<double(double)>& w) {
  SpaceTimeField out = SpaceTimeField::zeros(g, times, false);
  for (std::size_t n = 0; n < times.size(); ++n) {
    out.Y[n] = F;
    out.Y[n] *= w(times[n]);
  }
  return out;
}

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
  }
  return sxy / sxx;
}

}  // namespace

std::vector<SmoothingBoundReport> smoothing_bound_sweep(const SmoothingSweepSpec& spec) {
  if (spec.thetas.size() < 2) throw ValidationError("smoothing sweep: need at least two theta values");
  for (double th : spec.thetas)
    if (!(th >= 1) || th > spec.T) throw ValidationError("smoothing sweep: theta must lie in [1, T]");
  if (!(spec.k >= spec.s && spec.s >= 0)) throw ValidationError("smoothing sweep: need k >= s >= 0");
  if (!(spec.N >= spec.M && spec.M >= 0)) throw ValidationError("smoothing sweep: need N >= M >= 0");

  int n1 = 128;
  while (n1 < 4 * *std::max_element(spec.thetas.begin(), spec.thetas.end())) n1 *= 2;
  const Grid g{n1, 4, 4, 2 * kPi, 2 * kPi, 2 * kPi, 2.0 / 3.0};
  const std::vector<double> times = uniform_times(spec.T, spec.steps);
  const double k = spec.k, s = spec.s, sig = spec.sigma, lp = spec.lp;
  const int N = spec.N, M = spec.M;
  const SpectralVectorField F_low = power_law_field(g, M + spec.excess);
  const SpectralVectorField F_high = power_law_field(g, N + spec.excess);
  auto one_plus = [](double e) { return [e](double t) { return std::pow(1.0 + t, e); }; };
  auto bracket = [](double e) { return [e](double t) { return std::pow(1.0 + t * t, 0.5 * e); }; };

  struct Family {
    std::string name;
    double expected;
    std::function<double(double)> ratio;
  };
  const SpaceTimeField y_s_low = time_profile(g, times, F_low, one_plus(-s));
  const SpaceTimeField y_k_low = time_profile(g, times, F_low, one_plus(-k));
  const SpaceTimeField y_const_low = time_profile(g, {0.0}, F_low, [](double) { return 1.0; });
  const SpaceTimeField y_const_high = time_profile(g, {0.0}, F_high, [](double) { return 1.0; });
  const SpaceTimeField y_k_high = time_profile(g, times, F_high, one_plus(-k));
  const SpaceTimeField g_s_low = time_profile(g, times, F_low, bracket(-s - sig));
  const SpaceTimeField g_k_high = time_profile(g, times, F_high, bracket(-k - sig));

  std::vector<Family> fam;
  fam.push_back({"S1 growth |S1 Y|_{k,N} <= C theta^{k-s} |Y|_{s,N}", k - s, [&](double th) {
                   return weighted_sup_norm(smooth_time(th, y_s_low), k, N) / weighted_sup_norm(y_s_low, s, N);
                 }});
  fam.push_back({"S1 tail |(1-S1) Y|_{s,N} <= C theta^{-(k-s)} |Y|_{k,N}", -(k - s), [&](double th) {
                   return weighted_sup_norm(y_k_low - smooth_time(th, y_k_low), s, N) /
                          weighted_sup_norm(y_k_low, k, N);
                 }});
  fam.push_back({"S2 growth |S2 Y|_{0,N} <= C theta'^{N-M} |Y|_{0,M}", static_cast<double>(N - M), [&](double th) {
                   return weighted_sup_norm(smooth_space(th, y_const_low), 0, N) /
                          weighted_sup_norm(y_const_low, 0, M);
                 }});
  fam.push_back({"S2 tail |(1-S2) Y|_{0,M} <= C theta'^{-(N-M)} |Y|_{0,N}", -static_cast<double>(N - M),
                 [&](double th) {
                   return weighted_sup_norm(y_const_high - smooth_space(th, y_const_high), 0, M) /
                          weighted_sup_norm(y_const_high, 0, N);
                 }});
  fam.push_back({"S sup |S Y|_{k,N} <= C theta^{k-s} theta'^{N-M} |Y|_{s,M} (theta' = theta)",
                 (k - s) + (N - M), [&](double th) {
                   const SpaceTimeField sy = smooth_time(th, smooth_space(th, y_s_low));
                   return weighted_sup_norm(sy, k, N) / weighted_sup_norm(y_s_low, s, M);
                 }});
  fam.push_back({"S L^p_t <t>^k ||S g||_{H^N} <= C theta^{k-s} theta'^{N-M} <t>^s ||g||_{H^M} (theta' = theta)",
                 (k - s) + (N - M), [&](double th) {
                   const SpaceTimeField sg = smooth_time(th, smooth_space(th, g_s_low));
                   return weighted_lp_time_norm(sg, k, N, lp) / weighted_lp_time_norm(g_s_low, s, M, lp);
                 }});
  fam.push_back({"1-S sup |(1-S) Y|_{s,M} <= C theta^{-(k-s)} |Y|_{k,M} + C theta'^{-(N-M)} |Y|_{s,N}",
                 -std::min(k - s, static_cast<double>(N - M)), [&](double th) {
                   const SpaceTimeField sy = smooth_time(th, smooth_space(th, y_k_high));
                   return weighted_sup_norm(y_k_high - sy, s, M) /
                          (weighted_sup_norm(y_k_high, k, M) + weighted_sup_norm(y_k_high, s, N));
                 }});
  fam.push_back({"1-S L^p_t <t>^s ||(1-S) g||_{H^M} <= C theta^{-(k-s)} <t>^k ||g||_{H^M} + C theta'^{-(N-M)} <t>^s ||g||_{H^N}",
                 -std::min(k - s, static_cast<double>(N - M)), [&](double th) {
                   const SpaceTimeField sg = smooth_time(th, smooth_space(th, g_k_high));
                   return weighted_lp_time_norm(g_k_high - sg, s, M, lp) /
                          (weighted_lp_time_norm(g_k_high, k, M, lp) + weighted_lp_time_norm(g_k_high, s, N, lp));
                 }});

  std::vector<SmoothingBoundReport> out;
  for (const Family& f : fam) {
    SmoothingBoundReport r;
    r.family = f.name;
    r.expected_exponent = f.expected;
    double lo = 1e300, hi = 0;
    for (double th : spec.thetas) {
      const double v = f.ratio(th);
      if (!(v > 0) || !std::isfinite(v)) throw NumericalAbort("smoothing sweep: degenerate ratio in " + f.name);
      r.theta.push_back(th);
      r.ratio.push_back(v);
      const double c = v / std::pow(th, f.expected);
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
    r.fitted_exponent = fit_slope(r.theta, r.ratio);
    r.spread = hi / lo;
    r.pass = std::abs(r.fitted_exponent - r.expected_exponent) <= spec.tolerance;
    out.push_back(r);
  }
  return out;
}

//===----------------------------------------------------------------------===//
// Pseudo-spectral building blocks
//===----------------------------------------------------------------------===//

namespace {

using Phys = std::vector<double>;
using Phys3 = std::array<Phys, 3>;
using PhysM = std::array<std::array<Phys, 3>, 3>;
using Spec = std::vector<Complex>;
using Spec3 = std::array<Spec, 3>;

const Complex kI{0.0, 1.0};

class Ops {
 public:
  explicit Ops(const Grid& g) : g_(g), n_(g.physical_size()), pf_(0) {
    WavenumberTable wt(g);
    xi_.resize(g.spectral_size());
    nyq_.resize(g.spectral_size());
    mult_.resize(g.spectral_size());
    const int last = g.nh3() - 1;
    wt.for_each_k([&](std::size_t i, const Vec3& xi, const std::array<int, 3>& k) {
      xi_[i] = xi;
      nyq_[i] = {g.n1 % 2 == 0 && std::abs(k[0]) == g.n1 / 2, g.n2 % 2 == 0 && std::abs(k[1]) == g.n2 / 2,
                 g.n3 % 2 == 0 && k[2] == g.n3 / 2};
      mult_[i] = (k[2] == 0 || k[2] == last) ? 1.0 : 2.0;
    });
    pf_ = g.volume() / (static_cast<double>(n_) * static_cast<double>(n_));
  }

  [[nodiscard]] const Grid& grid() const { return g_; }
  [[nodiscard]] std::size_t n() const { return n_; }
  [[nodiscard]] std::size_t ns() const { return xi_.size(); }
  [[nodiscard]] const Vec3& xi(std::size_t i) const { return xi_[i]; }

  [[nodiscard]] Spec fwd(const Phys& f, const char* what) const {
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (!std::isfinite(f[i])) {
        std::ostringstream os;
        os << "nash-moser: non-finite " << what << " at physical index " << i;
        throw NumericalAbort(os.str());
      }
    }
    Spec F = forward_raw(g_, f);
    dealias_inplace(g_, F);
    return F;
  }
  [[nodiscard]] Phys inv(const Spec& F) const { return inverse_raw(g_, F); }

  [[nodiscard]] Spec deriv(const Spec& F, int axis) const {
    Spec out(F.size());
    for (std::size_t i = 0; i < F.size(); ++i) out[i] = nyq_[i][axis] ? Complex{} : kI * xi_[i][axis] * F[i];
    return out;
  }
  [[nodiscard]] Spec second_deriv_sum(const Spec& Ft, const Spec& F) const {
    // Delta F_t + d3^2 F
    Spec out(F.size());
    for (std::size_t i = 0; i < F.size(); ++i) {
      const Vec3& x = xi_[i];
      const double q = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
      out[i] = (-q) * Ft[i] + (-x[2] * x[2]) * F[i];
    }
    return out;
  }

  [[nodiscard]] PhysM grad(const Spec3& Y) const {
    PhysM G;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) G[i][j] = inv(deriv(Y[i], j));
    return G;
  }
  [[nodiscard]] Phys3 grad_scalar(const Spec& p) const {
    Phys3 out;
    for (int j = 0; j < 3; ++j) out[j] = inv(deriv(p, j));
    return out;
  }
  [[nodiscard]] Phys3 to_phys(const Spec3& F) const { return {inv(F[0]), inv(F[1]), inv(F[2])}; }
  [[nodiscard]] Spec3 to_spec(const Phys3& f, const char* what) const {
    return {fwd(f[0], what), fwd(f[1], what), fwd(f[2], what)};
  }

  // (div Q)_i = sum_j d_j Q_ij, spectral.
  [[nodiscard]] Spec3 div_matrix(const PhysM& Q, const char* what) const {
    Spec3 out;
    for (int i = 0; i < 3; ++i) {
      out[i].assign(ns(), Complex{});
      for (int j = 0; j < 3; ++j) {
        const Spec d = deriv(fwd(Q[i][j], what), j);
        for (std::size_t k = 0; k < ns(); ++k) out[i][k] += d[k];
      }
    }
    return out;
  }

  // Lap^{-1} div V with the zero mode set to zero.
  [[nodiscard]] Spec inv_lap_div(const Spec3& V) const {
    Spec out(ns());
    for (std::size_t i = 0; i < ns(); ++i) {
      const Vec3& x = xi_[i];
      const double q = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
      if (q == 0) continue;
      Complex d{};
      for (int j = 0; j < 3; ++j)
        if (!nyq_[i][j]) d += kI * x[j] * V[j][i];
      out[i] = -d / q;
    }
    return out;
  }
  [[nodiscard]] Spec inv_lap_div_phys(const Phys3& w, const char* what) const { return inv_lap_div(to_spec(w, what)); }

  [[nodiscard]] double l2(const Spec& F) const {
    double s = 0;
    for (std::size_t i = 0; i < ns(); ++i) s += mult_[i] * std::norm(F[i]);
    return std::sqrt(s * pf_);
  }
  [[nodiscard]] double h1_semi(const Spec& F) const {
    double s = 0;
    for (std::size_t i = 0; i < ns(); ++i) {
      const Vec3& x = xi_[i];
      s += mult_[i] * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) * std::norm(F[i]);
    }
    return std::sqrt(s * pf_);
  }

 private:
  Grid g_;
  std::size_t n_;
  double pf_;
  std::vector<Vec3> xi_;
  std::vector<std::array<bool, 3>> nyq_;
  std::vector<double> mult_;
};

Spec3 spec3(const SpectralVectorField& F) { return F.coeffs; }
SpectralVectorField field(const Grid& g, Spec3 F) {
  SpectralVectorField out{g, std::move(F)};
  return out;
}

PhysM zeros_m(std::size_t n) {
  PhysM m;
  for (auto& row : m)
    for (auto& e : row) e.assign(n, 0.0);
  return m;
}
Phys3 zeros_v(std::size_t n) { return {Phys(n, 0.0), Phys(n, 0.0), Phys(n, 0.0)}; }

// Pointwise C = A B (with optional transposes).
PhysM mul(const PhysM& A, bool ta, const PhysM& B, bool tb) {
  const std::size_t n = A[0][0].size();
  PhysM C = zeros_m(n);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) {
        const Phys& a = ta ? A[k][i] : A[i][k];
        const Phys& b = tb ? B[j][k] : B[k][j];
        Phys& c = C[i][j];
        for (std::size_t x = 0; x < n; ++x) c[x] += a[x] * b[x];
      }
  return C;
}

Phys3 matvec(const PhysM& A, bool ta, const Phys3& v) {
  const std::size_t n = v[0].size();
  Phys3 out = zeros_v(n);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) {
      const Phys& a = ta ? A[k][i] : A[i][k];
      for (std::size_t x = 0; x < n; ++x) out[i][x] += a[x] * v[k][x];
    }
  return out;
}

PhysM outer(const Phys3& a, const Phys3& b) {
  const std::size_t n = a[0].size();
  PhysM m = zeros_m(n);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (std::size_t x = 0; x < n; ++x) m[i][j][x] = a[i][x] * b[j][x];
  return m;
}

void add_to(PhysM& a, const PhysM& b, double s = 1.0) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (std::size_t x = 0; x < a[i][j].size(); ++x) a[i][j][x] += s * b[i][j][x];
}
void add_to(Phys3& a, const Phys3& b, double s = 1.0) {
  for (int i = 0; i < 3; ++i)
    for (std::size_t x = 0; x < a[i].size(); ++x) a[i][x] += s * b[i][x];
}
void add_to(Spec3& a, const Spec3& b, double s = 1.0) {
  for (int i = 0; i < 3; ++i)
    for (std::size_t x = 0; x < a[i].size(); ++x) a[i][x] += s * b[i][x];
}

double max_frobenius(const PhysM& m, std::size_t* where = nullptr) {
  double best = 0;
  const std::size_t n = m[0][0].size();
  for (std::size_t x = 0; x < n; ++x) {
    double s = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) s += m[i][j][x] * m[i][j][x];
    if (!std::isfinite(s)) {
      std::ostringstream os;
      os << "nash-moser: non-finite matrix entry at physical index " << x;
      throw NumericalAbort(os.str());
    }
    if (s > best) {
      best = s;
      if (where) *where = x;
    }
  }
  return std::sqrt(best);
}

struct AData {
  PhysM A;
  PhysM M;  // A A^t - Id
  double max_grad = 0;
};

AData build_A(const Ops& ops, const Spec3& Y) {
  const PhysM G = ops.grad(Y);
  std::size_t where = 0;
  const double mg = max_frobenius(G, &where);
  if (mg > 0.5) {
    const Grid& g = ops.grid();
    const std::size_t c = where % g.n3, b = (where / g.n3) % g.n2, a = where / (static_cast<std::size_t>(g.n3) * g.n2);
    std::ostringstream os;
    os << "matrix_A: |grad Y| = " << mg << " exceeds the invertibility margin 1/2 at grid point (" << a << ", " << b
       << ", " << c << ")";
    throw NumericalAbort(os.str());
  }
  AData d;
  d.max_grad = mg;
  const std::size_t n = ops.n();
  d.A = zeros_m(n);
  for (std::size_t x = 0; x < n; ++x) {
    Mat3 m{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m[i][j] = (i == j ? 1.0 : 0.0) + G[i][j][x];
    const Mat3 inv = inverse3(m);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) d.A[i][j][x] = inv[i][j];
  }
  d.M = mul(d.A, false, d.A, true);
  for (int i = 0; i < 3; ++i)
    for (std::size_t x = 0; x < n; ++x) d.M[i][i][x] -= 1.0;
  return d;
}

// p = -Lap^{-1} div(M grad p) + s.
PressureResult solve_pressure(const Ops& ops, const PhysM& M, const Spec& s, const PressureSolveConfig& cfg) {
  PressureResult r;
  r.contraction_bound = max_frobenius(M);
  if (!(r.contraction_bound < cfg.contraction_margin)) {
    std::ostringstream os;
    os << "pressure: contraction bound |A A^t - Id|_inf = " << r.contraction_bound << " is not below "
       << cfg.contraction_margin;
    throw NumericalAbort(os.str());
  }
  auto K = [&](const Spec& p) {
    Spec out = ops.inv_lap_div_phys(matvec(M, false, ops.grad_scalar(p)), "pressure flux");
    for (auto& z : out) z = -z;
    return out;
  };
  const double sn = ops.l2(s);
  r.p = SpectralScalarField{ops.grid(), s};
  if (sn == 0) return r;
  Spec p = s;
  double prev_inc = 0;
  bool done = false;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    Spec pn = K(p);
    for (std::size_t i = 0; i < pn.size(); ++i) pn[i] += s[i];
    Spec d(pn.size());
    for (std::size_t i = 0; i < pn.size(); ++i) d[i] = pn[i] - p[i];
    const double inc = ops.l2(d), inc_h1 = ops.h1_semi(d);
    if (it > 1 && prev_inc > 0) r.observed_ratio = std::max(r.observed_ratio, inc_h1 / prev_inc);
    prev_inc = inc_h1;
    p = std::move(pn);
    r.iterations = it;
    if (inc <= cfg.neumann_tol * sn) {
      done = true;
      break;
    }
  }
  Spec res = K(p);
  for (std::size_t i = 0; i < res.size(); ++i) res[i] = p[i] - res[i] - s[i];
  r.residual = ops.l2(res) / sn;
  if (!done) {
    std::ostringstream os;
    os << "pressure: no convergence in " << cfg.max_iters << " iterations (relative residual " << r.residual << ")";
    throw NumericalAbort(os.str());
  }
  r.p.coeffs = std::move(p);
  return r;
}

}  // namespace

Mat3 MatrixField::at(std::size_t x) const {
  Mat3 m{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m[i][j] = a[i][j][x];
  return m;
}

MatrixAResult matrix_A(const SpectralVectorField& Y) {
  Ops ops(Y.grid);
  AData d = build_A(ops, spec3(Y));
  MatrixAResult r;
  r.A.grid = Y.grid;
  r.A.a = std::move(d.A);
  r.max_grad = d.max_grad;
  return r;
}

void PressureSolveConfig::validate() const {
  if (!(neumann_tol > 0)) throw ValidationError("pressure: neumann_tol must be positive");
  if (max_iters < 1) throw ValidationError("pressure: max_iters must be >= 1");
  if (!(contraction_margin > 0 && contraction_margin <= 0.5)) {
    throw ValidationError("pressure: contraction_margin must lie in (0, 1/2]");
  }
}

PressureResult pressure_fixed_point(const SpectralVectorField& Y, const SpectralVectorField& Y_t,
                                    const PressureSolveConfig& cfg) {
  if (!(Y.grid == Y_t.grid)) throw ValidationError("pressure: Y and Y_t grids differ");
  cfg.validate();
  const Ops ops(Y.grid);
  const Spec3 y = spec3(Y), yt = spec3(Y_t);
  const AData a = build_A(ops, y);
  const Phys3 d3Y = {ops.inv(ops.deriv(y[0], 2)), ops.inv(ops.deriv(y[1], 2)), ops.inv(ops.deriv(y[2], 2))};
  const Phys3 Yt = ops.to_phys(yt);
  PhysM T = outer(d3Y, d3Y);
  add_to(T, outer(Yt, Yt), -1.0);
  const Phys3 v = ops.to_phys(ops.div_matrix(mul(a.A, false, T, false), "A T"));
  return solve_pressure(ops, a.M, ops.inv_lap_div_phys(matvec(a.A, false, v), "A div(A T)"), cfg);
}

//===----------------------------------------------------------------------===//
// f and f'
//===----------------------------------------------------------------------===//

struct Linearization::Impl {
  Ops ops;
  PressureSolveConfig cfg;
  AData a;
  PhysM DYt;      // grad Y_t
  Phys3 d3Y, Yt;  // physical d3 Y and Y_t
  Phys3 v[2];     // physical div(A T_m) for T_1 = d3Y d3Y, T_2 = Y_t Y_t
  PhysM T[2];
  Phys3 gp[2];    // grad p_m
  explicit Impl(const Grid& g) : ops(g) {}
};

Linearization::Linearization(const SpectralVectorField& Y, const SpectralVectorField& Y_t,
                             const PressureSolveConfig& cfg) {
  if (!(Y.grid == Y_t.grid)) throw ValidationError("f: Y and Y_t grids differ");
  cfg.validate();
  auto impl = std::make_shared<Impl>(Y.grid);
  Impl& m = *impl;
  const Ops& ops = m.ops;
  m.cfg = cfg;
  const Spec3 y = spec3(Y), yt = spec3(Y_t);
  m.a = build_A(ops, y);
  m.DYt = ops.grad(yt);
  m.d3Y = {ops.inv(ops.deriv(y[0], 2)), ops.inv(ops.deriv(y[1], 2)), ops.inv(ops.deriv(y[2], 2))};
  m.Yt = ops.to_phys(yt);
  m.T[0] = outer(m.d3Y, m.d3Y);
  m.T[1] = outer(m.Yt, m.Yt);
  const Grid& g = Y.grid;

  f_.f0 = field(g, ops.div_matrix(mul(m.DYt, false, m.a.M, false), "grad Y_t (A A^t - Id)"));
  for (int q = 0; q < 2; ++q) {
    m.v[q] = ops.to_phys(ops.div_matrix(mul(m.a.A, false, m.T[q], false), "A T"));
    const Spec src = ops.inv_lap_div_phys(matvec(m.a.A, false, m.v[q]), "A div(A T)");
    PressureResult pr = solve_pressure(ops, m.a.M, src, cfg);
    m.gp[q] = ops.grad_scalar(pr.p.coeffs);
    (q == 0 ? f_.p1 : f_.p2) = std::move(pr);
  }
  f_.f1 = field(g, ops.to_spec(matvec(m.a.A, true, m.gp[0]), "A^t grad p1"));
  f_.f2 = field(g, ops.to_spec(matvec(m.a.A, true, m.gp[1]), "A^t grad p2"));
  f_.f = f_.f0;
  f_.f -= f_.f1;
  f_.f += f_.f2;
  impl_ = std::move(impl);
}

SpectralVectorField Linearization::derivative(const SpectralVectorField& X, const SpectralVectorField& X_t) const {
  const Impl& m = *impl_;
  const Ops& ops = m.ops;
  const Grid& g = ops.grid();
  if (!(X.grid == g) || !(X_t.grid == g)) throw ValidationError("f': direction lives on a different grid");
  const Spec3 x = spec3(X), xt = spec3(X_t);
  const PhysM GX = ops.grad(x);
  // A' = -A grad X A,  M' = A' A^t + A A'^t.
  PhysM Ap = mul(mul(m.a.A, false, GX, false), false, m.a.A, false);
  for (auto& row : Ap)
    for (auto& e : row)
      for (auto& v : e) v = -v;
  PhysM Mp = mul(Ap, false, m.a.A, true);
  add_to(Mp, mul(m.a.A, false, Ap, true));

  const PhysM DXt = ops.grad(xt);
  PhysM Q0 = mul(m.DYt, false, Mp, false);
  add_to(Q0, mul(DXt, false, m.a.M, false));
  Spec3 out = ops.div_matrix(Q0, "f0'");

  const Phys3 d3X = {ops.inv(ops.deriv(x[0], 2)), ops.inv(ops.deriv(x[1], 2)), ops.inv(ops.deriv(x[2], 2))};
  const Phys3 Xt = ops.to_phys(xt);
  for (int q = 0; q < 2; ++q) {
    PhysM Tp = q == 0 ? outer(m.d3Y, d3X) : outer(m.Yt, Xt);
    add_to(Tp, q == 0 ? outer(d3X, m.d3Y) : outer(Xt, m.Yt));
    PhysM AT = mul(Ap, false, m.T[q], false);
    add_to(AT, mul(m.a.A, false, Tp, false));
    Phys3 w = matvec(m.a.A, false, ops.to_phys(ops.div_matrix(AT, "A' T + A T'")));
    add_to(w, matvec(Ap, false, m.v[q]));
    add_to(w, matvec(Mp, false, m.gp[q]), -1.0);
    const Spec src = ops.inv_lap_div_phys(w, "pressure derivative source");
    PressureResult pr = solve_pressure(ops, m.a.M, src, m.cfg);
    deriv_residual_ = std::max(deriv_residual_, pr.residual);
    Phys3 fm = matvec(Ap, true, m.gp[q]);
    add_to(fm, matvec(m.a.A, true, ops.grad_scalar(pr.p.coeffs)));
    const Spec3 fs = ops.to_spec(fm, "f_m'");
    add_to(out, fs, q == 0 ? -1.0 : 1.0);
  }
  return field(g, std::move(out));
}

FDecomposition f_decomposed(const SpectralVectorField& Y, const SpectralVectorField& Y_t,
                            const PressureSolveConfig& cfg) {
  return Linearization(Y, Y_t, cfg).value();
}

SpectralVectorField f_eval(const SpectralVectorField& Y, const SpectralVectorField& Y_t,
                           const PressureSolveConfig& cfg) {
  return Linearization(Y, Y_t, cfg).value().f;
}

SpectralVectorField f_prime_eval(const SpectralVectorField& Y, const SpectralVectorField& Y_t,
                                 const SpectralVectorField& X, const SpectralVectorField& X_t,
                                 const PressureSolveConfig& cfg) {
  return Linearization(Y, Y_t, cfg).derivative(X, X_t);
}

GradientCheck gradient_check(const SpectralVectorField& Y, const SpectralVectorField& Y_t,
                             const SpectralVectorField& X, const SpectralVectorField& X_t,
                             const std::vector<double>& hs, const PressureSolveConfig& cfg) {
  if (hs.size() < 2) throw ValidationError("gradient_check: need at least two step sizes");
  const Linearization lin(Y, Y_t, cfg);
  const SpectralVectorField fp = lin.derivative(X, X_t);
  const FDecomposition& base = lin.value();
  GradientCheck r;
  const double fscale = l2_norm(base.f1) + l2_norm(base.f2);
  std::vector<double> lh, le;
  for (double h : hs) {
    if (!(h > 0)) throw ValidationError("gradient_check: step sizes must be positive");
    SpectralVectorField Yh = Y, Yth = Y_t;
    Yh.axpy(h, X);
    Yth.axpy(h, X_t);
    SpectralVectorField d = f_eval(Yh, Yth, cfg);
    d -= base.f;
    d *= 1.0 / h;
    d -= fp;
    const double e = l2_norm(d);
    r.h.push_back(h);
    r.error.push_back(e);
    // Pressure tolerance plus rounding, both amplified by 1/h.
    const double floor_h = (cfg.neumann_tol * fscale + 1e-15 * l2_norm(base.f)) / h;
    r.floor = std::max(r.floor, floor_h);
    if (e > 10 * floor_h) {
      lh.push_back(h);
      le.push_back(e);
    }
  }
  r.points_used = static_cast<int>(lh.size());
  r.slope = lh.size() >= 2 ? fit_slope(lh, le) : 0.0;
  return r;
}

//===----------------------------------------------------------------------===//
// Phi
//===----------------------------------------------------------------------===//

SpaceTimeField phi_eval(const SpaceTimeField& Y, const PressureSolveConfig& cfg, bool nonlinear) {
  Y.validate();
  if (!Y.has_dt()) throw ValidationError("phi_eval: Y_t is required");
  if (!Y.has_dtt() && Y.nodes() < 3) throw ValidationError("phi_eval: differencing Y_t needs >= 3 nodes");
  const Ops ops(Y.grid);
  SpaceTimeField out = SpaceTimeField::zeros(Y.grid, Y.times, false);
  const std::size_t M = Y.nodes();
  for (std::size_t n = 0; n < M; ++n) {
    Spec3 ytt;
    if (Y.has_dtt()) {
      ytt = Y.Y_tt[n].coeffs;
    } else {
      const std::size_t a = n == 0 ? 0 : (n == M - 1 ? M - 3 : n - 1);
      const double t0 = Y.times[a], t1 = Y.times[a + 1], t2 = Y.times[a + 2], t = Y.times[n];
      // Derivative of the quadratic through three nodes.
      const double w0 = ((t - t1) + (t - t2)) / ((t0 - t1) * (t0 - t2));
      const double w1 = ((t - t0) + (t - t2)) / ((t1 - t0) * (t1 - t2));
      const double w2 = ((t - t0) + (t - t1)) / ((t2 - t0) * (t2 - t1));
      for (int c = 0; c < 3; ++c) {
        ytt[c].resize(ops.ns());
        for (std::size_t i = 0; i < ops.ns(); ++i)
          ytt[c][i] = w0 * Y.Y_t[a].coeffs[c][i] + w1 * Y.Y_t[a + 1].coeffs[c][i] + w2 * Y.Y_t[a + 2].coeffs[c][i];
      }
    }
    Spec3 res;
    for (int c = 0; c < 3; ++c) {
      const Spec lin = ops.second_deriv_sum(Y.Y_t[n].coeffs[c], Y.Y[n].coeffs[c]);
      res[c].resize(ops.ns());
      for (std::size_t i = 0; i < ops.ns(); ++i) res[c][i] = ytt[c][i] - lin[i];
    }
    if (nonlinear) add_to(res, f_eval(Y.Y[n], Y.Y_t[n], cfg).coeffs, -1.0);
    out.Y[n] = field(Y.grid, std::move(res));
  }
  return out;
}

//===----------------------------------------------------------------------===//
// Linearized solve
//===----------------------------------------------------------------------===//

void LinearSolveConfig::validate() const {
  if (max_sweeps < 1) throw ValidationError("linear solve: max_sweeps must be >= 1");
  if (!(picard_tol > 0)) throw ValidationError("linear solve: picard_tol must be positive");
  if (gauss_nodes < 2) throw ValidationError("linear solve: gauss_nodes must be >= 2");
}

namespace {

struct StepWeights {
  // Homogeneous propagator and forcing weights for the left (0) and right (1)
  // endpoint of a linear-in-time forcing, per mode.
  std::vector<double> p11, p12, p21, p22, w0, w1, v0, v1;
};

StepWeights step_weights(const Ops& ops, double dt, int gauss_nodes) {
  std::vector<double> x, w;
  gauss_legendre(gauss_nodes, x, w);
  StepWeights s;
  const std::size_t ns = ops.ns();
  for (auto* v : {&s.p11, &s.p12, &s.p21, &s.p22, &s.w0, &s.w1, &s.v0, &s.v1}) v->assign(ns, 0.0);
  for (std::size_t i = 0; i < ns; ++i) {
    const Vec3& xi = ops.xi(i);
    const double q = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2], s3 = xi[2] * xi[2];
    const SymbolValues sv = propagator_symbols(dt, q, s3);
    s.p11[i] = sv.dt_gamma + q * sv.gamma;
    s.p12[i] = sv.gamma;
    s.p21[i] = -s3 * sv.gamma;
    s.p22[i] = sv.dt_gamma;
    // tau = dt - s is the lag; the left endpoint carries weight tau / dt.
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double tau = 0.5 * dt * (1 + x[k]), wk = 0.5 * dt * w[k];
      const SymbolValues sk = propagator_symbols(tau, q, s3);
      const double lw = tau / dt, rw = 1 - tau / dt;
      s.w0[i] += wk * sk.gamma * lw;
      s.w1[i] += wk * sk.gamma * rw;
      s.v0[i] += wk * sk.dt_gamma * lw;
      s.v1[i] += wk * sk.dt_gamma * rw;
    }
  }
  return s;
}

double uniform_step(const std::vector<double>& t) {
  if (t.size() < 2) throw ValidationError("linear solve: need at least two time nodes");
  const double dt = t[1] - t[0];
  for (std::size_t n = 0; n < t.size(); ++n) {
    if (std::abs(t[n] - n * dt) > 1e-12 * std::max(1.0, t.back())) {
      throw ValidationError("linear solve: time grid must be uniform");
    }
  }
  return dt;
}

}  // namespace

LinearSolveResult linearized_solve(const SpaceTimeField& base, const SpaceTimeField& g,
                                   const PressureSolveConfig& pcfg, const LinearSolveConfig& lcfg, bool nonlinear) {
  g.validate();
  lcfg.validate();
  if (nonlinear) {
    base.validate();
    if (!base.has_dt()) throw ValidationError("linear solve: base field needs Y_t");
    require_layout(base, g);
  }
  const double dt = uniform_step(g.times);
  const Grid& grid = g.grid;
  const Ops ops(grid);
  const StepWeights W = step_weights(ops, dt, lcfg.gauss_nodes);
  const std::size_t M = g.nodes(), ns = ops.ns();

  LinearSolveResult r;
  r.X = SpaceTimeField::zeros(grid, g.times, true);
  std::vector<SpectralVectorField> F(M), fp(M);
  double gmax = 0;
  for (const auto& v : g.Y) gmax = std::max(gmax, l2_norm(v));
  F[0] = g.Y[0];
  fp[0] = SpectralVectorField::zeros(grid);
  r.X.Y_tt[0] = g.Y[0];  // X = X_t = 0 at t = 0
  double worst_change = 0;

  for (std::size_t n = 0; n + 1 < M; ++n) {
    std::optional<Linearization> lin;
    if (nonlinear) lin.emplace(base.Y[n + 1], base.Y_t[n + 1], pcfg);
    // The f' part is extrapolated linearly from the last two nodes.
    SpectralVectorField guess = g.Y[n + 1];
    if (nonlinear) {
      guess.axpy(n >= 1 ? 2.0 : 1.0, fp[n]);
      if (n >= 1) guess.axpy(-1.0, fp[n - 1]);
    }
    bool converged = false;
    for (int sweep = 1; sweep <= lcfg.max_sweeps; ++sweep) {
      SpectralVectorField X = SpectralVectorField::zeros(grid), Xt = X;
      for (int c = 0; c < 3; ++c) {
        const auto& x0 = r.X.Y[n].coeffs[c];
        const auto& x1 = r.X.Y_t[n].coeffs[c];
        const auto& fl = F[n].coeffs[c];
        const auto& fr = guess.coeffs[c];
        for (std::size_t i = 0; i < ns; ++i) {
          X.coeffs[c][i] = W.p11[i] * x0[i] + W.p12[i] * x1[i] + W.w0[i] * fl[i] + W.w1[i] * fr[i];
          Xt.coeffs[c][i] = W.p21[i] * x0[i] + W.p22[i] * x1[i] + W.v0[i] * fl[i] + W.v1[i] * fr[i];
        }
      }
      for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < ns; ++i)
          if (!std::isfinite(X.coeffs[c][i].real()) || !std::isfinite(Xt.coeffs[c][i].real())) {
            throw NumericalAbort("linear solve: non-finite state at t = " + std::to_string(g.times[n + 1]));
          }
      SpectralVectorField deriv = nonlinear ? lin->derivative(X, Xt) : SpectralVectorField::zeros(grid);
      SpectralVectorField Fnew = deriv + g.Y[n + 1];
      const double change = l2_norm(Fnew - guess);
      const double scale = std::max({l2_norm(Fnew), gmax, 1e-300});
      r.max_sweeps_used = std::max(r.max_sweeps_used, sweep);
      if (change <= lcfg.picard_tol * scale || !nonlinear) {
        r.X.Y[n + 1] = X;
        r.X.Y_t[n + 1] = Xt;
        F[n + 1] = guess;
        fp[n + 1] = deriv;
        worst_change = std::max(worst_change, change);
        converged = true;
        break;
      }
      guess = std::move(Fnew);
    }
    if (!converged) {
      throw NumericalAbort("linear solve: Picard sweeps did not reach tolerance at t = " +
                           std::to_string(g.times[n + 1]));
    }
    Spec3 xtt;
    for (int c = 0; c < 3; ++c) {
      xtt[c] = ops.second_deriv_sum(r.X.Y_t[n + 1].coeffs[c], r.X.Y[n + 1].coeffs[c]);
      for (std::size_t i = 0; i < ns; ++i) xtt[c][i] += F[n + 1].coeffs[c][i];
    }
    r.X.Y_tt[n + 1] = field(grid, std::move(xtt));
  }
  const double gscale = gmax > 0 ? gmax : 1.0;
  r.residual = worst_change / gscale;

  // Independent residual: X_tt by differencing X_t.
  SpaceTimeField noxtt = r.X;
  noxtt.Y_tt.clear();
  double worst_fd = 0;
  if (M >= 3) {
    const SpaceTimeField lin_part = phi_eval(noxtt, pcfg, false);
    for (std::size_t n = 0; n < M; ++n) {
      SpectralVectorField d = lin_part.Y[n];
      d -= fp[n];
      d -= g.Y[n];
      worst_fd = std::max(worst_fd, l2_norm(d));
    }
  }
  r.residual_fd = worst_fd / gscale;
  return r;
}

//===----------------------------------------------------------------------===//
// Iteration
//===----------------------------------------------------------------------===//

void NashMoserConfig::validate() const {
  grid.validate();
  if (!(T > 0) || steps < 2) throw ValidationError("nash-moser: need T > 0 and steps >= 2");
  if (!(eta > 0)) throw ValidationError("nash-moser: eta must be positive");
  if (eta > eta_threshold) {
    std::ostringstream os;
    os << "nash-moser: data size eta = " << eta << " exceeds the smallness threshold " << eta_threshold;
    throw ValidationError(os.str());
  }
  if (kmax < 1) throw ValidationError("nash-moser: kmax must be >= 1");
  if (p_max < 0) throw ValidationError("nash-moser: p_max must be >= 0");
  if (!(eps_bar > 0 && eps_bar <= 0.05)) throw ValidationError("nash-moser: eps_bar must lie in (0, 1/20]");
  if (!(delta > 0) || !(epsilon > 0)) throw ValidationError("nash-moser: delta and epsilon must be positive");
  const double tol = 1e-12;
  if (delta + 5 * eps_bar > 0.25 + tol) throw ValidationError("nash-moser: need delta + 5 eps_bar <= 1/4");
  if (delta + epsilon + 4 * eps_bar > 0.25 + tol) {
    throw ValidationError("nash-moser: need delta + epsilon + 4 eps_bar <= 1/4");
  }
  if (eps_bar * N0 < 0.5 - tol) throw ValidationError("nash-moser: need eps_bar N0 >= 1/2");
  if (std::abs(gamma() + beta() - 0.5) > tol) throw ValidationError("nash-moser: gamma + beta must equal 1/2");
  if (!(theta_prime_scale > 0)) throw ValidationError("nash-moser: theta_prime_scale must be positive");
  if (norm_N < 0 || !(weight_k >= 0)) throw ValidationError("nash-moser: norm indices must be >= 0");
  pressure.validate();
  linear.validate();
}

double data_size(const InitialPair& d, int N) {
  return wnp_norm(d.Y0, N, 1.0) + wnp_norm(d.Y1, N, 1.0) + wn2_norm(d.Y0, N) + wn2_norm(d.Y1, N);
}

InitialPair default_nm_data(const NashMoserConfig& cfg) {
  cfg.validate();
  InitialPair d{dealias(random_smooth_field(cfg.grid, cfg.seed, cfg.kmax)),
                dealias(random_smooth_field(cfg.grid, cfg.seed + 1000003ULL, cfg.kmax))};
  const double s = data_size(d, cfg.norm_N);
  if (!(s > 0)) throw ValidationError("nash-moser: random data vanish on this grid");
  d.Y0 *= cfg.eta / s;
  d.Y1 *= cfg.eta / s;
  return d;
}

SpaceTimeField free_solution(const InitialPair& d, const std::vector<double>& times) {
  if (!(d.Y0.grid == d.Y1.grid)) throw ValidationError("free_solution: data grids differ");
  const Ops ops(d.Y0.grid);
  SpaceTimeField out = SpaceTimeField::zeros(d.Y0.grid, times, true);
  for (std::size_t n = 0; n < times.size(); ++n) {
    const HomogeneousSolution h = solve_homogeneous(d.Y0, d.Y1, times[n]);
    out.Y[n] = h.Y;
    out.Y_t[n] = h.Y_t;
    Spec3 ytt;
    for (int c = 0; c < 3; ++c) ytt[c] = ops.second_deriv_sum(h.Y_t.coeffs[c], h.Y.coeffs[c]);
    out.Y_tt[n] = field(d.Y0.grid, std::move(ytt));
  }
  out.validate();
  return out;
}

namespace {

const char kMagic[8] = {'M', 'H', 'D', 'N', 'M', 'C', 'K', '1'};

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ValidationError("checkpoint: truncated file");
  return v;
}

void put_field(std::ostream& os, const SpaceTimeField& f) {
  put<int32_t>(os, f.grid.n1);
  put<int32_t>(os, f.grid.n2);
  put<int32_t>(os, f.grid.n3);
  put<double>(os, f.grid.l1);
  put<double>(os, f.grid.l2);
  put<double>(os, f.grid.l3);
  put<double>(os, f.grid.dealias_fraction);
  put<uint64_t>(os, f.times.size());
  for (double t : f.times) put<double>(os, t);
  const uint8_t levels = static_cast<uint8_t>(1 | (f.has_dt() ? 2 : 0) | (f.has_dtt() ? 4 : 0));
  put<uint8_t>(os, levels);
  for (const auto* level : {&f.Y, &f.Y_t, &f.Y_tt})
    for (const auto& v : *level)
      for (const auto& c : v.coeffs) os.write(reinterpret_cast<const char*>(c.data()), static_cast<std::streamsize>(c.size() * sizeof(Complex)));
}

SpaceTimeField get_field(std::istream& is) {
  SpaceTimeField f;
  f.grid.n1 = get<int32_t>(is);
  f.grid.n2 = get<int32_t>(is);
  f.grid.n3 = get<int32_t>(is);
  f.grid.l1 = get<double>(is);
  f.grid.l2 = get<double>(is);
  f.grid.l3 = get<double>(is);
  f.grid.dealias_fraction = get<double>(is);
  f.grid.validate();
  const uint64_t nt = get<uint64_t>(is);
  if (nt == 0 || nt > 1000000) throw ValidationError("checkpoint: bad node count");
  f.times.resize(nt);
  for (auto& t : f.times) t = get<double>(is);
  const uint8_t levels = get<uint8_t>(is);
  auto read_level = [&](std::vector<SpectralVectorField>& lv) {
    lv.assign(nt, SpectralVectorField::zeros(f.grid));
    for (auto& v : lv)
      for (auto& c : v.coeffs) {
        is.read(reinterpret_cast<char*>(c.data()), static_cast<std::streamsize>(c.size() * sizeof(Complex)));
        if (!is) throw ValidationError("checkpoint: truncated field data");
      }
  };
  read_level(f.Y);
  if (levels & 2) read_level(f.Y_t);
  if (levels & 4) read_level(f.Y_tt);
  f.validate();
  return f;
}

void put_stage(std::ostream& os, const IterationState& s) {
  put<int32_t>(os, s.p);
  for (double v : {s.theta, s.theta_prime, s.phi_norm, s.phi_weighted, s.g_norm, s.x_norm, s.x_weighted,
                   s.xt_weighted, s.e_norm, s.ledger_residual, s.solver_residual, s.solver_residual_fd,
                   s.identity_gap})
    put<double>(os, v);
  put<int32_t>(os, s.picard_sweeps);
}

IterationState get_stage(std::istream& is) {
  IterationState s;
  s.p = get<int32_t>(is);
  for (double* v : {&s.theta, &s.theta_prime, &s.phi_norm, &s.phi_weighted, &s.g_norm, &s.x_norm, &s.x_weighted,
                    &s.xt_weighted, &s.e_norm, &s.ledger_residual, &s.solver_residual, &s.solver_residual_fd,
                    &s.identity_gap})
    *v = get<double>(is);
  s.picard_sweeps = get<int32_t>(is);
  return s;
}

}  // namespace

void IterationCheckpoint::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ValidationError("checkpoint: cannot open " + path + " for writing");
  os.write(kMagic, sizeof(kMagic));
  put<int32_t>(os, next_p);
  for (const auto* f : {&Y, &phi0, &phi_p, &E_cur, &E_prev, &e_prev, &g_sum}) put_field(os, *f);
  put<uint64_t>(os, stages.size());
  for (const auto& s : stages) put_stage(os, s);
  if (!os) throw NumericalAbort("checkpoint: write failed for " + path);
}

IterationCheckpoint IterationCheckpoint::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw ValidationError("checkpoint: bad header in " + path);
  IterationCheckpoint c;
  c.next_p = get<int32_t>(is);
  for (auto* f : {&c.Y, &c.phi0, &c.phi_p, &c.E_cur, &c.E_prev, &c.e_prev, &c.g_sum}) *f = get_field(is);
  const uint64_t ns = get<uint64_t>(is);
  if (ns > 100000) throw ValidationError("checkpoint: bad stage count");
  for (uint64_t i = 0; i < ns; ++i) c.stages.push_back(get_stage(is));
  return c;
}

std::string IterationResult::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "p,theta,theta_prime,phi_norm,phi_weighted,g_norm,x_norm,x_weighted,xt_weighted,e_norm,ledger_residual,"
        "solver_residual,solver_residual_fd,identity_gap,picard_sweeps\n";
  for (const auto& s : stages) {
    os << s.p << ',' << s.theta << ',' << s.theta_prime << ',' << s.phi_norm << ',' << s.phi_weighted << ','
       << s.g_norm << ',' << s.x_norm << ',' << s.x_weighted << ',' << s.xt_weighted << ',' << s.e_norm << ','
       << s.ledger_residual << ',' << s.solver_residual << ',' << s.solver_residual_fd << ',' << s.identity_gap << ','
       << s.picard_sweeps << '\n';
  }
  return os.str();
}

IterationResult iterate(const InitialPair& data, const NashMoserConfig& cfg, const IterationHooks& hooks) {
  cfg.validate();
  if (!(data.Y0.grid == cfg.grid) || !(data.Y1.grid == cfg.grid)) {
    throw ValidationError("nash-moser: data grid differs from the configured grid");
  }
  const std::vector<double> times = uniform_times(cfg.T, cfg.steps);
  const PressureSolveConfig& pc = cfg.pressure;
  const bool nl = cfg.nonlinear;

  IterationCheckpoint st;
  if (hooks.resume) {
    st = *hooks.resume;
    if (!(st.Y.grid == cfg.grid) || st.Y.times != times) {
      throw ValidationError("nash-moser: checkpoint does not match the configured grid and time nodes");
    }
  } else {
    st.Y = free_solution(data, times);
    st.phi0 = phi_eval(st.Y, pc, nl);
    st.phi_p = st.phi0;
    st.E_cur = SpaceTimeField::zeros(cfg.grid, times, false);
    st.E_prev = st.E_cur;
    st.e_prev = st.E_cur;
    st.g_sum = st.E_cur;
    st.next_p = 0;
  }

  IterationResult res;
  res.stages = st.stages;
  for (int p = st.next_p; p <= cfg.p_max; ++p) {
    const SmoothingParams sp = SmoothingParams::stage(p, cfg.eps_bar, cfg.theta_prime_scale);
    IterationState rec;
    rec.p = p;
    rec.theta = sp.theta;
    rec.theta_prime = sp.theta_prime;
    rec.phi_norm = spacetime_l2(st.phi_p);
    rec.phi_weighted = weighted_sup_norm(st.phi_p, cfg.weight_k, cfg.norm_N);

    // g_p from the error recursion.
    SpaceTimeField g;
    if (p == 0) {
      g = smooth(sp, st.phi0);
      g *= -1.0;
    } else {
      const SmoothingParams prev = SmoothingParams::stage(p - 1, cfg.eps_bar, cfg.theta_prime_scale);
      SpaceTimeField diff_src = st.E_prev + st.phi0;
      g = smooth(prev, diff_src) - smooth(sp, diff_src);
      g -= smooth(sp, st.e_prev);
    }
    rec.g_norm = spacetime_l2(g);
    // The last stage records g and the ledger without changing the
    // resumable state, so a checkpoint always ends on a solved stage.
    const bool solve = p < cfg.p_max;
    const SpaceTimeField g_sum = st.g_sum + g;
    {
      const SpaceTimeField sphi = smooth(sp, st.phi0);
      SpaceTimeField ledger = g_sum + smooth(sp, st.E_cur) + sphi;
      const double scale = spacetime_l2(sphi);
      rec.ledger_residual = spacetime_l2(ledger) / (scale > 0 ? scale : 1.0);
    }

    if (solve) {
      st.g_sum = g_sum;
      const SpaceTimeField base = smooth(sp, st.Y);
      const LinearSolveResult ls = linearized_solve(base, g, pc, cfg.linear, nl);
      rec.solver_residual = ls.residual;
      rec.solver_residual_fd = ls.residual_fd;
      rec.picard_sweeps = ls.max_sweeps_used;
      rec.x_norm = spacetime_l2(ls.X);
      rec.x_weighted = weighted_sup_norm(ls.X, cfg.weight_k, cfg.norm_N);
      {
        SpaceTimeField xt = ls.X.values_only();
        xt.Y = ls.X.Y_t;
        rec.xt_weighted = weighted_sup_norm(xt, cfg.weight_k, cfg.norm_N);
      }
      SpaceTimeField Ynew = st.Y + ls.X;
      SpaceTimeField phi_new = phi_eval(Ynew, pc, nl);
      SpaceTimeField e = phi_new - st.phi_p;
      e -= g;
      rec.e_norm = spacetime_l2(e);

      // Direct L_p X_p against the bookkeeping identity.
      SpaceTimeField LX = phi_eval(ls.X, pc, false);
      if (nl) {
        for (std::size_t n = 0; n < times.size(); ++n) {
          const Linearization lin(base.Y[n], base.Y_t[n], pc);
          LX.Y[n] -= lin.derivative(ls.X.Y[n], ls.X.Y_t[n]);
        }
      }
      SpaceTimeField gap = phi_new - st.phi_p;
      gap -= LX;
      gap -= e;
      rec.identity_gap = spacetime_l2(gap) / (rec.g_norm > 0 ? rec.g_norm : 1.0);

      st.E_prev = st.E_cur;
      st.E_cur += e;
      st.e_prev = e;
      st.Y = std::move(Ynew);
      st.phi_p = std::move(phi_new);
    }
    res.stages.push_back(rec);
    if (solve) {
      st.stages.push_back(rec);
      st.next_p = p + 1;
    }

    const std::size_t m = res.stages.size();
    if (m >= 3 && res.stages[m - 1].phi_norm > res.stages[m - 2].phi_norm &&
        res.stages[m - 2].phi_norm > res.stages[m - 3].phi_norm) {
      std::ostringstream os;
      os << "nash-moser: residual grew two stages in a row (";
      for (std::size_t i = m - 3; i < m; ++i) os << (i > m - 3 ? ", " : "") << res.stages[i].phi_norm;
      os << ")";
      if (!hooks.checkpoint_path.empty()) {
        st.save(hooks.checkpoint_path);
        os << "; state dumped to " << hooks.checkpoint_path;
      }
      throw NumericalAbort(os.str());
    }
    if (solve && !hooks.checkpoint_path.empty()) st.save(hooks.checkpoint_path);
  }
  res.Y = st.Y;
  res.checkpoint = std::move(st);
  res.horizon_truncated = true;
  return res;
}

}  // namespace mhdlab
