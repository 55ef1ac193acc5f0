#include "mhdlab/linear_propagator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>

#include "mhdlab/smooth_profiles.hpp"

namespace mhdlab {

EigenPair eigenvalues(const Vec3& xi) {
  const double q = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
  const double a = std::abs(xi[2]);
  const double s3 = a * a;
  EigenPair e;
  if (q / 2 >= a) {
    const double alpha = std::sqrt((q / 2 - a) * (q / 2 + a));
    const double big = -(q / 2 + alpha);
    e.lambda2 = big;
    e.lambda1 = big == 0.0 ? 0.0 : s3 / big;  // Vieta: lambda1 lambda2 = xi3^2
    e.real_branch = true;
  } else {
    const double beta = std::sqrt((a - q / 2) * (a + q / 2));
    e.lambda1 = Complex(-q / 2, beta);
    e.lambda2 = Complex(-q / 2, -beta);
    e.real_branch = false;
  }
  return e;
}

SymbolValues propagator_symbols(double t, double q, double s3) {
  if (!(t >= 0)) throw ValidationError("propagator symbol: t must be >= 0");
  const double a = std::sqrt(s3);
  SymbolValues v;
  if (q / 2 >= a) {
    const double alpha = std::sqrt((q / 2 - a) * (q / 2 + a));
    const double lam2 = -(q / 2 + alpha);
    const double lam1 = lam2 == 0.0 ? 0.0 : s3 / lam2;
    const double x = 2 * t * alpha;
    const double phi = x < kBranchSeriesThreshold ? 1 - x / 2 + x * x / 6 : -std::expm1(-x) / x;
    v.gamma = std::exp(lam1 * t) * t * phi;
    v.dt_gamma = std::exp(lam2 * t) + lam1 * v.gamma;
  } else {
    const double beta = std::sqrt((a - q / 2) * (a + q / 2));
    const double y = t * beta;
    const double sinc = std::abs(y) < kBranchSeriesThreshold ? 1 - y * y / 6 + y * y * y * y / 120
                                                             : std::sin(y) / y;
    const double e = std::exp(-t * q / 2);
    v.gamma = e * t * sinc;
    v.dt_gamma = e * (std::cos(y) - (q / 2) * t * sinc);
  }
  return v;
}

namespace {
inline double qnorm(const Vec3& xi) { return xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]; }
}  // namespace

double gamma_symbol(double t, const Vec3& xi) { return propagator_symbols(t, qnorm(xi), xi[2] * xi[2]).gamma; }

double dt_gamma_symbol(double t, const Vec3& xi) {
  return propagator_symbols(t, qnorm(xi), xi[2] * xi[2]).dt_gamma;
}

HomogeneousSolution solve_homogeneous(const SpectralVectorField& Y0, const SpectralVectorField& Y1,
                                      double t) {
  if (!(Y0.grid == Y1.grid)) throw ValidationError("solve_homogeneous: grid mismatch");
  if (!(t >= 0)) throw ValidationError("solve_homogeneous: t must be >= 0");
  HomogeneousSolution out{Y0, Y1};
  if (t == 0.0) return out;
  WavenumberTable wt(Y0.grid);
  wt.for_each([&](std::size_t i, const Vec3& xi) {
    const double q = qnorm(xi);
    const double s3 = xi[2] * xi[2];
    const SymbolValues s = propagator_symbols(t, q, s3);
    for (int c = 0; c < 3; ++c) {
      const Complex y0 = Y0.coeffs[c][i], y1 = Y1.coeffs[c][i];
      out.Y.coeffs[c][i] = s.dt_gamma * y0 + s.gamma * (y1 + q * y0);
      out.Y_t.coeffs[c][i] = -s3 * s.gamma * y0 + s.dt_gamma * y1;
    }
  });
  return out;
}

//===----------------------------------------------------------------------===//
// Gauss-Legendre
//===----------------------------------------------------------------------===//

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  static std::mutex m;
  static std::map<int, std::pair<std::vector<double>, std::vector<double>>> cache;
  std::lock_guard<std::mutex> lock(m);
  auto it = cache.find(n);
  if (it == cache.end()) {
    std::vector<double> x(n), w(n);
    for (int i = 0; i < n; ++i) {
      double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
      double dp = 0;
      for (int iter = 0; iter < 100; ++iter) {
        double p0 = 1, p1 = z;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2 * k - 1) * z * p1 - (k - 1) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (z * p1 - p0) / (z * z - 1);
        const double dz = p1 / dp;
        z -= dz;
        if (std::abs(dz) < 1e-16) break;
      }
      {
        double p0 = 1, p1 = z;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2 * k - 1) * z * p1 - (k - 1) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (z * p1 - p0) / (z * z - 1);
      }
      x[n - 1 - i] = z;
      w[n - 1 - i] = 2 / ((1 - z * z) * dp * dp);
    }
    it = cache.emplace(n, std::make_pair(x, w)).first;
  }
  nodes = it->second.first;
  weights = it->second.second;
}

//===----------------------------------------------------------------------===//
// Duhamel
//===----------------------------------------------------------------------===//

SpectralVectorField solve_duhamel(const TimeSampledSource& g, double t, const TimeQuadratureRule& rule) {
  if (g.times.empty() || g.times.size() != g.samples.size()) {
    throw ValidationError("solve_duhamel: source needs matching, nonempty times and samples");
  }
  if (g.times.front() != 0.0) throw ValidationError("solve_duhamel: source samples must start at t = 0");
  for (std::size_t i = 1; i < g.times.size(); ++i) {
    if (!(g.times[i] > g.times[i - 1])) throw ValidationError("solve_duhamel: times must increase");
    if (!(g.samples[i].grid == g.samples[0].grid)) throw ValidationError("solve_duhamel: grid mismatch");
  }
  if (!(t >= 0)) throw ValidationError("solve_duhamel: t must be >= 0");
  if (t > g.times.back() && !g.zero_beyond) {
    std::ostringstream os;
    os << "solve_duhamel: t = " << t << " exceeds the sampled support (" << g.times.back()
       << ") of a source not flagged zero beyond it";
    throw ValidationError(os.str());
  }
  if (rule.gauss_nodes_per_interval < 1) throw ValidationError("solve_duhamel: need >= 1 node");
  const Grid& grid = g.samples[0].grid;
  SpectralVectorField Y = SpectralVectorField::zeros(grid);
  std::vector<double> x, w;
  gauss_legendre(rule.gauss_nodes_per_interval, x, w);
  WavenumberTable wt(grid);
  const double upper = std::min(t, g.times.back());
  for (std::size_t k = 0; k + 1 < g.times.size(); ++k) {
    const double sa = g.times[k], sb = g.times[k + 1];
    if (sa >= upper) break;
    const double hi = std::min(sb, upper);
    const double half = (hi - sa) / 2, mid = (hi + sa) / 2;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double s = mid + half * x[j];
      const double theta = (s - sa) / (sb - sa);
      const double wj = half * w[j];
      wt.for_each([&](std::size_t i, const Vec3& xi) {
        const double gam = propagator_symbols(t - s, qnorm(xi), xi[2] * xi[2]).gamma * wj;
        for (int c = 0; c < 3; ++c) {
          const Complex gs = (1 - theta) * g.samples[k].coeffs[c][i] + theta * g.samples[k + 1].coeffs[c][i];
          Y.coeffs[c][i] += gam * gs;
        }
      });
    }
  }
  return Y;
}

//===----------------------------------------------------------------------===//
// Whole-space quadrature
//===----------------------------------------------------------------------===//

void RadialData::validate() const {
  if (!(r_outer > 0)) throw ValidationError("radial data: r_outer must be positive");
  if (shape == Shape::Annulus && !(r_inner > 0 && r_inner < r_outer)) {
    throw ValidationError("radial data: annulus needs 0 < r_inner < r_outer");
  }
  if (!(low_power > -3)) throw ValidationError("radial data: low_power must exceed -3 for integrability");
}

double RadialData::value(double r) const {
  if (r <= 0 || r >= r_outer) return r == 0 && shape == Shape::Ball && low_power == 0 ? 1.0 : 0.0;
  double base = 0.0;
  if (shape == Shape::Annulus) {
    if (r <= r_inner) return 0.0;
    const double u = (2 * r - (r_inner + r_outer)) / (r_outer - r_inner);
    base = std::exp(1.0) * profiles::bump(u);
  } else {
    base = 1.0 - profiles::smoothstep((r - r_outer / 2) / (r_outer / 2));
  }
  return low_power == 0 ? base : base * std::pow(r, low_power);
}

void QuadratureSpec::validate(const RadialData& data) const {
  data.validate();
  if (radial_nodes < 16 || radial_nodes % 2 || angular_nodes < 16 || angular_nodes % 2) {
    throw ValidationError("quadrature: node counts must be even and >= 16");
  }
  if (!(r_max > data.support_radius())) {
    throw ValidationError("quadrature: data support radius exceeds r_max");
  }
  if (!(layer_scale > 0)) throw ValidationError("quadrature: layer_scale must be positive");
}

QuadratureSpec QuadratureSpec::refined() const {
  QuadratureSpec q = *this;
  q.radial_nodes *= 2;
  q.angular_nodes *= 2;
  return q;
}

namespace {

// Breakpoints lo = b0 < c/sqrt(t) < 2c/sqrt(t) < ... < hi, plus a few
// geometric panels below the first layer point.
std::vector<double> graded_breaks(double lo, double hi, double layer, int below) {
  std::vector<double> b{lo};
  if (layer < hi) {
    double x = layer;
    for (int k = below; k >= 1; --k) {
      const double y = layer * std::pow(0.25, k);
      if (y > lo) b.push_back(y);
    }
    while (x < hi) {
      if (x > lo) b.push_back(x);
      x *= 2;
    }
  }
  b.push_back(hi);
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  return b;
}

template <class F>
double integrate_panels(const std::vector<double>& breaks, int nodes, F&& f) {
  std::vector<double> x, w;
  gauss_legendre(nodes, x, w);
  double s = 0;
  for (std::size_t p = 0; p + 1 < breaks.size(); ++p) {
    const double a = breaks[p], b = breaks[p + 1];
    const double half = (b - a) / 2, mid = (a + b) / 2;
    double part = 0;
    for (std::size_t j = 0; j < x.size(); ++j) part += w[j] * f(mid + half * x[j]);
    s += half * part;
  }
  return s;
}

}  // namespace

double whole_space_norm(const SymbolWeight& weight, const RadialData& data, double t,
                        const QuadratureSpec& q, NormKind kind) {
  q.validate(data);
  if (!(t >= 0)) throw ValidationError("whole_space_norm: t must be >= 0");
  const double layer = t > 0 ? q.layer_scale / std::sqrt(t) : 2.0;
  std::vector<double> rb;
  if (data.shape == RadialData::Shape::Annulus) {
    for (int k = 0; k <= 4; ++k) rb.push_back(data.r_inner + (data.r_outer - data.r_inner) * k / 4.0);
  } else {
    rb = graded_breaks(0.0, data.r_outer / 2, layer, 6);
    for (int k = 1; k <= 2; ++k) rb.push_back(data.r_outer / 2 + data.r_outer / 2 * k / 2.0);
  }
  const bool l2 = kind == NormKind::L2;
  auto radial = [&](double r) {
    const double g = data.value(r);
    if (g == 0.0) return 0.0;
    std::vector<double> tb = graded_breaks(0.0, 1.0, layer, 3);
    const double tau_branch = r / 2;
    if (tau_branch < 1.0 && t > 0) {
      // Complex branch on (r/2, 1]: split into panels of bounded phase unless
      // the e^{-t r^2/2} envelope already kills the contribution.
      tb.push_back(tau_branch);
      if (t * r * r / 2 < 40) {
        const int panels = std::min(4000, static_cast<int>(std::ceil(t * r * (1 - tau_branch) / 2.0)) + 1);
        for (int k = 1; k < panels; ++k) tb.push_back(tau_branch + (1 - tau_branch) * k / panels);
      }
      std::sort(tb.begin(), tb.end());
      tb.erase(std::unique(tb.begin(), tb.end()), tb.end());
    }
    const double ang = integrate_panels(tb, q.angular_nodes, [&](double tau) {
      const Vec3 xi{r * std::sqrt(std::max(0.0, 1 - tau * tau)), 0.0, r * tau};
      const double v = std::abs(weight(t, xi) * g);
      return l2 ? v * v : v;
    });
    return 4 * kPi * r * r * ang;
  };
  const double integral = integrate_panels(rb, q.radial_nodes, radial);
  if (l2) return std::sqrt(integral) / std::pow(2 * kPi, 1.5);
  return integral / std::pow(2 * kPi, 3);
}

SymbolWeight standard_weight(const std::string& name) {
  if (name == "y") return [](double t, const Vec3& xi) { return gamma_symbol(t, xi); };
  if (name == "dz") return [](double t, const Vec3& xi) { return xi[2] * gamma_symbol(t, xi); };
  if (name == "dzz") return [](double t, const Vec3& xi) { return xi[2] * xi[2] * gamma_symbol(t, xi); };
  if (name == "dt") return [](double t, const Vec3& xi) { return dt_gamma_symbol(t, xi); };
  throw ValidationError("unknown symbol weight '" + name + "'");
}

double duhamel_time_profile(double s, double theta) {
  if (s <= 0 || s >= theta) return 0.0;
  return std::exp(1.0) * profiles::bump(2 * s / theta - 1);
}

SymbolWeight duhamel_weight(double theta, int gauss_nodes) {
  if (!(theta > 0)) throw ValidationError("duhamel weight: theta must be positive");
  return [theta, gauss_nodes](double t, const Vec3& xi) {
    const double hi = std::min(t, theta);
    if (hi <= 0) return 0.0;
    std::vector<double> x, w;
    gauss_legendre(gauss_nodes, x, w);
    const double q = qnorm(xi), s3 = xi[2] * xi[2];
    double acc = 0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double s = hi / 2 * (1 + x[j]);
      acc += w[j] * propagator_symbols(t - s, q, s3).gamma * duhamel_time_profile(s, theta);
    }
    return acc * hi / 2;
  };
}

//===----------------------------------------------------------------------===//
// Fits and checks
//===----------------------------------------------------------------------===//

DecayFit decay_fit(const DecaySeries& series, double t_lo, double t_hi) {
  if (series.t.size() != series.value.size()) throw ValidationError("decay_fit: length mismatch");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < series.t.size(); ++i) {
    if (i > 0 && !(series.t[i] > series.t[i - 1])) throw ValidationError("decay_fit: t must increase");
    if (series.t[i] < t_lo || series.t[i] > t_hi) continue;
    if (!(series.value[i] > 0)) {
      std::ostringstream os;
      os << "decay_fit: nonpositive value " << series.value[i] << " at t = " << series.t[i];
      throw ValidationError(os.str());
    }
    lx.push_back(std::log(series.t[i]));
    ly.push_back(std::log(series.value[i]));
  }
  if (lx.size() < 8) {
    throw ValidationError("decay_fit: need at least 8 samples in the window, got " + std::to_string(lx.size()));
  }
  const double n = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  DecayFit f;
  f.exponent = sxy / sxx;
  const double b = my - f.exponent * mx;
  f.prefactor = std::exp(b);
  double rss = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double r = ly[i] - (b + f.exponent * lx[i]);
    rss += r * r;
  }
  f.residual = std::sqrt(rss / n);
  f.t_lo = t_lo;
  f.t_hi = t_hi;
  f.samples = static_cast<int>(lx.size());
  return f;
}

std::vector<double> log_times(double t_lo, double t_hi, int per_decade) {
  if (!(t_lo > 0 && t_hi > t_lo) || per_decade < 1) throw ValidationError("log_times: bad range");
  const int n = static_cast<int>(std::ceil(std::log10(t_hi / t_lo) * per_decade));
  std::vector<double> t;
  for (int i = 0; i <= n; ++i) t.push_back(t_lo * std::pow(t_hi / t_lo, double(i) / n));
  return t;
}

namespace {

std::vector<double> logspace(double lo, double hi, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = lo * std::pow(hi / lo, n == 1 ? 0.0 : double(i) / (n - 1));
  return v;
}

std::pair<double, double> symbol_sups(const SymbolSampleGrid& g, int factor) {
  const auto ts = logspace(g.t_min, g.t_max, g.n_t * factor);
  const auto rs = logspace(g.r_min, g.r_max, g.n_r * factor);
  auto taus = logspace(g.tau_min, 1.0, g.n_angle * factor);
  taus.insert(taus.begin(), 0.0);
  double s1 = 0, s2 = 0;
  for (double t : ts)
    for (double r : rs)
      for (double tau : taus) {
        const double q = r * r, x3 = r * tau;
        const SymbolValues v = propagator_symbols(t, q, x3 * x3);
        s1 = std::max(s1, t * q * std::abs(v.dt_gamma));
        s2 = std::max(s2, t * r / (1 + r) * x3 * x3 * std::abs(v.gamma));
      }
  return {s1, s2};
}

}  // namespace

SymbolBoundReport symbol_bound_check(const SymbolSampleGrid& grid) {
  if (grid.n_t < 2 || grid.n_r < 2 || grid.n_angle < 2 || grid.refinement < 2) {
    throw ValidationError("symbol_bound_check: need >= 2 samples per axis and refinement >= 2");
  }
  SymbolBoundReport r;
  std::tie(r.sup_dt_gamma, r.sup_gamma) = symbol_sups(grid, 1);
  std::tie(r.sup_dt_gamma_refined, r.sup_gamma_refined) = symbol_sups(grid, grid.refinement);
  r.change_dt_gamma = std::abs(r.sup_dt_gamma_refined - r.sup_dt_gamma) / r.sup_dt_gamma_refined;
  r.change_gamma = std::abs(r.sup_gamma_refined - r.sup_gamma) / r.sup_gamma_refined;
  r.pass = r.change_dt_gamma <= 0.1 && r.change_gamma <= 0.1;
  return r;
}

EnergyIdentityReport linear_energy_identity_check(const SpectralVectorField& Y0,
                                                  const SpectralVectorField& Y1, double T, double dt) {
  if (!(Y0.grid == Y1.grid)) throw ValidationError("energy identity: grid mismatch");
  if (!(T > 0 && dt > 0)) throw ValidationError("energy identity: T and dt must be positive");
  const Grid& g = Y0.grid;
  const int steps = static_cast<int>(std::llround(T / dt));
  const double factor = g.volume() / std::pow(static_cast<double>(g.physical_size()), 2);
  EnergyIdentityReport rep;
  WavenumberTable wt(g);
  const int last = g.nh3() - 1;
  for (int n = 0; n <= steps; ++n) {
    const double t = n * dt;
    double e = 0, d = 0;
    wt.for_each_k([&](std::size_t i, const Vec3& xi, const std::array<int, 3>& k) {
      const double mult = (k[2] == 0 || k[2] == last) ? 1.0 : 2.0;
      const double q = qnorm(xi), s3 = xi[2] * xi[2];
      const SymbolValues s = propagator_symbols(t, q, s3);
      for (int c = 0; c < 3; ++c) {
        const Complex y0 = Y0.coeffs[c][i], y1 = Y1.coeffs[c][i];
        const Complex y = s.dt_gamma * y0 + s.gamma * (y1 + q * y0);
        const Complex yt = -s3 * s.gamma * y0 + s.dt_gamma * y1;
        e += mult * (std::norm(yt) + s3 * std::norm(y));
        d += mult * q * std::norm(yt);
      }
    });
    rep.t.push_back(t);
    rep.energy.push_back(e * factor);
    rep.dissipation.push_back(d * factor);
  }
  double integral = 0;
  for (std::size_t n = 0; n < rep.t.size(); ++n) {
    if (n > 0) integral += dt * (rep.dissipation[n] + rep.dissipation[n - 1]) / 2;
    rep.max_residual = std::max(rep.max_residual, std::abs(rep.energy[n] - rep.energy[0] + 2 * integral));
  }
  return rep;
}

}  // namespace mhdlab
