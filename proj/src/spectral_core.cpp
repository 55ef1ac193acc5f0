#include "mhdlab/spectral_core.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <tuple>

namespace mhdlab {

void Grid::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (n(a) < 4 || n(a) % 2 != 0) {
      throw ValidationError("grid: n" + std::to_string(a + 1) + " must be even and >= 4, got " +
                            std::to_string(n(a)));
    }
    if (!(l(a) > 0) || !std::isfinite(l(a))) {
      throw ValidationError("grid: l" + std::to_string(a + 1) + " must be positive and finite");
    }
  }
  if (!(dealias_fraction > 0 && dealias_fraction <= 1)) {
    throw ValidationError("grid: dealias_fraction must lie in (0, 1]");
  }
}

PhysicalVectorField PhysicalVectorField::zeros(const Grid& g) {
  PhysicalVectorField f{g, {}};
  for (auto& c : f.values) c.assign(g.physical_size(), 0.0);
  return f;
}

SpectralVectorField SpectralVectorField::zeros(const Grid& g) {
  SpectralVectorField f{g, {}};
  for (auto& c : f.coeffs) c.assign(g.spectral_size(), Complex{});
  return f;
}

namespace {

void require_same_grid(const Grid& a, const Grid& b, const char* what) {
  if (!(a == b)) throw ValidationError(std::string(what) + ": grid mismatch");
}

}  // namespace

SpectralVectorField& SpectralVectorField::operator+=(const SpectralVectorField& o) {
  require_same_grid(grid, o.grid, "add");
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < coeffs[c].size(); ++i) coeffs[c][i] += o.coeffs[c][i];
  return *this;
}

SpectralVectorField& SpectralVectorField::operator-=(const SpectralVectorField& o) {
  require_same_grid(grid, o.grid, "subtract");
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < coeffs[c].size(); ++i) coeffs[c][i] -= o.coeffs[c][i];
  return *this;
}

SpectralVectorField& SpectralVectorField::operator*=(double a) {
  for (auto& comp : coeffs)
    for (auto& v : comp) v *= a;
  return *this;
}

SpectralVectorField& SpectralVectorField::axpy(double a, const SpectralVectorField& o) {
  require_same_grid(grid, o.grid, "axpy");
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < coeffs[c].size(); ++i) coeffs[c][i] += a * o.coeffs[c][i];
  return *this;
}

SpectralVectorField operator+(SpectralVectorField a, const SpectralVectorField& b) { return a += b; }
SpectralVectorField operator-(SpectralVectorField a, const SpectralVectorField& b) { return a -= b; }
SpectralVectorField operator*(double s, SpectralVectorField a) { return a *= s; }

WavenumberTable::WavenumberTable(const Grid& g) : grid(g) {
  for (int a = 0; a < g.n1; ++a) {
    k1.push_back(g.signed_k(0, a));
    xi1.push_back(g.xi(0, k1.back()));
  }
  for (int b = 0; b < g.n2; ++b) {
    k2.push_back(g.signed_k(1, b));
    xi2.push_back(g.xi(1, k2.back()));
  }
  for (int c = 0; c < g.nh3(); ++c) {
    k3.push_back(c);
    xi3.push_back(g.xi(2, c));
  }
}

//===----------------------------------------------------------------------===//
// FFTW plan cache. Plans are created once per grid shape with the unaligned
// flag so that the new-array execute interface can run on std::vector data.
//===----------------------------------------------------------------------===//

namespace {

struct PlanPair {
  fftw_plan r2c = nullptr;
  fftw_plan c2r = nullptr;
};

std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

const PlanPair& plans_for(const Grid& g) {
  static std::map<std::tuple<int, int, int>, PlanPair> cache;
  std::lock_guard<std::mutex> lock(plan_mutex());
  auto key = std::make_tuple(g.n1, g.n2, g.n3);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  std::vector<double> re(g.physical_size());
  std::vector<Complex> sp(g.spectral_size());
  PlanPair p;
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  p.r2c = fftw_plan_dft_r2c_3d(g.n1, g.n2, g.n3, re.data(),
                               reinterpret_cast<fftw_complex*>(sp.data()), flags);
  p.c2r = fftw_plan_dft_c2r_3d(g.n1, g.n2, g.n3, reinterpret_cast<fftw_complex*>(sp.data()),
                               re.data(), flags);
  if (!p.r2c || !p.c2r) throw NumericalAbort("fftw: plan creation failed");
  return cache.emplace(key, p).first->second;
}

}  // namespace

std::vector<Complex> forward_raw(const Grid& g, std::span<const double> f) {
  if (f.size() != g.physical_size()) throw ValidationError("forward transform: size mismatch");
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!std::isfinite(f[i])) {
      std::ostringstream os;
      os << "forward transform: non-finite value at linear index " << i;
      throw ValidationError(os.str());
    }
  }
  const PlanPair& p = plans_for(g);
  std::vector<double> in(f.begin(), f.end());
  std::vector<Complex> out(g.spectral_size());
  fftw_execute_dft_r2c(p.r2c, in.data(), reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

std::vector<double> inverse_raw(const Grid& g, std::span<const Complex> F) {
  if (F.size() != g.spectral_size()) throw ValidationError("inverse transform: size mismatch");
  const PlanPair& p = plans_for(g);
  std::vector<Complex> in(F.begin(), F.end());
  std::vector<double> out(g.physical_size());
  fftw_execute_dft_c2r(p.c2r, reinterpret_cast<fftw_complex*>(in.data()), out.data());
  const double s = 1.0 / static_cast<double>(g.physical_size());
  for (auto& v : out) v *= s;
  return out;
}

namespace {

inline std::size_t sidx(const Grid& g, int a, int b, int c) {
  return (static_cast<std::size_t>(a) * g.n2 + b) * g.nh3() + c;
}

template <class Fn>
void for_each_conjugate_pair(const Grid& g, Fn&& fn) {
  for (int c : {0, g.n3 / 2}) {
    for (int a = 0; a < g.n1; ++a) {
      const int ac = (g.n1 - a) % g.n1;
      for (int b = 0; b < g.n2; ++b) {
        const int bc = (g.n2 - b) % g.n2;
        const std::size_t i = sidx(g, a, b, c);
        const std::size_t j = sidx(g, ac, bc, c);
        if (i <= j) fn(i, j);
      }
    }
  }
}

}  // namespace

double hermitian_defect(const Grid& g, std::span<const Complex> F) {
  double scale = 0.0;
  for (const auto& v : F) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) return 0.0;
  double defect = 0.0;
  for_each_conjugate_pair(g, [&](std::size_t i, std::size_t j) {
    defect = std::max(defect, std::abs(F[i] - std::conj(F[j])));
  });
  return defect / scale;
}

void enforce_hermitian(const Grid& g, std::span<Complex> F) {
  for_each_conjugate_pair(g, [&](std::size_t i, std::size_t j) {
    const Complex h = 0.5 * (F[i] + std::conj(F[j]));
    F[i] = h;
    F[j] = std::conj(h);
  });
}

namespace {

constexpr double kHermitianTolerance = 1e-10;

void check_hermitian(const Grid& g, std::span<const Complex> F) {
  const double d = hermitian_defect(g, F);
  if (d > kHermitianTolerance) {
    std::ostringstream os;
    os << "inverse transform: coefficients are not Hermitian (relative defect " << d << ")";
    throw ValidationError(os.str());
  }
}

}  // namespace

SpectralVectorField forward_transform(const PhysicalVectorField& f) {
  f.grid.validate();
  SpectralVectorField F{f.grid, {}};
  for (int c = 0; c < 3; ++c) F.coeffs[c] = forward_raw(f.grid, f.values[c]);
  return F;
}

SpectralScalarField forward_transform(const PhysicalScalarField& f) {
  f.grid.validate();
  return {f.grid, forward_raw(f.grid, f.values)};
}

PhysicalVectorField inverse_transform(const SpectralVectorField& F) {
  F.grid.validate();
  PhysicalVectorField f{F.grid, {}};
  for (int c = 0; c < 3; ++c) {
    check_hermitian(F.grid, F.coeffs[c]);
    f.values[c] = inverse_raw(F.grid, F.coeffs[c]);
  }
  return f;
}

PhysicalScalarField inverse_transform(const SpectralScalarField& F) {
  F.grid.validate();
  check_hermitian(F.grid, F.coeffs);
  return {F.grid, inverse_raw(F.grid, F.coeffs)};
}

//===----------------------------------------------------------------------===//
// Multipliers
//===----------------------------------------------------------------------===//

namespace {

void apply_symbol(const Grid& g, std::span<Complex> F, const Symbol& m,
                  std::optional<Complex> origin_value) {
  WavenumberTable wt(g);
  wt.for_each([&](std::size_t i, const Vec3& xi) {
    const bool origin = (i == 0);
    Complex v = origin && origin_value ? *origin_value : m(xi);
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
      if (origin) {
        if (std::abs(F[0]) != 0.0) {
          throw ValidationError("multiplier: symbol undefined at xi = 0 and input has a nonzero mean");
        }
        v = 0.0;
      } else {
        std::ostringstream os;
        os << "multiplier: symbol is singular at xi = (" << xi[0] << ", " << xi[1] << ", " << xi[2]
           << ")";
        throw ValidationError(os.str());
      }
    }
    F[i] *= v;
  });
  enforce_hermitian(g, F);
}

}  // namespace

SpectralVectorField multiplier_apply(const SpectralVectorField& F, const Symbol& m,
                                     std::optional<Complex> origin_value) {
  SpectralVectorField out = F;
  for (auto& c : out.coeffs) apply_symbol(F.grid, c, m, origin_value);
  return out;
}

SpectralScalarField multiplier_apply(const SpectralScalarField& F, const Symbol& m,
                                     std::optional<Complex> origin_value) {
  SpectralScalarField out = F;
  apply_symbol(F.grid, out.coeffs, m, origin_value);
  return out;
}

SpectralVectorField abs_d_power(const SpectralVectorField& F, double s) {
  if (s == 0.0) return F;
  auto m = [s](const Vec3& xi) {
    return Complex(std::pow(std::sqrt(xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]), s));
  };
  if (s > 0) return multiplier_apply(F, m, Complex(0.0));
  for (const auto& c : F.coeffs) {
    if (std::abs(c[0]) != 0.0) {
      throw ValidationError("|D|^s with s < 0 requires a mean-zero input");
    }
  }
  return multiplier_apply(F, m, Complex(0.0));
}

SpectralVectorField leray_project(const SpectralVectorField& F) {
  SpectralVectorField out = F;
  WavenumberTable wt(F.grid);
  wt.for_each([&](std::size_t i, const Vec3& xi) {
    const double q = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
    if (q == 0.0) return;
    const Complex d = (xi[0] * out.coeffs[0][i] + xi[1] * out.coeffs[1][i] + xi[2] * out.coeffs[2][i]) / q;
    for (int c = 0; c < 3; ++c) out.coeffs[c][i] -= xi[c] * d;
  });
  return out;
}

bool dealias_keeps(const Grid& g, int k1, int k2, int k3) {
  const double f = g.dealias_fraction;
  return std::abs(k1) <= f * g.n1 / 2 && std::abs(k2) <= f * g.n2 / 2 && std::abs(k3) <= f * g.n3 / 2;
}

void dealias_inplace(const Grid& g, std::span<Complex> F) {
  WavenumberTable wt(g);
  wt.for_each_k([&](std::size_t i, const Vec3&, const std::array<int, 3>& k) {
    if (!dealias_keeps(g, k[0], k[1], k[2])) F[i] = 0.0;
  });
}

SpectralVectorField dealias(const SpectralVectorField& F) {
  SpectralVectorField out = F;
  for (auto& c : out.coeffs) dealias_inplace(F.grid, c);
  return out;
}

SpectralScalarField dealias(const SpectralScalarField& F) {
  SpectralScalarField out = F;
  dealias_inplace(F.grid, out.coeffs);
  return out;
}

namespace {

// i xi_axis with the Nyquist wavenumber mapped to zero, which is what the
// Hermitian restoration in multiplier_apply would produce.
void apply_partial(const Grid& g, std::span<Complex> F, int axis) {
  WavenumberTable wt(g);
  wt.for_each_k([&](std::size_t i, const Vec3& xi, const std::array<int, 3>& k) {
    const bool nyquist = 2 * std::abs(k[axis]) == g.n(axis);
    F[i] *= nyquist ? Complex(0.0) : Complex(0.0, xi[axis]);
  });
}

}  // namespace

SpectralVectorField partial(const SpectralVectorField& F, int axis) {
  SpectralVectorField out = F;
  for (auto& c : out.coeffs) apply_partial(F.grid, c, axis);
  return out;
}

SpectralScalarField partial(const SpectralScalarField& F, int axis) {
  SpectralScalarField out = F;
  apply_partial(F.grid, out.coeffs, axis);
  return out;
}

SpectralVectorField gradient(const SpectralScalarField& F) {
  SpectralVectorField out{F.grid, {}};
  for (int a = 0; a < 3; ++a) out.coeffs[a] = partial(F, a).coeffs;
  return out;
}

SpectralScalarField divergence(const SpectralVectorField& F) {
  SpectralScalarField out = SpectralScalarField::zeros(F.grid);
  for (int a = 0; a < 3; ++a) {
    std::vector<Complex> d = F.coeffs[a];
    apply_partial(F.grid, d, a);
    for (std::size_t i = 0; i < d.size(); ++i) out.coeffs[i] += d[i];
  }
  return out;
}

SpectralVectorField laplacian(const SpectralVectorField& F) {
  SpectralVectorField out = F;
  WavenumberTable wt(F.grid);
  wt.for_each([&](std::size_t i, const Vec3& xi) {
    const double q = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
    for (auto& c : out.coeffs) c[i] *= -q;
  });
  return out;
}

SpectralScalarField inverse_laplacian(const SpectralScalarField& F) {
  SpectralScalarField out = F;
  WavenumberTable wt(F.grid);
  wt.for_each([&](std::size_t i, const Vec3& xi) {
    const double q = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
    out.coeffs[i] = q == 0.0 ? Complex(0.0) : out.coeffs[i] / (-q);
  });
  return out;
}

double max_spectral_divergence(const SpectralVectorField& F) {
  double m = 0.0;
  WavenumberTable wt(F.grid);
  wt.for_each([&](std::size_t i, const Vec3& xi) {
    const Complex d = xi[0] * F.coeffs[0][i] + xi[1] * F.coeffs[1][i] + xi[2] * F.coeffs[2][i];
    m = std::max(m, std::abs(d));
  });
  return m;
}

//===----------------------------------------------------------------------===//
// Parseval
//===----------------------------------------------------------------------===//

double weighted_spectral_sum(const Grid& g, std::span<const Complex> F,
                             const std::function<double(const Vec3&)>& w) {
  double s = 0.0;
  WavenumberTable wt(g);
  const int last = g.nh3() - 1;
  wt.for_each_k([&](std::size_t i, const Vec3& xi, const std::array<int, 3>& k) {
    const double mult = (k[2] == 0 || k[2] == last) ? 1.0 : 2.0;
    s += mult * w(xi) * std::norm(F[i]);
  });
  return s;
}

namespace {

double parseval_factor(const Grid& g) {
  const double n = static_cast<double>(g.physical_size());
  return g.volume() / (n * n);
}

}  // namespace

double l2_norm(const SpectralVectorField& F) {
  double s = 0.0;
  auto one = [](const Vec3&) { return 1.0; };
  for (const auto& c : F.coeffs) s += weighted_spectral_sum(F.grid, c, one);
  return std::sqrt(s * parseval_factor(F.grid));
}

double l2_norm(const SpectralScalarField& F) {
  auto one = [](const Vec3&) { return 1.0; };
  return std::sqrt(weighted_spectral_sum(F.grid, F.coeffs, one) * parseval_factor(F.grid));
}

double hs_norm(const SpectralVectorField& F, double s) {
  auto w = [s](const Vec3& xi) { return std::pow(1.0 + xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2], s); };
  double acc = 0.0;
  for (const auto& c : F.coeffs) acc += weighted_spectral_sum(F.grid, c, w);
  return std::sqrt(acc * parseval_factor(F.grid));
}

double l2_norm(const PhysicalVectorField& f) {
  double s = 0.0;
  for (const auto& c : f.values)
    for (double v : c) s += v * v;
  return std::sqrt(s * f.grid.cell_volume());
}

double max_abs(const PhysicalVectorField& f) {
  double m = 0.0;
  const std::size_t n = f.grid.physical_size();
  for (std::size_t i = 0; i < n; ++i) {
    const double v = std::sqrt(f.values[0][i] * f.values[0][i] + f.values[1][i] * f.values[1][i] +
                               f.values[2][i] * f.values[2][i]);
    m = std::max(m, v);
  }
  return m;
}

//===----------------------------------------------------------------------===//
// Generators
//===----------------------------------------------------------------------===//

SpectralVectorField random_smooth_field(const Grid& g, std::uint64_t seed, int kmax) {
  g.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  SpectralVectorField F = SpectralVectorField::zeros(g);
  WavenumberTable wt(g);
  const double n = static_cast<double>(g.physical_size());
  wt.for_each_k([&](std::size_t i, const Vec3&, const std::array<int, 3>& k) {
    const int kinf = std::max({std::abs(k[0]), std::abs(k[1]), std::abs(k[2])});
    const bool nyquist = 2 * std::abs(k[0]) == g.n1 || 2 * std::abs(k[1]) == g.n2 || 2 * k[2] == g.n3;
    if (kinf == 0 || kinf > kmax || nyquist) return;
    const double k2 = double(k[0]) * k[0] + double(k[1]) * k[1] + double(k[2]) * k[2];
    const double amp = n * std::exp(-k2 / (double(kmax) * kmax));
    for (auto& c : F.coeffs) {
      const double re = normal(rng);
      const double im = normal(rng);
      c[i] = amp * Complex(re, im);
    }
  });
  for (auto& c : F.coeffs) {
    enforce_hermitian(g, c);
    c[0] = 0.0;
  }
  const double nrm = l2_norm(F);
  if (nrm > 0) F *= std::sqrt(g.volume()) / nrm;
  return F;
}

SpectralVectorField random_solenoidal_field(const Grid& g, std::uint64_t seed, int kmax) {
  SpectralVectorField F = leray_project(random_smooth_field(g, seed, kmax));
  const double nrm = l2_norm(F);
  if (nrm > 0) F *= std::sqrt(g.volume()) / nrm;
  return F;
}

SpectralVectorField plane_wave(const Grid& g, std::array<int, 3> k, int comp, double amplitude) {
  g.validate();
  SpectralVectorField F = SpectralVectorField::zeros(g);
  const double n = static_cast<double>(g.physical_size());
  auto store = [&](std::array<int, 3> kk, Complex v) {
    if (kk[2] < 0 || 2 * kk[2] > g.n3) {
      if (2 * std::abs(kk[2]) == g.n3) {
        kk[2] = g.n3 / 2;
      } else {
        for (auto& x : kk) x = -x;
        v = std::conj(v);
      }
    }
    const int a = ((kk[0] % g.n1) + g.n1) % g.n1;
    const int b = ((kk[1] % g.n2) + g.n2) % g.n2;
    F.coeffs[comp][sidx(g, a, b, kk[2])] += v;
  };
  const Complex half = 0.5 * n * amplitude;
  if (k[2] != 0 && 2 * std::abs(k[2]) != g.n3) {
    store(k, half);
  } else {
    store(k, half);
    store({-k[0], -k[1], -k[2]}, half);
  }
  return F;
}

}  // namespace mhdlab
