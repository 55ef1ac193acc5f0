#pragma once
//===----------------------------------------------------------------------===//
// Periodic grids, FFTW-backed transforms, Fourier multipliers, Leray
// projection and 2/3 dealiasing.
//
// Convention: the forward transform is F(k) = sum_x f(x) exp(-i xi.x) with no
// normalization; the inverse carries the factor 1/(n1 n2 n3). Wavenumbers are
// xi_i = 2 pi k_i / l_i with k_i in (-n_i/2, n_i/2]. Spectral storage is the
// real-to-complex half spectrum, index (i1, i2, i3) with 0 <= i3 <= n3/2.
//===----------------------------------------------------------------------===//

#include <array>
#include <complex>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mhdlab {

using Complex = std::complex<double>;
using Vec3 = std::array<double, 3>;

/// Bad input or configuration. The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation that went numerically wrong (NaN, instability, failed
/// contraction). The CLI maps this to exit code 3.
class NumericalAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kPi = 3.14159265358979323846;

struct Grid {
  int n1 = 16, n2 = 16, n3 = 16;
  double l1 = 2 * kPi, l2 = 2 * kPi, l3 = 2 * kPi;
  double dealias_fraction = 2.0 / 3.0;

  static Grid cube(int n, double l) { return Grid{n, n, n, l, l, l, 2.0 / 3.0}; }

  /// Throws ValidationError unless n_i >= 4 is even, l_i > 0 and the dealias
  /// fraction lies in (0, 1].
  void validate() const;

  [[nodiscard]] int n(int axis) const { return axis == 0 ? n1 : axis == 1 ? n2 : n3; }
  [[nodiscard]] double l(int axis) const { return axis == 0 ? l1 : axis == 1 ? l2 : l3; }
  [[nodiscard]] int nh3() const { return n3 / 2 + 1; }
  [[nodiscard]] std::size_t physical_size() const {
    return static_cast<std::size_t>(n1) * n2 * n3;
  }
  [[nodiscard]] std::size_t spectral_size() const {
    return static_cast<std::size_t>(n1) * n2 * nh3();
  }
  [[nodiscard]] double volume() const { return l1 * l2 * l3; }
  [[nodiscard]] double cell_volume() const { return volume() / static_cast<double>(physical_size()); }

  /// Signed integer wavenumber of storage index `idx` along `axis`.
  [[nodiscard]] int signed_k(int axis, int idx) const {
    const int m = n(axis);
    if (axis == 2) return idx;
    return idx <= m / 2 ? idx : idx - m;
  }
  [[nodiscard]] double xi(int axis, int k) const { return 2 * kPi * k / l(axis); }
  [[nodiscard]] double x(int axis, int idx) const { return l(axis) * idx / n(axis); }

  bool operator==(const Grid&) const = default;
};

struct PhysicalScalarField {
  Grid grid;
  std::vector<double> values;
  static PhysicalScalarField zeros(const Grid& g) { return {g, std::vector<double>(g.physical_size(), 0.0)}; }
};

struct PhysicalVectorField {
  Grid grid;
  std::array<std::vector<double>, 3> values;
  static PhysicalVectorField zeros(const Grid& g);
};

struct SpectralScalarField {
  Grid grid;
  std::vector<Complex> coeffs;
  static SpectralScalarField zeros(const Grid& g) { return {g, std::vector<Complex>(g.spectral_size())}; }
};

struct SpectralVectorField {
  Grid grid;
  std::array<std::vector<Complex>, 3> coeffs;
  static SpectralVectorField zeros(const Grid& g);

  SpectralVectorField& operator+=(const SpectralVectorField& o);
  SpectralVectorField& operator-=(const SpectralVectorField& o);
  SpectralVectorField& operator*=(double a);
  /// this += a * o
  SpectralVectorField& axpy(double a, const SpectralVectorField& o);
};

SpectralVectorField operator+(SpectralVectorField a, const SpectralVectorField& b);
SpectralVectorField operator-(SpectralVectorField a, const SpectralVectorField& b);
SpectralVectorField operator*(double s, SpectralVectorField a);

/// Precomputed per-axis wavenumbers for fast modewise loops.
struct WavenumberTable {
  explicit WavenumberTable(const Grid& g);
  Grid grid;
  std::vector<double> xi1, xi2, xi3;
  std::vector<int> k1, k2, k3;

  /// Calls f(linear_index, xi) for every stored mode in storage order.
  template <class F>
  void for_each(F&& f) const {
    std::size_t idx = 0;
    const int nh = grid.nh3();
    for (int a = 0; a < grid.n1; ++a)
      for (int b = 0; b < grid.n2; ++b)
        for (int c = 0; c < nh; ++c, ++idx) f(idx, Vec3{xi1[a], xi2[b], xi3[c]});
  }
  /// Same as for_each but also passes the signed integer wavenumbers.
  template <class F>
  void for_each_k(F&& f) const {
    std::size_t idx = 0;
    const int nh = grid.nh3();
    for (int a = 0; a < grid.n1; ++a)
      for (int b = 0; b < grid.n2; ++b)
        for (int c = 0; c < nh; ++c, ++idx)
          f(idx, Vec3{xi1[a], xi2[b], xi3[c]}, std::array<int, 3>{k1[a], k2[b], k3[c]});
  }
};

// ---------------------------------------------------------------------------
// Transforms
// ---------------------------------------------------------------------------

/// Raw scalar transforms used by every module. `forward_raw` rejects
/// non-finite input; `inverse_raw` does not check symmetry.
std::vector<Complex> forward_raw(const Grid& g, std::span<const double> f);
std::vector<double> inverse_raw(const Grid& g, std::span<const Complex> F);

SpectralVectorField forward_transform(const PhysicalVectorField& f);
SpectralScalarField forward_transform(const PhysicalScalarField& f);
/// Rejects coefficient arrays that are not the transform of a real field.
PhysicalVectorField inverse_transform(const SpectralVectorField& F);
PhysicalScalarField inverse_transform(const SpectralScalarField& F);

/// Largest violation of coeff(-k) = conj(coeff(k)) on the self-conjugate
/// planes of the half spectrum, relative to max |coeff|.
double hermitian_defect(const Grid& g, std::span<const Complex> F);
/// Replaces each self-conjugate-plane pair by its Hermitian part.
void enforce_hermitian(const Grid& g, std::span<Complex> F);

// ---------------------------------------------------------------------------
// Multipliers and projections
// ---------------------------------------------------------------------------

using Symbol = std::function<Complex(const Vec3&)>;

/// Applies coeff(k) <- m(xi(k)) coeff(k). A non-finite value at a nonzero
/// lattice point throws ValidationError naming that point. At xi = 0 the
/// value `origin_value` is used when given; otherwise a non-finite m(0) is
/// accepted only if the zero mode of F vanishes. The self-conjugate planes
/// are restored to Hermitian form afterwards, so odd symbols annihilate
/// Nyquist modes.
SpectralVectorField multiplier_apply(const SpectralVectorField& F, const Symbol& m,
                                     std::optional<Complex> origin_value = std::nullopt);
SpectralScalarField multiplier_apply(const SpectralScalarField& F, const Symbol& m,
                                     std::optional<Complex> origin_value = std::nullopt);

/// |D|^s. Zero at the origin for s > 0; for s < 0 the input must be mean-zero.
SpectralVectorField abs_d_power(const SpectralVectorField& F, double s);

SpectralVectorField leray_project(const SpectralVectorField& F);
SpectralVectorField dealias(const SpectralVectorField& F);
SpectralScalarField dealias(const SpectralScalarField& F);
void dealias_inplace(const Grid& g, std::span<Complex> F);
/// True if mode (k1,k2,k3) survives the 2/3 rule.
bool dealias_keeps(const Grid& g, int k1, int k2, int k3);

/// Componentwise partial derivative along `axis` (0, 1, 2).
SpectralVectorField partial(const SpectralVectorField& F, int axis);
SpectralScalarField partial(const SpectralScalarField& F, int axis);
SpectralVectorField gradient(const SpectralScalarField& F);
SpectralScalarField divergence(const SpectralVectorField& F);
SpectralVectorField laplacian(const SpectralVectorField& F);
/// Inverse Laplacian with the zero mode set to zero (zero-mean convention).
SpectralScalarField inverse_laplacian(const SpectralScalarField& F);

/// max_k |xi . coeff(k)|, the spectral divergence defect.
double max_spectral_divergence(const SpectralVectorField& F);

// ---------------------------------------------------------------------------
// Norms through Parseval
// ---------------------------------------------------------------------------

/// Sum over the full spectrum of w(xi) |coeff|^2, using the half-spectrum
/// multiplicities.
double weighted_spectral_sum(const Grid& g, std::span<const Complex> F,
                             const std::function<double(const Vec3&)>& w);
/// Physical L2 norm  (integral over the box of |f|^2)^(1/2).
double l2_norm(const SpectralVectorField& F);
double l2_norm(const SpectralScalarField& F);
/// Inhomogeneous Sobolev norm with weight (1 + |xi|^2)^s.
double hs_norm(const SpectralVectorField& F, double s);
/// Physical-space L2 norm by Riemann sum.
double l2_norm(const PhysicalVectorField& f);
double max_abs(const PhysicalVectorField& f);

// ---------------------------------------------------------------------------
// Test-field generators
// ---------------------------------------------------------------------------

/// Smooth random field with independent Gaussian coefficients on modes
/// 0 < |k|_inf <= kmax, amplitude decaying like exp(-|k|^2 / kmax^2), made
/// Hermitian and mean-zero. Deterministic in `seed`.
SpectralVectorField random_smooth_field(const Grid& g, std::uint64_t seed, int kmax);
/// Leray-projected version of random_smooth_field.
SpectralVectorField random_solenoidal_field(const Grid& g, std::uint64_t seed, int kmax);
/// Single real plane wave amplitude * cos(xi(k).x) along component `comp`.
SpectralVectorField plane_wave(const Grid& g, std::array<int, 3> k, int comp, double amplitude = 1.0);

}  // namespace mhdlab
