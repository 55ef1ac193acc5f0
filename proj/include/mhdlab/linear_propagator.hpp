#pragma once
// Exact symbol-level solution of Y_tt - Delta Y_t - d3^2 Y = 0, its Duhamel
// extension, whole-space quadrature of decay norms and the associated checks.

#include <string>
#include <vector>

#include "mhdlab/spectral_core.hpp"

namespace mhdlab {

/// Roots of lambda^2 + |xi|^2 lambda + xi3^2 = 0. lambda1 is the root of
/// smaller modulus on the real branch (|xi|^4/4 >= xi3^2); on the complex
/// branch lambda1 carries the positive imaginary part.
struct EigenPair {
  Complex lambda1;
  Complex lambda2;
  bool real_branch = true;
};

EigenPair eigenvalues(const Vec3& xi);

/// Gamma and its time derivative evaluated together. Inputs are t >= 0,
/// q = |xi|^2 and s3 = xi3^2.
struct SymbolValues {
  double gamma = 0.0;
  double dt_gamma = 1.0;
};

/// Switch point of the series forms near the branch surface.
inline constexpr double kBranchSeriesThreshold = 1e-4;

SymbolValues propagator_symbols(double t, double q, double s3);
double gamma_symbol(double t, const Vec3& xi);
double dt_gamma_symbol(double t, const Vec3& xi);

struct HomogeneousSolution {
  SpectralVectorField Y;
  SpectralVectorField Y_t;
};

/// Modewise Y(t) = dtGamma Y0 + Gamma (Y1 + |xi|^2 Y0) and its time derivative
/// Y_t(t) = -xi3^2 Gamma Y0 + dtGamma Y1.
HomogeneousSolution solve_homogeneous(const SpectralVectorField& Y0, const SpectralVectorField& Y1,
                                      double t);

/// Source g(s) sampled at increasing times starting at 0, interpolated
/// linearly in between. When `zero_beyond` is set the source vanishes after
/// the last sample; otherwise asking for t past the last sample is an error.
struct TimeSampledSource {
  std::vector<double> times;
  std::vector<SpectralVectorField> samples;
  bool zero_beyond = false;
};

struct TimeQuadratureRule {
  int gauss_nodes_per_interval = 8;
};

/// Y(t) = int_0^t Gamma(t - s) g(s) ds by composite Gauss-Legendre quadrature
/// over the sample intervals.
SpectralVectorField solve_duhamel(const TimeSampledSource& g, double t,
                                  const TimeQuadratureRule& rule = {});

// ---------------------------------------------------------------------------
// Whole-space quadrature
// ---------------------------------------------------------------------------

/// Radial band-limited data: a C-infinity bump on an annulus or a smooth
/// cutoff on a ball, times |xi|^low_power.
struct RadialData {
  enum class Shape { Annulus, Ball };
  Shape shape = Shape::Annulus;
  double r_inner = 1.0;  ///< ignored for Ball
  double r_outer = 2.0;
  double low_power = 0.0;

  [[nodiscard]] double value(double r) const;
  [[nodiscard]] double support_radius() const { return r_outer; }
  void validate() const;
};

/// Gauss-Legendre orders per panel; panels are graded toward the parabolic
/// layers at tau = xi3/|xi| ~ t^{-1/2} and r ~ t^{-1/2}, and the oscillatory
/// part of the complex branch is split so each panel spans a bounded phase.
struct QuadratureSpec {
  int radial_nodes = 24;
  int angular_nodes = 24;
  double r_max = 4.0;
  double layer_scale = 1.0;

  void validate(const RadialData& data) const;
  [[nodiscard]] QuadratureSpec refined() const;
};

enum class NormKind { LinfBound, L2 };

using SymbolWeight = std::function<double(double t, const Vec3& xi)>;

/// (2 pi)^-3 int |w g| dxi for LinfBound, (2 pi)^-3/2 (int |w g|^2 dxi)^1/2
/// for L2, exploiting axial symmetry in xi.
double whole_space_norm(const SymbolWeight& weight, const RadialData& data, double t,
                        const QuadratureSpec& q, NormKind kind);

/// Named weights: "y" Gamma, "dz" xi3 Gamma, "dzz" xi3^2 Gamma, "dt" dtGamma.
SymbolWeight standard_weight(const std::string& name);

/// Weight of the Duhamel integral with source a(s) g(xi), a a smooth bump
/// supported in [0, theta].
SymbolWeight duhamel_weight(double theta, int gauss_nodes = 32);
/// The bump a(s) used by duhamel_weight.
double duhamel_time_profile(double s, double theta);

// ---------------------------------------------------------------------------
// Decay fits and symbol checks
// ---------------------------------------------------------------------------

struct DecaySeries {
  std::string name;
  std::vector<double> t;
  std::vector<double> value;
};

struct DecayFit {
  double exponent = 0.0;
  double prefactor = 0.0;
  double residual = 0.0;  ///< RMS of the log-residuals
  double t_lo = 0.0, t_hi = 0.0;
  int samples = 0;
};

DecayFit decay_fit(const DecaySeries& series, double t_lo, double t_hi);

/// Log-spaced times, with `per_decade` samples per decade.
std::vector<double> log_times(double t_lo, double t_hi, int per_decade);

struct SymbolSampleGrid {
  double t_min = 0.01, t_max = 1e3;
  double r_min = 0.01, r_max = 1e2;
  double tau_min = 1e-4;
  int n_t = 48, n_r = 48, n_angle = 48;
  int refinement = 2;
};

struct SymbolBoundReport {
  double sup_dt_gamma = 0;        ///< sup t |xi|^2 |dtGamma|
  double sup_gamma = 0;           ///< sup t|xi|/(1+|xi|) xi3^2 |Gamma|
  double sup_dt_gamma_refined = 0;
  double sup_gamma_refined = 0;
  double change_dt_gamma = 0;     ///< relative change under refinement
  double change_gamma = 0;
  bool pass = false;
};

SymbolBoundReport symbol_bound_check(const SymbolSampleGrid& grid);

struct EnergyIdentityReport {
  std::vector<double> t;
  std::vector<double> energy;       ///< ||Y_t||^2 + ||d3 Y||^2
  std::vector<double> dissipation;  ///< ||grad Y_t||^2
  double max_residual = 0;          ///< max |E(t) - E(0) + 2 int D|
};

EnergyIdentityReport linear_energy_identity_check(const SpectralVectorField& Y0,
                                                  const SpectralVectorField& Y1, double T, double dt);

/// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

}  // namespace mhdlab
