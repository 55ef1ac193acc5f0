#pragma once
// Desk-scale Nash-Moser iteration for
//
//   Y_tt - Delta Y_t - d3^2 Y = f(Y),   Y(0) = Y^(0),  Y_t(0) = Y^(1)
//
// with the quasi-linear nonlinearity of the B = Id Lagrangian system
//
//   A = (Id + grad Y)^{-1},  f = div((A A^t - Id) grad Y_t) - A^t grad p,
//   p = -Lap^{-1} div((A A^t - Id) grad p)
//       + Lap^{-1} div(A div(A (d3Y (x) d3Y - Y_t (x) Y_t))).
//
// Conventions: (grad Y)_{ij} = d_j Y^i, (div Q)_i = sum_j d_j Q_{ij} for a
// matrix field Q, (a (x) b)_{ij} = a_i b_j. The pressure splits as
// p = p1 - p2 with p1 driven by d3Y (x) d3Y and p2 by Y_t (x) Y_t, so that
// f = f0 - f1 + f2 with f1 = A^t grad p1, f2 = A^t grad p2.
//
// All fields live on a periodic grid; products are formed in physical space
// and 2/3-dealiased after every forward transform. The derivative f' applies
// the same discrete operations, so it is the exact derivative of the
// discrete f.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mhdlab/lagrangian_transform.hpp"
#include "mhdlab/spectral_core.hpp"

namespace mhdlab {

// ---------------------------------------------------------------------------
// Space-time fields
// ---------------------------------------------------------------------------

/// Samples of a vector field on a time grid 0 = t_0 < ... < t_M. Y_t and
/// Y_tt are either empty or hold one field per node.
struct SpaceTimeField {
  Grid grid;
  std::vector<double> times;
  std::vector<SpectralVectorField> Y, Y_t, Y_tt;

  static SpaceTimeField zeros(const Grid& g, const std::vector<double>& times, bool with_derivatives);

  [[nodiscard]] std::size_t nodes() const { return times.size(); }
  [[nodiscard]] bool has_dt() const { return !Y_t.empty(); }
  [[nodiscard]] bool has_dtt() const { return !Y_tt.empty(); }

  /// Throws ValidationError on an empty or non-increasing time grid, a grid
  /// mismatch between nodes or derivative arrays of the wrong length.
  void validate() const;

  /// Componentwise algebra over every stored level (Y, Y_t, Y_tt present in
  /// both operands).
  SpaceTimeField& operator+=(const SpaceTimeField& o);
  SpaceTimeField& operator-=(const SpaceTimeField& o);
  SpaceTimeField& operator*=(double a);
  /// Drops Y_t and Y_tt.
  [[nodiscard]] SpaceTimeField values_only() const;
};

SpaceTimeField operator+(SpaceTimeField a, const SpaceTimeField& b);
SpaceTimeField operator-(SpaceTimeField a, const SpaceTimeField& b);

/// t_n = n T / steps.
std::vector<double> uniform_times(double T, int steps);

/// Largest |(Y_{n+1} - Y_{n-1}) / (t_{n+1} - t_{n-1}) - Y_t(t_n)| in L2 over
/// interior nodes, relative to max ||Y_t||. Second order in the time step.
double time_derivative_defect(const SpaceTimeField& F);

/// sum_{|alpha| <= N} ||D^alpha F||_{L2} through Parseval.
double wn2_norm(const SpectralVectorField& F, int N);

/// sup_n (1 + t_n)^k ||F(t_n)||_{W^{N,2}}.
double weighted_sup_norm(const SpaceTimeField& F, double k, int N);
/// (int <t>^{kp} ||F(t)||_{H^N}^p dt)^{1/p}, trapezoid in time,
/// <t> = (1 + t^2)^{1/2}.
double weighted_lp_time_norm(const SpaceTimeField& F, double k, double N, double p);
/// (int ||F(t)||_{L2}^2 dt)^{1/2}.
double spacetime_l2(const SpaceTimeField& F);

// ---------------------------------------------------------------------------
// Smoothing operators
// ---------------------------------------------------------------------------

/// chi: 1 on t <= 1/2, 0 on t >= 1, smooth monotone in between.
double time_cutoff(double tau);
double time_cutoff_d1(double tau);
/// Radial phi-hat: 1 on |xi| <= 1/2, 0 on |xi| >= 1.
double space_cutoff(double rho);

/// chi(t / theta) F. When F carries Y_t it is replaced by the time
/// derivative of the product; Y_tt is dropped.
SpaceTimeField smooth_time(double theta, const SpaceTimeField& F);
/// phi-hat(D / theta') at every node and level.
SpaceTimeField smooth_space(double theta_prime, const SpaceTimeField& F);
SpectralVectorField smooth_space(double theta_prime, const SpectralVectorField& F);

struct SmoothingParams {
  int p = 0;
  double theta = 1.0;        ///< 2^p
  double theta_prime = 1.0;  ///< scale * 2^{eps_bar p}
  double eps_bar = 1.0 / 40.0;

  /// Stage-p parameters. `theta_prime_scale` is the frequency unit of the
  /// spatial cutoff on the torus.
  static SmoothingParams stage(int p, double eps_bar, double theta_prime_scale = 1.0);
  void validate() const;
};

SpaceTimeField smooth(const SmoothingParams& params, const SpaceTimeField& F);

/// Moments of the whole-space kernel phi (the inverse transform of phi-hat)
/// by radial quadrature. Unit mass and a vanishing second moment mean
/// S^(2) reproduces affine and quadratic fields; odd moments vanish by
/// radial symmetry.
struct KernelMoments {
  double zeroth = 0.0;     ///< int phi
  double second = 0.0;     ///< int |y|^2 phi
  double second_abs = 0.0; ///< int |y|^2 |phi|, the scale for `second`
};
KernelMoments s2_kernel_moments();
/// phi(r) for theta' = 1.
double s2_kernel(double r);

struct SmoothingBoundReport {
  std::string family;
  std::vector<double> theta;
  std::vector<double> ratio;  ///< lhs / rhs-norm at each theta
  double fitted_exponent = 0.0;
  double expected_exponent = 0.0;
  double spread = 0.0;        ///< max/min of ratio / theta^expected
  bool pass = false;          ///< |fitted - expected| <= tolerance
};

/// Test fields sit at the borderline decay (spectral power excess 1/2, time
/// decay sigma 1/2) where each bound is sharp; the norms they would make
/// divergent are cut off by the grid and by T.
struct SmoothingSweepSpec {
  std::vector<double> thetas{16.0, 32.0, 64.0};
  double k = 1.5, s = 0.5;
  int N = 2, M = 1;
  double lp = 2.0;        ///< time exponent of the L^p_t families
  double sigma = 0.5;     ///< extra time decay of the L^p_t test fields
  double excess = 0.5;    ///< spectral power above the norm index
  double T = 256.0;
  int steps = 1024;
  double tolerance = 0.2;
};

/// Measures the eight bound families of the smoothing calculus on power-law
/// test fields: S1 growth and tail, S2 growth and tail, and the composite
/// bounds in sup-in-time and L^p-in-time form.
std::vector<SmoothingBoundReport> smoothing_bound_sweep(const SmoothingSweepSpec& spec = {});

// ---------------------------------------------------------------------------
// Nonlinearity
// ---------------------------------------------------------------------------

/// Pointwise 3x3 matrix field in physical space, entry (i, j) at a[i][j].
struct MatrixField {
  Grid grid;
  std::array<std::array<std::vector<double>, 3>, 3> a;
  [[nodiscard]] Mat3 at(std::size_t x) const;
};

struct MatrixAResult {
  MatrixField A;
  double max_grad = 0.0;  ///< max Frobenius norm of grad Y
};

/// A = (Id + grad Y)^{-1}. Throws NumericalAbort naming the grid point when
/// the Frobenius norm of grad Y exceeds 1/2 somewhere.
MatrixAResult matrix_A(const SpectralVectorField& Y);

struct PressureSolveConfig {
  double neumann_tol = 1e-10;   ///< relative to the source norm
  int max_iters = 50;
  double contraction_margin = 0.5;

  void validate() const;
};

struct PressureResult {
  SpectralScalarField p;
  int iterations = 0;
  double residual = 0.0;          ///< ||p - K p - s||_{L2} / ||s||_{L2}
  double contraction_bound = 0.0; ///< max Frobenius norm of A A^t - Id
  double observed_ratio = 0.0;    ///< largest ratio of successive increments
};

/// Solves p = -Lap^{-1} div((A A^t - Id) grad p) + s by Picard iteration.
/// Throws NumericalAbort when the contraction bound is not below
/// cfg.contraction_margin or the tolerance is not met.
PressureResult pressure_fixed_point(const SpectralVectorField& Y, const SpectralVectorField& Y_t,
                                    const PressureSolveConfig& cfg = {});

struct FDecomposition {
  SpectralVectorField f0, f1, f2, f;
  PressureResult p1, p2;
};

/// Nonlinear data at a fixed (Y, Y_t); evaluates f and f'(Y; .).
class Linearization {
 public:
  Linearization(const SpectralVectorField& Y, const SpectralVectorField& Y_t, const PressureSolveConfig& cfg);

  [[nodiscard]] const FDecomposition& value() const { return f_; }
  /// f'(Y; X) with the pressure derivatives solved by the same Picard
  /// scheme.
  [[nodiscard]] SpectralVectorField derivative(const SpectralVectorField& X, const SpectralVectorField& X_t) const;
  /// Largest pressure-derivative residual seen so far.
  [[nodiscard]] double derivative_residual() const { return deriv_residual_; }

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
  FDecomposition f_;
  mutable double deriv_residual_ = 0.0;
};

FDecomposition f_decomposed(const SpectralVectorField& Y, const SpectralVectorField& Y_t,
                            const PressureSolveConfig& cfg = {});
SpectralVectorField f_eval(const SpectralVectorField& Y, const SpectralVectorField& Y_t,
                           const PressureSolveConfig& cfg = {});
SpectralVectorField f_prime_eval(const SpectralVectorField& Y, const SpectralVectorField& Y_t,
                                 const SpectralVectorField& X, const SpectralVectorField& X_t,
                                 const PressureSolveConfig& cfg = {});

struct GradientCheck {
  std::vector<double> h;
  std::vector<double> error;  ///< ||(f(Y + hX) - f(Y)) / h - f'(Y; X)||_{L2}
  double slope = 0.0;         ///< log-log slope over the points above the floor
  double floor = 0.0;         ///< error level attributable to the pressure tolerance
  int points_used = 0;
};

/// Finite-difference check of f' along (X, X_t).
GradientCheck gradient_check(const SpectralVectorField& Y, const SpectralVectorField& Y_t,
                             const SpectralVectorField& X, const SpectralVectorField& X_t,
                             const std::vector<double>& hs, const PressureSolveConfig& cfg = {});

/// Phi(Y) = Y_tt - Delta Y_t - d3^2 Y - f(Y) at every node. Y_tt is taken
/// from storage when present, otherwise by differencing Y_t (second order,
/// one-sided at the ends). With `nonlinear` false, f = 0.
SpaceTimeField phi_eval(const SpaceTimeField& Y, const PressureSolveConfig& cfg = {}, bool nonlinear = true);

// ---------------------------------------------------------------------------
// Linearized solve and iteration
// ---------------------------------------------------------------------------

struct LinearSolveConfig {
  int max_sweeps = 8;         ///< Picard sweeps per step
  double picard_tol = 1e-12;  ///< relative change of the forcing
  int gauss_nodes = 16;       ///< quadrature of the per-mode step weights

  void validate() const;
};

struct LinearSolveResult {
  SpaceTimeField X;          ///< with X_t and X_tt
  double residual = 0.0;     ///< max_n ||L X - g|| / max_n ||g|| with X_tt from the scheme
  double residual_fd = 0.0;  ///< same with X_tt by differencing X_t (second order)
  int max_sweeps_used = 0;
};

/// Solves X_tt - Delta X_t - d3^2 X = f'(base; X) + g, X(0) = X_t(0) = 0 on
/// the uniform time grid of g. The linear symbol is integrated exactly per
/// mode; the forcing is linear in time on each step, and its end value is
/// found by Picard sweeps. `base` must carry Y_t. With `nonlinear` false the
/// f' term is dropped.
LinearSolveResult linearized_solve(const SpaceTimeField& base, const SpaceTimeField& g,
                                   const PressureSolveConfig& pcfg, const LinearSolveConfig& lcfg,
                                   bool nonlinear = true);

struct NashMoserConfig {
  Grid grid = Grid::cube(16, 2 * kPi);
  double T = 4.0;
  int steps = 80;
  double eta = 1e-3;            ///< data size, see default_nm_data
  double eta_threshold = 1e-2;  ///< largest accepted data size
  std::uint64_t seed = 1;
  int kmax = 2;
  int p_max = 4;
  double eps_bar = 1.0 / 40.0;
  double delta = 0.1;
  double epsilon = 0.05;
  int N0 = 20;
  double theta_prime_scale = 8.0;
  double weight_k = 0.5;  ///< k of the reported (1 + t)^k-weighted norms
  int norm_N = 2;         ///< Sobolev index of the reported norms
  bool nonlinear = true;
  PressureSolveConfig pressure;
  LinearSolveConfig linear;

  [[nodiscard]] double gamma() const { return 0.25 - eps_bar; }
  [[nodiscard]] double beta() const { return 0.25 + eps_bar; }
  /// Checks the parameter regime eps_bar <= 1/20, delta + 5 eps_bar <= 1/4,
  /// delta + epsilon + 4 eps_bar <= 1/4, eps_bar N0 >= 1/2 = gamma + beta,
  /// besides grid and step sanity.
  void validate() const;
};

struct InitialPair {
  SpectralVectorField Y0;  ///< Y^(0)
  SpectralVectorField Y1;  ///< Y^(1)
};

/// Data size ||Y0||_{W^{N,1}} + ||Y1||_{W^{N,1}} + ||Y0||_{H^N} + ||Y1||_{H^N}.
double data_size(const InitialPair& d, int N);
/// Random smooth band-limited pair scaled to data_size = cfg.eta.
InitialPair default_nm_data(const NashMoserConfig& cfg);
/// Exact solution of the free equation on the time grid, with Y_t and
/// Y_tt = Delta Y_t + d3^2 Y.
SpaceTimeField free_solution(const InitialPair& d, const std::vector<double>& times);

/// Per-stage diagnostics.
struct IterationState {
  int p = 0;
  double theta = 0.0, theta_prime = 0.0;
  double phi_norm = 0.0;           ///< ||Phi(Y_p)||_{L2_t L2_x}
  double phi_weighted = 0.0;       ///< sup (1+t)^k ||Phi(Y_p)||_{W^{N,2}}
  double g_norm = 0.0;
  double x_norm = 0.0;             ///< ||X_p||_{L2_t L2_x}, zero at the last stage
  double x_weighted = 0.0;         ///< sup (1+t)^k ||X_p||_{W^{N,2}}
  double xt_weighted = 0.0;        ///< sup (1+t)^k ||d_t X_p||_{W^{N,2}}
  double e_norm = 0.0;
  double ledger_residual = 0.0;    ///< ||sum g_j + S_p E_p + S_p Phi(Y_0)|| / ||S_p Phi(Y_0)||
  double solver_residual = 0.0;
  double solver_residual_fd = 0.0;
  double identity_gap = 0.0;       ///< ||(Phi(Y_{p+1}) - Phi(Y_p) - L_p X_p) - e_p|| / ||g_p||
  int picard_sweeps = 0;
};

struct IterationCheckpoint {
  int next_p = 0;
  SpaceTimeField Y;       ///< Y_p with Y_t, Y_tt
  SpaceTimeField phi0, phi_p, E_cur, E_prev, e_prev, g_sum;
  std::vector<IterationState> stages;

  void save(const std::string& path) const;
  static IterationCheckpoint load(const std::string& path);
};

struct IterationResult {
  std::vector<IterationState> stages;
  SpaceTimeField Y;              ///< last iterate
  bool horizon_truncated = true; ///< [0, T] stands in for [0, infinity)
  IterationCheckpoint checkpoint;

  [[nodiscard]] std::string to_csv() const;
};

struct IterationHooks {
  const IterationCheckpoint* resume = nullptr;
  /// When non-empty, a checkpoint is written here after every solved stage
  /// and before a divergence abort. Resuming with a larger p_max continues
  /// the same sequence of stages.
  std::string checkpoint_path;
};

/// Runs stages p = 0..p_max: records Phi(Y_p), builds g_p from the error
/// recursion, and for p < p_max solves X_p = L_p^{-1} g_p and sets
/// Y_{p+1} = Y_p + X_p, e_p = Phi(Y_{p+1}) - Phi(Y_p) - g_p. Throws
/// NumericalAbort when ||Phi(Y_p)|| grows two stages in a row.
IterationResult iterate(const InitialPair& data, const NashMoserConfig& cfg, const IterationHooks& hooks = {});

}  // namespace mhdlab
