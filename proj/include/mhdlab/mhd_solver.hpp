#pragma once
// Pseudo-spectral integration of the viscous, non-resistive MHD system in
// perturbation form around (b, u) = (e3, 0):
//
//   dh/dt = -u.grad h + h.grad u + d3 u
//   du/dt = P[-u.grad u + h.grad h + d3 h] + Delta u
//
// with h = b - e3. Nonlinear terms are evaluated in divergence form,
// div(h (x) h - u (x) u) and div(u (x) h - h (x) u), which needs six inverse
// and nine forward transforms per evaluation. Time stepping is the Lawson
// (integrating-factor) RK4 scheme with the exact viscous factor.

#include <cstdint>
#include <string>
#include <vector>

#include "mhdlab/linear_propagator.hpp"
#include "mhdlab/spectral_core.hpp"

namespace mhdlab {

struct MHDState {
  SpectralVectorField u;  ///< velocity
  SpectralVectorField h;  ///< b - e3
  double t = 0.0;

  static MHDState zeros(const Grid& g);
};

struct SolverConfig {
  double dt = 0.05;
  double T = 20.0;
  Grid grid = Grid::cube(32, 8 * kPi);
  int diagnostics_stride = 10;
  bool viscous = true;
  bool nonlinear = true;
  /// Largest accepted ||u0||_{H^2} + ||h0||_{H^2} before run() warns.
  double smallness_threshold = 0.05;
  /// Per-step relative energy growth that counts as instability.
  double energy_growth_tol = 1e-6;
  /// Bound on dt * (max|xi3| + (|u|_inf + |h|_inf) max|xi|) over kept modes.
  /// The RK4 stability interval on the imaginary axis is 2 sqrt 2.
  double cfl_limit = 2.5;

  void validate() const;
};

struct RhsResult {
  SpectralVectorField du;
  SpectralVectorField dh;
  double sup_u = 0.0;  ///< grid max of |u|
  double sup_h = 0.0;  ///< grid max of |h|
};

/// Full right-hand side. With `include_viscous` false the Delta u term is
/// omitted (the part treated explicitly by the stepper). Throws
/// NumericalAbort when a physical value or product is not finite.
RhsResult rhs_eval(const MHDState& s, bool nonlinear = true, bool include_viscous = true);

/// Linearized right-hand side (d3 h + Delta u, d3 u).
RhsResult linear_rhs(const MHDState& s);

/// u . grad u computed in advective form from physical derivatives, then
/// Leray-projected and dealiased. Independent of the divergence-form path.
SpectralVectorField advective_nonlinearity(const SpectralVectorField& u);

/// Largest |xi| and |xi3| over dealiased modes.
struct ModeBounds {
  double xi_max = 0.0;
  double xi3_max = 0.0;
};
ModeBounds mode_bounds(const Grid& g);

/// Stability quantity dt * (max|xi3| + (sup_u + sup_h) max|xi|).
double cfl_number(const Grid& g, double dt, double sup_u, double sup_h);

/// One Lawson RK4 step. Re-projects and dealiases the result. Throws
/// NumericalAbort on non-finite data, on a CFL violation and when the energy
/// grows by more than cfg.energy_growth_tol relative to its start value.
MHDState step(const MHDState& s, double dt, const SolverConfig& cfg);

/// Divergence defect of a spectral field in physical units:
/// max_k |xi . F(k)| / (n1 n2 n3).
double divergence_defect(const SpectralVectorField& F);

/// E = (||u||^2 + ||h||^2) / 2 over the box.
double perturbation_energy(const MHDState& s);
/// ||grad u||^2 over the box.
double dissipation_rate(const SpectralVectorField& u);

struct DiagnosticsSeries {
  std::vector<double> t;
  std::vector<double> u_h2, h_h2, grad_u_l2, u_w2inf, h_w2inf, energy, dissipation;
  std::vector<double> l2_sum;  ///< ||u|| + ||h||
  double max_divergence = 0.0;  ///< largest per-step defect of u and h
  double ledger_residual = 0.0; ///< max over samples |E(t) - E(0) + int_0^t ||grad u||^2|
  int steps = 0;
  std::vector<std::string> warnings;
  MHDState final_state;

  /// Comma-separated table with header, 17 significant digits.
  [[nodiscard]] std::string to_csv() const;
};

struct RunOptions {
  /// Evaluate the two W^{2,inf} norms at the samples (30 inverse transforms
  /// per field).
  bool w2inf = true;
};

/// Integrates from (u0, h0) to cfg.T in steps of cfg.dt, sampling every
/// diagnostics_stride steps and at the end. The dissipation integral uses the
/// endpoint-corrected trapezoid rule, exact for cubics.
DiagnosticsSeries run(const SolverConfig& cfg, const MHDState& initial, const RunOptions& opt = {});

/// Exact solution of the linearized system dh/dt = d3 u, du/dt = Delta u + d3 h
/// at time t via the Gamma family.
MHDState linear_reference(const MHDState& initial, double t);

/// Default data: u0 a band-limited random solenoidal field scaled to
/// ||u0||_{H^2} = u_amplitude, h0 = eps * phi with phi = d3 curl(Psi c), Psi a
/// compact bump, scaled to ||phi||_{H^2} = 1. phi has zero mean along every
/// vertical line.
struct InitialDataSpec {
  double u_amplitude = 0.02;
  double epsilon = 0.02;
  std::uint64_t seed = 1;
  int kmax = 4;
  double bump_radius_fraction = 0.2;  ///< support radius over min l_i
};
MHDState default_initial_data(const Grid& g, const InitialDataSpec& spec);
SpectralVectorField magnetic_profile(const Grid& g, double radius);

struct DecayReportEntry {
  std::string quantity;
  DecayFit fit;
  double reference_exponent = 0.0;
  std::string reference_note;
};

struct DecayReport {
  double t_lo = 0.0, t_hi = 0.0;
  bool torus_caveat = true;
  std::vector<DecayReportEntry> entries;
};

/// Torus-valid window [1, (min l_i / 2 pi)^2].
std::pair<double, double> torus_window(const Grid& g);

/// Log-log slopes of each diagnostic over [t_lo, t_hi] with the whole-space
/// reference exponents. Throws ValidationError when the window leaves the
/// torus-valid range or holds fewer than two samples.
DecayReport decay_report(const DiagnosticsSeries& s, const Grid& g, double t_lo, double t_hi);

}  // namespace mhdlab
