#include "mhdlab/mhd_solver.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "mhdlab/norms.hpp"
#include "mhdlab/smooth_profiles.hpp"

namespace mhdlab {

MHDState MHDState::zeros(const Grid& g) {
  return MHDState{SpectralVectorField::zeros(g), SpectralVectorField::zeros(g), 0.0};
}

void SolverConfig::validate() const {
  grid.validate();
  if (!(dt > 0) || !std::isfinite(dt)) throw ValidationError("mhd: dt must be positive and finite");
  if (!(T >= 0) || !std::isfinite(T)) throw ValidationError("mhd: T must be >= 0 and finite");
  if (diagnostics_stride < 1) throw ValidationError("mhd: diagnostics_stride must be >= 1");
  if (!(smallness_threshold > 0)) throw ValidationError("mhd: smallness_threshold must be positive");
  if (!(energy_growth_tol > 0)) throw ValidationError("mhd: energy_growth_tol must be positive");
  if (!(cfl_limit > 0) || cfl_limit > 2 * std::sqrt(2.0)) {
    throw ValidationError("mhd: cfl_limit must lie in (0, 2 sqrt 2]");
  }
  const ModeBounds mb = mode_bounds(grid);
  if (dt * mb.xi3_max > cfl_limit) {
    std::ostringstream os;
    os << "mhd: dt = " << dt << " violates the linear bound dt * max|xi3| = " << dt * mb.xi3_max
       << " > " << cfl_limit;
    throw ValidationError(os.str());
  }
}

ModeBounds mode_bounds(const Grid& g) {
  ModeBounds mb;
  WavenumberTable wt(g);
  wt.for_each_k([&](std::size_t, const Vec3& xi, const std::array<int, 3>& k) {
    if (!dealias_keeps(g, k[0], k[1], k[2])) return;
    mb.xi_max = std::max(mb.xi_max, std::sqrt(xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]));
    mb.xi3_max = std::max(mb.xi3_max, std::abs(xi[2]));
  });
  return mb;
}

double cfl_number(const Grid& g, double dt, double sup_u, double sup_h) {
  const ModeBounds mb = mode_bounds(g);
  return dt * (mb.xi3_max + (sup_u + sup_h) * mb.xi_max);
}

namespace {

void require_compatible(const MHDState& s) {
  if (!(s.u.grid == s.h.grid)) throw ValidationError("mhd: u and h live on different grids");
}

struct Physical {
  std::array<std::vector<double>, 3> u, h;
};

Physical to_physical(const MHDState& s) {
  Physical p;
  for (int c = 0; c < 3; ++c) {
    p.u[c] = inverse_raw(s.u.grid, s.u.coeffs[c]);
    p.h[c] = inverse_raw(s.h.grid, s.h.coeffs[c]);
  }
  return p;
}

double sup_magnitude(const std::array<std::vector<double>, 3>& f, const char* name) {
  double m = 0;
  for (std::size_t i = 0; i < f[0].size(); ++i) {
    const double v = f[0][i] * f[0][i] + f[1][i] * f[1][i] + f[2][i] * f[2][i];
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "mhd: non-finite " << name << " at physical index " << i;
      throw NumericalAbort(os.str());
    }
    m = std::max(m, v);
  }
  return std::sqrt(m);
}

std::vector<Complex> forward_checked(const Grid& g, const std::vector<double>& f, const char* what) {
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!std::isfinite(f[i])) {
      std::ostringstream os;
      os << "mhd: non-finite product " << what << " at physical index " << i;
      throw NumericalAbort(os.str());
    }
  }
  auto F = forward_raw(g, f);
  dealias_inplace(g, F);
  return F;
}

void project_inplace(const WavenumberTable& wt, SpectralVectorField& F) {
  wt.for_each([&](std::size_t i, const Vec3& xi) {
    const double q = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
    if (q == 0) return;
    const Complex d = (xi[0] * F.coeffs[0][i] + xi[1] * F.coeffs[1][i] + xi[2] * F.coeffs[2][i]) / q;
    for (int c = 0; c < 3; ++c) F.coeffs[c][i] -= xi[c] * d;
  });
}

const Complex kI{0.0, 1.0};

}  // namespace

RhsResult rhs_eval(const MHDState& s, bool nonlinear, bool include_viscous) {
  require_compatible(s);
  const Grid& g = s.u.grid;
  WavenumberTable wt(g);
  RhsResult r{SpectralVectorField::zeros(g), SpectralVectorField::zeros(g), 0.0, 0.0};

  if (nonlinear) {
    const Physical p = to_physical(s);
    r.sup_u = sup_magnitude(p.u, "velocity");
    r.sup_h = sup_magnitude(p.h, "magnetic perturbation");
    const std::size_t n = g.physical_size();
    // Symmetric stress h_i h_j - u_i u_j and antisymmetric induction flux
    // u_i h_j - h_i u_j.
    std::array<std::array<std::vector<Complex>, 3>, 3> S;
    std::array<std::array<std::vector<Complex>, 3>, 3> A;
    std::vector<double> work(n);
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) {
        for (std::size_t x = 0; x < n; ++x) work[x] = p.h[i][x] * p.h[j][x] - p.u[i][x] * p.u[j][x];
        S[i][j] = forward_checked(g, work, "h h - u u");
        if (j > i) S[j][i] = S[i][j];
      }
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j) {
        for (std::size_t x = 0; x < n; ++x) work[x] = p.u[i][x] * p.h[j][x] - p.h[i][x] * p.u[j][x];
        A[i][j] = forward_checked(g, work, "u h - h u");
      }
    wt.for_each([&](std::size_t k, const Vec3& xi) {
      for (int i = 0; i < 3; ++i) {
        Complex su = 0, sh = 0;
        for (int j = 0; j < 3; ++j) {
          su += xi[j] * S[i][j][k];
          if (j > i) sh += xi[j] * A[i][j][k];
          if (j < i) sh -= xi[j] * A[j][i][k];
        }
        r.du.coeffs[i][k] = kI * su;
        r.dh.coeffs[i][k] = kI * sh;
      }
    });
  } else {
    for (int c = 0; c < 3; ++c) {
      for (const auto* F : {&s.u.coeffs[c], &s.h.coeffs[c]}) {
        for (const Complex& z : *F) {
          if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
            throw NumericalAbort("mhd: non-finite spectral coefficient in the state");
          }
        }
      }
    }
  }

  wt.for_each_k([&](std::size_t k, const Vec3& xi, const std::array<int, 3>& kk) {
    // Odd symbols annihilate Nyquist modes; d3 of a Nyquist plane in k3 is
    // dropped to keep the fields real.
    const bool nyq3 = (g.n3 % 2 == 0) && kk[2] == g.n3 / 2;
    const Complex d3 = nyq3 ? Complex{0, 0} : kI * xi[2];
    for (int c = 0; c < 3; ++c) {
      r.du.coeffs[c][k] += d3 * s.h.coeffs[c][k];
      r.dh.coeffs[c][k] += d3 * s.u.coeffs[c][k];
    }
  });
  project_inplace(wt, r.du);
  if (include_viscous) {
    wt.for_each([&](std::size_t k, const Vec3& xi) {
      const double q = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
      for (int c = 0; c < 3; ++c) r.du.coeffs[c][k] -= q * s.u.coeffs[c][k];
    });
  }
  return r;
}

RhsResult linear_rhs(const MHDState& s) { return rhs_eval(s, false, true); }

SpectralVectorField advective_nonlinearity(const SpectralVectorField& u) {
  const Grid& g = u.grid;
  const std::size_t n = g.physical_size();
  std::array<std::vector<double>, 3> up;
  for (int c = 0; c < 3; ++c) up[c] = inverse_raw(g, u.coeffs[c]);
  std::array<std::vector<double>, 3> adv;
  for (int c = 0; c < 3; ++c) adv[c].assign(n, 0.0);
  for (int j = 0; j < 3; ++j) {
    const SpectralVectorField dj = partial(u, j);
    for (int i = 0; i < 3; ++i) {
      const std::vector<double> d = inverse_raw(g, dj.coeffs[i]);
      for (std::size_t x = 0; x < n; ++x) adv[i][x] += up[j][x] * d[x];
    }
  }
  SpectralVectorField out = SpectralVectorField::zeros(g);
  for (int c = 0; c < 3; ++c) out.coeffs[c] = forward_checked(g, adv[c], "u . grad u");
  WavenumberTable wt(g);
  project_inplace(wt, out);
  return out;
}

double divergence_defect(const SpectralVectorField& F) {
  return max_spectral_divergence(F) / static_cast<double>(F.grid.physical_size());
}

double perturbation_energy(const MHDState& s) {
  const double a = l2_norm(s.u), b = l2_norm(s.h);
  return 0.5 * (a * a + b * b);
}

double dissipation_rate(const SpectralVectorField& u) {
  double total = 0;
  for (int c = 0; c < 3; ++c) {
    total += weighted_spectral_sum(u.grid, u.coeffs[c],
                                   [](const Vec3& xi) { return xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]; });
  }
  const double n = static_cast<double>(u.grid.physical_size());
  return total * u.grid.volume() / (n * n);
}

namespace {

// Scales u by exp(-|xi|^2 tau); h is untouched.
void viscous_factor(const WavenumberTable& wt, SpectralVectorField& u, double tau) {
  if (tau == 0) return;
  wt.for_each([&](std::size_t k, const Vec3& xi) {
    const double e = std::exp(-(xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]) * tau);
    for (int c = 0; c < 3; ++c) u.coeffs[c][k] *= e;
  });
}

MHDState combine(const MHDState& base, double a, const RhsResult& k) {
  MHDState out = base;
  out.u.axpy(a, k.du);
  out.h.axpy(a, k.dh);
  return out;
}

void factor_state(const WavenumberTable& wt, MHDState& s, double tau, bool viscous) {
  if (viscous) viscous_factor(wt, s.u, tau);
}

void factor_rhs(const WavenumberTable& wt, RhsResult& r, double tau, bool viscous) {
  if (viscous) viscous_factor(wt, r.du, tau);
}

// Lawson RK4 with the explicit part k1 evaluated at s already.
MHDState step_with(const MHDState& s, double dt, const SolverConfig& cfg, RhsResult k1) {
  const Grid& g = s.u.grid;
  WavenumberTable wt(g);
  const bool v = cfg.viscous;

  const ModeBounds mb = mode_bounds(g);
  const double cfl = dt * (mb.xi3_max + (cfg.nonlinear ? (k1.sup_u + k1.sup_h) * mb.xi_max : 0.0));
  if (cfl > cfg.cfl_limit) {
    std::ostringstream os;
    os << "mhd: CFL number " << cfl << " exceeds " << cfg.cfl_limit << " at t = " << s.t;
    throw NumericalAbort(os.str());
  }

  MHDState e_half = s;
  factor_state(wt, e_half, 0.5 * dt, v);
  MHDState e_full = s;
  factor_state(wt, e_full, dt, v);

  MHDState a = combine(s, 0.5 * dt, k1);
  factor_state(wt, a, 0.5 * dt, v);
  RhsResult k2 = rhs_eval(a, cfg.nonlinear, false);

  MHDState b = combine(e_half, 0.5 * dt, k2);
  RhsResult k3 = rhs_eval(b, cfg.nonlinear, false);

  RhsResult k3f = k3;
  factor_rhs(wt, k3f, 0.5 * dt, v);
  MHDState c = combine(e_full, dt, k3f);
  RhsResult k4 = rhs_eval(c, cfg.nonlinear, false);

  RhsResult k1f = k1;
  factor_rhs(wt, k1f, dt, v);
  RhsResult k23 = k2;
  k23.du += k3.du;
  k23.dh += k3.dh;
  factor_rhs(wt, k23, 0.5 * dt, v);

  MHDState out = e_full;
  out.u.axpy(dt / 6, k1f.du).axpy(dt / 3, k23.du).axpy(dt / 6, k4.du);
  out.h.axpy(dt / 6, k1f.dh).axpy(dt / 3, k23.dh).axpy(dt / 6, k4.dh);
  project_inplace(wt, out.u);
  project_inplace(wt, out.h);
  dealias_inplace(g, out.u.coeffs[0]);
  dealias_inplace(g, out.u.coeffs[1]);
  dealias_inplace(g, out.u.coeffs[2]);
  dealias_inplace(g, out.h.coeffs[0]);
  dealias_inplace(g, out.h.coeffs[1]);
  dealias_inplace(g, out.h.coeffs[2]);
  out.t = s.t + dt;

  const double e0 = perturbation_energy(s), e1 = perturbation_energy(out);
  if (!std::isfinite(e1)) throw NumericalAbort("mhd: energy became non-finite at t = " + std::to_string(out.t));
  if (e1 > e0 * (1 + cfg.energy_growth_tol) + 1e-300) {
    std::ostringstream os;
    os << std::setprecision(17) << "mhd: energy grew from " << e0 << " to " << e1 << " at t = " << out.t
       << " (instability)";
    throw NumericalAbort(os.str());
  }
  return out;
}

// dD/dt = 2 sum |xi|^2 Re(conj(u) u_t) with u_t the full velocity tendency.
double dissipation_derivative(const MHDState& s, const RhsResult& k_explicit, bool viscous) {
  const Grid& g = s.u.grid;
  WavenumberTable wt(g);
  const int nh = g.nh3();
  const double pf = g.volume() / (static_cast<double>(g.physical_size()) * static_cast<double>(g.physical_size()));
  double total = 0;
  wt.for_each_k([&](std::size_t k, const Vec3& xi, const std::array<int, 3>& kk) {
    const double q = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
    const double mult = (kk[2] == 0 || (g.n3 % 2 == 0 && kk[2] == nh - 1)) ? 1.0 : 2.0;
    for (int c = 0; c < 3; ++c) {
      Complex ut = k_explicit.du.coeffs[c][k];
      if (viscous) ut -= q * s.u.coeffs[c][k];
      total += mult * q * (std::conj(s.u.coeffs[c][k]) * ut).real();
    }
  });
  return 2 * pf * total;
}

}  // namespace

MHDState step(const MHDState& s, double dt, const SolverConfig& cfg) {
  require_compatible(s);
  if (!(dt > 0)) throw ValidationError("mhd step: dt must be positive");
  return step_with(s, dt, cfg, rhs_eval(s, cfg.nonlinear, false));
}

namespace {

void sample(DiagnosticsSeries& d, const MHDState& s, double cumulative, double e0, const RunOptions& opt) {
  d.t.push_back(s.t);
  d.u_h2.push_back(hs_norm(s.u, 2));
  d.h_h2.push_back(hs_norm(s.h, 2));
  d.grad_u_l2.push_back(std::sqrt(dissipation_rate(s.u)));
  d.u_w2inf.push_back(opt.w2inf ? wnp_norm(s.u, 2, kInf) : 0.0);
  d.h_w2inf.push_back(opt.w2inf ? wnp_norm(s.h, 2, kInf) : 0.0);
  const double e = perturbation_energy(s);
  d.energy.push_back(e);
  d.dissipation.push_back(cumulative);
  d.l2_sum.push_back(l2_norm(s.u) + l2_norm(s.h));
  d.ledger_residual = std::max(d.ledger_residual, std::abs(e - e0 + cumulative));
}

}  // namespace

DiagnosticsSeries run(const SolverConfig& cfg, const MHDState& initial, const RunOptions& opt) {
  cfg.validate();
  require_compatible(initial);
  if (!(initial.u.grid == cfg.grid)) throw ValidationError("mhd run: initial data grid differs from config grid");
  const double div_tol = 1e-11;
  const double d0 = std::max(divergence_defect(initial.u), divergence_defect(initial.h));
  if (d0 > div_tol) {
    std::ostringstream os;
    os << "mhd run: initial data not divergence-free (defect " << d0 << ")";
    throw ValidationError(os.str());
  }

  DiagnosticsSeries d;
  const double size0 = hs_norm(initial.u, 2) + hs_norm(initial.h, 2);
  if (size0 > cfg.smallness_threshold) {
    std::ostringstream os;
    os << "initial data size ||u0||_H2 + ||h0||_H2 = " << size0 << " exceeds the smallness threshold "
       << cfg.smallness_threshold;
    d.warnings.push_back(os.str());
  }

  const int steps = static_cast<int>(std::llround(cfg.T / cfg.dt));
  if (std::abs(steps * cfg.dt - cfg.T) > 1e-9 * std::max(1.0, cfg.T)) {
    throw ValidationError("mhd run: T must be an integer multiple of dt");
  }

  MHDState s = initial;
  s.t = 0.0;
  const double e0 = perturbation_energy(s);
  double cumulative = 0.0;
  RhsResult k = rhs_eval(s, cfg.nonlinear, false);
  double D = dissipation_rate(s.u);
  double dD = dissipation_derivative(s, k, cfg.viscous);
  const bool count_dissipation = cfg.viscous;
  sample(d, s, cumulative, e0, opt);
  for (int n = 1; n <= steps; ++n) {
    MHDState next = step_with(s, cfg.dt, cfg, std::move(k));
    next.t = n * cfg.dt;
    d.max_divergence = std::max({d.max_divergence, divergence_defect(next.u), divergence_defect(next.h)});
    k = rhs_eval(next, cfg.nonlinear, false);
    const double D1 = dissipation_rate(next.u);
    const double dD1 = dissipation_derivative(next, k, cfg.viscous);
    if (count_dissipation) {
      cumulative += 0.5 * cfg.dt * (D + D1) + cfg.dt * cfg.dt / 12.0 * (dD - dD1);
    }
    D = D1;
    dD = dD1;
    s = std::move(next);
    if (n % cfg.diagnostics_stride == 0 || n == steps) sample(d, s, cumulative, e0, opt);
  }
  d.steps = steps;
  d.final_state = s;
  return d;
}

std::string DiagnosticsSeries::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "t,u_h2,h_h2,grad_u_l2,u_w2inf,h_w2inf,energy,dissipation_integral,l2_sum\n";
  for (std::size_t i = 0; i < t.size(); ++i) {
    os << t[i] << ',' << u_h2[i] << ',' << h_h2[i] << ',' << grad_u_l2[i] << ',' << u_w2inf[i] << ','
       << h_w2inf[i] << ',' << energy[i] << ',' << dissipation[i] << ',' << l2_sum[i] << '\n';
  }
  return os.str();
}

MHDState linear_reference(const MHDState& initial, double t) {
  require_compatible(initial);
  // Both u and h solve Y_tt - Delta Y_t - d3^2 Y = 0 with
  // u_t(0) = Delta u0 + d3 h0 and h_t(0) = d3 u0.
  const SpectralVectorField d3u = partial(initial.u, 2);
  const SpectralVectorField d3h = partial(initial.h, 2);
  const SpectralVectorField u1 = laplacian(initial.u) + d3h;
  const HomogeneousSolution su = solve_homogeneous(initial.u, u1, t);
  const HomogeneousSolution sh = solve_homogeneous(initial.h, d3u, t);
  return MHDState{su.Y, sh.Y, initial.t + t};
}

SpectralVectorField magnetic_profile(const Grid& g, double radius) {
  g.validate();
  if (!(radius > 0)) throw ValidationError("magnetic_profile: radius must be positive");
  PhysicalScalarField psi = PhysicalScalarField::zeros(g);
  const Vec3 center{g.l1 / 2, g.l2 / 2, g.l3 / 2};
  std::size_t idx = 0;
  for (int a = 0; a < g.n1; ++a)
    for (int b = 0; b < g.n2; ++b)
      for (int c = 0; c < g.n3; ++c, ++idx) {
        const double dx = g.x(0, a) - center[0], dy = g.x(1, b) - center[1], dz = g.x(2, c) - center[2];
        psi.values[idx] = profiles::bump(std::sqrt(dx * dx + dy * dy + dz * dz) / radius);
      }
  const SpectralScalarField P = forward_transform(psi);
  const SpectralVectorField grad = gradient(P);
  const Vec3 cvec{1.0, 0.5, 0.0};
  SpectralVectorField curl = SpectralVectorField::zeros(g);
  for (std::size_t k = 0; k < g.spectral_size(); ++k) {
    const Complex g1 = grad.coeffs[0][k], g2 = grad.coeffs[1][k], g3 = grad.coeffs[2][k];
    curl.coeffs[0][k] = g2 * cvec[2] - g3 * cvec[1];
    curl.coeffs[1][k] = g3 * cvec[0] - g1 * cvec[2];
    curl.coeffs[2][k] = g1 * cvec[1] - g2 * cvec[0];
  }
  SpectralVectorField phi = dealias(partial(curl, 2));
  phi = leray_project(phi);
  const double n = hs_norm(phi, 2);
  if (!(n > 0)) throw ValidationError("magnetic_profile: profile vanishes on this grid");
  phi *= 1.0 / n;
  return phi;
}

MHDState default_initial_data(const Grid& g, const InitialDataSpec& spec) {
  g.validate();
  if (!(spec.u_amplitude >= 0) || !(spec.epsilon >= 0)) {
    throw ValidationError("initial data: amplitudes must be >= 0");
  }
  if (spec.kmax < 1) throw ValidationError("initial data: kmax must be >= 1");
  if (!(spec.bump_radius_fraction > 0 && spec.bump_radius_fraction <= 0.5)) {
    throw ValidationError("initial data: bump_radius_fraction must lie in (0, 1/2]");
  }
  MHDState s = MHDState::zeros(g);
  if (spec.u_amplitude > 0) {
    SpectralVectorField u = dealias(random_solenoidal_field(g, spec.seed, spec.kmax));
    u = leray_project(u);
    const double n = hs_norm(u, 2);
    if (n > 0) u *= spec.u_amplitude / n;
    s.u = u;
  }
  if (spec.epsilon > 0) {
    const double lmin = std::min({g.l1, g.l2, g.l3});
    s.h = magnetic_profile(g, spec.bump_radius_fraction * lmin);
    s.h *= spec.epsilon;
  }
  return s;
}

std::pair<double, double> torus_window(const Grid& g) {
  const double lmin = std::min({g.l1, g.l2, g.l3});
  const double r = lmin / (2 * kPi);
  return {1.0, r * r};
}

DecayReport decay_report(const DiagnosticsSeries& s, const Grid& g, double t_lo, double t_hi) {
  const auto [w_lo, w_hi] = torus_window(g);
  if (!(t_lo < t_hi)) throw ValidationError("decay_report: need t_lo < t_hi");
  if (t_lo < w_lo - 1e-12 || t_hi > w_hi + 1e-12) {
    std::ostringstream os;
    os << "decay_report: window [" << t_lo << ", " << t_hi << "] leaves the torus-valid range [" << w_lo << ", "
       << w_hi << "]";
    throw ValidationError(os.str());
  }
  DecayReport r;
  r.t_lo = t_lo;
  r.t_hi = t_hi;
  r.torus_caveat = true;
  std::vector<double> h2_sum(s.t.size());
  for (std::size_t i = 0; i < s.t.size(); ++i) h2_sum[i] = s.u_h2[i] + s.h_h2[i];
  struct Item {
    const char* name;
    const std::vector<double>* v;
    double ref;
    const char* note;
  };
  const std::vector<Item> items = {
      {"u_h2+h_h2", &h2_sum, -0.5, "whole-space rate"},
      {"grad_u_l2", &s.grad_u_l2, -1.0, "whole-space rate"},
      {"u_w2inf", &s.u_w2inf, -1.25, "whole-space rate -5/4 + kappa, kappa > 0 unspecified"},
      {"h_w2inf", &s.h_w2inf, -0.75, "whole-space rate -3/4 + kappa, kappa > 0 unspecified"},
      {"u_h2", &s.u_h2, -0.5, "whole-space rate (shared bound)"},
      {"h_h2", &s.h_h2, -0.5, "whole-space rate (shared bound)"},
  };
  for (const Item& it : items) {
    DecaySeries ds{it.name, {}, {}};
    // Time zero cannot enter a log-log fit.
    for (std::size_t i = 0; i < s.t.size(); ++i) {
      if (s.t[i] > 0) {
        ds.t.push_back(s.t[i]);
        ds.value.push_back((*it.v)[i]);
      }
    }
    bool positive = true;
    for (std::size_t i = 0; i < ds.t.size(); ++i)
      if (ds.t[i] >= t_lo && ds.t[i] <= t_hi && !(ds.value[i] > 0)) positive = false;
    if (!positive) continue;
    DecayReportEntry e;
    e.quantity = it.name;
    e.fit = decay_fit(ds, t_lo, t_hi);
    e.reference_exponent = it.ref;
    e.reference_note = it.note;
    r.entries.push_back(e);
  }
  return r;
}

}  // namespace mhdlab
