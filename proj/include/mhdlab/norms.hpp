#pragma once
// Littlewood-Paley blocks, Besov / anisotropic / Chemin-Lerner norms,
// Sobolev and time-weighted norms, and empirical checks of the Bernstein,
// product and interpolation inequalities on grid fields.

#include <limits>
#include <string>
#include <vector>

#include "mhdlab/spectral_core.hpp"

namespace mhdlab {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// The pair (chi, phi) with chi = 1 on [0, 3/4], chi = 0 on [4/3, inf) and
/// phi(tau) = chi(tau/2) - chi(tau), so supp phi is [3/4, 8/3] and the
/// dyadic sums telescope to exactly one.
struct DyadicPartition {
  static double chi(double tau);
  static double phi(double tau);

  int j_min = 0, j_max = 0;  ///< isotropic blocks touching the lattice
  int l_min = 0, l_max = 0;  ///< vertical blocks touching the lattice

  static DyadicPartition for_grid(const Grid& g);
};

/// Largest of |chi(tau) + sum_{j>=0} phi(2^-j tau) - 1| and
/// |sum_{j in Z} phi(2^-j tau) - 1| over `samples` log-spaced tau.
double partition_of_unity_residual(double tau_lo, double tau_hi, int samples);

SpectralVectorField lp_block(int j, const SpectralVectorField& F);
/// chi(2^-j |xi|) F, the low-frequency part S_j.
SpectralVectorField low_part(int j, const SpectralVectorField& F);
SpectralVectorField vertical_block(int l, const SpectralVectorField& F);
SpectralVectorField vertical_low_part(int l, const SpectralVectorField& F);

struct BesovSpec {
  double s = 0.0;
  double p = 2.0;
  double r = 2.0;
};

struct AnisoSpec {
  double s1 = 0.0;
  double s2 = 0.0;
  double r = 2.0;
  double q = kInf;  ///< time exponent, used only by the Chemin-Lerner form
};

struct WeightedNormSpec {
  double k = 0.0;
  int N = 0;
  double p = 2.0;
};

/// Spatial L^p norm of the Euclidean magnitude (grid Riemann sum; max for
/// p = inf).
double lp_norm(const PhysicalVectorField& f, double p);
double lp_norm(const SpectralVectorField& F, double p);

double besov_norm(const SpectralVectorField& F, const BesovSpec& spec);
double besov_norm(const SpectralScalarField& F, const BesovSpec& spec);
double aniso_norm(const SpectralVectorField& F, const AnisoSpec& spec);
/// Chemin-Lerner: the L^q in time (trapezoid rule on the samples, max for
/// q = inf) is taken inside every block.
double aniso_norm(const std::vector<double>& times, const std::vector<SpectralVectorField>& series,
                  const AnisoSpec& spec);

/// Homogeneous Sobolev norm || |D|^s F ||_{L2}; the zero mode is excluded.
double homogeneous_sobolev_norm(const SpectralVectorField& F, double s);
/// W^{N,p} = sum over |alpha| <= N of ||D^alpha F||_{L^p}.
double wnp_norm(const SpectralVectorField& F, int N, double p);
/// max over samples of (1 + t)^k ||u(t)||_{W^{N,p}}.
double weighted_sup_norm(const std::vector<double>& times, const std::vector<SpectralVectorField>& series,
                         const WeightedNormSpec& spec);

/// One inequality evaluated on a sweep of cases.
struct InequalityReport {
  std::string inequality;
  std::vector<std::string> sweep;
  std::vector<double> lhs;
  std::vector<double> rhs;
  std::vector<double> empirical_C;
  double spread = 1.0;  ///< max C / min C over the sweep
  bool pass = false;    ///< spread <= 4
};

enum class BernsteinDirection { Horizontal, Vertical };

struct BernsteinCase {
  Grid grid;
  int block = 0;
};

/// Anisotropic Bernstein inequalities on block-localized bumps, one sweep
/// entry per case. Each block must be resolved by its grid. Returns three
/// reports: the ball-case derivative bound, the ball-case L2 -> Linf bound
/// in the chosen direction (mixed L^p_h(L^q_v) norms) and the ring-case
/// lower bound with N = 1.
std::vector<InequalityReport> bernstein_check(const std::vector<BernsteinCase>& cases,
                                              BernsteinDirection direction);

/// L^p_h(L^q_v) norm of the Euclidean magnitude: L^q over x3 first, then L^p
/// over (x1, x2).
double mixed_norm(const PhysicalVectorField& f, double p_h, double q_v);

/// Both sides of the product law in Besov spaces (p, r) and of the L1-based
/// law with the L2 alternative, on the given scalar pair. One sweep entry.
struct ProductLawSample {
  double lhs_besov = 0, rhs_besov = 0;
  double lhs_l1 = 0, rhs_l1 = 0;
};
ProductLawSample product_law_check(const SpectralScalarField& a, const SpectralScalarField& b, double s,
                                   double p = 2.0, double r = 1.0);

/// ||f||_{B^s_{2,1}} against ||f||_{L2} + ||f||_{H^{[s]+1}}.
struct InterpolationSample {
  double lhs = 0, rhs = 0;
};
InterpolationSample interpolation_check(const SpectralVectorField& f, double s);

/// Fills spread/pass from lhs/rhs.
void finalize_report(InequalityReport& rep);

}  // namespace mhdlab
