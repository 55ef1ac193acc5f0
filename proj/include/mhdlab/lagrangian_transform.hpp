#pragma once
// Frobenius-type coordinates for a perturbed vertical magnetic field
// b0 = e3 + eps * phi: the field-line flow y(w), the straightened coordinate
// z(w) with d_{b0} = d_{z3}, the Jacobian matrices A1, A2, A3, B and the
// correction field Y~ with d_{z3} Y~ = e3 - b0(y(w(z))).
//
// Every (w1, w2) column is an independent fixed-step RK4 integration in w3
// starting at w3 = 0. Off-node values use Hermite interpolation: quintic for
// y, z3 and the correction integral, cubic for the variational quantities.

#include <array>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "mhdlab/spectral_core.hpp"

namespace mhdlab {

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 identity3();
Mat3 matmul(const Mat3& a, const Mat3& b);
Mat3 inverse3(const Mat3& a);
Mat3 transpose3(const Mat3& a);
double max_abs_entry(const Mat3& a);

/// A divergence-free vector profile phi(y) with its Jacobian
/// dphi[i][k] = d phi_i / d y_k.
class MagneticProfile {
 public:
  virtual ~MagneticProfile() = default;
  virtual void eval(const Vec3& y, Vec3& phi, Mat3& dphi) const = 0;
  [[nodiscard]] virtual std::string name() const = 0;
};

/// phi = grad(Psi) x c with Psi = A beta(y1/R) beta(y2/R) gamma(y3), beta the
/// standard bump and gamma(y3) = beta(2 y3 / K - 1), so supp phi lies in
/// |y1|, |y2| < R and 0 < y3 < K.
class CurlBumpProfile : public MagneticProfile {
 public:
  explicit CurlBumpProfile(double K = 4.0, double R = 2.0, double amplitude = 10.0, Vec3 c = {1.0, 0.5, 0.0});
  void eval(const Vec3& y, Vec3& phi, Mat3& dphi) const override;
  [[nodiscard]] std::string name() const override { return "curl_bump"; }

 private:
  double K_, R_, A_;
  Vec3 c_;
};

/// phi = g(y3) e1 with g = sin^4(pi y3 / K) on [0, K] and zero elsewhere.
class ShearProfile : public MagneticProfile {
 public:
  explicit ShearProfile(double K = 4.0) : K_(K) {}
  void eval(const Vec3& y, Vec3& phi, Mat3& dphi) const override;
  [[nodiscard]] std::string name() const override { return "shear"; }
  /// G(s) = int_0^s g, closed form.
  [[nodiscard]] double antiderivative(double s) const;

 private:
  double K_;
};

/// Trigonometric interpolant of a torus field placed with its first grid
/// point at `origin`. Periodic, so it is compactly supported only when the
/// torus data vanish outside the intended support.
class TrigInterpolatedProfile : public MagneticProfile {
 public:
  TrigInterpolatedProfile(const SpectralVectorField& F, Vec3 origin);
  void eval(const Vec3& y, Vec3& phi, Mat3& dphi) const override;
  [[nodiscard]] std::string name() const override { return "trig_interpolated"; }

 private:
  struct Mode {
    Vec3 xi;
    std::array<Complex, 3> c;
  };
  std::vector<Mode> modes_;
  Vec3 origin_;
};

struct InitialMagneticField {
  double epsilon = 0.0;
  std::shared_ptr<const MagneticProfile> profile;
  double K = 4.0;

  /// b0 and its Jacobian db[i][k] = d b0_i / d y_k.
  void eval(const Vec3& y, Vec3& b, Mat3& db) const;
  [[nodiscard]] Vec3 value(const Vec3& y) const;

  /// Throws ValidationError when the profile is missing, epsilon or K is not
  /// finite, K <= 0, or b0^3 <= floor at one of the samples in `box`.
  void validate(double half_width, double b3_floor = 0.1) const;
  /// Largest |div b0| over a sample lattice of [-half_width, half_width]^2 x
  /// [-1, K + 1].
  [[nodiscard]] double divergence_defect(double half_width, int samples_per_axis = 17) const;
  /// Largest |b0 - e3| sampled outside 0 < y3 < K.
  [[nodiscard]] double support_leak(double half_width, int samples_per_axis = 17) const;
  /// min b0^3 over the same lattice.
  [[nodiscard]] double min_b3(double half_width, int samples_per_axis = 17) const;
};

struct ChartSpec {
  double h = 0.01;           ///< RK4 step in w3
  double w3_lo = -3.0;       ///< rounded to a multiple of h
  double w3_hi_offset = 3.0; ///< w3_hi = K + offset
  double half_width = 3.0;   ///< export box [-half_width, half_width]^2 in (w1, w2)
  int columns_per_axis = 13; ///< export columns per horizontal axis
  double b3_floor = 0.1;

  void validate() const;
};

/// Interpolated column state at one w3.
struct ColumnState {
  double w3 = 0;
  Vec3 y{};                         ///< y(w), with y3 = w3
  double z3 = 0;
  std::array<double, 4> J{};        ///< d y_h / d w_h, row-major
  std::array<double, 2> a3{};       ///< int_0^w3 d_{w_k}(1 / b0^3(y)) dw3'
  std::array<double, 4> a2_lit{};   ///< int_0^w3 d_{y_k}(b0^i / b0^3)(y) dw3'
  Vec3 C{};                         ///< int_0^w3 (e3 - b0(y)) / b0^3 dw3'
};

/// One integrated (w1, w2) column.
class FlowColumn {
 public:
  /// Node layout: y1, y2, J (4), A3 row (2), A2 integrals (4), z3 - w3, C (3).
  static constexpr int kStateSize = 16;
  using State = std::array<double, kStateSize>;

  FlowColumn(const InitialMagneticField& b0, double w1, double w2, double w3_lo, double w3_hi, double h,
             double b3_floor);

  [[nodiscard]] double w1() const { return w1_; }
  [[nodiscard]] double w2() const { return w2_; }
  [[nodiscard]] double w3_lo() const { return lo_; }
  [[nodiscard]] double w3_hi() const { return lo_ + h_ * (static_cast<double>(nodes_.size()) - 1); }
  [[nodiscard]] double step() const { return h_; }
  [[nodiscard]] std::size_t node_count() const { return nodes_.size(); }
  [[nodiscard]] const State& node(std::size_t m) const { return nodes_[m]; }
  [[nodiscard]] double node_w3(std::size_t m) const { return lo_ + h_ * static_cast<double>(m); }

  [[nodiscard]] ColumnState at(double w3) const;
  /// Inverse of z3(w3) by bisection over the node table, then safeguarded
  /// Newton to 1e-12.
  [[nodiscard]] double w3_of_z3(double z3) const;
  [[nodiscard]] double z3_min() const { return lo_ + nodes_.front()[12]; }
  [[nodiscard]] double z3_max() const { return w3_hi() + nodes_.back()[12]; }

  /// Throws NumericalAbort if z3 fails to increase strictly between nodes.
  void check_monotone() const;

 private:
  double w1_, w2_, lo_, h_;
  std::vector<State> nodes_, d1_, d2_;
};

/// Sampled y(w), z(w) and w(z). Columns on the export lattice are built up
/// front; others are traced on first use and cached.
class LagrangianChart {
 public:
  LagrangianChart(InitialMagneticField b0, ChartSpec spec);

  [[nodiscard]] const InitialMagneticField& field() const { return b0_; }
  [[nodiscard]] const ChartSpec& spec() const { return spec_; }
  [[nodiscard]] double w3_hi() const { return b0_.K + spec_.w3_hi_offset; }

  [[nodiscard]] std::shared_ptr<const FlowColumn> column(double w1, double w2) const;
  [[nodiscard]] const std::vector<std::shared_ptr<const FlowColumn>>& export_columns() const { return grid_; }

  [[nodiscard]] Vec3 y_of_w(const Vec3& w) const;
  [[nodiscard]] Vec3 z_of_w(const Vec3& w) const;
  [[nodiscard]] Vec3 w_of_z(const Vec3& z) const;
  [[nodiscard]] Vec3 y_of_z(const Vec3& z) const;

  /// Set by build_z_coord once every export column passed the monotonicity
  /// check.
  bool z_ready = false;

 private:
  InitialMagneticField b0_;
  ChartSpec spec_;
  std::vector<std::shared_ptr<const FlowColumn>> grid_;
  mutable std::mutex mu_;
  mutable std::map<std::pair<double, double>, std::shared_ptr<const FlowColumn>> cache_;
};

/// Integrates the field-line flow on the export lattice.
LagrangianChart integrate_flow(const InitialMagneticField& b0, const ChartSpec& spec = {});
/// Verifies z3 is strictly increasing on every export column and marks the
/// inverse map usable.
void build_z_coord(LagrangianChart& chart);

struct JacobianMatrices {
  Mat3 A1{}, A2{}, A3{}, B{};
  /// The componentwise integral form of A2; it satisfies the matrix
  /// identity dy/dw = A1 + A2 dy/dw only up to O(eps^2).
  Mat3 A2_literal{};
  /// Full dy/dw.
  Mat3 dy_dw{};
};

/// Matrices at the point z. A2 is the exact solution of
/// dy/dw = A1 + A2 dy/dw, so B = A3 A1^{-1} (Id - A2) inverts d y(w(z)) / dz.
JacobianMatrices jacobian_matrices(const LagrangianChart& chart, const Vec3& z);

/// Largest |B - (FD d y(w(z))/dz)^{-1}| entry over the points, with a
/// fourth-order centered stencil of step `fd_step`.
double jacobian_fd_residual(const LagrangianChart& chart, const std::vector<Vec3>& z_points, double fd_step);

struct TestScalar {
  std::function<double(const Vec3&)> f;
  std::function<Vec3(const Vec3&)> grad;
};

struct ChainRuleResidual {
  double directional = 0;  ///< max |d_{b0} f(y) - d_{z3} f(y(w(z)))|
  double gradient = 0;     ///< max |grad_y f - B^t grad_z (f o y)|
};

ChainRuleResidual verify_directional_derivative(const LagrangianChart& chart, const TestScalar& f,
                                                const std::vector<Vec3>& z_points, double fd_step);

/// Y~(z) = eta(z3) (C(w3(z3)) - C(w3(K + 1))) on the column through z_h.
class CorrectionField {
 public:
  explicit CorrectionField(const LagrangianChart& chart) : chart_(&chart) {}
  /// 1 on [-1, 1 + K], 0 outside (-2, 2 + K), smoothstep transitions of
  /// width 1.
  static double eta(double z3, double K);
  [[nodiscard]] Vec3 value(const Vec3& z) const;

 private:
  const LagrangianChart* chart_;
};

CorrectionField correction_term(const LagrangianChart& chart);

struct CorrectionResidual {
  double first_identity = 0;   ///< max |d3 Y~ - (e3 - b0 o chart)| on the plateau
  double second_identity = 0;  ///< max |d3 (d3 Y~ + b0 o chart)| on the plateau
};

/// Checks both identities at z3 in [-1, K + 1] (`z3_samples` points) above
/// each horizontal point, with fourth-order centered differences.
CorrectionResidual verify_correction(const CorrectionField& corr, const LagrangianChart& chart,
                                     const std::vector<std::array<double, 2>>& zh_points, int z3_samples,
                                     double fd_step);

/// Evenly spaced points of [-a, a]^2 x [z3_lo, z3_hi].
std::vector<Vec3> sample_box(double a, int nh, double z3_lo, double z3_hi, int nv);

}  // namespace mhdlab
