#include "mhdlab/lagrangian_transform.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mhdlab/smooth_profiles.hpp"

namespace mhdlab {

// ---------------------------------------------------------------------------
// 3x3 helpers
// ---------------------------------------------------------------------------

Mat3 identity3() { return Mat3{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}; }

Mat3 matmul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

Mat3 inverse3(const Mat3& a) {
  Mat3 c{};
  c[0][0] = a[1][1] * a[2][2] - a[1][2] * a[2][1];
  c[0][1] = a[0][2] * a[2][1] - a[0][1] * a[2][2];
  c[0][2] = a[0][1] * a[1][2] - a[0][2] * a[1][1];
  c[1][0] = a[1][2] * a[2][0] - a[1][0] * a[2][2];
  c[1][1] = a[0][0] * a[2][2] - a[0][2] * a[2][0];
  c[1][2] = a[0][2] * a[1][0] - a[0][0] * a[1][2];
  c[2][0] = a[1][0] * a[2][1] - a[1][1] * a[2][0];
  c[2][1] = a[0][1] * a[2][0] - a[0][0] * a[2][1];
  c[2][2] = a[0][0] * a[1][1] - a[0][1] * a[1][0];
  const double det = a[0][0] * c[0][0] + a[0][1] * c[1][0] + a[0][2] * c[2][0];
  if (!(std::abs(det) > 1e-300) || !std::isfinite(det)) throw ValidationError("singular 3x3 matrix");
  for (auto& row : c)
    for (auto& v : row) v /= det;
  return c;
}

Mat3 transpose3(const Mat3& a) {
  Mat3 t{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t[i][j] = a[j][i];
  return t;
}

double max_abs_entry(const Mat3& a) {
  double m = 0;
  for (const auto& row : a)
    for (double v : row) m = std::max(m, std::abs(v));
  return m;
}

namespace {

Mat3 minus(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) c[i][j] = a[i][j] - b[i][j];
  return c;
}

std::string fmt_point(const Vec3& y) {
  std::ostringstream os;
  os << "(" << y[0] << ", " << y[1] << ", " << y[2] << ")";
  return os.str();
}

Vec3 vsub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 vscale(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
double vmaxabs(const Vec3& a) { return std::max({std::abs(a[0]), std::abs(a[1]), std::abs(a[2])}); }

// Vec3 arithmetic for the stencil helper.
Vec3 operator-(const Vec3& a, const Vec3& b) { return vsub(a, b); }
Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 operator*(double s, const Vec3& a) { return vscale(s, a); }
Vec3 operator*(const Vec3& a, double s) { return vscale(s, a); }

template <class F>
auto centered4(F&& f, double delta) {
  return (f(-2) - 8.0 * f(-1) + 8.0 * f(1) - f(2)) * (1.0 / (12.0 * delta));
}

}  // namespace

// ---------------------------------------------------------------------------
// Profiles
// ---------------------------------------------------------------------------

CurlBumpProfile::CurlBumpProfile(double K, double R, double amplitude, Vec3 c) : K_(K), R_(R), A_(amplitude), c_(c) {
  if (!(K > 0) || !(R > 0) || !std::isfinite(amplitude)) throw ValidationError("curl bump: need K > 0, R > 0");
}

void CurlBumpProfile::eval(const Vec3& y, Vec3& phi, Mat3& dphi) const {
  using namespace profiles;
  const double u1 = y[0] / R_, u2 = y[1] / R_, u3 = 2 * y[2] / K_ - 1;
  const double b1 = bump(u1), b2 = bump(u2), g = bump(u3);
  phi = {0, 0, 0};
  dphi = Mat3{};
  if (b1 == 0 || b2 == 0 || g == 0) return;
  const double b1p = bump_d1(u1) / R_, b2p = bump_d1(u2) / R_, gp = bump_d1(u3) * 2 / K_;
  const double b1pp = bump_d2(u1) / (R_ * R_), b2pp = bump_d2(u2) / (R_ * R_), gpp = bump_d2(u3) * 4 / (K_ * K_);
  const Vec3 grad{A_ * b1p * b2 * g, A_ * b1 * b2p * g, A_ * b1 * b2 * gp};
  Mat3 H{};
  H[0][0] = A_ * b1pp * b2 * g;
  H[1][1] = A_ * b1 * b2pp * g;
  H[2][2] = A_ * b1 * b2 * gpp;
  H[0][1] = H[1][0] = A_ * b1p * b2p * g;
  H[0][2] = H[2][0] = A_ * b1p * b2 * gp;
  H[1][2] = H[2][1] = A_ * b1 * b2p * gp;
  // grad(Psi) x c
  phi = {grad[1] * c_[2] - grad[2] * c_[1], grad[2] * c_[0] - grad[0] * c_[2], grad[0] * c_[1] - grad[1] * c_[0]};
  for (int k = 0; k < 3; ++k) {
    dphi[0][k] = H[1][k] * c_[2] - H[2][k] * c_[1];
    dphi[1][k] = H[2][k] * c_[0] - H[0][k] * c_[2];
    dphi[2][k] = H[0][k] * c_[1] - H[1][k] * c_[0];
  }
}

void ShearProfile::eval(const Vec3& y, Vec3& phi, Mat3& dphi) const {
  phi = {0, 0, 0};
  dphi = Mat3{};
  if (y[2] <= 0 || y[2] >= K_) return;
  const double x = kPi * y[2] / K_;
  const double s = std::sin(x), c = std::cos(x);
  phi[0] = s * s * s * s;
  dphi[0][2] = 4 * s * s * s * c * kPi / K_;
}

double ShearProfile::antiderivative(double s) const {
  const double x = kPi * std::clamp(s, 0.0, K_) / K_;
  return K_ / kPi * (3 * x / 8 - std::sin(2 * x) / 4 + std::sin(4 * x) / 32);
}

TrigInterpolatedProfile::TrigInterpolatedProfile(const SpectralVectorField& F, Vec3 origin) : origin_(origin) {
  const Grid& g = F.grid;
  g.validate();
  const double inv_n = 1.0 / static_cast<double>(g.physical_size());
  WavenumberTable tab(g);
  tab.for_each_k([&](std::size_t i, const Vec3& xi, const std::array<int, 3>& k) {
    const double w = (k[2] == 0 || k[2] == g.n3 / 2) ? inv_n : 2 * inv_n;
    Mode m{xi, {w * F.coeffs[0][i], w * F.coeffs[1][i], w * F.coeffs[2][i]}};
    if (std::abs(m.c[0]) + std::abs(m.c[1]) + std::abs(m.c[2]) > 0) modes_.push_back(m);
  });
}

void TrigInterpolatedProfile::eval(const Vec3& y, Vec3& phi, Mat3& dphi) const {
  phi = {0, 0, 0};
  dphi = Mat3{};
  const Vec3 x = vsub(y, origin_);
  for (const auto& m : modes_) {
    const double arg = m.xi[0] * x[0] + m.xi[1] * x[1] + m.xi[2] * x[2];
    const Complex e(std::cos(arg), std::sin(arg));
    for (int i = 0; i < 3; ++i) {
      const Complex v = m.c[i] * e;
      phi[i] += v.real();
      for (int k = 0; k < 3; ++k) dphi[i][k] -= m.xi[k] * v.imag();
    }
  }
}

// ---------------------------------------------------------------------------
// Initial field
// ---------------------------------------------------------------------------

void InitialMagneticField::eval(const Vec3& y, Vec3& b, Mat3& db) const {
  Vec3 phi;
  Mat3 dphi;
  profile->eval(y, phi, dphi);
  b = {epsilon * phi[0], epsilon * phi[1], 1.0 + epsilon * phi[2]};
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) db[i][k] = epsilon * dphi[i][k];
}

Vec3 InitialMagneticField::value(const Vec3& y) const {
  Vec3 b;
  Mat3 db;
  eval(y, b, db);
  return b;
}

namespace {

template <class F>
void for_lattice(double half_width, double z_lo, double z_hi, int n, F&& f) {
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) {
        auto frac = [n](int i) { return n == 1 ? 0.5 : static_cast<double>(i) / (n - 1); };
        f(Vec3{-half_width + 2 * half_width * frac(a), -half_width + 2 * half_width * frac(b),
               z_lo + (z_hi - z_lo) * frac(c)});
      }
}

}  // namespace

void InitialMagneticField::validate(double half_width, double b3_floor) const {
  if (!profile) throw ValidationError("initial magnetic field: no profile");
  if (!std::isfinite(epsilon)) throw ValidationError("initial magnetic field: epsilon must be finite");
  if (!(K > 0) || !std::isfinite(K)) throw ValidationError("initial magnetic field: K must be positive");
  const double m = min_b3(half_width);
  if (!(m > b3_floor)) {
    std::ostringstream os;
    os << "initial magnetic field: b0^3 reaches " << m << ", not above the floor " << b3_floor;
    throw ValidationError(os.str());
  }
}

double InitialMagneticField::divergence_defect(double half_width, int n) const {
  double worst = 0;
  for_lattice(half_width, -1.0, K + 1.0, n, [&](const Vec3& y) {
    Vec3 b;
    Mat3 db;
    eval(y, b, db);
    worst = std::max(worst, std::abs(db[0][0] + db[1][1] + db[2][2]));
  });
  return worst;
}

double InitialMagneticField::support_leak(double half_width, int n) const {
  double worst = 0;
  auto probe = [&](const Vec3& y) {
    const Vec3 b = value(y);
    worst = std::max(worst, vmaxabs(vsub(b, Vec3{0, 0, 1})));
  };
  for_lattice(half_width, -1.0, 0.0, n, probe);
  for_lattice(half_width, K, K + 1.0, n, probe);
  return worst;
}

double InitialMagneticField::min_b3(double half_width, int n) const {
  double m = std::numeric_limits<double>::infinity();
  for_lattice(half_width, -1.0, K + 1.0, n, [&](const Vec3& y) { m = std::min(m, value(y)[2]); });
  return m;
}

void ChartSpec::validate() const {
  if (!(h > 0) || h > 0.5) throw ValidationError("chart: step h must lie in (0, 0.5]");
  if (!(w3_lo <= -1.0)) throw ValidationError("chart: w3_lo must be <= -1");
  if (!(w3_hi_offset >= 1.0)) throw ValidationError("chart: w3_hi_offset must be >= 1");
  if (!(half_width > 0)) throw ValidationError("chart: half_width must be positive");
  if (columns_per_axis < 1) throw ValidationError("chart: columns_per_axis must be >= 1");
  if (!(b3_floor > 0 && b3_floor < 1)) throw ValidationError("chart: b3_floor must lie in (0, 1)");
}

// ---------------------------------------------------------------------------
// Columns
// ---------------------------------------------------------------------------

namespace {

using State = FlowColumn::State;

/// Components interpolated with quintic Hermite: y1, y2, z3, C.
constexpr std::array<int, 6> kQuintic{0, 1, 12, 13, 14, 15};

struct Rhs {
  const InitialMagneticField& b0;
  double w1, w2, floor;

  /// First derivative of the state; with `d2` also the second derivative of
  /// the quintic components.
  void operator()(double w3, const State& s, State& d1, State* d2) const {
    const Vec3 y{s[0], s[1], w3};
    Vec3 b;
    Mat3 db;
    b0.eval(y, b, db);
    if (!(b[2] > floor)) {
      std::ostringstream os;
      os << "b0^3 = " << b[2] << " fell below the floor " << floor << " at y = " << fmt_point(y)
         << " on the column w_h = (" << w1 << ", " << w2 << ")";
      throw NumericalAbort(os.str());
    }
    const double ib = 1.0 / b[2], ib2 = ib * ib;
    // M[i][k] = d_k (b_i / b_3), k over all three coordinates.
    double M[2][3];
    double g[3];  // d_k (1 / b_3)
    for (int k = 0; k < 3; ++k) {
      for (int i = 0; i < 2; ++i) M[i][k] = (db[i][k] * b[2] - b[i] * db[2][k]) * ib2;
      g[k] = -db[2][k] * ib2;
    }
    d1[0] = b[0] * ib;
    d1[1] = b[1] * ib;
    const double J11 = s[2], J12 = s[3], J21 = s[4], J22 = s[5];
    d1[2] = M[0][0] * J11 + M[0][1] * J21;
    d1[3] = M[0][0] * J12 + M[0][1] * J22;
    d1[4] = M[1][0] * J11 + M[1][1] * J21;
    d1[5] = M[1][0] * J12 + M[1][1] * J22;
    d1[6] = g[0] * J11 + g[1] * J21;
    d1[7] = g[0] * J12 + g[1] * J22;
    d1[8] = M[0][0];
    d1[9] = M[0][1];
    d1[10] = M[1][0];
    d1[11] = M[1][1];
    d1[12] = ib - 1.0;
    const Vec3 e{-b[0], -b[1], 1.0 - b[2]};
    for (int i = 0; i < 3; ++i) d1[13 + i] = e[i] * ib;
    if (d2 == nullptr) return;
    const double v[3] = {d1[0], d1[1], 1.0};
    State& s2 = *d2;
    s2.fill(0.0);
    for (int k = 0; k < 3; ++k) {
      s2[0] += M[0][k] * v[k];
      s2[1] += M[1][k] * v[k];
      s2[12] += g[k] * v[k];
      for (int i = 0; i < 3; ++i) s2[13 + i] += (-db[i][k] * b[2] - e[i] * db[2][k]) * ib2 * v[k];
    }
  }
};

State rk4_step(const Rhs& f, double w3, const State& s, double h) {
  State k1, k2, k3, k4, tmp;
  f(w3, s, k1, nullptr);
  for (int i = 0; i < FlowColumn::kStateSize; ++i) tmp[i] = s[i] + 0.5 * h * k1[i];
  f(w3 + 0.5 * h, tmp, k2, nullptr);
  for (int i = 0; i < FlowColumn::kStateSize; ++i) tmp[i] = s[i] + 0.5 * h * k2[i];
  f(w3 + 0.5 * h, tmp, k3, nullptr);
  for (int i = 0; i < FlowColumn::kStateSize; ++i) tmp[i] = s[i] + h * k3[i];
  f(w3 + h, tmp, k4, nullptr);
  State out;
  for (int i = 0; i < FlowColumn::kStateSize; ++i) out[i] = s[i] + h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  return out;
}

struct Quintic {
  double value, derivative;
};

Quintic quintic_hermite(double p0, double d0, double s0, double p1, double d1, double s1, double h, double t) {
  const double t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t;
  const double H0 = 1 - 10 * t3 + 15 * t4 - 6 * t5, H1 = t - 6 * t3 + 8 * t4 - 3 * t5;
  const double H2 = 0.5 * (t2 - 3 * t3 + 3 * t4 - t5), H3 = 0.5 * (t3 - 2 * t4 + t5);
  const double H4 = -4 * t3 + 7 * t4 - 3 * t5, H5 = 10 * t3 - 15 * t4 + 6 * t5;
  const double D0 = -30 * t2 + 60 * t3 - 30 * t4, D1 = 1 - 18 * t2 + 32 * t3 - 15 * t4;
  const double D2 = 0.5 * (2 * t - 9 * t2 + 12 * t3 - 5 * t4), D3 = 0.5 * (3 * t2 - 8 * t3 + 5 * t4);
  const double D4 = -12 * t2 + 28 * t3 - 15 * t4, D5 = 30 * t2 - 60 * t3 + 30 * t4;
  const double h2 = h * h;
  return {p0 * H0 + h * d0 * H1 + h2 * s0 * H2 + h2 * s1 * H3 + h * d1 * H4 + p1 * H5,
          (p0 * D0 + h * d0 * D1 + h2 * s0 * D2 + h2 * s1 * D3 + h * d1 * D4 + p1 * D5) / h};
}

}  // namespace

FlowColumn::FlowColumn(const InitialMagneticField& b0, double w1, double w2, double w3_lo, double w3_hi, double h,
                       double b3_floor)
    : w1_(w1), w2_(w2), h_(h) {
  const long down = std::lround(std::ceil(-w3_lo / h - 1e-9));
  const long up = std::lround(std::ceil(w3_hi / h - 1e-9));
  if (down < 1 || up < 1) throw ValidationError("flow column: the w3 range must contain 0 in its interior");
  lo_ = -static_cast<double>(down) * h;
  const std::size_t n = static_cast<std::size_t>(down + up + 1);
  nodes_.resize(n);
  d1_.resize(n);
  d2_.resize(n);
  const Rhs f{b0, w1, w2, b3_floor};
  State s0{};
  s0[0] = w1;
  s0[1] = w2;
  s0[2] = 1.0;  // J = Id
  s0[5] = 1.0;
  const std::size_t m0 = static_cast<std::size_t>(down);
  nodes_[m0] = s0;
  for (std::size_t m = m0; m + 1 < n; ++m) nodes_[m + 1] = rk4_step(f, node_w3(m), nodes_[m], h);
  for (std::size_t m = m0; m > 0; --m) nodes_[m - 1] = rk4_step(f, node_w3(m), nodes_[m], -h);
  for (std::size_t m = 0; m < n; ++m) f(node_w3(m), nodes_[m], d1_[m], &d2_[m]);
}

ColumnState FlowColumn::at(double w3) const {
  const double hi = w3_hi();
  if (w3 < lo_ - 1e-12 || w3 > hi + 1e-12) {
    std::ostringstream os;
    os << "flow column: w3 = " << w3 << " outside [" << lo_ << ", " << hi << "]";
    throw ValidationError(os.str());
  }
  const std::size_t n = nodes_.size();
  std::size_t m = static_cast<std::size_t>(std::clamp(std::floor((w3 - lo_) / h_), 0.0, static_cast<double>(n - 2)));
  const double t = std::clamp((w3 - node_w3(m)) / h_, 0.0, 1.0);
  const State& a = nodes_[m];
  const State& b = nodes_[m + 1];
  const State& da = d1_[m];
  const State& dbv = d1_[m + 1];
  const double t2 = t * t, t3 = t2 * t;
  const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t, h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
  State s;
  for (int i = 0; i < kStateSize; ++i) s[i] = h00 * a[i] + h10 * h_ * da[i] + h01 * b[i] + h11 * h_ * dbv[i];
  for (int i : kQuintic) s[i] = quintic_hermite(a[i], da[i], d2_[m][i], b[i], dbv[i], d2_[m + 1][i], h_, t).value;
  ColumnState out;
  out.w3 = w3;
  out.y = {s[0], s[1], w3};
  out.J = {s[2], s[3], s[4], s[5]};
  out.a3 = {s[6], s[7]};
  out.a2_lit = {s[8], s[9], s[10], s[11]};
  out.z3 = w3 + s[12];
  out.C = {s[13], s[14], s[15]};
  return out;
}

void FlowColumn::check_monotone() const {
  for (std::size_t m = 1; m < nodes_.size(); ++m)
    if (!(node_w3(m) + nodes_[m][12] > node_w3(m - 1) + nodes_[m - 1][12])) {
      std::ostringstream os;
      os << "z3 is not increasing at w = (" << w1_ << ", " << w2_ << ", " << node_w3(m) << ")";
      throw NumericalAbort(os.str());
    }
}

double FlowColumn::w3_of_z3(double z3) const {
  const std::size_t n = nodes_.size();
  if (z3 < z3_min() - 1e-12 || z3 > z3_max() + 1e-12) {
    std::ostringstream os;
    os << "w3_of_z3: z3 = " << z3 << " outside the column range [" << z3_min() << ", " << z3_max() << "]";
    throw ValidationError(os.str());
  }
  std::size_t lo = 0, hi = n - 1;
  while (hi - lo > 1) {
    const std::size_t mid = (lo + hi) / 2;
    if (node_w3(mid) + nodes_[mid][12] <= z3)
      lo = mid;
    else
      hi = mid;
  }
  const State& a = nodes_[lo];
  const State& b = nodes_[lo + 1];
  double tl = 0, th = 1;
  const double za = node_w3(lo) + a[12], zb = node_w3(lo + 1) + b[12];
  double t = std::clamp((z3 - za) / (zb - za), 0.0, 1.0);
  for (int it = 0; it < 60; ++it) {
    const Quintic q = quintic_hermite(a[12], d1_[lo][12], d2_[lo][12], b[12], d1_[lo + 1][12], d2_[lo + 1][12], h_, t);
    const double r = node_w3(lo) + t * h_ + q.value - z3;
    if (std::abs(r) <= 1e-15 * std::max(1.0, std::abs(z3))) break;
    if (r > 0)
      th = t;
    else
      tl = t;
    double next = t - r / ((1.0 + q.derivative) * h_);
    if (!(next > tl && next < th)) next = 0.5 * (tl + th);
    const double step = std::abs(next - t) * h_;
    t = next;
    if (step <= 1e-12) break;
  }
  return node_w3(lo) + t * h_;
}

// ---------------------------------------------------------------------------
// Chart
// ---------------------------------------------------------------------------

LagrangianChart::LagrangianChart(InitialMagneticField b0, ChartSpec spec) : b0_(std::move(b0)), spec_(spec) {
  spec_.validate();
  b0_.validate(spec_.half_width, spec_.b3_floor);
  const int n = spec_.columns_per_axis;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      auto frac = [n](int i) { return n == 1 ? 0.5 : static_cast<double>(i) / (n - 1); };
      const double w1 = -spec_.half_width + 2 * spec_.half_width * frac(a);
      const double w2 = -spec_.half_width + 2 * spec_.half_width * frac(b);
      grid_.push_back(column(w1, w2));
    }
}

std::shared_ptr<const FlowColumn> LagrangianChart::column(double w1, double w2) const {
  std::lock_guard<std::mutex> lock(mu_);
  const auto key = std::make_pair(w1, w2);
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  auto col = std::make_shared<const FlowColumn>(b0_, w1, w2, spec_.w3_lo, w3_hi(), spec_.h, spec_.b3_floor);
  cache_.emplace(key, col);
  return col;
}

Vec3 LagrangianChart::y_of_w(const Vec3& w) const { return column(w[0], w[1])->at(w[2]).y; }

Vec3 LagrangianChart::z_of_w(const Vec3& w) const { return {w[0], w[1], column(w[0], w[1])->at(w[2]).z3}; }

Vec3 LagrangianChart::w_of_z(const Vec3& z) const { return {z[0], z[1], column(z[0], z[1])->w3_of_z3(z[2])}; }

Vec3 LagrangianChart::y_of_z(const Vec3& z) const { return y_of_w(w_of_z(z)); }

LagrangianChart integrate_flow(const InitialMagneticField& b0, const ChartSpec& spec) {
  return LagrangianChart(b0, spec);
}

void build_z_coord(LagrangianChart& chart) {
  for (const auto& col : chart.export_columns()) col->check_monotone();
  chart.z_ready = true;
}

// ---------------------------------------------------------------------------
// Matrices and identities
// ---------------------------------------------------------------------------

JacobianMatrices jacobian_matrices(const LagrangianChart& chart, const Vec3& z) {
  const auto col = chart.column(z[0], z[1]);
  const ColumnState st = col->at(col->w3_of_z3(z[2]));
  const Vec3 b = chart.field().value(st.y);
  JacobianMatrices m;
  m.A1 = identity3();
  m.A1[0][2] = b[0] / b[2];
  m.A1[1][2] = b[1] / b[2];
  m.dy_dw = Mat3{{{st.J[0], st.J[1], b[0] / b[2]}, {st.J[2], st.J[3], b[1] / b[2]}, {0, 0, 1}}};
  m.A2 = minus(identity3(), matmul(m.A1, inverse3(m.dy_dw)));
  m.A2_literal = Mat3{{{st.a2_lit[0], st.a2_lit[1], 0}, {st.a2_lit[2], st.a2_lit[3], 0}, {0, 0, 0}}};
  m.A3 = identity3();
  m.A3[2][0] = st.a3[0];
  m.A3[2][1] = st.a3[1];
  m.A3[2][2] = 1.0 / b[2];
  m.B = matmul(matmul(m.A3, inverse3(m.A1)), minus(identity3(), m.A2));
  return m;
}

double jacobian_fd_residual(const LagrangianChart& chart, const std::vector<Vec3>& z_points, double fd_step) {
  double worst = 0;
  for (const Vec3& z : z_points) {
    Mat3 D{};
    for (int k = 0; k < 3; ++k) {
      const Vec3 col = centered4(
          [&](int s) {
            Vec3 zz = z;
            zz[k] += s * fd_step;
            return chart.y_of_z(zz);
          },
          fd_step);
      for (int i = 0; i < 3; ++i) D[i][k] = col[i];
    }
    worst = std::max(worst, max_abs_entry(minus(jacobian_matrices(chart, z).B, inverse3(D))));
  }
  return worst;
}

ChainRuleResidual verify_directional_derivative(const LagrangianChart& chart, const TestScalar& f,
                                                const std::vector<Vec3>& z_points, double fd_step) {
  ChainRuleResidual out;
  for (const Vec3& z : z_points) {
    const Vec3 y = chart.y_of_z(z);
    const Vec3 b = chart.field().value(y);
    const Vec3 gy = f.grad(y);
    Vec3 gz{};
    for (int k = 0; k < 3; ++k)
      gz[k] = centered4(
          [&](int s) {
            Vec3 zz = z;
            zz[k] += s * fd_step;
            return f.f(chart.y_of_z(zz));
          },
          fd_step);
    const double dir = b[0] * gy[0] + b[1] * gy[1] + b[2] * gy[2];
    out.directional = std::max(out.directional, std::abs(dir - gz[2]));
    const Mat3 Bt = transpose3(jacobian_matrices(chart, z).B);
    for (int i = 0; i < 3; ++i) {
      const double pred = Bt[i][0] * gz[0] + Bt[i][1] * gz[1] + Bt[i][2] * gz[2];
      out.gradient = std::max(out.gradient, std::abs(gy[i] - pred));
    }
  }
  return out;
}

double CorrectionField::eta(double z3, double K) {
  return profiles::smoothstep(z3 + 2.0) * (1.0 - profiles::smoothstep(z3 - (1.0 + K)));
}

Vec3 CorrectionField::value(const Vec3& z) const {
  const double K = chart_->field().K;
  const double e = eta(z[2], K);
  if (e == 0.0) return {0, 0, 0};
  const auto col = chart_->column(z[0], z[1]);
  const Vec3 c = col->at(col->w3_of_z3(z[2])).C;
  const Vec3 cref = col->at(col->w3_of_z3(K + 1.0)).C;
  return e * (c - cref);
}

CorrectionField correction_term(const LagrangianChart& chart) { return CorrectionField(chart); }

CorrectionResidual verify_correction(const CorrectionField& corr, const LagrangianChart& chart,
                                     const std::vector<std::array<double, 2>>& zh_points, int z3_samples,
                                     double fd_step) {
  if (z3_samples < 2) throw ValidationError("verify_correction: need at least 2 samples in z3");
  const double K = chart.field().K;
  CorrectionResidual out;
  for (const auto& zh : zh_points) {
    auto d3Y = [&](double z3) {
      return centered4([&](int s) { return corr.value({zh[0], zh[1], z3 + s * fd_step}); }, fd_step);
    };
    auto b0c = [&](double z3) { return chart.field().value(chart.y_of_z({zh[0], zh[1], z3})); };
    for (int i = 0; i < z3_samples; ++i) {
      const double z3 = -1.0 + (K + 2.0) * i / (z3_samples - 1);
      const Vec3 lhs = d3Y(z3);
      const Vec3 rhs = Vec3{0, 0, 1} - b0c(z3);
      out.first_identity = std::max(out.first_identity, vmaxabs(lhs - rhs));
      const Vec3 second = centered4([&](int s) { return d3Y(z3 + s * fd_step) + b0c(z3 + s * fd_step); }, fd_step);
      out.second_identity = std::max(out.second_identity, vmaxabs(second));
    }
  }
  return out;
}

std::vector<Vec3> sample_box(double a, int nh, double z3_lo, double z3_hi, int nv) {
  std::vector<Vec3> pts;
  for (int i = 0; i < nh; ++i)
    for (int j = 0; j < nh; ++j)
      for (int k = 0; k < nv; ++k) {
        const double th = nh == 1 ? 0.5 : static_cast<double>(i) / (nh - 1);
        const double tj = nh == 1 ? 0.5 : static_cast<double>(j) / (nh - 1);
        const double tk = nv == 1 ? 0.5 : static_cast<double>(k) / (nv - 1);
        pts.push_back({-a + 2 * a * th, -a + 2 * a * tj, z3_lo + (z3_hi - z3_lo) * tk});
      }
  return pts;
}

}  // namespace mhdlab
