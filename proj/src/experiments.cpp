#include "mhdlab/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "mhdlab/lagrangian_transform.hpp"
#include "mhdlab/linear_propagator.hpp"
#include "mhdlab/mhd_solver.hpp"
#include "mhdlab/nash_moser.hpp"
#include "mhdlab/norms.hpp"

namespace mhdlab {

namespace {

constexpr double kTwoPi = 2 * kPi;
const double kNaN = std::numeric_limits<double>::quiet_NaN();

Json grid_json(int n, double l) { return Json{{"n", {n, n, n}}, {"l", {l, l, l}}}; }

Grid grid_from(const Json& j) {
  const auto& n = j.at("n");
  const auto& l = j.at("l");
  if (n.size() != 3 || l.size() != 3) throw ValidationError("config: grid.n and grid.l need three entries each");
  Grid g{n[0].get<int>(), n[1].get<int>(), n[2].get<int>(), l[0].get<double>(), l[1].get<double>(),
         l[2].get<double>(), 2.0 / 3.0};
  g.validate();
  return g;
}

std::uint64_t seed_of(const Json& cfg) { return cfg.at("seed").get<std::uint64_t>(); }

Json quadrature_defaults() {
  return Json{{"radial_nodes", 24}, {"angular_nodes", 24}, {"r_max", 4.0}, {"layer_scale", 1.0}};
}

QuadratureSpec quadrature_from(const Json& j) {
  QuadratureSpec q;
  q.radial_nodes = j.at("radial_nodes").get<int>();
  q.angular_nodes = j.at("angular_nodes").get<int>();
  q.r_max = j.at("r_max").get<double>();
  q.layer_scale = j.at("layer_scale").get<double>();
  return q;
}

Json times_defaults() { return Json{{"t_lo", 10.0}, {"t_hi", 1000.0}, {"per_decade", 4}}; }

std::vector<double> times_from(const Json& j) {
  const double lo = j.at("t_lo").get<double>(), hi = j.at("t_hi").get<double>();
  const int per = j.at("per_decade").get<int>();
  if (!(lo > 0) || !(hi > lo) || per < 1) throw ValidationError("config: times need 0 < t_lo < t_hi, per_decade >= 1");
  return log_times(lo, hi, per);
}

RadialData annulus_from(const Json& j) {
  RadialData d;
  d.shape = RadialData::Shape::Annulus;
  d.r_inner = j.at("r_inner").get<double>();
  d.r_outer = j.at("r_outer").get<double>();
  d.validate();
  return d;
}

double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
  }
  return sxy / sxx;
}

class Progress {
 public:
  explicit Progress(std::ostream* os) : os_(os), t0_(std::chrono::steady_clock::now()) {}
  void operator()(const std::string& msg) const {
    if (!os_) return;
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    *os_ << "[" << std::fixed << std::setprecision(1) << s << " s] " << msg << std::endl;
    os_->unsetf(std::ios::fixed);
  }

 private:
  std::ostream* os_;
  std::chrono::steady_clock::time_point t0_;
};

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

void exponent_metric(ExperimentOutput& out, const std::string& name, const DecayFit& fit, double reference,
                     double tol) {
  out.metric(name, fit.exponent, reference, "|fit - reference| <= " + fmt(tol),
             std::abs(fit.exponent - reference) <= tol,
             "fit over [" + fmt(fit.t_lo) + ", " + fmt(fit.t_hi) + "], " + std::to_string(fit.samples) + " samples");
}

// ---------------------------------------------------------------------------
// linear-decay
// ---------------------------------------------------------------------------

ConfigSchema linear_decay_schema() {
  return {"linear-decay",
          Json{{"times", times_defaults()},
               {"delta", 0.1},
               {"data", {{"r_inner", 1.0}, {"r_outer", 2.0}}},
               {"quadrature", quadrature_defaults()},
               {"exponent_tolerance", 0.1},
               {"weighted_l2_bound", 2.0}},
          {},
          false};
}

ExperimentOutput run_linear_decay(const Json& cfg, const Progress& log) {
  ExperimentOutput out;
  out.subcommand = "linear-decay";
  out.summary["key_metric"] = "exponent_dz_linf";
  const std::vector<double> ts = times_from(cfg["times"]);
  const double delta = cfg["delta"].get<double>();
  if (!(delta > 0 && delta < 0.5)) throw ValidationError("config: delta must lie in (0, 1/2)");
  const RadialData ann = annulus_from(cfg["data"]);
  // The time derivative decays like t^{-3/2 + delta} for data behaving like
  // |xi|^{-2 delta} near the origin, so that series uses ball-supported data.
  const RadialData ball{RadialData::Shape::Ball, 0.0, ann.r_outer, -2 * delta};
  ball.validate();
  const QuadratureSpec q = quadrature_from(cfg["quadrature"]);
  q.validate(ann);
  q.validate(ball);
  const double tol = cfg["exponent_tolerance"].get<double>();
  const double bound = cfg["weighted_l2_bound"].get<double>();

  struct Series {
    const char* name;
    const char* weight;
    const RadialData* data;
    double reference;
  };
  const std::vector<Series> series{{"y_linf", "y", &ann, -0.5},
                                   {"dz_linf", "dz", &ann, -1.0},
                                   {"dzz_linf", "dzz", &ann, -1.5},
                                   {"dt_linf", "dt", &ball, -(1.5 - delta)}};
  CsvTable table{"linear_decay.csv", {"t"}, {}};
  for (const auto& s : series) table.header.push_back(s.name);
  table.header.insert(table.header.end(), {"dt_l2", "dz_l2", "weighted_l2"});
  std::vector<DecaySeries> ds;
  for (const auto& s : series) ds.push_back({s.name, ts, {}});
  std::vector<double> weighted;
  for (double t : ts) {
    std::vector<double> row{t};
    for (std::size_t i = 0; i < series.size(); ++i) {
      const double v = whole_space_norm(standard_weight(series[i].weight), *series[i].data, t, q, NormKind::LinfBound);
      ds[i].value.push_back(v);
      row.push_back(v);
    }
    const double a = whole_space_norm(standard_weight("dt"), ann, t, q, NormKind::L2);
    const double b = whole_space_norm(standard_weight("dz"), ann, t, q, NormKind::L2);
    const double w = std::pow(1 + t * t, 0.25) * std::sqrt(a * a + b * b);
    weighted.push_back(w);
    row.insert(row.end(), {a, b, w});
    table.rows.push_back(row);
  }
  log("sampled " + std::to_string(ts.size()) + " times");
  for (std::size_t i = 0; i < series.size(); ++i) {
    exponent_metric(out, std::string("exponent_") + series[i].name, decay_fit(ds[i], ts.front(), ts.back()),
                    series[i].reference, tol);
  }
  double hi = 0, lo = kInf;
  for (double w : weighted) {
    hi = std::max(hi, w / weighted.front());
    lo = std::min(lo, w / weighted.front());
  }
  out.metric("weighted_l2_max_ratio", hi, 1.0, "max over t of series / series(t_lo) <= " + fmt(bound), hi <= bound,
             "<t>^{1/2} (||dt Y||_L2^2 + ||d3 Y||_L2^2)^{1/2}, an upper bound in time");
  out.summary["weighted_l2_min_ratio"] = lo;
  out.summary["delta"] = delta;
  out.tables.push_back(std::move(table));
  return out;
}

// ---------------------------------------------------------------------------
// duhamel
// ---------------------------------------------------------------------------

ConfigSchema duhamel_schema() {
  return {"duhamel",
          Json{{"theta", 1.0},
               {"gauss_nodes", 32},
               {"times", times_defaults()},
               {"data", {{"r_inner", 1.0}, {"r_outer", 2.0}}},
               {"quadrature", quadrature_defaults()},
               {"exponent_tolerance", 0.1}},
          {},
          false};
}

ExperimentOutput run_duhamel(const Json& cfg, const Progress& log) {
  ExperimentOutput out;
  out.subcommand = "duhamel";
  out.summary["key_metric"] = "exponent_duhamel_linf";
  const double theta = cfg["theta"].get<double>();
  const int nodes = cfg["gauss_nodes"].get<int>();
  if (!(theta > 0) || nodes < 2) throw ValidationError("config: need theta > 0 and gauss_nodes >= 2");
  const std::vector<double> ts = times_from(cfg["times"]);
  if (ts.front() <= theta) throw ValidationError("config: the fit window must start after the source support");
  const RadialData ann = annulus_from(cfg["data"]);
  const QuadratureSpec q = quadrature_from(cfg["quadrature"]);
  q.validate(ann);
  DecaySeries du{"duhamel_linf", ts, {}}, hom{"y_linf", ts, {}};
  CsvTable table{"duhamel.csv", {"t", "duhamel_linf", "homogeneous_y_linf"}, {}};
  for (double t : ts) {
    du.value.push_back(whole_space_norm(duhamel_weight(theta, nodes), ann, t, q, NormKind::LinfBound));
    hom.value.push_back(whole_space_norm(standard_weight("y"), ann, t, q, NormKind::LinfBound));
    table.rows.push_back({t, du.value.back(), hom.value.back()});
  }
  log("sampled " + std::to_string(ts.size()) + " times");
  exponent_metric(out, "exponent_duhamel_linf", decay_fit(du, ts.front(), ts.back()), -0.5,
                  cfg["exponent_tolerance"].get<double>());
  out.summary["homogeneous_exponent"] = decay_fit(hom, ts.front(), ts.back()).exponent;
  out.tables.push_back(std::move(table));
  return out;
}

// ---------------------------------------------------------------------------
// symbol-bounds
// ---------------------------------------------------------------------------

ConfigSchema symbol_bounds_schema() {
  const SymbolSampleGrid d;
  return {"symbol-bounds",
          Json{{"t_min", d.t_min},
               {"t_max", d.t_max},
               {"r_min", d.r_min},
               {"r_max", d.r_max},
               {"tau_min", d.tau_min},
               {"n_t", d.n_t},
               {"n_r", d.n_r},
               {"n_angle", d.n_angle},
               {"refinement", d.refinement},
               {"tolerance", 0.1}},
          {},
          false};
}

ExperimentOutput run_symbol_bounds(const Json& cfg, const Progress& log) {
  ExperimentOutput out;
  out.subcommand = "symbol-bounds";
  out.summary["key_metric"] = "change_sup_t_xi2_dt_gamma";
  SymbolSampleGrid g;
  g.t_min = cfg["t_min"].get<double>();
  g.t_max = cfg["t_max"].get<double>();
  g.r_min = cfg["r_min"].get<double>();
  g.r_max = cfg["r_max"].get<double>();
  g.tau_min = cfg["tau_min"].get<double>();
  g.n_t = cfg["n_t"].get<int>();
  g.n_r = cfg["n_r"].get<int>();
  g.n_angle = cfg["n_angle"].get<int>();
  g.refinement = cfg["refinement"].get<int>();
  const double tol = cfg["tolerance"].get<double>();
  const SymbolBoundReport r = symbol_bound_check(g);
  log("symbol suprema computed");
  out.metric("change_sup_t_xi2_dt_gamma", r.change_dt_gamma, 0.0, "relative change under refinement <= " + fmt(tol),
             r.change_dt_gamma <= tol, "sup = " + fmt(r.sup_dt_gamma) + ", refined " + fmt(r.sup_dt_gamma_refined));
  out.metric("change_sup_weighted_xi3sq_gamma", r.change_gamma, 0.0,
             "relative change under refinement <= " + fmt(tol), r.change_gamma <= tol,
             "sup = " + fmt(r.sup_gamma) + ", refined " + fmt(r.sup_gamma_refined));
  out.tables.push_back({"symbol_bounds.csv",
                        {"sup_dt_gamma", "sup_dt_gamma_refined", "sup_gamma", "sup_gamma_refined"},
                        {{r.sup_dt_gamma, r.sup_dt_gamma_refined, r.sup_gamma, r.sup_gamma_refined}}});
  return out;
}

// ---------------------------------------------------------------------------
// norms-selftest
// ---------------------------------------------------------------------------

ConfigSchema norms_schema() {
  return {"norms-selftest",
          Json{{"seed", nullptr},
               {"grid", grid_json(16, kTwoPi)},
               {"kmax", 6},
               {"partition", {{"tau_lo", 1e-3}, {"tau_hi", 1e3}, {"samples", 4001}, {"tolerance", 1e-10}}},
               {"besov_tolerance", 1e-9},
               {"bernstein", {{"blocks", {1, 2, 3}}, {"fine_n", 64}, {"coarse_n", 16}}},
               {"product", {{"grids", {16, 32, 64}}, {"s", 0.5}}},
               {"spread_limit", 4.0}},
          {"grid"},
          true};
}

SpectralScalarField component(const SpectralVectorField& F, int c) { return {F.grid, F.coeffs[c]}; }

ExperimentOutput run_norms(const Json& cfg, const Progress& log) {
  ExperimentOutput out;
  out.subcommand = "norms-selftest";
  out.summary["key_metric"] = "partition_of_unity_residual";
  const std::uint64_t seed = seed_of(cfg);
  const Grid g = grid_from(cfg["grid"]);
  const int kmax = cfg["kmax"].get<int>();
  if (kmax < 1) throw ValidationError("config: kmax must be >= 1");
  const double limit = cfg["spread_limit"].get<double>();

  const Json& pc = cfg["partition"];
  const double pres = partition_of_unity_residual(pc["tau_lo"].get<double>(), pc["tau_hi"].get<double>(),
                                                  pc["samples"].get<int>());
  out.metric("partition_of_unity_residual", pres, 0.0, "<= " + fmt(pc["tolerance"].get<double>()),
             pres <= pc["tolerance"].get<double>());

  const SpectralVectorField F = random_smooth_field(g, seed, kmax);
  const double b = besov_norm(F, {0.0, 2.0, 2.0}), l2 = l2_norm(F);
  const double rel = std::abs(b - l2) / l2;
  const double btol = cfg["besov_tolerance"].get<double>();
  out.metric("besov_0_2_2_vs_l2_relative", rel, 0.0, "<= " + fmt(btol), rel <= btol,
             "the dyadic blocks sum to one, their squares do not; B^0_{2,2} lies in [L2/sqrt(2), L2]");
  out.summary["besov_0_2_2"] = b;
  out.summary["l2"] = l2;
  log("partition and Besov checks done");

  CsvTable consts{"norms_constants.csv", {"family", "sweep_index", "lhs", "rhs", "empirical_C"}, {}};
  Json families = Json::array();
  auto record = [&](const InequalityReport& rep) {
    const double fam = static_cast<double>(families.size());
    families.push_back(rep.inequality);
    for (std::size_t i = 0; i < rep.lhs.size(); ++i)
      consts.rows.push_back({fam, static_cast<double>(i), rep.lhs[i], rep.rhs[i], rep.empirical_C[i]});
    out.summary["inequalities"].push_back({{"inequality", rep.inequality},
                                           {"lhs", rep.lhs},
                                           {"rhs", rep.rhs},
                                           {"empirical_C", rep.empirical_C},
                                           {"sweep", rep.sweep}});
    out.metric("spread_" + rep.inequality, rep.spread, 1.0, "max C / min C <= " + fmt(limit), rep.spread <= limit,
               std::to_string(rep.lhs.size()) + "-point sweep");
  };

  const Json& bc = cfg["bernstein"];
  const int fine = bc["fine_n"].get<int>(), coarse = bc["coarse_n"].get<int>();
  std::vector<BernsteinCase> hcases, vcases;
  for (const auto& j : bc["blocks"]) {
    hcases.push_back({Grid{fine, fine, coarse, kTwoPi, kTwoPi, kTwoPi, 2.0 / 3.0}, j.get<int>()});
    vcases.push_back({Grid{coarse, coarse, fine, kTwoPi, kTwoPi, kTwoPi, 2.0 / 3.0}, j.get<int>()});
  }
  if (hcases.size() < 2) throw ValidationError("config: bernstein.blocks needs at least two entries");
  for (const auto& rep : bernstein_check(hcases, BernsteinDirection::Horizontal)) record(rep);
  for (const auto& rep : bernstein_check(vcases, BernsteinDirection::Vertical)) record(rep);
  log("Bernstein sweeps done");

  const Json& prc = cfg["product"];
  const double s = prc["s"].get<double>();
  InequalityReport besov{"product_besov", {}, {}, {}, {}, 1, false};
  InequalityReport l1{"product_l1", {}, {}, {}, {}, 1, false};
  for (const auto& nj : prc["grids"]) {
    const int n = nj.get<int>();
    const Grid gn = Grid::cube(n, kTwoPi);
    const SpectralScalarField x = component(random_smooth_field(gn, seed + 100, std::max(1, n / 6)), 0);
    const SpectralScalarField y = component(random_smooth_field(gn, seed + 200, std::max(1, n / 6)), 1);
    const ProductLawSample sm = product_law_check(x, y, s);
    for (auto* r : {&besov, &l1}) r->sweep.push_back("n=" + std::to_string(n));
    besov.lhs.push_back(sm.lhs_besov);
    besov.rhs.push_back(sm.rhs_besov);
    l1.lhs.push_back(sm.lhs_l1);
    l1.rhs.push_back(sm.rhs_l1);
  }
  if (besov.lhs.size() < 2) throw ValidationError("config: product.grids needs at least two entries");
  finalize_report(besov);
  finalize_report(l1);
  record(besov);
  record(l1);
  log("product-law sweep done");
  out.summary["families"] = families;
  out.tables.push_back(std::move(consts));
  return out;
}

// ---------------------------------------------------------------------------
// lagrangian
// ---------------------------------------------------------------------------

ConfigSchema lagrangian_schema() {
  return {"lagrangian",
          Json{{"K", 4.0},
               {"chart", {{"h", 0.01}, {"columns_per_axis", 3}, {"half_width", 3.0}}},
               {"epsilon", 0.05},
               {"eps_sweep", {0.01, 0.02, 0.04, 0.08}},
               {"shear", {{"epsilon", 0.1}, {"K", 2.0}}},
               {"chain_fd_steps", {0.1, 0.05}},
               {"correction_fd_step", 0.005},
               {"tolerances",
                {{"identity", 1e-14},
                 {"shear_flow", 1e-8},
                 {"slope", 0.1},
                 {"plateau", 1e-6},
                 {"order", 0.5}}}},
          {},
          false};
}

ExperimentOutput run_lagrangian(const Json& cfg, const Progress& log) {
  ExperimentOutput out;
  out.subcommand = "lagrangian";
  out.summary["key_metric"] = "b_minus_id_slope";
  const double K = cfg["K"].get<double>();
  ChartSpec spec;
  spec.h = cfg["chart"]["h"].get<double>();
  spec.columns_per_axis = cfg["chart"]["columns_per_axis"].get<int>();
  spec.half_width = cfg["chart"]["half_width"].get<double>();
  spec.validate();
  const Json& tol = cfg["tolerances"];
  auto curl = [&](double e) { return InitialMagneticField{e, std::make_shared<CurlBumpProfile>(K), K}; };
  const auto box = sample_box(1.5, 3, -1.0, K + 1.0, 5);

  // eps = 0: every map is the identity.
  {
    LagrangianChart chart = integrate_flow(curl(0.0), spec);
    build_z_coord(chart);
    const CorrectionField corr = correction_term(chart);
    double dev = 0;
    for (const Vec3& w : box) {
      const Vec3 y = chart.y_of_w(w), z = chart.z_of_w(w), back = chart.w_of_z(w), c = corr.value(w);
      const JacobianMatrices m = jacobian_matrices(chart, w);
      Mat3 dB = m.B, dA1 = m.A1, dA3 = m.A3;
      for (int i = 0; i < 3; ++i) {
        dev = std::max({dev, std::abs(y[i] - w[i]), std::abs(z[i] - w[i]), std::abs(back[i] - w[i]), std::abs(c[i])});
        dB[i][i] -= 1;
        dA1[i][i] -= 1;
        dA3[i][i] -= 1;
      }
      dev = std::max({dev, max_abs_entry(dB), max_abs_entry(dA1), max_abs_entry(dA3), max_abs_entry(m.A2)});
    }
    out.metric("eps0_identity_deviation", dev, 0.0, "<= " + fmt(tol["identity"].get<double>()),
               dev <= tol["identity"].get<double>(), "y, z, w(z), A1, A2, A3, B and the correction field");
  }
  log("identity case done");

  // Shear field with a closed-form flow.
  {
    const double eps = cfg["shear"]["epsilon"].get<double>(), Ks = cfg["shear"]["K"].get<double>();
    const auto prof = std::make_shared<ShearProfile>(Ks);
    LagrangianChart chart = integrate_flow(InitialMagneticField{eps, prof, Ks}, spec);
    build_z_coord(chart);
    double err = 0;
    for (double w3 = -2.5; w3 <= Ks + 2.5; w3 += 0.0137) {
      const Vec3 w{0.4, -0.7, w3};
      const Vec3 y = chart.y_of_w(w);
      err = std::max({err, std::abs(y[0] - (w[0] + eps * prof->antiderivative(w3))), std::abs(y[1] - w[1]),
                      std::abs(y[2] - w3)});
    }
    out.metric("shear_flow_error", err, 0.0, "<= " + fmt(tol["shear_flow"].get<double>()),
               err <= tol["shear_flow"].get<double>());
  }
  log("shear case done");

  // ||B - Id||_inf against eps.
  {
    std::vector<double> eps, dev;
    CsvTable t{"lagrangian_b_minus_id.csv", {"epsilon", "b_minus_id_linf"}, {}};
    const auto pts = sample_box(1.5, 5, -0.5, K + 0.5, 7);
    for (const auto& ej : cfg["eps_sweep"]) {
      const double e = ej.get<double>();
      if (!(e > 0)) throw ValidationError("config: eps_sweep entries must be positive");
      const LagrangianChart chart = integrate_flow(curl(e), spec);
      double b = 0;
      for (const Vec3& z : pts) {
        Mat3 d = jacobian_matrices(chart, z).B;
        for (int i = 0; i < 3; ++i) d[i][i] -= 1;
        b = std::max(b, max_abs_entry(d));
      }
      eps.push_back(e);
      dev.push_back(b);
      t.rows.push_back({e, b});
    }
    if (eps.size() < 2) throw ValidationError("config: eps_sweep needs at least two entries");
    const double sl = ls_slope(eps, dev);
    out.metric("b_minus_id_slope", sl, 1.0, "|slope - 1| <= " + fmt(tol["slope"].get<double>()),
               std::abs(sl - 1.0) <= tol["slope"].get<double>());
    out.tables.push_back(std::move(t));
  }
  log("B - Id sweep done");

  const double e = cfg["epsilon"].get<double>();
  LagrangianChart chart = integrate_flow(curl(e), spec);
  build_z_coord(chart);
  {
    CsvTable t{"lagrangian_chart.csv", {"w1", "w2", "w3", "y1", "y2", "y3", "z1", "z2", "z3"}, {}};
    for (const Vec3& w : sample_box(spec.half_width / 2, 3, -1.0, K + 1.0, 13)) {
      const Vec3 y = chart.y_of_w(w), z = chart.z_of_w(w);
      t.rows.push_back({w[0], w[1], w[2], y[0], y[1], y[2], z[0], z[1], z[2]});
    }
    out.tables.push_back(std::move(t));
  }
  {
    const CorrectionField corr = correction_term(chart);
    const CorrectionResidual r = verify_correction(corr, chart, {{0.3, -0.4}, {-0.8, 0.5}, {0.0, 0.0}}, 31,
                                                   cfg["correction_fd_step"].get<double>());
    const double plateau = std::max(r.first_identity, r.second_identity);
    out.metric("correction_plateau_residual", plateau, 0.0, "<= " + fmt(tol["plateau"].get<double>()),
               plateau <= tol["plateau"].get<double>(),
               "first " + fmt(r.first_identity) + ", second " + fmt(r.second_identity));
  }
  {
    const TestScalar trig{
        [](const Vec3& y) { return std::sin(y[0] + 0.5 * y[1]) * std::cos(1.3 * y[2]) + std::cos(2 * y[1] - y[2]); },
        [](const Vec3& y) {
          const double a = y[0] + 0.5 * y[1], c = std::cos(1.3 * y[2]), s = std::sin(2 * y[1] - y[2]);
          return Vec3{std::cos(a) * c, 0.5 * std::cos(a) * c - 2 * s,
                      -1.3 * std::sin(a) * std::sin(1.3 * y[2]) + s};
        }};
    const auto pts = sample_box(1.0, 3, -0.5, K + 0.5, 4);
    std::vector<double> hs, dir, grad;
    CsvTable t{"lagrangian_chain_rule.csv", {"fd_step", "directional", "gradient"}, {}};
    for (const auto& hj : cfg["chain_fd_steps"]) {
      const double h = hj.get<double>();
      const ChainRuleResidual r = verify_directional_derivative(chart, trig, pts, h);
      hs.push_back(h);
      dir.push_back(r.directional);
      grad.push_back(r.gradient);
      t.rows.push_back({h, r.directional, r.gradient});
    }
    if (hs.size() < 2) throw ValidationError("config: chain_fd_steps needs at least two entries");
    // Fourth-order centered differences.
    const double otol = tol["order"].get<double>();
    const double od = ls_slope(hs, dir), og = ls_slope(hs, grad);
    out.metric("chain_rule_order_directional", od, 4.0, "|order - 4| <= " + fmt(otol), std::abs(od - 4) <= otol);
    out.metric("chain_rule_order_gradient", og, 4.0, "|order - 4| <= " + fmt(otol), std::abs(og - 4) <= otol);
    out.tables.push_back(std::move(t));
  }
  log("correction and chain rule done");
  return out;
}

// ---------------------------------------------------------------------------
// mhd-run
// ---------------------------------------------------------------------------

ConfigSchema mhd_schema() {
  return {"mhd-run",
          Json{{"seed", nullptr},
               {"grid", grid_json(64, 8 * kPi)},
               {"dt", 0.05},
               {"T", 20.0},
               {"diagnostics_stride", 10},
               {"viscous", true},
               {"nonlinear", true},
               {"w2inf", true},
               {"initial", {{"u_amplitude", 0.02}, {"epsilon", 0.02}, {"kmax", 4}, {"bump_radius_fraction", 0.2}}},
               {"window", {{"t_lo", 1.0}, {"t_hi", 0.0}}},
               {"amplitude_sweep",
                {{"enabled", true},
                 {"n", 16},
                 {"l", 4 * kPi},
                 {"T", 2.0},
                 {"dt", 0.05},
                 {"amplitudes", {1e-3, 2e-3, 4e-3, 8e-3}}}},
               {"tolerances",
                {{"divergence", 1e-11}, {"ledger", 1e-6}, {"h2_slope", -0.3}, {"sweep_slope", 0.1}}}},
          {"grid"},
          true};
}

double state_l2_diff(const MHDState& a, const MHDState& b) {
  const double du = l2_norm(a.u - b.u), dh = l2_norm(a.h - b.h);
  return std::sqrt(du * du + dh * dh);
}

ExperimentOutput run_mhd(const Json& cfg, const Progress& log) {
  ExperimentOutput out;
  out.subcommand = "mhd-run";
  out.summary["key_metric"] = "h2_decay_slope";
  const std::uint64_t seed = seed_of(cfg);
  SolverConfig sc;
  sc.grid = grid_from(cfg["grid"]);
  sc.dt = cfg["dt"].get<double>();
  sc.T = cfg["T"].get<double>();
  sc.diagnostics_stride = cfg["diagnostics_stride"].get<int>();
  sc.viscous = cfg["viscous"].get<bool>();
  sc.nonlinear = cfg["nonlinear"].get<bool>();
  sc.validate();
  const Json& tol = cfg["tolerances"];
  const Json& ic = cfg["initial"];
  InitialDataSpec is;
  is.u_amplitude = ic["u_amplitude"].get<double>();
  is.epsilon = ic["epsilon"].get<double>();
  is.kmax = ic["kmax"].get<int>();
  is.bump_radius_fraction = ic["bump_radius_fraction"].get<double>();
  is.seed = seed;
  // Window: validated before the run so a bad config costs nothing.
  const auto [w_lo_max, w_hi_max] = torus_window(sc.grid);
  const double w_lo = cfg["window"]["t_lo"].get<double>();
  double w_hi = cfg["window"]["t_hi"].get<double>();
  if (w_hi <= 0) w_hi = std::min(w_hi_max, sc.T);
  if (w_lo < w_lo_max || w_hi > w_hi_max || !(w_hi > w_lo) || w_hi > sc.T) {
    throw ValidationError("config: decay window [" + fmt(w_lo) + ", " + fmt(w_hi) + "] must lie in the torus window [" +
                          fmt(w_lo_max) + ", " + fmt(w_hi_max) + "] and in [0, T]");
  }

  {
    const long steps = std::lround(sc.T / sc.dt);
    int in_window = 0;
    for (long n = 1; n <= steps; ++n) {
      const double t = static_cast<double>(n) * sc.dt;
      if ((n % sc.diagnostics_stride == 0 || n == steps) && t >= w_lo && t <= w_hi) ++in_window;
    }
    if (in_window < 8) {
      throw ValidationError("config: only " + std::to_string(in_window) +
                            " diagnostic samples fall in the decay window; the fit needs 8");
    }
  }
  const MHDState s0 = default_initial_data(sc.grid, is);
  const DiagnosticsSeries d = run(sc, s0, {cfg["w2inf"].get<bool>()});
  log("main run finished, " + std::to_string(d.steps) + " steps");
  for (const auto& w : d.warnings) out.warnings.push_back(w);

  CsvTable diag{"mhd_diagnostics.csv",
                {"t", "u_h2", "h_h2", "grad_u_l2", "u_w2inf", "h_w2inf", "energy", "dissipation", "l2_sum"},
                {}};
  for (std::size_t i = 0; i < d.t.size(); ++i) {
    auto at = [&](const std::vector<double>& v) { return i < v.size() ? v[i] : kNaN; };
    diag.rows.push_back({d.t[i], at(d.u_h2), at(d.h_h2), at(d.grad_u_l2), at(d.u_w2inf), at(d.h_w2inf), at(d.energy),
                         at(d.dissipation), at(d.l2_sum)});
  }
  out.tables.push_back(std::move(diag));
  out.metric("max_divergence", d.max_divergence, 0.0, "<= " + fmt(tol["divergence"].get<double>()) + " every step",
             d.max_divergence <= tol["divergence"].get<double>());
  out.metric("energy_ledger_residual", d.ledger_residual, 0.0, "<= " + fmt(tol["ledger"].get<double>()),
             d.ledger_residual <= tol["ledger"].get<double>(), "max |E(t) - E(0) + int ||grad u||^2|");

  const DecayReport rep = decay_report(d, sc.grid, w_lo, w_hi);
  CsvTable fits{"mhd_decay_fits.csv", {"entry", "exponent", "reference_exponent", "residual", "samples"}, {}};
  Json names = Json::array();
  for (const auto& e : rep.entries) {
    fits.rows.push_back({static_cast<double>(names.size()), e.fit.exponent, e.reference_exponent, e.fit.residual,
                         static_cast<double>(e.fit.samples)});
    names.push_back({{"quantity", e.quantity}, {"exponent", e.fit.exponent}, {"reference", e.reference_exponent},
                     {"note", e.reference_note}});
    if (e.quantity == "u_h2+h_h2") {
      const double lim = tol["h2_slope"].get<double>();
      out.metric("h2_decay_slope", e.fit.exponent, e.reference_exponent, "slope <= " + fmt(lim),
                 e.fit.exponent <= lim, "whole-space reference -1/2; torus rates are not the whole-space rates");
    }
  }
  out.summary["decay_window"] = {rep.t_lo, rep.t_hi};
  out.summary["torus_caveat"] = rep.torus_caveat;
  out.summary["decay_entries"] = names;
  out.tables.push_back(std::move(fits));
  log("decay report done");

  const Json& sw = cfg["amplitude_sweep"];
  if (sw["enabled"].get<bool>()) {
    SolverConfig c2;
    c2.grid = Grid::cube(sw["n"].get<int>(), sw["l"].get<double>());
    c2.T = sw["T"].get<double>();
    c2.dt = sw["dt"].get<double>();
    c2.diagnostics_stride = std::max(1, static_cast<int>(std::lround(c2.T / c2.dt)));
    c2.validate();
    MHDState base = MHDState::zeros(c2.grid);
    base.u = leray_project(dealias(random_solenoidal_field(c2.grid, seed, 2)));
    base.h = leray_project(dealias(random_solenoidal_field(c2.grid, seed + 17, 2)));
    base.u *= 1.0 / l2_norm(base.u);
    base.h *= 1.0 / l2_norm(base.h);
    std::vector<double> amps, errs;
    CsvTable t{"mhd_amplitude_sweep.csv", {"amplitude", "oracle_error", "error_over_amp2_T"}, {}};
    for (const auto& aj : sw["amplitudes"]) {
      const double a = aj.get<double>();
      if (!(a > 0)) throw ValidationError("config: amplitudes must be positive");
      MHDState s = base;
      s.u *= a;
      s.h *= a;
      const DiagnosticsSeries ds = run(c2, s, {false});
      const double err = state_l2_diff(ds.final_state, linear_reference(s, c2.T));
      amps.push_back(a);
      errs.push_back(err);
      t.rows.push_back({a, err, err / (a * a * c2.T)});
    }
    if (amps.size() < 2) throw ValidationError("config: amplitude_sweep.amplitudes needs at least two entries");
    const double sl = ls_slope(amps, errs);
    out.metric("oracle_amplitude_slope", sl, 2.0, "|slope - 2| <= " + fmt(tol["sweep_slope"].get<double>()),
               std::abs(sl - 2.0) <= tol["sweep_slope"].get<double>(),
               "nonlinear run minus the exact linear solution at T");
    out.tables.push_back(std::move(t));
    log("amplitude sweep done");
  }
  return out;
}

// ---------------------------------------------------------------------------
// nash-moser
// ---------------------------------------------------------------------------

ConfigSchema nm_schema() {
  const NashMoserConfig d;
  const SmoothingSweepSpec sw;
  return {"nash-moser",
          Json{{"seed", nullptr},
               {"grid", grid_json(16, kTwoPi)},
               {"T", d.T},
               {"steps", d.steps},
               {"eta", d.eta},
               {"eta_threshold", d.eta_threshold},
               {"kmax", d.kmax},
               {"p_max", d.p_max},
               {"eps_bar", d.eps_bar},
               {"delta", d.delta},
               {"epsilon", d.epsilon},
               {"N0", d.N0},
               {"theta_prime_scale", d.theta_prime_scale},
               {"weight_k", d.weight_k},
               {"norm_N", d.norm_N},
               {"nonlinear", d.nonlinear},
               {"pressure",
                {{"neumann_tol", d.pressure.neumann_tol},
                 {"max_iters", d.pressure.max_iters},
                 {"contraction_margin", d.pressure.contraction_margin}}},
               {"linear",
                {{"max_sweeps", d.linear.max_sweeps},
                 {"picard_tol", d.linear.picard_tol},
                 {"gauss_nodes", d.linear.gauss_nodes}}},
               {"iterate", true},
               {"checkpoint", ""},
               {"resume", ""},
               {"smoothing_sweep",
                {{"enabled", true},
                 {"thetas", sw.thetas},
                 {"k", sw.k},
                 {"s", sw.s},
                 {"N", sw.N},
                 {"M", sw.M},
                 {"lp", sw.lp},
                 {"sigma", sw.sigma},
                 {"excess", sw.excess},
                 {"T", sw.T},
                 {"steps", sw.steps},
                 {"tolerance", sw.tolerance}}},
               {"gradient_check",
                {{"enabled", true},
                 {"pairs", 5},
                 {"n", 16},
                 {"kmax", 2},
                 {"amplitude", 0.05},
                 {"hs", {1.0, 1e-1, 1e-2, 1e-3, 1e-4}},
                 {"slope_tolerance", 0.1},
                 {"min_decades", 4.0}}},
               {"tolerances", {{"phi_drop", 2.0}, {"ledger", 1e-10}, {"identity_gap", 1e-8}}}},
          {"grid"},
          true};
}

SpectralVectorField scaled_random(const Grid& g, std::uint64_t seed, int kmax, double l2) {
  SpectralVectorField F = dealias(random_smooth_field(g, seed, kmax));
  F *= l2 / l2_norm(F);
  return F;
}

void nm_smoothing(const Json& c, ExperimentOutput& out, const Progress& log) {
  SmoothingSweepSpec sp;
  sp.thetas = c["thetas"].get<std::vector<double>>();
  sp.k = c["k"].get<double>();
  sp.s = c["s"].get<double>();
  sp.N = c["N"].get<int>();
  sp.M = c["M"].get<int>();
  sp.lp = c["lp"].get<double>();
  sp.sigma = c["sigma"].get<double>();
  sp.excess = c["excess"].get<double>();
  sp.T = c["T"].get<double>();
  sp.steps = c["steps"].get<int>();
  sp.tolerance = c["tolerance"].get<double>();
  const auto reps = smoothing_bound_sweep(sp);
  CsvTable t{"smoothing_sweep.csv", {"family", "theta", "ratio"}, {}};
  Json fam = Json::array();
  for (const auto& r : reps) {
    for (std::size_t i = 0; i < r.theta.size(); ++i)
      t.rows.push_back({static_cast<double>(fam.size()), r.theta[i], r.ratio[i]});
    fam.push_back(r.family);
    // Family names start with "<operator> <form>", e.g. "S1 growth".
    std::istringstream words(r.family);
    std::string op, form;
    words >> op >> form;
    out.metric("smoothing_exponent_" + op + "_" + form, r.fitted_exponent, r.expected_exponent,
               "|fit - expected| <= " + fmt(sp.tolerance), std::abs(r.fitted_exponent - r.expected_exponent) <= sp.tolerance,
               r.family + "; spread " + fmt(r.spread));
  }
  const KernelMoments km = s2_kernel_moments();
  out.summary["smoothing_families"] = fam;
  out.summary["kernel_moments"] = {{"zeroth", km.zeroth}, {"second", km.second}, {"second_abs", km.second_abs}};
  out.tables.push_back(std::move(t));
  log("smoothing sweep done");
}

void nm_gradient(const Json& c, std::uint64_t seed, const PressureSolveConfig& pcfg, ExperimentOutput& out,
                 const Progress& log) {
  const Grid g = Grid::cube(c["n"].get<int>(), kTwoPi);
  g.validate();
  const int kmax = c["kmax"].get<int>();
  const double amp = c["amplitude"].get<double>();
  const auto hs = c["hs"].get<std::vector<double>>();
  const double stol = c["slope_tolerance"].get<double>(), decades = c["min_decades"].get<double>();
  const int pairs = c["pairs"].get<int>();
  if (pairs < 1 || kmax < 1 || !(amp > 0)) throw ValidationError("config: gradient_check needs pairs, kmax >= 1, amplitude > 0");
  CsvTable t{"gradient_check.csv", {"pair", "h", "error", "floor"}, {}};
  for (int i = 0; i < pairs; ++i) {
    const std::uint64_t s = seed + 4 * static_cast<std::uint64_t>(i) + 7;
    const GradientCheck gc =
        gradient_check(scaled_random(g, s, kmax, amp), scaled_random(g, s + 1, kmax, amp),
                       scaled_random(g, s + 2, kmax, amp), scaled_random(g, s + 3, kmax, amp), hs, pcfg);
    double hmax = 0, hmin = kInf;
    for (std::size_t k = 0; k < gc.h.size(); ++k) t.rows.push_back({static_cast<double>(i), gc.h[k], gc.error[k], gc.floor});
    // Points above the floor are the ones entering the fit; the floor
    // scales like 1/h, so they are the largest steps.
    const std::size_t used = static_cast<std::size_t>(gc.points_used);
    std::vector<double> sorted = gc.h;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    if (used >= 1) {
      hmax = sorted.front();
      hmin = sorted[used - 1];
    }
    const double span = used >= 2 ? std::log10(hmax / hmin) : 0.0;
    const std::string tag = "pair_" + std::to_string(i);
    out.metric("gradient_slope_" + tag, gc.slope, 1.0, "|slope - 1| <= " + fmt(stol), std::abs(gc.slope - 1) <= stol,
               std::to_string(gc.points_used) + " points above the pressure-tolerance floor");
    out.metric("gradient_decades_" + tag, span, decades, "decades of h above the floor >= " + fmt(decades),
               span >= decades - 1e-9);
  }
  out.tables.push_back(std::move(t));
  log("gradient checks done");
}

void nm_iterate(const Json& cfg, const NashMoserConfig& nc, ExperimentOutput& out, const Progress& log) {
  const Json& tol = cfg["tolerances"];
  IterationHooks hooks;
  hooks.checkpoint_path = cfg["checkpoint"].get<std::string>();
  std::optional<IterationCheckpoint> resume;
  if (const std::string r = cfg["resume"].get<std::string>(); !r.empty()) {
    resume = IterationCheckpoint::load(r);
    hooks.resume = &*resume;
  }
  const InitialPair data = default_nm_data(nc);
  const IterationResult res = iterate(data, nc, hooks);
  log("iteration finished, " + std::to_string(res.stages.size()) + " stages");

  CsvTable t{"nash_moser_stages.csv",
             {"p", "theta", "theta_prime", "phi_norm", "phi_weighted", "g_norm", "x_norm", "x_weighted", "xt_weighted",
              "e_norm", "ledger_residual", "solver_residual", "solver_residual_fd", "identity_gap", "picard_sweeps"},
             {}};
  double ledger = 0, gap = 0;
  for (const auto& s : res.stages) {
    t.rows.push_back({static_cast<double>(s.p), s.theta, s.theta_prime, s.phi_norm, s.phi_weighted, s.g_norm, s.x_norm,
                      s.x_weighted, s.xt_weighted, s.e_norm, s.ledger_residual, s.solver_residual,
                      s.solver_residual_fd, s.identity_gap, static_cast<double>(s.picard_sweeps)});
    ledger = std::max(ledger, s.ledger_residual);
    if (s.p < nc.p_max) gap = std::max(gap, s.identity_gap);
  }
  out.tables.push_back(std::move(t));
  const auto& st = res.stages;
  const std::size_t p3 = std::min<std::size_t>(3, st.size() - 1);
  const double drop = st[0].phi_norm / st[p3].phi_norm;
  out.summary["key_metric"] = "phi_drop_p0_to_p" + std::to_string(p3);
  out.metric("phi_drop_p0_to_p" + std::to_string(p3), drop, tol["phi_drop"].get<double>(),
             ">= " + fmt(tol["phi_drop"].get<double>()), drop >= tol["phi_drop"].get<double>(),
             "||Phi(Y_0)|| / ||Phi(Y_p)|| in L2_t L2_x");
  out.metric("ledger_residual_max", ledger, 0.0, "<= " + fmt(tol["ledger"].get<double>()),
             ledger <= tol["ledger"].get<double>(), "sum g_j + S_p E_p + S_p Phi(Y_0), relative");
  out.metric("identity_gap_max", gap, 0.0, "<= " + fmt(tol["identity_gap"].get<double>()),
             gap <= tol["identity_gap"].get<double>(), "Phi(Y_{p+1}) - Phi(Y_p) - L_p X_p - e_p, relative to g_p");
  // Y_{p+1} - Y_p = X_p: the increments must shrink in every measured norm.
  const std::size_t last = st.size() >= 2 ? st.size() - 2 : 0;
  if (last > 0) {
    double tail = 0;
    for (std::size_t j = 1; j <= last; ++j) tail += st[j].x_norm;
    const double r_l2 = st[last].x_norm / st[0].x_norm;
    const double r_w = st[last].x_weighted / st[0].x_weighted;
    const double r_wt = st[last].xt_weighted / st[0].xt_weighted;
    out.metric("cauchy_increment_ratio_l2", r_l2, 0.0, "< 1", r_l2 < 1, "||X_last|| / ||X_0||");
    out.metric("cauchy_increment_ratio_weighted", r_w, 0.0, "< 1", r_w < 1, "sup (1+t)^k ||X||_{W^{N,2}}");
    out.metric("cauchy_increment_ratio_weighted_dt", r_wt, 0.0, "< 1", r_wt < 1, "sup (1+t)^k ||d_t X||_{W^{N,2}}");
    out.summary["cauchy_tail_ratio_l2"] = tail / st[0].x_norm;
  }
  out.summary["horizon_truncated"] = res.horizon_truncated;
}

ExperimentOutput run_nm(const Json& cfg, const Progress& log) {
  ExperimentOutput out;
  out.subcommand = "nash-moser";
  NashMoserConfig nc;
  nc.grid = grid_from(cfg["grid"]);
  nc.T = cfg["T"].get<double>();
  nc.steps = cfg["steps"].get<int>();
  nc.eta = cfg["eta"].get<double>();
  nc.eta_threshold = cfg["eta_threshold"].get<double>();
  nc.seed = seed_of(cfg);
  nc.kmax = cfg["kmax"].get<int>();
  nc.p_max = cfg["p_max"].get<int>();
  nc.eps_bar = cfg["eps_bar"].get<double>();
  nc.delta = cfg["delta"].get<double>();
  nc.epsilon = cfg["epsilon"].get<double>();
  nc.N0 = cfg["N0"].get<int>();
  nc.theta_prime_scale = cfg["theta_prime_scale"].get<double>();
  nc.weight_k = cfg["weight_k"].get<double>();
  nc.norm_N = cfg["norm_N"].get<int>();
  nc.nonlinear = cfg["nonlinear"].get<bool>();
  nc.pressure.neumann_tol = cfg["pressure"]["neumann_tol"].get<double>();
  nc.pressure.max_iters = cfg["pressure"]["max_iters"].get<int>();
  nc.pressure.contraction_margin = cfg["pressure"]["contraction_margin"].get<double>();
  nc.linear.max_sweeps = cfg["linear"]["max_sweeps"].get<int>();
  nc.linear.picard_tol = cfg["linear"]["picard_tol"].get<double>();
  nc.linear.gauss_nodes = cfg["linear"]["gauss_nodes"].get<int>();
  nc.validate();

  if (cfg["smoothing_sweep"]["enabled"].get<bool>()) nm_smoothing(cfg["smoothing_sweep"], out, log);
  if (cfg["gradient_check"]["enabled"].get<bool>()) nm_gradient(cfg["gradient_check"], nc.seed, nc.pressure, out, log);
  if (cfg["iterate"].get<bool>()) nm_iterate(cfg, nc, out, log);
  return out;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

std::string pad(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

}  // namespace

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"linear-decay", "duhamel", "symbol-bounds", "norms-selftest",
                                              "lagrangian",   "mhd-run", "nash-moser"};
  return names;
}

ConfigSchema experiment_schema(const std::string& sub) {
  if (sub == "linear-decay") return linear_decay_schema();
  if (sub == "duhamel") return duhamel_schema();
  if (sub == "symbol-bounds") return symbol_bounds_schema();
  if (sub == "norms-selftest") return norms_schema();
  if (sub == "lagrangian") return lagrangian_schema();
  if (sub == "mhd-run") return mhd_schema();
  if (sub == "nash-moser") return nm_schema();
  throw ValidationError("unknown subcommand '" + sub + "'");
}

ExperimentOutput run_experiment(const Json& cfg, std::ostream* log) {
  const std::string sub = cfg.at("subcommand").get<std::string>();
  const Progress p(log);
  p("running " + sub);
  if (sub == "linear-decay") return run_linear_decay(cfg, p);
  if (sub == "duhamel") return run_duhamel(cfg, p);
  if (sub == "symbol-bounds") return run_symbol_bounds(cfg, p);
  if (sub == "norms-selftest") return run_norms(cfg, p);
  if (sub == "lagrangian") return run_lagrangian(cfg, p);
  if (sub == "mhd-run") return run_mhd(cfg, p);
  if (sub == "nash-moser") return run_nm(cfg, p);
  throw ValidationError("unknown subcommand '" + sub + "'");
}

ReportResult build_report(const std::vector<std::string>& inputs) {
  namespace fs = std::filesystem;
  ReportResult r;
  r.out.subcommand = "report";
  std::vector<fs::path> files;
  Json missing = Json::array();
  for (const auto& in : inputs) {
    const fs::path p(in);
    std::error_code ec;
    if (fs::is_regular_file(p, ec)) {
      files.push_back(p);
    } else if (fs::is_directory(p, ec)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::recursive_directory_iterator(p, ec))
        if (e.is_regular_file() && e.path().filename() == "summary.json") found.push_back(e.path());
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      missing.push_back(in);
    }
  }

  const auto num = [](const Json& v) { return v.is_number() ? format_double(v.get<double>()) : std::string("nan"); };
  std::ostringstream txt, csv;
  txt << pad("experiment", 16) << pad("key metric", 36) << pad("value", 26) << pad("reference", 26)
      << pad("checks", 8) << "pass\n";
  csv << "experiment,key_metric,value,reference,checks_passed,checks_total,pass,config_hash,source\n";
  Json rows = Json::array();
  int failed = 0;
  for (const auto& f : files) {
    Json s;
    try {
      s = load_json_file(f.string());
      // Earlier reports written into the scanned tree are not experiments.
      if (s.value("subcommand", "") == "report") continue;
      if (!s.contains("subcommand") || !s.contains("metrics") || !s["metrics"].is_array() || s["metrics"].empty())
        throw ValidationError("no subcommand or metrics");
    } catch (const std::exception& e) {
      missing.push_back(f.string() + ": " + e.what());
      continue;
    }
    const Json& ms = s["metrics"];
    Json key = ms.front();
    if (s.contains("key_metric"))
      for (const auto& m : ms)
        if (m.value("name", "") == s["key_metric"]) key = m;
    int passed = 0;
    for (const auto& m : ms) passed += m.value("pass", false) ? 1 : 0;
    const int total = static_cast<int>(ms.size());
    const bool pass = passed == total;
    if (!pass) ++failed;
    const std::string exp = s["subcommand"].get<std::string>(), kname = key.value("name", "?");
    const std::string checks = std::to_string(passed) + "/" + std::to_string(total);
    txt << pad(exp, 16) << pad(kname, 36) << pad(num(key["value"]), 26) << pad(num(key["reference"]), 26)
        << pad(checks, 8) << (pass ? "yes" : "NO") << '\n';
    csv << exp << ',' << kname << ',' << num(key["value"]) << ',' << num(key["reference"]) << ',' << passed << ','
        << total << ',' << (pass ? 1 : 0) << ',' << s.value("config_hash", "") << ',' << f.generic_string() << '\n';
    rows.push_back({{"experiment", exp},
                    {"source", f.generic_string()},
                    {"config_hash", s.value("config_hash", "")},
                    {"key_metric", kname},
                    {"value", key["value"]},
                    {"reference", key["reference"]},
                    {"checks_passed", passed},
                    {"checks_total", total},
                    {"pass", pass}});
  }
  if (files.empty() && missing.empty()) r.out.warnings.push_back("no summary.json found; the report is empty");
  for (const auto& m : missing) txt << "missing or unreadable: " << m.get<std::string>() << '\n';
  r.out.summary["rows"] = rows;
  r.out.summary["missing"] = missing;
  r.out.summary["failed_experiments"] = failed;
  r.out.text_files.push_back({"report.txt", txt.str()});
  r.out.text_files.push_back({"report.csv", csv.str()});
  r.text = txt.str();
  r.exit_code = !missing.empty() ? 2 : failed > 0 ? 1 : 0;
  return r;
}

}  // namespace mhdlab
