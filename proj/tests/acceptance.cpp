// Acceptance runner. `acceptance --criterion N` checks one criterion,
// `acceptance` checks all ten. Each criterion prints one verdict line
// followed by indented metric lines; the exit status is 0 only if every
// selected criterion passed, including its runtime budget.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mhdlab/artifacts.hpp"
#include "mhdlab/experiments.hpp"
#include "mhdlab/spectral_core.hpp"

using namespace mhdlab;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::vector<std::string> lines;

  void take(const Json& m) {
    const bool ok = m["pass"].get<bool>();
    pass = pass && ok;
    std::ostringstream os;
    os << (ok ? "ok   " : "FAIL ") << m["name"].get<std::string>() << " = "
       << (m["value"].is_number() ? format_double(m["value"].get<double>()) : "nan") << " (reference "
       << (m["reference"].is_number() ? format_double(m["reference"].get<double>()) : "nan") << "; "
       << m["criterion"].get<std::string>() << ")";
    if (m.contains("note")) os << " [" << m["note"].get<std::string>() << "]";
    lines.push_back(os.str());
  }
  void note(const std::string& s) { lines.push_back("info " + s); }
  void fail(const std::string& s) {
    pass = false;
    lines.push_back("FAIL " + s);
  }
};

ExperimentOutput run(const std::string& sub, const Json& overrides, std::optional<std::uint64_t> seed = std::nullopt) {
  const Json cfg = resolve_config(experiment_schema(sub), &overrides, seed);
  return run_experiment(cfg);
}

/// Takes every metric whose name starts with one of the prefixes.
void take(Verdict& v, const ExperimentOutput& out, const std::vector<std::string>& prefixes) {
  int n = 0;
  for (const auto& m : out.summary["metrics"]) {
    const std::string name = m["name"].get<std::string>();
    for (const auto& p : prefixes) {
      if (name.rfind(p, 0) == 0) {
        v.take(m);
        ++n;
        break;
      }
    }
  }
  if (n == 0) v.fail("no metric matched");
}

Json grid(int n, double l) { return Json{{"n", {n, n, n}}, {"l", {l, l, l}}}; }

Verdict c1() {
  Verdict v;
  take(v, run("linear-decay", Json::object()), {"exponent_"});
  return v;
}

Verdict c2() {
  Verdict v;
  const ExperimentOutput out = run("linear-decay", Json::object());
  take(v, out, {"weighted_l2_max_ratio"});
  v.note("smallest ratio to the t = 10 value: " + format_double(out.summary["weighted_l2_min_ratio"].get<double>()));
  return v;
}

Verdict c3() {
  Verdict v;
  take(v, run("symbol-bounds", Json::object()), {"change_"});
  return v;
}

Verdict c4() {
  Verdict v;
  take(v, run("duhamel", Json::object()), {"exponent_duhamel"});
  return v;
}

Verdict c5() {
  Verdict v;
  const ExperimentOutput out = run("norms-selftest", Json{{"grid", grid(16, 2 * kPi)}}, 1);
  take(v, out, {"partition_", "besov_", "spread_"});
  v.note("B^0_{2,2} = " + format_double(out.summary["besov_0_2_2"].get<double>()) +
         ", L2 = " + format_double(out.summary["l2"].get<double>()));
  return v;
}

Verdict c6() {
  Verdict v;
  take(v, run("lagrangian", Json::object()), {""});
  return v;
}

Verdict c7() {
  Verdict v;
  const ExperimentOutput out = run("mhd-run", Json{{"grid", grid(64, 8 * kPi)}, {"T", 20.0}}, 1);
  take(v, out, {""});
  const auto& w = out.summary["decay_window"];
  v.note("torus-valid fit window [" + format_double(w[0].get<double>()) + ", " + format_double(w[1].get<double>()) +
         "]; whole-space rates are references only");
  for (const auto& e : out.summary["decay_entries"])
    v.note(e["quantity"].get<std::string>() + " slope " + format_double(e["exponent"].get<double>()) +
           " (whole-space reference " + format_double(e["reference"].get<double>()) + ")");
  for (const auto& w2 : out.warnings) v.fail("solver warning: " + w2);
  return v;
}

Verdict c8() {
  Verdict v;
  take(v,
       run("nash-moser",
           Json{{"grid", grid(16, 2 * kPi)}, {"iterate", false}, {"smoothing_sweep", {{"enabled", false}}}}, 1),
       {"gradient_"});
  return v;
}

Verdict c9() {
  Verdict v;
  const ExperimentOutput out =
      run("nash-moser",
          Json{{"grid", grid(16, 2 * kPi)}, {"T", 4.0}, {"eta", 1e-3}, {"p_max", 4}, {"gradient_check", {{"enabled", false}}}},
          1);
  take(v, out, {"smoothing_", "phi_drop", "ledger_", "identity_gap", "cauchy_"});
  v.note("the horizon [0, T] stands in for [0, infinity)");
  return v;
}

// ---------------------------------------------------------------------------
// Criterion 10: golden runs through the command-line binary.
// ---------------------------------------------------------------------------

int shell(const std::string& cmd) {
  const int rc = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

Verdict c10() {
  Verdict v;
  const fs::path root = fs::temp_directory_path() / ("mhdlab_golden_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  struct Golden {
    std::string sub;
    Json config;
    bool seeded;
  };
  const double tau = 2 * kPi;
  const std::vector<Golden> runs{
      {"linear-decay", Json::object(), false},
      {"duhamel", Json::object(), false},
      {"symbol-bounds", Json::object(), false},
      {"norms-selftest", Json{{"grid", grid(16, tau)}}, true},
      {"lagrangian", Json::object(), false},
      {"mhd-run",
       Json{{"grid", grid(16, 2 * tau)}, {"T", 4.0}, {"diagnostics_stride", 2}, {"initial", {{"kmax", 3}}}},
       true},
      {"nash-moser",
       Json{{"grid", grid(8, tau)},
            {"T", 2.0},
            {"steps", 40},
            {"p_max", 2},
            {"smoothing_sweep", {{"thetas", {8.0, 16.0, 32.0}}, {"T", 128.0}, {"steps", 512}}},
            {"gradient_check", {{"pairs", 2}, {"n", 8}}}},
       true},
  };
  for (const auto& g : runs) {
    const fs::path cfg = root / (g.sub + ".json");
    std::ofstream(cfg) << g.config.dump(2);
    std::vector<fs::path> dirs{root / "a" / g.sub, root / "b" / g.sub};
    bool ok = true;
    for (const auto& d : dirs) {
      const std::string cmd = std::string("'") + MHDLAB_CLI_PATH + "' " + g.sub + " --config '" + cfg.string() +
                              "' --out '" + d.string() + "'" + (g.seeded ? " --seed 20261015" : "");
      if (const int rc = shell(cmd); rc != 0) {
        v.fail(g.sub + ": exit code " + std::to_string(rc));
        ok = false;
      }
    }
    if (!ok) continue;
    int files = 0;
    for (const auto& e : fs::directory_iterator(dirs[0])) {
      ++files;
      const fs::path other = dirs[1] / e.path().filename();
      if (!fs::exists(other) || slurp(e.path()) != slurp(other)) {
        v.fail(g.sub + ": " + e.path().filename().string() + " differs between executions");
        ok = false;
      }
    }
    if (ok) v.note(g.sub + ": " + std::to_string(files) + " files byte-identical");
  }
  // The consolidated report is reproducible too.
  for (const char* side : {"report_a", "report_b"})
    shell(std::string("'") + MHDLAB_CLI_PATH + "' report '" + (root / "a").string() + "' --out '" +
          (root / side).string() + "'");
  for (const char* f : {"report.csv", "report.txt", "summary.json"}) {
    const fs::path a = root / "report_a" / f, b = root / "report_b" / f;
    if (!fs::exists(a) || slurp(a) != slurp(b)) v.fail(std::string("report ") + f + " differs");
  }
  fs::remove_all(root);
  return v;
}

struct Criterion {
  const char* title;
  double budget_s;
  std::function<Verdict()> check;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> c{
      {"linear anisotropic decay exponents", 300, c1},
      {"weighted L2 boundedness", 60, c2},
      {"symbol bounds stable under refinement", 60, c3},
      {"Duhamel decay exponent", 120, c4},
      {"Littlewood-Paley self-test", 60, c5},
      {"Lagrangian construction", 120, c6},
      {"nonlinear MHD solver diagnostics", 900, c7},
      {"f' gradient check", 180, c8},
      {"Nash-Moser scheme", 1200, c9},
      {"determinism of golden runs", 1800, c10},
  };
  return c;
}

bool check(int n) {
  const Criterion& c = criteria()[static_cast<std::size_t>(n - 1)];
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = c.check();
  } catch (const std::exception& e) {
    v.fail(std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  char budget[96];
  std::snprintf(budget, sizeof(budget), "%.1f s of %.0f s budget", secs, c.budget_s);
  if (secs > c.budget_s) v.fail(std::string("runtime ") + budget);
  std::cout << "criterion " << n << ": " << (v.pass ? "PASS" : "FAIL") << "  " << c.title << " (" << budget << ")\n";
  for (const auto& l : v.lines) std::cout << "    " << l << '\n';
  std::cout.flush();
  return v.pass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  int which = 0;
  app.add_option("--criterion", which, "Criterion number 1-10; all when omitted")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  bool ok = true;
  if (which > 0) {
    ok = check(which);
  } else {
    for (int n = 1; n <= static_cast<int>(criteria().size()); ++n) ok = check(n) && ok;
  }
  return ok ? 0 : 1;
}
