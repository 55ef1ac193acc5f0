// Command-line runner: one subcommand per experiment plus `report`.
//
// Exit codes: 0 run completed (failed checks are recorded in summary.json,
// not in the exit code), 2 validation error, 3 numerical abort. `report`
// exits 1 when any summarized experiment failed a check and 2 when an input
// is missing or unreadable.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mhdlab/artifacts.hpp"
#include "mhdlab/experiments.hpp"
#include "mhdlab/spectral_core.hpp"

namespace fs = std::filesystem;
using namespace mhdlab;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

struct Options {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool verbose = false;
  bool print_config = false;
  std::vector<std::string> inputs;
};

std::string output_dir(const std::string& flag, const std::string& sub) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("MHDLAB_OUT_DIR"); env && *env) return (fs::path(env) / sub).string();
  return (fs::path("mhdlab_out") / sub).string();
}

int run_one(const std::string& sub, const Options& o, bool seed_given) {
  Json user;
  const Json* up = nullptr;
  if (!o.config.empty()) {
    user = load_json_file(o.config);
    up = &user;
  }
  const Json resolved =
      resolve_config(experiment_schema(sub), up, seed_given ? std::optional<std::uint64_t>(o.seed) : std::nullopt);
  if (o.print_config) {
    std::cout << resolved.dump(2) << '\n';
    return 0;
  }
  const ExperimentOutput out = run_experiment(resolved, o.verbose ? &std::cerr : nullptr);
  const std::string dir = output_dir(o.out, sub);
  write_artifacts(dir, out, resolved);
  int passed = 0, total = 0;
  for (const auto& m : out.summary.value("metrics", Json::array())) {
    const bool ok = m["pass"].get<bool>();
    passed += ok ? 1 : 0;
    ++total;
    std::cout << (ok ? "PASS " : "FAIL ") << m["name"].get<std::string>() << " = "
              << (m["value"].is_number() ? format_double(m["value"].get<double>()) : std::string("nan")) << "  ("
              << m["criterion"].get<std::string>() << ")\n";
  }
  for (const auto& w : out.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << sub << ": " << passed << "/" << total << " checks passed; artifacts in " << dir
            << " (config_hash " << config_hash(resolved) << ")\n";
  return 0;
}

int run_report(const Options& o) {
  if (o.inputs.empty()) throw ValidationError("report: give at least one summary file or directory");
  ReportResult r = build_report(o.inputs);
  const Json cfg{{"subcommand", "report"}, {"inputs", o.inputs}};
  const std::string dir = output_dir(o.out, "report");
  write_artifacts(dir, r.out, cfg);
  std::cout << r.text;
  for (const auto& w : r.out.warnings) std::cerr << "warning: " << w << '\n';
  if (o.verbose) std::cerr << "report written to " << dir << '\n';
  return r.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical experiments for the perturbed-equilibrium MHD system"};
  app.require_subcommand(1);
  Options o;
  std::vector<std::pair<CLI::App*, CLI::Option*>> subs;
  for (const auto& name : experiment_names()) {
    CLI::App* s = app.add_subcommand(name, "Run the " + name + " experiment");
    s->add_option("--config", o.config, "JSON config; keys not given keep their defaults")->check(CLI::ExistingFile);
    s->add_option("--out", o.out, "Output directory (default $MHDLAB_OUT_DIR/<subcommand> or mhdlab_out/<subcommand>)");
    CLI::Option* seed = s->add_option("--seed", o.seed, "Seed for randomized inputs; overrides the config");
    s->add_flag("--verbose", o.verbose, "Progress messages on stderr");
    s->add_flag("--print-config", o.print_config, "Print the resolved config and exit");
    subs.emplace_back(s, seed);
  }
  CLI::App* rep = app.add_subcommand("report", "Consolidate summary.json files into one table");
  rep->add_option("inputs", o.inputs, "summary.json files or directories searched recursively");
  rep->add_option("--out", o.out, "Output directory for report.txt / report.csv");
  rep->add_flag("--verbose", o.verbose, "Progress messages on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (rep->parsed()) return run_report(o);
    for (const auto& [s, seed] : subs)
      if (s->parsed()) return run_one(s->get_name(), o, seed->count() > 0);
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const Json::exception& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NumericalAbort& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitValidation;
}
