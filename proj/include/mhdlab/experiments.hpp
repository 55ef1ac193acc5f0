#pragma once
// Drivers behind the command-line subcommands. Each takes a resolved config
// (see experiment_schema) and returns everything it measured in memory; the
// caller decides where the artifacts go.

#include <iosfwd>
#include <string>
#include <vector>

#include "mhdlab/artifacts.hpp"

namespace mhdlab {

/// linear-decay, duhamel, symbol-bounds, norms-selftest, lagrangian,
/// mhd-run, nash-moser.
const std::vector<std::string>& experiment_names();

/// Defaults and required keys of one subcommand; ValidationError for an
/// unknown name.
ConfigSchema experiment_schema(const std::string& subcommand);

/// Runs the subcommand named in resolved["subcommand"]. Progress lines go
/// to `log` when it is non-null. Throws ValidationError for bad parameters
/// and NumericalAbort for failed computations; failed checks are recorded
/// in the metrics instead.
ExperimentOutput run_experiment(const Json& resolved, std::ostream* log = nullptr);

struct ReportResult {
  ExperimentOutput out;
  std::string text;   ///< aligned table, one row per metric
  int exit_code = 0;  ///< 0 all pass or nothing found, 1 a failed metric, 2 a missing or malformed input
};

/// Collects every summary.json under the given files or directories.
ReportResult build_report(const std::vector<std::string>& inputs);

}  // namespace mhdlab
