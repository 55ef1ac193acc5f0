#pragma once
// Experiment configs and machine-readable outputs: schema-checked JSON
// configs, a stable config hash, CSV tables with 17 significant digits and
// JSON summaries that both embed the hash.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace mhdlab {

using Json = nlohmann::json;

/// Defaults, keys a config file must name, and whether a seed is required.
struct ConfigSchema {
  std::string subcommand;
  Json defaults;
  std::vector<std::string> required;  ///< top-level keys a config file must contain
  bool randomized = false;
};

/// Merges `user` (may be null) over the schema defaults. Throws
/// ValidationError on unknown keys (reported with their dotted path), type
/// mismatches, a missing required key, a subcommand mismatch, or a missing
/// seed for a randomized schema. `seed_flag` overrides the config seed.
Json resolve_config(const ConfigSchema& schema, const Json* user, std::optional<std::uint64_t> seed_flag);

/// Parses a JSON file; ValidationError on I/O or syntax errors.
Json load_json_file(const std::string& path);

/// 64-bit FNV-1a of the compact dump, as 16 hex digits. Object keys are
/// dumped in sorted order, so the hash does not depend on file key order.
std::string config_hash(const Json& resolved);

/// "%.17g"; "nan", "inf", "-inf" for non-finite values.
std::string format_double(double v);

struct CsvTable {
  std::string file;  ///< file name inside the output directory
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// "# config_hash=<hash>" line, header, then rows.
  [[nodiscard]] std::string render(const std::string& hash) const;
};

/// Everything a subcommand produces, held in memory until written.
struct ExperimentOutput {
  std::string subcommand;
  Json summary = Json::object();
  std::vector<CsvTable> tables;
  /// Free-form text files (file name, body); written after a
  /// "# config_hash=<hash>" line.
  std::vector<std::pair<std::string, std::string>> text_files;
  std::vector<std::string> warnings;

  /// One checked quantity. `pass` is recorded, never forced.
  void metric(const std::string& name, double value, double reference, const std::string& criterion, bool pass,
              const std::string& note = "");
  [[nodiscard]] bool all_pass() const;
};

/// Writes summary.json, config.json, every table and text file, and a
/// plotting stub when there are tables, into `dir` (created if needed). The summary gets "subcommand", "config_hash",
/// "pass" and "warnings" entries.
void write_artifacts(const std::string& dir, const ExperimentOutput& out, const Json& resolved_config);

/// Text of the plotting stub for the given tables.
std::string plot_stub(const ExperimentOutput& out, const std::string& hash);

}  // namespace mhdlab
