#include "mhdlab/artifacts.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mhdlab/spectral_core.hpp"

namespace mhdlab {

namespace {

const char* type_name(const Json& j) {
  switch (j.type()) {
    case Json::value_t::null: return "null";
    case Json::value_t::object: return "object";
    case Json::value_t::array: return "array";
    case Json::value_t::string: return "string";
    case Json::value_t::boolean: return "boolean";
    case Json::value_t::number_integer:
    case Json::value_t::number_unsigned: return "integer";
    case Json::value_t::number_float: return "number";
    default: return "value";
  }
}

bool compatible(const Json& def, const Json& val) {
  if (def.is_null()) return true;  // optional value without a typed default
  if (def.is_number_float()) return val.is_number();
  if (def.is_number_integer()) return val.is_number_integer();
  if (def.is_boolean()) return val.is_boolean();
  if (def.is_string()) return val.is_string();
  if (def.is_object()) return val.is_object();
  if (def.is_array()) {
    if (!val.is_array()) return false;
    if (def.empty()) return true;
    for (const auto& e : val)
      if (!compatible(def.front(), e)) return false;
    return true;
  }
  return false;
}

void merge(Json& target, const Json& user, const std::string& prefix) {
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!target.contains(it.key())) throw ValidationError("config: unknown key '" + path + "'");
    Json& def = target[it.key()];
    if (!compatible(def, it.value())) {
      throw ValidationError("config: key '" + path + "' must be " + type_name(def) + ", got " +
                            type_name(it.value()));
    }
    if (def.is_object() && !def.empty()) {
      merge(def, it.value(), path);
    } else {
      def = it.value();
    }
  }
}

}  // namespace

Json resolve_config(const ConfigSchema& schema, const Json* user, std::optional<std::uint64_t> seed_flag) {
  Json out = schema.defaults;
  if (user) {
    if (!user->is_object()) throw ValidationError("config: top level must be a JSON object");
    Json body = *user;
    if (body.contains("subcommand")) {
      if (!body["subcommand"].is_string() || body["subcommand"].get<std::string>() != schema.subcommand) {
        throw ValidationError("config: written for subcommand " + body["subcommand"].dump() + ", not '" +
                              schema.subcommand + "'");
      }
      body.erase("subcommand");
    }
    for (const auto& k : schema.required) {
      if (!body.contains(k)) throw ValidationError("config: missing required key '" + k + "'");
    }
    merge(out, body, "");
  }
  if (schema.randomized) {
    if (seed_flag) {
      out["seed"] = *seed_flag;
    } else if (!out.contains("seed") || out["seed"].is_null()) {
      throw ValidationError("config: '" + schema.subcommand + "' uses random data; a seed is mandatory (--seed)");
    }
    if (!out["seed"].is_number_unsigned() && !(out["seed"].is_number_integer() && out["seed"].get<long long>() >= 0)) {
      throw ValidationError("config: seed must be a non-negative integer");
    }
  }
  out["subcommand"] = schema.subcommand;
  return out;
}

Json load_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("config: cannot open '" + path + "'");
  try {
    return Json::parse(is);
  } catch (const Json::parse_error& e) {
    throw ValidationError("config: '" + path + "' is not valid JSON: " + e.what());
  }
}

std::string config_hash(const Json& resolved) {
  const std::string s = resolved.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string CsvTable::render(const std::string& hash) const {
  std::ostringstream os;
  os << "# config_hash=" << hash << '\n';
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << '\n';
  for (const auto& r : rows) {
    if (r.size() != header.size()) throw ValidationError("csv: row width differs from the header in " + file);
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << format_double(r[i]);
    os << '\n';
  }
  return os.str();
}

void ExperimentOutput::metric(const std::string& name, double value, double reference, const std::string& criterion,
                              bool pass, const std::string& note) {
  Json m;
  m["name"] = name;
  m["value"] = value;
  m["reference"] = reference;
  m["criterion"] = criterion;
  m["pass"] = pass;
  if (!note.empty()) m["note"] = note;
  summary["metrics"].push_back(m);
}

bool ExperimentOutput::all_pass() const {
  if (!summary.contains("metrics")) return true;
  for (const auto& m : summary["metrics"])
    if (!m["pass"].get<bool>()) return false;
  return true;
}

std::string plot_stub(const ExperimentOutput& out, const std::string& hash) {
  std::ostringstream os;
  os << "# Plotting stub for '" << out.subcommand << "' (config_hash=" << hash << ").\n"
     << "# Generated text only; run it yourself where matplotlib is available.\n"
     << "import csv, sys\n"
     << "import matplotlib.pyplot as plt\n\n"
     << "def load(path):\n"
     << "    with open(path) as f:\n"
     << "        rows = [r for r in csv.reader(l for l in f if not l.startswith('#'))]\n"
     << "    head, body = rows[0], rows[1:]\n"
     << "    return head, [[float(x) for x in r] for r in body]\n\n";
  for (const auto& t : out.tables) {
    os << "head, body = load('" << t.file << "')\n"
       << "plt.figure()\n"
       << "for j in range(1, len(head)):\n"
       << "    plt.loglog([r[0] for r in body], [abs(r[j]) for r in body], label=head[j])\n"
       << "plt.xlabel(head[0]); plt.legend(); plt.title('" << t.file << "')\n"
       << "plt.savefig('" << t.file << ".png')\n\n";
  }
  return os.str();
}

void write_artifacts(const std::string& dir, const ExperimentOutput& out, const Json& resolved_config) {
  namespace fs = std::filesystem;
  const std::string hash = config_hash(resolved_config);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ValidationError("output: cannot create directory '" + dir + "': " + ec.message());
  auto put = [&](const std::string& name, const std::string& text) {
    std::ofstream os(fs::path(dir) / name, std::ios::binary | std::ios::trunc);
    if (!os) throw ValidationError("output: cannot write '" + (fs::path(dir) / name).string() + "'");
    os << text;
  };
  Json summary = out.summary;
  summary["subcommand"] = out.subcommand;
  summary["config_hash"] = hash;
  summary["pass"] = out.all_pass();
  summary["warnings"] = out.warnings;
  for (const auto& t : out.tables) put(t.file, t.render(hash));
  for (const auto& [name, body] : out.text_files) put(name, "# config_hash=" + hash + "\n" + body);
  Json cfg = resolved_config;
  cfg["config_hash"] = hash;
  put("config.json", cfg.dump(2) + "\n");
  put("summary.json", summary.dump(2) + "\n");
  if (!out.tables.empty()) put("plot_" + out.subcommand + ".py", plot_stub(out, hash));
}

}  // namespace mhdlab
