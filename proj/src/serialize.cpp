#include "roundcert/serialize.hpp"

#include <json.hpp>

#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

namespace roundcert {

using Json = nlohmann::ordered_json;

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string to_hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

RunManifest make_manifest(const std::string& program_text, const std::string& command,
                          const std::string& parameters) {
  RunManifest m;
  m.program_digest = to_hex(fnv1a64(program_text));
  m.command = command;
  m.parameters = parameters;
  if (const char* pinned = std::getenv("ROUNDCERT_TIMESTAMP")) {
    m.timestamp = pinned;
  } else {
    std::time_t now = std::time(nullptr);
    std::tm utc{};
    gmtime_r(&now, &utc);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
    m.timestamp = buf;
  }
  return m;
}

namespace {

Json manifest_json(const RunManifest& m) {
  return Json{{"program_digest", m.program_digest},
              {"tool_version", m.tool_version},
              {"command", m.command},
              {"parameters", m.parameters},
              {"timestamp", m.timestamp}};
}

RunManifest manifest_from(const Json& j) {
  RunManifest m;
  m.program_digest = j.at("program_digest").get<std::string>();
  m.tool_version = j.at("tool_version").get<std::string>();
  m.command = j.at("command").get<std::string>();
  m.parameters = j.at("parameters").get<std::string>();
  m.timestamp = j.value("timestamp", "");
  return m;
}

// rational fields travel as (double, exact-string) pairs; the string wins
void put_exact(Json& j, const std::string& key, const Rational& v) {
  j[key] = to_double(v);
  j[key + "_exact"] = to_exact_string(v);
}

Rational get_exact(const Json& j, const std::string& key) {
  return parse_number(j.at(key + "_exact").get<std::string>());
}

Json parse_document(const std::string& text, const char* schema, const char* what) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const std::exception&) {
    throw Error(std::string("malformed ") + what + " document");
  }
  if (!j.is_object() || j.value("schema", "") != schema)
    throw Error(std::string("not a ") + what + " document (schema mismatch)");
  return j;
}

}  // namespace

// ==================== certificate documents =====================

std::string certificate_to_json(const Certificate& c, const RunManifest& m) {
  Json j;
  j["schema"] = kCertificateSchema;
  j["manifest"] = manifest_json(m);
  put_exact(j, "epsilon", c.epsilon);
  j["steps"] = c.steps;
  j["mode"] = to_string(c.mode);
  j["binding"] = to_string(c.binding);
  put_exact(j, "failure_bound", c.failure_bound);
  put_exact(j, "success_bound", c.success_bound);
  put_exact(j, "total_variance", c.total_variance);
  put_exact(j, "drift_worst_case", c.drift_worst_case);
  put_exact(j, "worst_case_total", c.worst_case_total);
  j["assumptions"] = c.assumptions;
  return j.dump(2) + "\n";
}

Certificate certificate_from_json(const std::string& text, RunManifest* manifest) {
  Json j = parse_document(text, kCertificateSchema, "certificate");
  try {
    if (manifest) *manifest = manifest_from(j.at("manifest"));
    Certificate c;
    c.epsilon = get_exact(j, "epsilon");
    c.steps = j.at("steps").get<std::uint64_t>();
    c.mode = j.at("mode").get<std::string>() == "worst_case_only" ? CertificateMode::WorstCaseOnly
                                                                  : CertificateMode::Stochastic;
    c.binding = j.at("binding").get<std::string>() == "deterministic" ? BindingBound::Deterministic
                                                                      : BindingBound::Stochastic;
    c.failure_bound = get_exact(j, "failure_bound");
    c.success_bound = get_exact(j, "success_bound");
    c.total_variance = get_exact(j, "total_variance");
    c.drift_worst_case = get_exact(j, "drift_worst_case");
    c.worst_case_total = get_exact(j, "worst_case_total");
    c.assumptions = j.at("assumptions").get<std::vector<std::string>>();
    return c;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    throw Error("malformed certificate document");
  }
}

// ==================== simulation report documents =====================

std::string simreport_to_json(const SimReport& r, const RunManifest& m) {
  Json j;
  j["schema"] = kSimReportSchema;
  j["manifest"] = manifest_json(m);
  j["mode"] = to_string(r.mode);
  j["trials"] = r.trials;
  j["steps"] = r.steps;
  j["seed"] = r.seed;
  Json rows = Json::array();
  for (const GridRow& row : r.rows) {
    Json rj;
    put_exact(rj, "epsilon", row.epsilon);
    put_exact(rj, "bound", row.bound);
    rj["frequency"] = row.frequency;
    rj["stderr"] = row.stderr_value;
    rj["verdict"] = to_string(row.verdict);
    rows.push_back(std::move(rj));
  }
  j["rows"] = std::move(rows);
  j["sample_final_variance"] = r.sample_final_variance;
  j["model_final_variance"] = r.model_final_variance;
  j["mean_final_error"] = r.mean_final_error;
  j["drift_bound"] = r.drift_bound;
  j["drift_consistent"] = r.drift_consistent;
  return j.dump(2) + "\n";
}

SimReport simreport_from_json(const std::string& text, RunManifest* manifest) {
  Json j = parse_document(text, kSimReportSchema, "simulation report");
  try {
    if (manifest) *manifest = manifest_from(j.at("manifest"));
    SimReport r;
    r.mode = j.at("mode").get<std::string>() == "concrete" ? SimMode::Concrete : SimMode::Abstract;
    r.trials = j.at("trials").get<std::uint64_t>();
    r.steps = j.at("steps").get<std::uint64_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const Json& rj : j.at("rows")) {
      GridRow row;
      row.epsilon = get_exact(rj, "epsilon");
      row.bound = get_exact(rj, "bound");
      row.frequency = rj.at("frequency").get<double>();
      row.stderr_value = rj.at("stderr").get<double>();
      std::string v = rj.at("verdict").get<std::string>();
      row.verdict = v == "sound"      ? GridVerdict::Sound
                    : v == "violated" ? GridVerdict::Violated
                                      : GridVerdict::Inconclusive;
      r.rows.push_back(std::move(row));
    }
    r.sample_final_variance = j.at("sample_final_variance").get<double>();
    r.model_final_variance = j.at("model_final_variance").get<double>();
    r.mean_final_error = j.at("mean_final_error").get<double>();
    r.drift_bound = j.at("drift_bound").get<double>();
    r.drift_consistent = j.at("drift_consistent").get<bool>();
    return r;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    throw Error("malformed simulation report document");
  }
}

}  // namespace roundcert
