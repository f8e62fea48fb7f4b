#pragma once

#include "roundcert/bounds.hpp"
#include "roundcert/montecarlo.hpp"

#include <cstdint>
#include <string>

namespace roundcert {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kCertificateSchema = "roundcert-certificate-1";
inline constexpr const char* kSimReportSchema = "roundcert-simreport-1";

/// FNV-1a over the bytes: the fingerprint that pairs certificates and
/// reports with the exact program text they were produced from.
std::uint64_t fnv1a64(const std::string& bytes);

/// 16 lowercase hex digits.
std::string to_hex(std::uint64_t v);

/// Whole file as bytes; throws with the path on failure.
std::string read_file(const std::string& path);

/// Provenance block embedded in every emitted document. The timestamp is
/// taken from ROUNDCERT_TIMESTAMP when set (reproducible builds), else
/// from the wall clock; everything else is a pure function of the run.
struct RunManifest {
  std::string program_digest;
  std::string tool_version = kToolVersion;
  std::string command;
  std::string parameters;
  std::string timestamp;
};

RunManifest make_manifest(const std::string& program_text, const std::string& command,
                          const std::string& parameters);

/// Certificates and reports serialize as versioned JSON. Every rational
/// field carries a double rendering for consumers plus an "_exact" twin
/// (exact decimal or num/den) that is authoritative on parse, so a
/// round-trip loses nothing.
std::string certificate_to_json(const Certificate& c, const RunManifest& m);
Certificate certificate_from_json(const std::string& text, RunManifest* manifest = nullptr);

std::string simreport_to_json(const SimReport& r, const RunManifest& m);
SimReport simreport_from_json(const std::string& text, RunManifest* manifest = nullptr);

}  // namespace roundcert
