// Versioned JSON checkpoint container.
//
// Holds layer specs, parameter arrays, optimizer state and rng state.
// Doubles are serialized with shortest round-trip formatting, so a load
// reproduces eval outputs bit-exactly.
#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "impsim/error.hpp"

namespace impsim {

using json = nlohmann::json;

inline constexpr int kCheckpointVersion = 1;

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write: " + path);
  out << j.dump(2) << '\n';
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return j;
}

inline void save_checkpoint(const std::string& path, const std::string& kind, json payload) {
  json j;
  j["format_version"] = kCheckpointVersion;
  j["kind"] = kind;
  j["payload"] = std::move(payload);
  write_json_file(path, j);
}

inline json load_checkpoint(const std::string& path, const std::string& expected_kind) {
  json j = read_json_file(path);
  if (!j.contains("format_version") || j["format_version"].get<int>() != kCheckpointVersion) {
    throw ValidationError(path + ": unsupported checkpoint version");
  }
  if (j.value("kind", "") != expected_kind) {
    throw ValidationError(path + ": checkpoint kind '" + j.value("kind", "") + "', expected '" + expected_kind + "'");
  }
  return j["payload"];
}

}  // namespace impsim
