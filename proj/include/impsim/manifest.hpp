// Dataset manifest: users, recordings, electrodes, classes and the prompt
// table. All paths inside the manifest are relative to its directory.
#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "impsim/checkpoint.hpp"
#include "impsim/csv.hpp"
#include "impsim/error.hpp"
#include "impsim/geodesic.hpp"
#include "impsim/mesh.hpp"

namespace impsim {

struct Recording {
  std::string mesh_dir;        // frame_%06d.obj files; may be empty for pose-only data
  std::string impedance_csv;   // real recordings only
  std::string pose_csv;        // one row per frame, 156 columns, no header
  std::string label;           // class name; empty for prompt recordings
  double fps = 30.0;
};

struct UserEntry {
  std::string user_id;
  std::vector<Recording> recordings;
};

struct PromptEntry {
  std::string prompt_id;
  std::string text;
  std::string class_hint;
  std::vector<Recording> recordings;  // simulated motion per prompt variation
};

struct Manifest {
  std::string dataset;
  std::filesystem::path root;  // directory containing the manifest file
  std::vector<std::string> classes;
  ElectrodePair electrodes;
  std::vector<UserEntry> users;
  std::vector<PromptEntry> prompts;
  std::string text_embeddings_csv;

  int class_index(const std::string& name) const {
    for (std::size_t i = 0; i < classes.size(); ++i) {
      if (classes[i] == name) return static_cast<int>(i);
    }
    throw ValidationError("manifest: unknown class '" + name + "'");
  }

  std::filesystem::path resolve(const std::string& rel) const { return root / rel; }
};

namespace detail {

inline Recording recording_from_json(const json& j) {
  Recording r;
  r.mesh_dir = j.value("mesh_dir", "");
  r.impedance_csv = j.value("impedance_csv", "");
  r.pose_csv = j.value("pose_csv", "");
  r.label = j.value("label", "");
  r.fps = j.value("fps", 30.0);
  return r;
}

}  // namespace detail

inline Manifest load_manifest(const std::string& path) {
  json j = read_json_file(path);
  Manifest m;
  m.root = std::filesystem::absolute(std::filesystem::path(path)).parent_path();
  m.dataset = j.value("dataset", "unnamed");
  m.classes = j.at("classes").get<std::vector<std::string>>();
  m.electrodes.source = j.at("electrodes").at("source").get<int>();
  m.electrodes.sink = j.at("electrodes").at("sink").get<int>();
  for (const auto& uj : j.value("users", json::array())) {
    UserEntry u;
    u.user_id = uj.at("user_id").get<std::string>();
    for (const auto& rj : uj.at("recordings")) u.recordings.push_back(detail::recording_from_json(rj));
    m.users.push_back(std::move(u));
  }
  for (const auto& pj : j.value("prompts", json::array())) {
    PromptEntry p;
    p.prompt_id = pj.at("prompt_id").get<std::string>();
    p.text = pj.value("text", "");
    p.class_hint = pj.value("class_hint", "");
    for (const auto& rj : pj.value("recordings", json::array())) p.recordings.push_back(detail::recording_from_json(rj));
    m.prompts.push_back(std::move(p));
  }
  m.text_embeddings_csv = j.value("text_embeddings_csv", "");
  return m;
}

// Referenced files must exist, labels must be known classes, and the
// electrode indices must be valid for the mesh topology.
inline void validate_manifest(const Manifest& m) {
  namespace fs = std::filesystem;
  std::set<std::string> class_set(m.classes.begin(), m.classes.end());
  if (class_set.size() != m.classes.size()) throw ValidationError("manifest: duplicate class names");

  const Recording* first_mesh_rec = nullptr;
  auto check_recording = [&](const Recording& r, const std::string& who, bool needs_label) {
    if (!(r.fps > 0.0)) throw ValidationError("manifest: " + who + ": fps must be positive");
    if (needs_label && !class_set.count(r.label)) {
      throw ValidationError("manifest: " + who + ": label '" + r.label + "' is not a declared class");
    }
    if (!r.mesh_dir.empty()) {
      fs::path dir = m.resolve(r.mesh_dir);
      if (!fs::exists(dir / "frame_000000.obj")) {
        throw ValidationError("manifest: " + who + ": no frame_000000.obj under " + dir.string());
      }
      if (first_mesh_rec == nullptr) first_mesh_rec = &r;
    }
    for (const std::string& f : {r.impedance_csv, r.pose_csv}) {
      if (!f.empty() && !fs::exists(m.resolve(f))) {
        throw ValidationError("manifest: " + who + ": missing file " + m.resolve(f).string());
      }
    }
  };

  for (const auto& u : m.users) {
    if (u.recordings.empty()) throw ValidationError("manifest: user '" + u.user_id + "' has no recordings");
    for (const auto& r : u.recordings) check_recording(r, "user " + u.user_id, true);
  }
  for (const auto& p : m.prompts) {
    if (!p.class_hint.empty() && !class_set.count(p.class_hint)) {
      throw ValidationError("manifest: prompt '" + p.prompt_id + "': class hint '" + p.class_hint + "' unknown");
    }
    for (const auto& r : p.recordings) check_recording(r, "prompt " + p.prompt_id, false);
  }
  if (!m.text_embeddings_csv.empty() && !fs::exists(m.resolve(m.text_embeddings_csv))) {
    throw ValidationError("manifest: missing embeddings file " + m.resolve(m.text_embeddings_csv).string());
  }

  if (first_mesh_rec != nullptr) {
    MeshFrame f = load_obj_file((m.resolve(first_mesh_rec->mesh_dir) / "frame_000000.obj").string());
    if (m.electrodes.source < 0 || m.electrodes.source >= f.vertex_count() || m.electrodes.sink < 0 ||
        m.electrodes.sink >= f.vertex_count()) {
      throw ValidationError("manifest: electrode indices out of range for the mesh topology (vertex count " +
                            std::to_string(f.vertex_count()) + ")");
    }
  }
}

// Text-embedding CSV: header `prompt_id,class_hint,dim0,...,dimD-1`.
inline std::vector<std::pair<std::string, std::vector<double>>> read_embeddings_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embeddings csv: " + path);
  std::vector<std::pair<std::string, std::vector<double>>> out;
  std::string line;
  int line_no = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (line_no == 1) {
      if (fields.size() < 3 || fields[0] != "prompt_id") {
        throw ParseError(path + ": expected header prompt_id,class_hint,dim0,...");
      }
      dim = fields.size() - 2;
      continue;
    }
    if (fields.size() != dim + 2) throw ParseError(path + ": line " + std::to_string(line_no) + ": ragged row");
    std::vector<double> v;
    v.reserve(dim);
    for (std::size_t i = 2; i < fields.size(); ++i) v.push_back(parse_double_field(fields[i], path, line_no));
    out.push_back({fields[0], std::move(v)});
  }
  if (out.empty()) throw ParseError(path + ": no embedding rows");
  return out;
}

inline void write_embeddings_csv(const std::string& path,
                                 const std::vector<std::tuple<std::string, std::string, std::vector<double>>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write embeddings csv: " + path);
  if (rows.empty()) throw ValidationError("no embedding rows to write");
  const std::size_t dim = std::get<2>(rows.front()).size();
  out << "prompt_id,class_hint";
  for (std::size_t i = 0; i < dim; ++i) out << ",dim" << i;
  out << '\n';
  for (const auto& [id, hint, vec] : rows) {
    out << id << ',' << hint;
    for (double v : vec) out << ',' << format_double(v);
    out << '\n';
  }
}

// Pose CSV: one row per frame, 156 columns, no header.
inline std::vector<double> read_pose_csv(const std::string& path, std::size_t channels = 156) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pose csv: " + path);
  std::vector<double> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != channels) {
      throw ParseError(path + ": line " + std::to_string(line_no) + ": expected " + std::to_string(channels) +
                       " columns, got " + std::to_string(fields.size()));
    }
    for (const auto& f : fields) rows.push_back(parse_double_field(f, path, line_no));
  }
  if (rows.empty()) throw ParseError(path + ": empty pose file");
  return rows;
}

inline void write_pose_csv(const std::string& path, const std::vector<double>& rows, std::size_t channels = 156) {
  if (rows.size() % channels != 0) throw ValidationError("pose rows not a multiple of channel count");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write pose csv: " + path);
  for (std::size_t i = 0; i < rows.size(); i += channels) {
    for (std::size_t c = 0; c < channels; ++c) {
      if (c) out << ',';
      out << format_double(rows[i + c]);
    }
    out << '\n';
  }
}

}  // namespace impsim
