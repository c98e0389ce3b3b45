// Synthetic dataset generation: procedurally animated meshes plus
// ground-truth impedance derived from the simulated conductive path.
//
// articulated_arm: a two-segment hexagonal tube whose elbow angle follows
// class-specific periodic trajectories. Classes differ mainly in
// oscillation frequency plus a small mean-angle offset; per-user offsets
// are deliberately larger than the class offsets so absolute signal level
// generalizes poorly across users while frequency does. Prompt variations
// span wider amplitude/center ranges than the user recordings.
//
// Ground truth: magnitude and phase are affine in the relaxed path length,
// plus (optionally) a small term carried by pose channel 0 and seeded
// Gaussian noise. Every recording stores a generation log so tests can
// reconstruct the signal model exactly.
#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "impsim/checkpoint.hpp"
#include "impsim/digest.hpp"
#include "impsim/error.hpp"
#include "impsim/geodesic.hpp"
#include "impsim/manifest.hpp"
#include "impsim/mesh.hpp"
#include "impsim/relax.hpp"
#include "impsim/rng.hpp"
#include "impsim/signal.hpp"

namespace impsim {

struct SyntheticSpec {
  std::string generator = "articulated_arm";  // articulated_arm | cylinder_pair
  int users = 4;
  int classes = 3;
  int frames_per_recording = 300;
  int recordings_per_class = 1;  // per user
  int prompts_per_class = 3;
  int variations_per_prompt = 10;
  int prompt_frames = 240;
  double fps = 30.0;
  double target_rate_hz = 20.0;
  double noise_level = 1.5;  // magnitude noise std, ohms
  std::uint64_t rng_seed = 7;
  std::size_t text_dim = 768;
  bool pose_coupling = true;     // pose channel 0 carries a small target term
  double pose_mag_gain = 3.0;    // ohms per unit of the pose signal
  double class_center_delta = 0.10;  // radians between class mean angles

  json to_json() const {
    return json{{"generator", generator},
                {"users", users},
                {"classes", classes},
                {"frames_per_recording", frames_per_recording},
                {"recordings_per_class", recordings_per_class},
                {"prompts_per_class", prompts_per_class},
                {"variations_per_prompt", variations_per_prompt},
                {"prompt_frames", prompt_frames},
                {"fps", fps},
                {"target_rate_hz", target_rate_hz},
                {"noise_level", noise_level},
                {"rng_seed", rng_seed},
                {"text_dim", text_dim},
                {"pose_coupling", pose_coupling},
                {"pose_mag_gain", pose_mag_gain},
                {"class_center_delta", class_center_delta}};
  }
  static SyntheticSpec from_json(const json& j) {
    SyntheticSpec s;
    s.generator = j.value("generator", s.generator);
    s.users = j.value("users", s.users);
    s.classes = j.value("classes", s.classes);
    s.frames_per_recording = j.value("frames_per_recording", s.frames_per_recording);
    s.recordings_per_class = j.value("recordings_per_class", s.recordings_per_class);
    s.prompts_per_class = j.value("prompts_per_class", s.prompts_per_class);
    s.variations_per_prompt = j.value("variations_per_prompt", s.variations_per_prompt);
    s.prompt_frames = j.value("prompt_frames", s.prompt_frames);
    s.fps = j.value("fps", s.fps);
    s.target_rate_hz = j.value("target_rate_hz", s.target_rate_hz);
    s.noise_level = j.value("noise_level", s.noise_level);
    s.rng_seed = j.value("rng_seed", s.rng_seed);
    s.text_dim = j.value("text_dim", s.text_dim);
    s.pose_coupling = j.value("pose_coupling", s.pose_coupling);
    s.pose_mag_gain = j.value("pose_mag_gain", s.pose_mag_gain);
    s.class_center_delta = j.value("class_center_delta", s.class_center_delta);
    if (s.generator != "articulated_arm" && s.generator != "cylinder_pair") {
      throw ValidationError("synthetic generator must be articulated_arm or cylinder_pair");
    }
    if (s.users < 1 || s.classes < 1) throw ValidationError("synthetic spec needs users >= 1 and classes >= 1");
    return s;
  }
};

namespace synth_detail {

constexpr double kPi = 3.14159265358979323846;

// signal model constants (also recorded per recording in the gen log)
constexpr double kMagScale = 400.0;    // ohm per meter of path length
constexpr double kMagOffset = 50.0;    // ohm
constexpr double kPhaseScale = -1.2;   // rad per meter
constexpr double kPhaseOffset = -0.1;  // rad

// Hexagonal tube along shoulder -> elbow -> wrist with cap centers at both
// ends; electrode vertices are the caps (0 and last).
inline MeshFrame arm_frame(double elbow_angle) {
  const double seg = 0.3, radius = 0.05;
  const int ring_n = 6, stations = 4;
  Vec3 shoulder{0, 0, 0}, elbow{seg, 0, 0};
  Vec3 wrist = elbow + Vec3{seg * std::cos(elbow_angle), seg * std::sin(elbow_angle), 0.0};

  std::vector<Vec3> centers;
  std::vector<Vec3> normals;
  Vec3 d1 = (elbow - shoulder) / seg;
  Vec3 d2 = (wrist - elbow) / seg;
  for (int k = 0; k < stations; ++k) {
    double t = static_cast<double>(k) / stations;
    centers.push_back(shoulder + (elbow - shoulder) * t);
    normals.push_back(d1);
  }
  centers.push_back(elbow);
  {
    Vec3 bis = d1 + d2;
    double n = bis.norm();
    normals.push_back(n > 1e-9 ? bis / n : d1);
  }
  for (int k = 1; k <= stations; ++k) {
    double t = static_cast<double>(k) / stations;
    centers.push_back(elbow + (wrist - elbow) * t);
    normals.push_back(d2);
  }

  MeshFrame f;
  f.vertices.push_back(shoulder);  // 0: source electrode
  for (std::size_t r = 0; r < centers.size(); ++r) {
    Vec3 n = normals[r];
    Vec3 u{n.y, -n.x, 0.0};  // normals stay in the xy-plane
    double un = u.norm();
    u = un > 1e-9 ? u / un : Vec3{0, 1, 0};
    Vec3 v{0, 0, 1};
    for (int j = 0; j < ring_n; ++j) {
      double a = 2.0 * kPi * j / ring_n;
      f.vertices.push_back(centers[r] + u * (radius * std::cos(a)) + v * (radius * std::sin(a)));
    }
  }
  int wrist_idx = static_cast<int>(f.vertices.size());
  f.vertices.push_back(wrist);  // sink electrode

  auto ring_start = [&](int r) { return 1 + r * ring_n; };
  // shoulder cap
  for (int j = 0; j < ring_n; ++j) {
    f.faces.push_back({0, ring_start(0) + (j + 1) % ring_n, ring_start(0) + j});
  }
  // tube
  for (std::size_t r = 0; r + 1 < centers.size(); ++r) {
    for (int j = 0; j < ring_n; ++j) {
      int a = ring_start(static_cast<int>(r)) + j;
      int b = ring_start(static_cast<int>(r)) + (j + 1) % ring_n;
      int c = ring_start(static_cast<int>(r) + 1) + j;
      int d = ring_start(static_cast<int>(r) + 1) + (j + 1) % ring_n;
      f.faces.push_back({a, b, c});
      f.faces.push_back({b, d, c});
    }
  }
  // wrist cap
  int last = static_cast<int>(centers.size()) - 1;
  for (int j = 0; j < ring_n; ++j) {
    f.faces.push_back({wrist_idx, ring_start(last) + j, ring_start(last) + (j + 1) % ring_n});
  }
  return f;
}

// Cylinder whose radius pulses over time; electrodes at the two cap
// centers. The surface path length tracks the bulge.
inline MeshFrame cylinder_frame(double bulge) {
  const int ring_n = 6, rings = 7;
  const double height = 0.6;
  MeshFrame f;
  f.vertices.push_back({0, 0, 0});  // bottom cap center
  for (int r = 0; r < rings; ++r) {
    double z = height * r / (rings - 1);
    double rad = 0.15 * (1.0 + bulge * std::sin(kPi * r / (rings - 1)));
    for (int j = 0; j < ring_n; ++j) {
      double a = 2.0 * kPi * j / ring_n;
      f.vertices.push_back({rad * std::cos(a), rad * std::sin(a), z});
    }
  }
  int top = static_cast<int>(f.vertices.size());
  f.vertices.push_back({0, 0, height});

  auto ring_start = [&](int r) { return 1 + r * ring_n; };
  for (int j = 0; j < ring_n; ++j) f.faces.push_back({0, ring_start(0) + (j + 1) % ring_n, ring_start(0) + j});
  for (int r = 0; r + 1 < rings; ++r) {
    for (int j = 0; j < ring_n; ++j) {
      int a = ring_start(r) + j, b = ring_start(r) + (j + 1) % ring_n;
      int c = ring_start(r + 1) + j, d = ring_start(r + 1) + (j + 1) % ring_n;
      f.faces.push_back({a, b, c});
      f.faces.push_back({b, d, c});
    }
  }
  for (int j = 0; j < ring_n; ++j) f.faces.push_back({top, ring_start(rings - 1) + j, ring_start(rings - 1) + (j + 1) % ring_n});
  return f;
}

struct TrajectoryParams {
  double center = 0.9;
  double amplitude = 0.45;
  double frequency = 0.9;  // Hz
  double phase = 0.0;
};

struct RecordingPlan {
  std::string rel_dir;       // relative to the dataset root
  std::string label;         // class name; empty for prompt recordings
  bool with_impedance = false;
  int frames = 0;
  TrajectoryParams traj;
  std::string rng_label;
};

inline double class_frequency(int c) {
  static const double base[3] = {0.5, 0.9, 1.5};
  double f = base[c % 3];
  return f * (1.0 + 0.45 * (c / 3));  // extra classes keep spreading
}

}  // namespace synth_detail

struct SynthResult {
  std::string manifest_path;
  std::string content_digest;  // digest over all generated file bytes
};

inline SynthResult synth_generate(const SyntheticSpec& spec, const std::string& out_dir) {
  namespace fs = std::filesystem;
  using namespace synth_detail;

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::exists(out_dir)) throw IoError("cannot create output dir: " + out_dir);
  {
    std::ofstream probe(fs::path(out_dir) / ".write_probe", std::ios::binary);
    if (!probe) throw IoError("output dir not writable: " + out_dir);
  }
  fs::remove(fs::path(out_dir) / ".write_probe");

  const bool arm = spec.generator == "articulated_arm";
  const double angle_lo = arm ? 0.25 : -0.45;
  const double angle_hi = arm ? 2.30 : 0.45;

  // class parameters are fixed by construction; user/variation parameters
  // come from labeled rng streams so file bytes do not depend on order
  auto class_center = [&](int c) { return (arm ? 0.95 : 0.0) + spec.class_center_delta * c; };

  std::vector<RecordingPlan> plans;
  json manifest_users = json::array();
  for (int u = 0; u < spec.users; ++u) {
    char uid[8];
    std::snprintf(uid, sizeof uid, "u%02d", u);
    Rng urng = Rng::for_stage(spec.rng_seed, std::string("synth/user/") + uid);
    double user_center_off = urng.uniform(-0.15, 0.15);
    double user_amp_mul = urng.uniform(0.80, 1.25);
    double user_freq_mul = urng.uniform(0.96, 1.04);

    json recs = json::array();
    for (int c = 0; c < spec.classes; ++c) {
      for (int r = 0; r < spec.recordings_per_class; ++r) {
        char rel[64];
        std::snprintf(rel, sizeof rel, "users/%s/rec%03d", uid, c * spec.recordings_per_class + r);
        RecordingPlan p;
        p.rel_dir = rel;
        p.label = "class_" + std::to_string(c);
        p.with_impedance = true;
        p.frames = spec.frames_per_recording;
        p.rng_label = std::string("synth/rec/") + rel;
        Rng rrng = Rng::for_stage(spec.rng_seed, p.rng_label + "/traj");
        p.traj.center = class_center(c) + user_center_off;
        p.traj.amplitude = (arm ? 0.45 : 0.30) * user_amp_mul * rrng.uniform(0.95, 1.05);
        p.traj.frequency = class_frequency(c) * user_freq_mul;
        p.traj.phase = rrng.uniform(0.0, 2.0 * kPi);
        plans.push_back(p);
        recs.push_back(json{{"mesh_dir", p.rel_dir + "/frames"},
                            {"impedance_csv", p.rel_dir + "/impedance.csv"},
                            {"pose_csv", p.rel_dir + "/pose.csv"},
                            {"label", p.label},
                            {"fps", spec.fps}});
      }
    }
    manifest_users.push_back(json{{"user_id", uid}, {"recordings", recs}});
  }

  json manifest_prompts = json::array();
  for (int c = 0; c < spec.classes; ++c) {
    for (int k = 0; k < spec.prompts_per_class; ++k) {
      int pid = c * spec.prompts_per_class + k;
      char pname[8];
      std::snprintf(pname, sizeof pname, "p%03d", pid);
      json recs = json::array();
      for (int v = 0; v < spec.variations_per_prompt; ++v) {
        char rel[64];
        std::snprintf(rel, sizeof rel, "prompts/%s/var%02d", pname, v);
        RecordingPlan p;
        p.rel_dir = rel;
        p.with_impedance = false;
        p.frames = spec.prompt_frames;
        p.rng_label = std::string("synth/rec/") + rel;
        Rng rrng = Rng::for_stage(spec.rng_seed, p.rng_label + "/traj");
        p.traj.center = class_center(c) + rrng.uniform(-0.18, 0.18);
        p.traj.amplitude = (arm ? 0.45 : 0.30) * rrng.uniform(0.55, 1.50);
        // prompts within a class sit at slightly different frequencies so
        // they stay distinguishable for retrieval
        p.traj.frequency = class_frequency(c) * (0.94 + 0.06 * k) * rrng.uniform(0.99, 1.01);
        p.traj.phase = rrng.uniform(0.0, 2.0 * kPi);
        plans.push_back(p);
        recs.push_back(json{{"mesh_dir", p.rel_dir + "/frames"}, {"fps", spec.fps}});
      }
      manifest_prompts.push_back(json{{"prompt_id", pname},
                                      {"text", "synthetic arm motion family " + std::to_string(c) + ", phrasing " +
                                                   std::to_string(k)},
                                      {"class_hint", "class_" + std::to_string(c)},
                                      {"recordings", recs}});
    }
  }

  Digest content;

  // electrode indices fixed by the generators: cap centers
  MeshFrame probe = arm ? arm_frame(1.0) : cylinder_frame(0.0);
  ElectrodePair electrodes{0, probe.vertex_count() - 1};

  for (const auto& plan : plans) {
    fs::path dir = fs::path(out_dir) / plan.rel_dir;
    fs::create_directories(dir / "frames");
    Rng rec_rng = Rng::for_stage(spec.rng_seed, plan.rng_label + "/noise");

    // trajectory and frames
    std::vector<MeshFrame> frames;
    frames.reserve(plan.frames);
    for (int t = 0; t < plan.frames; ++t) {
      double sec = t / spec.fps;
      double angle = plan.traj.center +
                     plan.traj.amplitude * std::sin(2.0 * kPi * plan.traj.frequency * sec + plan.traj.phase) +
                     rec_rng.normal(0.0, 0.004);
      angle = std::clamp(angle, angle_lo, angle_hi);
      frames.push_back(arm ? arm_frame(angle) : cylinder_frame(angle));
    }
    for (int t = 0; t < plan.frames; ++t) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%06d.obj", t);
      write_obj_file((dir / "frames" / name).string(), frames[t]);
    }

    // conductive path through the real pipeline
    MeshSequence seq = make_sequence(std::move(frames), spec.fps);
    RelaxConfig relax_cfg;  // library defaults
    RelaxedSeries series = relaxed_series(seq, electrodes, relax_cfg);

    // pose: noise everywhere; channel 0 optionally carries a slow sinusoid
    const std::size_t pose_channels = 156;
    double pose_freq = rec_rng.uniform(0.15, 0.30);
    double pose_phase = rec_rng.uniform(0.0, 2.0 * kPi);
    auto pose_signal = [&](double sec) { return std::sin(2.0 * kPi * pose_freq * sec + pose_phase); };
    std::vector<double> pose_rows;
    pose_rows.reserve(static_cast<std::size_t>(plan.frames) * pose_channels);
    for (int t = 0; t < plan.frames; ++t) {
      double sec = t / spec.fps;
      for (std::size_t ch = 0; ch < pose_channels; ++ch) {
        double v = rec_rng.normal(0.0, 0.3);
        if (ch == 0 && spec.pose_coupling) v = pose_signal(sec) + 0.1 * rec_rng.normal();
        pose_rows.push_back(v);
      }
    }
    write_pose_csv((dir / "pose.csv").string(), pose_rows, pose_channels);

    json log{{"fps", spec.fps},
             {"target_rate_hz", spec.target_rate_hz},
             {"raw_lengths", series.raw_lengths},
             {"relaxed_lengths", series.relaxed_lengths},
             {"trajectory",
              {{"center", plan.traj.center},
               {"amplitude", plan.traj.amplitude},
               {"frequency", plan.traj.frequency},
               {"phase", plan.traj.phase}}},
             {"mag_scale", kMagScale},
             {"mag_offset", kMagOffset},
             {"phase_scale", kPhaseScale},
             {"phase_offset", kPhaseOffset}};

    if (plan.with_impedance) {
      TimeSeries native(std::vector<double>(series.relaxed_lengths), 1, spec.fps, {"path_len"});
      TimeSeries at_rate = resample(native, spec.target_rate_hz);
      const double noise_std_mag = spec.noise_level;
      const double noise_std_phase = spec.noise_level / 150.0;
      const double pose_phase_gain = spec.pose_mag_gain * kPhaseScale / kMagScale;

      std::vector<double> imp;
      std::vector<double> pose_sig_20;
      imp.reserve(at_rate.size() * 2);
      for (std::size_t i = 0; i < at_rate.size(); ++i) {
        double sec = static_cast<double>(i) / spec.target_rate_hz;
        double L = at_rate.at(i, 0);
        double p = spec.pose_coupling ? pose_signal(sec) : 0.0;
        pose_sig_20.push_back(p);
        double mag = kMagScale * L + kMagOffset + spec.pose_mag_gain * p + rec_rng.normal(0.0, noise_std_mag);
        double phase = kPhaseScale * L + kPhaseOffset + pose_phase_gain * p + rec_rng.normal(0.0, noise_std_phase);
        imp.push_back(mag);
        imp.push_back(phase);
      }
      write_signal_csv((dir / "impedance.csv").string(),
                       TimeSeries(std::move(imp), 2, spec.target_rate_hz, {"magnitude", "phase"}));
      log["pose_mag_gain"] = spec.pose_coupling ? spec.pose_mag_gain : 0.0;
      log["pose_phase_gain"] = spec.pose_coupling ? pose_phase_gain : 0.0;
      log["pose_signal_20hz"] = pose_sig_20;
      log["noise_std_mag"] = noise_std_mag;
      log["noise_std_phase"] = noise_std_phase;
      content.update(digest_file((dir / "impedance.csv").string()));
    }
    write_json_file((dir / "gen_log.json").string(), log);
    content.update(digest_file((dir / "pose.csv").string()));
    content.update(digest_file((dir / "frames" / "frame_000000.obj").string()));
  }

  // synthetic text embeddings: one well-separated center per class, one
  // jittered draw per prompt
  {
    std::vector<std::tuple<std::string, std::string, std::vector<double>>> rows;
    for (int c = 0; c < spec.classes; ++c) {
      Rng crng = Rng::for_stage(spec.rng_seed, "synth/embed/class_" + std::to_string(c));
      std::vector<double> center(spec.text_dim);
      for (auto& v : center) v = crng.normal();
      for (int k = 0; k < spec.prompts_per_class; ++k) {
        int pid = c * spec.prompts_per_class + k;
        char pname[8];
        std::snprintf(pname, sizeof pname, "p%03d", pid);
        Rng prng = Rng::for_stage(spec.rng_seed, std::string("synth/embed/") + pname);
        std::vector<double> v = center;
        for (auto& x : v) x += 0.25 * prng.normal();
        rows.push_back({pname, "class_" + std::to_string(c), std::move(v)});
      }
    }
    write_embeddings_csv((fs::path(out_dir) / "embeddings.csv").string(), rows);
    content.update(digest_file((fs::path(out_dir) / "embeddings.csv").string()));
  }

  json classes = json::array();
  for (int c = 0; c < spec.classes; ++c) classes.push_back("class_" + std::to_string(c));
  json manifest{{"dataset", "synth-" + spec.generator},
                {"classes", classes},
                {"electrodes", {{"source", electrodes.source}, {"sink", electrodes.sink}}},
                {"users", manifest_users},
                {"prompts", manifest_prompts},
                {"text_embeddings_csv", "embeddings.csv"},
                {"synthetic_spec", spec.to_json()}};
  std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
  write_json_file(manifest_path, manifest);
  content.update(digest_file(manifest_path));

  return {manifest_path, content.hex()};
}

}  // namespace impsim
