// End-to-end pipeline commands: simulate -> ground -> pretrain -> finetune
// -> eval, plus sweeps, gradient checks, synthetic data and reproduction.
//
// Every command writes a report embedding the full config, seed and input
// digests. The report digest covers exactly those plus the results, never
// file paths or timestamps, so a rerun with the same inputs produces the
// same digest and `reproduce` can verify it.
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "impsim/checkpoint.hpp"
#include "impsim/config.hpp"
#include "impsim/digest.hpp"
#include "impsim/downstream.hpp"
#include "impsim/error.hpp"
#include "impsim/gradcheck.hpp"
#include "impsim/grounding.hpp"
#include "impsim/manifest.hpp"
#include "impsim/relax.hpp"
#include "impsim/signal.hpp"
#include "impsim/simpharnet.hpp"
#include "impsim/synth.hpp"

namespace impsim {

namespace fs = std::filesystem;

namespace detail {

// Stable per-recording key inside a stage output directory.
inline std::string user_rec_key(const std::string& user_id, std::size_t idx) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "rec%03zu", idx);
  return "users/" + user_id + "/" + buf;
}
inline std::string prompt_rec_key(const std::string& prompt_id, std::size_t idx) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "var%02zu", idx);
  return "prompts/" + prompt_id + "/" + buf;
}

inline json finalize_report(json body) {
  body.erase("report_digest");
  body.erase("paths");
  std::string digest = digest_string(body.dump());
  body["report_digest"] = digest;
  return body;
}

inline json report_skeleton(const std::string& command, const PipelineConfig& config,
                            const std::string& inputs_digest) {
  return json{{"command", command}, {"config", config.to_json()}, {"seed", config.seed},
              {"inputs_digest", inputs_digest}};
}

}  // namespace detail

// ---------------------------------------------------------------- simulate

struct SimulateResult {
  json report;
  std::string out_dir;
};

// Per recording: native-rate relaxed path series, the same series resampled
// to the target rate, and a run log holding raw vs relaxed lengths.
inline SimulateResult cmd_simulate(const Manifest& manifest, const PipelineConfig& config, const std::string& out_dir) {
  validate_manifest(manifest);
  fs::create_directories(out_dir);

  json run_log = json::object();
  Digest outputs;
  auto simulate_recording = [&](const Recording& rec, const std::string& key) {
    if (rec.mesh_dir.empty()) throw ValidationError("simulate: recording " + key + " has no mesh_dir");
    MeshSequence seq = load_sequence(manifest.resolve(rec.mesh_dir).string(), rec.fps);
    RelaxedSeries series;
    try {
      series = relaxed_series(seq, manifest.electrodes, config.relax);
    } catch (const Error& e) {
      throw ValidationError("simulate: recording " + key + ": " + e.what());
    }
    fs::path dir = fs::path(out_dir) / key;
    fs::create_directories(dir);
    TimeSeries native(std::vector<double>(series.relaxed_lengths), 1, rec.fps, {"path_len"});
    write_signal_csv((dir / "path_native.csv").string(), native);
    write_signal_csv((dir / "path_20hz.csv").string(), resample(native, config.target_rate_hz));
    run_log[key] = json{{"raw_lengths", series.raw_lengths}, {"relaxed_lengths", series.relaxed_lengths}};
    outputs.update(digest_file((dir / "path_native.csv").string()));
  };

  for (const auto& user : manifest.users) {
    for (std::size_t i = 0; i < user.recordings.size(); ++i) {
      simulate_recording(user.recordings[i], detail::user_rec_key(user.user_id, i));
    }
  }
  for (const auto& prompt : manifest.prompts) {
    for (std::size_t i = 0; i < prompt.recordings.size(); ++i) {
      simulate_recording(prompt.recordings[i], detail::prompt_rec_key(prompt.prompt_id, i));
    }
  }
  write_json_file((fs::path(out_dir) / "run_log.json").string(), run_log);

  json report = detail::report_skeleton("simulate", config, outputs.hex());
  report["results"] = json{{"recordings", run_log.size()}, {"outputs_digest", outputs.hex()}};
  report = detail::finalize_report(std::move(report));
  write_json_file((fs::path(out_dir) / "report.json").string(), report);
  return {report, out_dir};
}

// ------------------------------------------------------------------ ground

namespace detail {

// Pairs native-rate path windows and pose windows with the impedance sample
// at each window's final frame. The impedance CSV (target rate) is
// resampled to the recording's native rate for per-frame alignment.
inline std::vector<GroundingSample> grounding_samples_for(const Manifest& manifest, const PipelineConfig& config,
                                                          const std::string& sim_dir, const UserEntry& user) {
  std::vector<GroundingSample> out;
  const std::size_t w = config.grounding_window.length;
  const std::size_t pc = config.grounding_net.pose_channels;
  for (std::size_t i = 0; i < user.recordings.size(); ++i) {
    const Recording& rec = user.recordings[i];
    fs::path sim_rec = fs::path(sim_dir) / user_rec_key(user.user_id, i);
    if (!fs::exists(sim_rec / "path_native.csv")) {
      throw IoError("ground: missing " + (sim_rec / "path_native.csv").string() + "; run the simulate command first");
    }
    TimeSeries path = read_signal_csv((sim_rec / "path_native.csv").string());
    std::vector<double> pose = read_pose_csv(manifest.resolve(rec.pose_csv).string(), pc);
    TimeSeries imp = read_signal_csv(manifest.resolve(rec.impedance_csv).string());
    TimeSeries imp_native = resample(imp, rec.fps);

    std::size_t frames = std::min({path.size(), pose.size() / pc, imp_native.size()});
    if (frames < w) continue;
    std::size_t step = std::max<std::size_t>(config.grounding_window.step, 1) * std::max<std::size_t>(config.grounding_train_step, 1);
    for (std::size_t end = w; end <= frames; end += step) {
      GroundingSample s;
      s.path_window.reserve(w);
      for (std::size_t t = end - w; t < end; ++t) s.path_window.push_back(path.at(t, 0));
      s.pose_window.assign(pose.begin() + (end - w) * pc, pose.begin() + end * pc);
      s.magnitude = imp_native.at(end - 1, 0);
      s.phase = imp_native.at(end - 1, 1);
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace detail

struct GroundResult {
  json report;
  std::map<std::string, GroundingReport> per_user;
};

// Trains one grounding model per user in the configured ablation mode and,
// when simp_source is "grounded", applies the calibration user's model to
// every prompt recording to produce SImp CSVs.
inline GroundResult cmd_ground(const Manifest& manifest, const PipelineConfig& config, const std::string& sim_dir,
                               const std::string& out_dir) {
  validate_manifest(manifest);
  if (manifest.users.empty()) throw ValidationError("ground: manifest has no users");
  fs::create_directories(out_dir);

  GroundResult result;
  json users_json = json::object();
  Digest inputs;
  std::map<std::string, GroundingModel> models;
  for (const auto& user : manifest.users) {
    auto samples = detail::grounding_samples_for(manifest, config, sim_dir, user);
    if (samples.size() < 2) throw ValidationError("ground: user " + user.user_id + " has fewer than 2 usable windows");
    TrainSchedule sched = config.grounding_schedule;
    sched.rng_seed = Rng::for_stage(config.seed, "ground/" + user.user_id).next_u64();
    auto [model, rep] = train_grounding(samples, config.grounding_mode, sched, config.grounding_net);
    save_checkpoint((fs::path(out_dir) / ("grounding_" + user.user_id + ".json")).string(), "grounding_model",
                    json{{"model", model.save_state()}});
    users_json[user.user_id] = rep.to_json();
    result.per_user[user.user_id] = rep;
    models.emplace(user.user_id, std::move(model));
    inputs.update(user.user_id);
  }

  if (config.simp_source == "grounded" && !manifest.prompts.empty()) {
    std::string cal = config.calibration_user.empty() ? manifest.users.front().user_id : config.calibration_user;
    auto it = models.find(cal);
    if (it == models.end()) throw ValidationError("ground: calibration user '" + cal + "' not in manifest");
    GroundingModel& model = it->second;
    const std::size_t pc = config.grounding_net.pose_channels;
    for (const auto& prompt : manifest.prompts) {
      for (std::size_t i = 0; i < prompt.recordings.size(); ++i) {
        std::string key = detail::prompt_rec_key(prompt.prompt_id, i);
        fs::path sim_rec = fs::path(sim_dir) / key;
        if (!fs::exists(sim_rec / "path_native.csv")) {
          throw IoError("ground: missing " + (sim_rec / "path_native.csv").string() + "; run the simulate command first");
        }
        TimeSeries path = read_signal_csv((sim_rec / "path_native.csv").string());
        std::vector<double> pose;
        if (!prompt.recordings[i].pose_csv.empty()) {
          pose = read_pose_csv(manifest.resolve(prompt.recordings[i].pose_csv).string(), pc);
        } else {
          pose.assign(path.size() * pc, 0.0);  // prompt recordings may omit pose
        }
        std::size_t frames = std::min(path.size(), pose.size() / pc);
        std::vector<double> pvals;
        for (std::size_t t = 0; t < frames; ++t) pvals.push_back(path.at(t, 0));
        pvals.resize(frames);
        pose.resize(frames * pc);
        auto simp = apply_grounding(model, pvals, pose);
        std::vector<double> data;
        for (const auto& mp : simp) {
          data.push_back(mp[0]);
          data.push_back(mp[1]);
        }
        fs::path dir = fs::path(out_dir) / key;
        fs::create_directories(dir);
        TimeSeries native(std::move(data), 2, prompt.recordings[i].fps, {"magnitude", "phase"});
        write_signal_csv((dir / "simp_native.csv").string(), native);
        write_signal_csv((dir / "simp_20hz.csv").string(), resample(native, config.target_rate_hz));
      }
    }
    inputs.update(std::string("calibration:") + cal);
  }

  json report = detail::report_skeleton("ground", config, inputs.hex());
  report["results"] = json{{"users", users_json}, {"mode", to_string(config.grounding_mode)}};
  report = detail::finalize_report(std::move(report));
  write_json_file((fs::path(out_dir) / "report.json").string(), report);
  result.report = report;
  return result;
}

// ---------------------------------------------------------------- pretrain

namespace detail {

// SImp windows per prompt at the target rate. geometric: channels are the
// relaxed path length and its negation (mirroring the sign relation between
// magnitude and phase); grounded: the grounding model's output CSVs.
inline std::vector<PromptWindows> pretrain_corpus(const Manifest& manifest, const PipelineConfig& config,
                                                  const std::string& sim_dir, const std::string& ground_dir) {
  std::vector<PromptWindows> corpus;
  for (const auto& prompt : manifest.prompts) {
    PromptWindows group;
    group.prompt_id = prompt.prompt_id;
    for (std::size_t i = 0; i < prompt.recordings.size(); ++i) {
      std::string key = prompt_rec_key(prompt.prompt_id, i);
      TimeSeries series = [&]() {
        if (config.simp_source == "grounded") {
          fs::path p = fs::path(ground_dir) / key / "simp_20hz.csv";
          if (!fs::exists(p)) {
            throw IoError("pretrain: missing " + p.string() + "; run the ground command with simp_source=grounded first");
          }
          return read_signal_csv(p.string());
        }
        fs::path p = fs::path(sim_dir) / key / "path_20hz.csv";
        if (!fs::exists(p)) {
          throw IoError("pretrain: missing " + p.string() + "; run the simulate command first");
        }
        TimeSeries path = read_signal_csv(p.string());
        std::vector<double> data;
        data.reserve(path.size() * 2);
        for (std::size_t t = 0; t < path.size(); ++t) {
          data.push_back(path.at(t, 0));
          data.push_back(-path.at(t, 0));
        }
        return TimeSeries(std::move(data), 2, path.rate(), {"magnitude", "phase"});
      }();
      if (series.size() < config.pretrain_window.length) continue;
      for (auto& w : windows(series, config.pretrain_window)) group.windows.push_back(std::move(w));
    }
    if (!group.windows.empty()) corpus.push_back(std::move(group));
  }
  if (corpus.size() < 2) throw ValidationError("pretrain: need simulated windows for at least 2 prompts");
  return corpus;
}

inline std::vector<TextEmbedding> load_prompt_embeddings(const Manifest& manifest) {
  if (manifest.text_embeddings_csv.empty()) throw ValidationError("pretrain: manifest has no text_embeddings_csv");
  auto rows = read_embeddings_csv(manifest.resolve(manifest.text_embeddings_csv).string());
  std::map<std::string, std::vector<double>> by_id;
  for (auto& [id, v] : rows) by_id[id] = std::move(v);
  std::vector<TextEmbedding> out;
  for (const auto& prompt : manifest.prompts) {
    auto it = by_id.find(prompt.prompt_id);
    if (it == by_id.end()) throw ValidationError("pretrain: no embedding row for prompt '" + prompt.prompt_id + "'");
    TextEmbedding e;
    e.prompt_id = prompt.prompt_id;
    e.text = prompt.text;
    e.class_hint = prompt.class_hint.empty() ? -1 : manifest.class_index(prompt.class_hint);
    e.vector = it->second;
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace detail

struct PretrainResult {
  json report;
  EncoderPair pair;
};

inline PretrainResult cmd_pretrain(const Manifest& manifest, const PipelineConfig& config, const std::string& sim_dir,
                                   const std::string& ground_dir, const std::string& out_dir) {
  validate_manifest(manifest);
  fs::create_directories(out_dir);
  auto corpus = detail::pretrain_corpus(manifest, config, sim_dir, ground_dir);
  auto prompts = detail::load_prompt_embeddings(manifest);

  EncoderPairConfig enc_cfg = config.encoder;
  if (!prompts.empty()) enc_cfg.text_dim = prompts.front().vector.size();
  TrainSchedule sched = config.pretrain_schedule;
  sched.rng_seed = Rng::for_stage(config.seed, "pretrain").next_u64();
  auto [pair, rep] = pretrain(corpus, prompts, sched, enc_cfg);

  save_checkpoint((fs::path(out_dir) / "encoders.json").string(), "encoder_pair", json{{"pair", pair.save_state()}});

  Digest inputs;
  for (const auto& g : corpus) {
    inputs.update(g.prompt_id);
    inputs.update(&g.windows[0].samples[0], sizeof(double) * g.windows[0].samples.size());
  }
  json report = detail::report_skeleton("pretrain", config, inputs.hex());
  report["results"] = rep.to_json();
  report = detail::finalize_report(std::move(report));
  write_json_file((fs::path(out_dir) / "report.json").string(), report);
  return {report, std::move(pair)};
}

// ---------------------------------------------------------------- finetune

namespace detail {

inline std::vector<ImpedanceWindow> real_windows(const Manifest& manifest, const PipelineConfig& config) {
  std::vector<ImpedanceWindow> out;
  for (const auto& user : manifest.users) {
    for (const auto& rec : user.recordings) {
      if (rec.impedance_csv.empty()) continue;
      TimeSeries imp = read_signal_csv(manifest.resolve(rec.impedance_csv).string());
      if (imp.rate() != config.target_rate_hz) imp = resample(imp, config.target_rate_hz);
      if (imp.size() < config.har_window.length) continue;
      for (auto& w : windows(imp, config.har_window)) {
        ImpedanceWindow iw;
        iw.window = std::move(w);
        iw.user_id = user.user_id;
        iw.label = manifest.class_index(rec.label);
        iw.source = ImpedanceWindow::Source::Real;
        out.push_back(std::move(iw));
      }
    }
  }
  if (out.empty()) throw ValidationError("no usable impedance windows in the manifest");
  return out;
}

}  // namespace detail

struct FinetuneResult {
  json report;
  HarModel model;
};

// Standalone fine-tune over all users (no held-out user); frozen and
// late_learning require a pretraining checkpoint.
inline FinetuneResult cmd_finetune(const Manifest& manifest, const PipelineConfig& config,
                                   const std::string& pretrain_checkpoint, const std::string& out_dir) {
  validate_manifest(manifest);
  fs::create_directories(out_dir);
  auto dataset = detail::real_windows(manifest, config);
  const int class_count = static_cast<int>(manifest.classes.size());

  Rng rng = Rng::for_stage(config.seed, "finetune/encoder");
  Sequential encoder;
  std::size_t embedding_dim = config.encoder.embedding_dim;
  if (config.policy.mode == PolicyMode::NoPretrain) {
    encoder = EncoderPair::fresh_imp_encoder(config.encoder, rng);
  } else {
    if (pretrain_checkpoint.empty() || !fs::exists(pretrain_checkpoint)) {
      throw IoError("finetune: policy '" + to_string(config.policy.mode) +
                    "' needs a pretraining checkpoint; run the pretrain command first");
    }
    EncoderPair pair = EncoderPair::load_state(load_checkpoint(pretrain_checkpoint, "encoder_pair").at("pair"));
    embedding_dim = pair.cfg.embedding_dim;
    encoder = std::move(pair.imp_encoder);
  }

  // windows are z-scored with stats over the full training set
  std::vector<SignalWindow> raw;
  for (const auto& w : dataset) raw.push_back(w.window);
  ChannelStats stats = window_stats(raw);
  auto normed = normalize(raw, stats);
  for (std::size_t i = 0; i < dataset.size(); ++i) dataset[i].window = normed[i];

  TrainSchedule sched = config.finetune_schedule;
  sched.rng_seed = Rng::for_stage(config.seed, "finetune").next_u64();
  auto [model, rep] = finetune(std::move(encoder), embedding_dim, dataset, class_count, config.policy, sched, config.head);

  save_checkpoint((fs::path(out_dir) / "har_model.json").string(), "har_model",
                  json{{"model", model.save_state()},
                       {"stats_mean", stats.mean},
                       {"stats_std", stats.stddev},
                       {"classes", manifest.classes}});
  Digest inputs;
  inputs.update(std::to_string(dataset.size()));
  json report = detail::report_skeleton("finetune", config, inputs.hex());
  report["results"] = rep.to_json();
  report = detail::finalize_report(std::move(report));
  write_json_file((fs::path(out_dir) / "report.json").string(), report);
  return {report, std::move(model)};
}

// -------------------------------------------------------------------- eval

namespace detail {

// Pretrains once per run seed (shared across folds: the corpus holds no
// real-user data) and caches the resulting encoder.
class PretrainedEncoderCache {
 public:
  PretrainedEncoderCache(const Manifest& manifest, const PipelineConfig& config, const std::string& sim_dir,
                         const std::string& ground_dir)
      : manifest_(manifest), config_(config), sim_dir_(sim_dir), ground_dir_(ground_dir) {}

  EncoderProvider provider(PolicyMode mode, std::size_t embedding_dim) {
    return [this, mode, embedding_dim](std::uint64_t seed) -> std::pair<Sequential, std::size_t> {
      EncoderPairConfig cfg = config_.encoder;
      cfg.embedding_dim = embedding_dim;
      if (mode == PolicyMode::NoPretrain) {
        Rng rng = Rng::for_stage(seed, "fresh_encoder");
        return {EncoderPair::fresh_imp_encoder(cfg, rng), cfg.embedding_dim};
      }
      auto key = std::make_pair(seed, embedding_dim);
      auto it = cache_.find(key);
      if (it == cache_.end()) {
        if (corpus_.empty()) {
          corpus_ = pretrain_corpus(manifest_, config_, sim_dir_, ground_dir_);
          prompts_ = load_prompt_embeddings(manifest_);
          cfg.text_dim = prompts_.front().vector.size();
        }
        cfg.text_dim = prompts_.front().vector.size();
        TrainSchedule sched = config_.pretrain_schedule;
        sched.rng_seed = Rng::for_stage(seed, "pretrain").next_u64();
        auto [pair, rep] = pretrain(corpus_, prompts_, sched, cfg);
        it = cache_.emplace(key, std::move(pair)).first;
        reports_[key] = rep;
      }
      Sequential enc = it->second.imp_encoder;  // copy
      return {std::move(enc), embedding_dim};
    };
  }

  const std::map<std::pair<std::uint64_t, std::size_t>, PretrainReport>& reports() const { return reports_; }

 private:
  const Manifest& manifest_;
  const PipelineConfig& config_;
  std::string sim_dir_, ground_dir_;
  std::vector<PromptWindows> corpus_;
  std::vector<TextEmbedding> prompts_;
  std::map<std::pair<std::uint64_t, std::size_t>, EncoderPair> cache_;
  std::map<std::pair<std::uint64_t, std::size_t>, PretrainReport> reports_;
};

inline void write_eval_csv(const std::string& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write: " + path);
  out << "seed,test_user,accuracy,macro_f1,test_count\n";
  for (const auto& f : report.folds) {
    out << f.seed << ',' << f.test_user << ',' << format_double(f.accuracy) << ',' << format_double(f.macro_f1) << ','
        << f.test_count << '\n';
  }
}

}  // namespace detail

struct EvalResult {
  json report;
  EvalReport eval;
};

// Leave-one-user-out evaluation of the configured policy, repeated over
// eval_runs seeds.
inline EvalResult cmd_eval(const Manifest& manifest, const PipelineConfig& config, const std::string& sim_dir,
                           const std::string& ground_dir, const std::string& out_dir) {
  validate_manifest(manifest);
  fs::create_directories(out_dir);
  auto dataset = detail::real_windows(manifest, config);
  const int class_count = static_cast<int>(manifest.classes.size());

  detail::PretrainedEncoderCache cache(manifest, config, sim_dir, ground_dir);
  LoocvConfig cfg;
  cfg.policy = config.policy;
  cfg.schedule = config.finetune_schedule;
  cfg.head = config.head;
  cfg.runs = config.eval_runs;
  cfg.base_seed = Rng::for_stage(config.seed, "eval").next_u64();
  EvalReport eval = loocv(dataset, class_count, cfg, cache.provider(config.policy.mode, config.encoder.embedding_dim));

  Digest inputs;
  inputs.update(std::to_string(dataset.size()));
  for (const auto& w : dataset) inputs.update(w.user_id + ":" + std::to_string(w.label));
  json report = detail::report_skeleton("eval", config, inputs.hex());
  report["results"] = eval.to_json();
  report = detail::finalize_report(std::move(report));
  write_json_file((fs::path(out_dir) / "report.json").string(), report);
  detail::write_eval_csv((fs::path(out_dir) / "folds.csv").string(), eval);
  return {report, std::move(eval)};
}

// ------------------------------------------------------------------ sweeps

inline json cmd_sweep_dim(const Manifest& manifest, const PipelineConfig& config, const std::vector<std::size_t>& dims,
                          const std::string& sim_dir, const std::string& ground_dir, const std::string& out_dir) {
  validate_manifest(manifest);
  fs::create_directories(out_dir);
  auto dataset = detail::real_windows(manifest, config);
  const int class_count = static_cast<int>(manifest.classes.size());

  detail::PretrainedEncoderCache cache(manifest, config, sim_dir, ground_dir);
  LoocvConfig cfg;
  cfg.policy = config.policy;
  cfg.schedule = config.finetune_schedule;
  cfg.head = config.head;
  cfg.runs = config.eval_runs;
  cfg.base_seed = Rng::for_stage(config.seed, "sweep-dim").next_u64();

  auto rows = sweep_embedding_dim(dims, dataset, class_count, cfg, [&](std::size_t dim) {
    return cache.provider(config.policy.mode, dim);
  });

  json rows_json = json::array();
  for (const auto& r : rows) rows_json.push_back(r.to_json());
  Digest inputs;
  inputs.update(std::to_string(dataset.size()));
  json report = detail::report_skeleton("sweep-dim", config, inputs.hex());
  report["results"] = json{{"rows", rows_json}};
  report = detail::finalize_report(std::move(report));
  write_json_file((fs::path(out_dir) / "report.json").string(), report);
  return report;
}

inline json cmd_sweep_frac(const Manifest& manifest, const PipelineConfig& config, const std::vector<double>& fractions,
                           const std::string& sim_dir, const std::string& ground_dir, const std::string& out_dir) {
  validate_manifest(manifest);
  fs::create_directories(out_dir);
  auto dataset = detail::real_windows(manifest, config);
  const int class_count = static_cast<int>(manifest.classes.size());

  detail::PretrainedEncoderCache cache(manifest, config, sim_dir, ground_dir);
  LoocvConfig cfg;
  cfg.policy = config.policy;
  cfg.schedule = config.finetune_schedule;
  cfg.head = config.head;
  cfg.runs = config.eval_runs;
  cfg.base_seed = Rng::for_stage(config.seed, "sweep-frac").next_u64();

  auto rows = sweep_data_fraction(fractions, dataset, class_count, cfg, [&](PolicyMode mode) {
    return cache.provider(mode, config.encoder.embedding_dim);
  });

  json rows_json = json::array();
  for (const auto& r : rows) rows_json.push_back(r.to_json());
  Digest inputs;
  inputs.update(std::to_string(dataset.size()));
  json report = detail::report_skeleton("sweep-frac", config, inputs.hex());
  report["results"] = json{{"rows", rows_json}};
  report = detail::finalize_report(std::move(report));
  write_json_file((fs::path(out_dir) / "report.json").string(), report);
  return report;
}

// --------------------------------------------------------------- gradcheck

// Finite-difference table for every layer kind and loss; returns process
// exit code semantics (0 = all pass).
inline int cmd_gradcheck(std::uint64_t seed, std::string* table_out = nullptr, const std::string& corrupt = "") {
  GradCheckOptions opts;
  opts.corrupt = corrupt;
  auto rows = run_gradient_checks(seed, opts);
  std::string table = "check                     max_rel_err   result\n";
  bool all_pass = true;
  for (const auto& r : rows) {
    char line[96];
    std::snprintf(line, sizeof line, "%-25s %11.3e   %s\n", r.name.c_str(), r.max_rel_err, r.pass ? "pass" : "FAIL");
    table += line;
    all_pass = all_pass && r.pass;
  }
  if (table_out) *table_out = table;
  return all_pass ? 0 : 1;
}

// ------------------------------------------------------------------- synth

inline json cmd_synth(const SyntheticSpec& spec, const std::string& out_dir) {
  SynthResult res = synth_generate(spec, out_dir);
  json report{{"command", "synth"}, {"config", spec.to_json()}, {"seed", spec.rng_seed},
              {"inputs_digest", ""},  {"results", json{{"content_digest", res.content_digest}}}};
  report = detail::finalize_report(std::move(report));
  report["paths"] = json{{"manifest", res.manifest_path}};
  write_json_file((fs::path(out_dir) / "synth_report.json").string(), report);
  return report;
}

// --------------------------------------------------------------- reproduce

// Replays the command recorded in a report into a scratch directory and
// compares the regenerated report digest with the recorded one.
inline bool reproduce_report(const std::string& report_path, const std::string& manifest_path,
                             const std::string& scratch_dir, std::string* detail_out = nullptr) {
  json report = read_json_file(report_path);
  const std::string command = report.at("command").get<std::string>();
  const std::string expected = report.at("report_digest").get<std::string>();

  json fresh;
  if (command == "synth") {
    SyntheticSpec spec = SyntheticSpec::from_json(report.at("config"));
    fresh = cmd_synth(spec, scratch_dir);
  } else {
    PipelineConfig config = PipelineConfig::from_json(report.at("config"));
    Manifest manifest = load_manifest(manifest_path);
    fs::path scratch(scratch_dir);
    if (command == "simulate") {
      fresh = cmd_simulate(manifest, config, (scratch / "sim").string()).report;
    } else if (command == "ground" || command == "eval" || command == "pretrain" || command == "sweep-dim" ||
               command == "sweep-frac") {
      auto sim = cmd_simulate(manifest, config, (scratch / "sim").string());
      std::string ground_dir = (scratch / "ground").string();
      if (command == "ground") {
        fresh = cmd_ground(manifest, config, sim.out_dir, ground_dir).report;
      } else if (config.simp_source == "grounded") {
        cmd_ground(manifest, config, sim.out_dir, ground_dir);
      }
      if (command == "pretrain") {
        fresh = cmd_pretrain(manifest, config, sim.out_dir, ground_dir, (scratch / "pretrain").string()).report;
      } else if (command == "eval") {
        fresh = cmd_eval(manifest, config, sim.out_dir, ground_dir, (scratch / "eval").string()).report;
      } else if (command == "sweep-dim") {
        std::vector<std::size_t> dims;
        for (const auto& r : report.at("results").at("rows")) dims.push_back(static_cast<std::size_t>(r.at("x").get<double>()));
        std::sort(dims.begin(), dims.end());
        dims.erase(std::unique(dims.begin(), dims.end()), dims.end());
        fresh = cmd_sweep_dim(manifest, config, dims, sim.out_dir, ground_dir, (scratch / "sweep").string());
      } else if (command == "sweep-frac") {
        std::vector<double> fracs;
        for (const auto& r : report.at("results").at("rows")) fracs.push_back(r.at("x").get<double>());
        std::sort(fracs.begin(), fracs.end());
        fracs.erase(std::unique(fracs.begin(), fracs.end()), fracs.end());
        fresh = cmd_sweep_frac(manifest, config, fracs, sim.out_dir, ground_dir, (scratch / "sweep").string());
      }
    } else if (command == "finetune") {
      auto sim = cmd_simulate(manifest, config, (scratch / "sim").string());
      std::string ground_dir = (scratch / "ground").string();
      std::string ckpt;
      if (config.policy.mode != PolicyMode::NoPretrain) {
        auto pre = cmd_pretrain(manifest, config, sim.out_dir, ground_dir, (scratch / "pretrain").string());
        ckpt = (scratch / "pretrain" / "encoders.json").string();
      }
      fresh = cmd_finetune(manifest, config, ckpt, (scratch / "finetune").string()).report;
    } else {
      throw ValidationError("reproduce: unknown command '" + command + "' in report");
    }
  }

  const std::string got = fresh.at("report_digest").get<std::string>();
  if (detail_out) *detail_out = "expected " + expected + ", reproduced " + got;
  return got == expected;
}

}  // namespace impsim
