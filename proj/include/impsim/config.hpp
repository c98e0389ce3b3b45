// Pipeline configuration: one JSON document, CLI flags override keys, and
// the IMPSIM_SEED environment variable overrides the seed.
#pragma once

#include <cstdint>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "impsim/checkpoint.hpp"
#include "impsim/digest.hpp"
#include "impsim/downstream.hpp"
#include "impsim/error.hpp"
#include "impsim/grounding.hpp"
#include "impsim/optimizer.hpp"
#include "impsim/relax.hpp"
#include "impsim/signal.hpp"
#include "impsim/simpharnet.hpp"

namespace impsim {

namespace detail {

inline TrainSchedule schedule_from_json(const json& j, const TrainSchedule& base = {}) {
  TrainSchedule s = base;
  s.max_epochs = j.value("max_epochs", s.max_epochs);
  s.early_stop_patience = j.value("early_stop_patience", s.early_stop_patience);
  s.plateau_patience = j.value("plateau_patience", s.plateau_patience);
  s.plateau_factor = j.value("plateau_factor", s.plateau_factor);
  s.min_lr = j.value("min_lr", s.min_lr);
  s.learning_rate = j.value("learning_rate", s.learning_rate);
  s.weight_decay = j.value("weight_decay", s.weight_decay);
  s.batch_size = j.value("batch_size", s.batch_size);
  return s;
}

inline json schedule_to_json(const TrainSchedule& s) {
  return json{{"max_epochs", s.max_epochs},
              {"early_stop_patience", s.early_stop_patience},
              {"plateau_patience", s.plateau_patience},
              {"plateau_factor", s.plateau_factor},
              {"min_lr", s.min_lr},
              {"learning_rate", s.learning_rate},
              {"weight_decay", s.weight_decay},
              {"batch_size", s.batch_size}};
}

}  // namespace detail

struct PipelineConfig {
  double target_rate_hz = 20.0;
  WindowSpec har_window{50, 10};
  WindowSpec grounding_window{60, 1};   // native-rate frames
  WindowSpec pretrain_window{60, 10};   // SImp samples at the target rate
  std::size_t grounding_train_step = 1; // extra stride when assembling grounding training sets
  RelaxConfig relax;

  TrainSchedule grounding_schedule;
  GroundingNetConfig grounding_net;
  AblationMode grounding_mode = AblationMode::Both;

  TrainSchedule pretrain_schedule;
  EncoderPairConfig encoder;

  TrainSchedule finetune_schedule;
  FinetunePolicy policy;
  HeadConfig head;

  int eval_runs = 5;
  std::string simp_source = "geometric";  // geometric | grounded
  std::string calibration_user;           // grounded SImp: which user's model; empty = first
  std::uint64_t seed = 7;

  json to_json() const {
    json j;
    j["target_rate_hz"] = target_rate_hz;
    j["har_window"] = {{"length", har_window.length}, {"step", har_window.step}};
    j["grounding_window"] = {{"length", grounding_window.length}, {"step", grounding_window.step}};
    j["pretrain_window"] = {{"length", pretrain_window.length}, {"step", pretrain_window.step}};
    j["grounding_train_step"] = grounding_train_step;
    j["relax"] = {{"step_size", relax.step_size},
                  {"max_iters", relax.max_iters},
                  {"convergence_tol", relax.convergence_tol},
                  {"surface_radius", relax.surface_radius ? json(*relax.surface_radius) : json(nullptr)}};
    j["grounding"] = {{"schedule", detail::schedule_to_json(grounding_schedule)},
                      {"net", grounding_net.to_json()},
                      {"mode", to_string(grounding_mode)}};
    j["pretrain"] = {{"schedule", detail::schedule_to_json(pretrain_schedule)}, {"encoder", encoder.to_json()}};
    j["finetune"] = {{"schedule", detail::schedule_to_json(finetune_schedule)},
                     {"policy",
                      {{"mode", to_string(policy.mode)},
                       {"freeze_epochs_min", policy.freeze_epochs_min},
                       {"unfreeze_plateau_patience", policy.unfreeze_plateau_patience}}},
                     {"head",
                      {{"conv_channels", head.conv_channels},
                       {"conv_kernel", head.conv_kernel},
                       {"conv_stride", head.conv_stride},
                       {"hidden", head.hidden}}}};
    j["eval_runs"] = eval_runs;
    j["simp_source"] = simp_source;
    j["calibration_user"] = calibration_user;
    j["seed"] = seed;
    return j;
  }

  static PipelineConfig from_json(const json& j) {
    PipelineConfig c;
    c.target_rate_hz = j.value("target_rate_hz", c.target_rate_hz);
    if (j.contains("har_window")) {
      c.har_window.length = j["har_window"].value("length", c.har_window.length);
      c.har_window.step = j["har_window"].value("step", c.har_window.step);
    }
    if (j.contains("grounding_window")) {
      c.grounding_window.length = j["grounding_window"].value("length", c.grounding_window.length);
      c.grounding_window.step = j["grounding_window"].value("step", c.grounding_window.step);
    }
    if (j.contains("pretrain_window")) {
      c.pretrain_window.length = j["pretrain_window"].value("length", c.pretrain_window.length);
      c.pretrain_window.step = j["pretrain_window"].value("step", c.pretrain_window.step);
    }
    c.grounding_train_step = j.value("grounding_train_step", c.grounding_train_step);
    if (j.contains("relax")) {
      const json& r = j["relax"];
      c.relax.step_size = r.value("step_size", c.relax.step_size);
      c.relax.max_iters = r.value("max_iters", c.relax.max_iters);
      c.relax.convergence_tol = r.value("convergence_tol", c.relax.convergence_tol);
      if (r.contains("surface_radius") && !r["surface_radius"].is_null()) {
        c.relax.surface_radius = r["surface_radius"].get<double>();
      }
    }
    if (j.contains("grounding")) {
      const json& g = j["grounding"];
      if (g.contains("schedule")) c.grounding_schedule = detail::schedule_from_json(g["schedule"], c.grounding_schedule);
      if (g.contains("net")) c.grounding_net = GroundingNetConfig::from_json(g["net"]);
      if (g.contains("mode")) c.grounding_mode = ablation_from_string(g["mode"].get<std::string>());
    }
    if (j.contains("pretrain")) {
      const json& p = j["pretrain"];
      if (p.contains("schedule")) c.pretrain_schedule = detail::schedule_from_json(p["schedule"], c.pretrain_schedule);
      if (p.contains("encoder")) c.encoder = EncoderPairConfig::from_json(p["encoder"]);
    }
    if (j.contains("finetune")) {
      const json& f = j["finetune"];
      if (f.contains("schedule")) c.finetune_schedule = detail::schedule_from_json(f["schedule"], c.finetune_schedule);
      if (f.contains("policy")) {
        c.policy.mode = policy_from_string(f["policy"].value("mode", to_string(c.policy.mode)));
        c.policy.freeze_epochs_min = f["policy"].value("freeze_epochs_min", c.policy.freeze_epochs_min);
        c.policy.unfreeze_plateau_patience =
            f["policy"].value("unfreeze_plateau_patience", c.policy.unfreeze_plateau_patience);
      }
      if (f.contains("head")) {
        c.head.conv_channels = f["head"].value("conv_channels", c.head.conv_channels);
        c.head.conv_kernel = f["head"].value("conv_kernel", c.head.conv_kernel);
        c.head.conv_stride = f["head"].value("conv_stride", c.head.conv_stride);
        c.head.hidden = f["head"].value("hidden", c.head.hidden);
      }
    }
    c.eval_runs = j.value("eval_runs", c.eval_runs);
    c.simp_source = j.value("simp_source", c.simp_source);
    if (c.simp_source != "geometric" && c.simp_source != "grounded") {
      throw ValidationError("config: simp_source must be 'geometric' or 'grounded'");
    }
    c.calibration_user = j.value("calibration_user", c.calibration_user);
    c.seed = j.value("seed", c.seed);
    return c;
  }

  static PipelineConfig load(const std::string& path) { return from_json(read_json_file(path)); }

  // Canonical digest of the full configuration.
  std::string digest() const { return digest_string(to_json().dump()); }

  // Seed precedence: IMPSIM_SEED env > --seed flag > config key.
  void apply_seed_overrides(std::optional<std::uint64_t> cli_seed) {
    if (cli_seed) seed = *cli_seed;
    if (const char* env = std::getenv("IMPSIM_SEED")) {
      seed = static_cast<std::uint64_t>(std::strtoull(env, nullptr, 10));
    }
  }
};

}  // namespace impsim
