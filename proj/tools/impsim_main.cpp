// impsim: simulate bio-impedance signals from mesh motion and train the
// two-stage recognition pipeline on them.
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "impsim/config.hpp"
#include "impsim/pipeline.hpp"

namespace fs = std::filesystem;
using namespace impsim;

namespace {

struct CommonArgs {
  std::string manifest;
  std::string config;
  std::string out = "impsim_out";
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_manifest = true) {
  if (needs_manifest) {
    cmd->add_option("--manifest", args.manifest, "dataset manifest JSON")->required();
  }
  cmd->add_option("--config", args.config, "pipeline config JSON (defaults when omitted)");
  cmd->add_option("--out", args.out, "output directory");
  cmd->add_option("--seed", args.seed, "seed override (IMPSIM_SEED env var wins over this)");
}

PipelineConfig load_config(const CommonArgs& args) {
  PipelineConfig cfg = args.config.empty() ? PipelineConfig{} : PipelineConfig::load(args.config);
  cfg.apply_seed_overrides(args.seed);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bio-impedance simulation and two-stage HAR training pipeline"};
  app.require_subcommand(1);

  CommonArgs sim_args, ground_args, pre_args, fine_args, eval_args, sdim_args, sfrac_args;
  std::string sim_dir = "impsim_out/sim", ground_dir = "impsim_out/ground";
  std::string pretrain_ckpt;
  std::vector<std::size_t> dims{16, 64, 256};
  std::vector<double> fractions{0.2, 0.6, 1.0};

  auto* c_sim = app.add_subcommand("simulate", "mesh sequences -> per-recording path-length CSVs");
  add_common(c_sim, sim_args);

  auto* c_ground = app.add_subcommand("ground", "train per-user grounding models on paired data");
  add_common(c_ground, ground_args);
  c_ground->add_option("--sim", sim_dir, "simulate output directory");

  auto* c_pre = app.add_subcommand("pretrain", "contrastive pretraining on simulated windows");
  add_common(c_pre, pre_args);
  c_pre->add_option("--sim", sim_dir, "simulate output directory");
  c_pre->add_option("--ground", ground_dir, "ground output directory (simp_source=grounded)");

  auto* c_fine = app.add_subcommand("finetune", "train the classifier on labeled windows");
  add_common(c_fine, fine_args);
  c_fine->add_option("--checkpoint", pretrain_ckpt, "pretraining checkpoint (encoders.json)");

  auto* c_eval = app.add_subcommand("eval", "leave-one-user-out evaluation");
  add_common(c_eval, eval_args);
  c_eval->add_option("--sim", sim_dir, "simulate output directory");
  c_eval->add_option("--ground", ground_dir, "ground output directory (simp_source=grounded)");

  auto* c_sdim = app.add_subcommand("sweep-dim", "embedding-dimension sweep");
  add_common(c_sdim, sdim_args);
  c_sdim->add_option("--sim", sim_dir, "simulate output directory");
  c_sdim->add_option("--dims", dims, "embedding dimensions");

  auto* c_sfrac = app.add_subcommand("sweep-frac", "training-data fraction sweep");
  add_common(c_sfrac, sfrac_args);
  c_sfrac->add_option("--sim", sim_dir, "simulate output directory");
  c_sfrac->add_option("--fractions", fractions, "training fractions in (0,1]");

  auto* c_grad = app.add_subcommand("gradcheck", "finite-difference gradient verification table");
  std::uint64_t grad_seed = 20250811;
  c_grad->add_option("--seed", grad_seed, "seed for the random instances");

  auto* c_synth = app.add_subcommand("synth", "generate a synthetic dataset + manifest");
  std::string synth_spec_path, synth_out = "impsim_data";
  std::optional<std::uint64_t> synth_seed;
  c_synth->add_option("--spec", synth_spec_path, "SyntheticSpec JSON (defaults when omitted)");
  c_synth->add_option("--out", synth_out, "dataset output directory");
  c_synth->add_option("--seed", synth_seed, "seed override");

  auto* c_repro = app.add_subcommand("reproduce", "replay a report and compare digests");
  std::string report_path, repro_manifest, repro_scratch = "impsim_out/reproduce";
  c_repro->add_option("--report", report_path, "report JSON to replay")->required();
  c_repro->add_option("--manifest", repro_manifest, "manifest used by the original run");
  c_repro->add_option("--out", repro_scratch, "scratch directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_sim->parsed()) {
      auto res = cmd_simulate(load_manifest(sim_args.manifest), load_config(sim_args), sim_args.out);
      std::cout << "simulate: " << res.report["results"]["recordings"] << " recordings -> " << sim_args.out << "\n";
    } else if (c_ground->parsed()) {
      auto res = cmd_ground(load_manifest(ground_args.manifest), load_config(ground_args), sim_dir, ground_args.out);
      for (const auto& [user, rep] : res.per_user) {
        std::cout << "ground: " << user << " r2_mean=" << rep.r2_mean << " (mag " << rep.r2_magnitude << ", phase "
                  << rep.r2_phase << ")\n";
      }
    } else if (c_pre->parsed()) {
      auto res = cmd_pretrain(load_manifest(pre_args.manifest), load_config(pre_args), sim_dir, ground_dir, pre_args.out);
      std::cout << "pretrain: retrieval_top1=" << res.report["results"]["retrieval_top1"] << " epochs="
                << res.report["results"]["epochs_run"] << "\n";
    } else if (c_fine->parsed()) {
      auto res = cmd_finetune(load_manifest(fine_args.manifest), load_config(fine_args), pretrain_ckpt, fine_args.out);
      std::cout << "finetune: best_val=" << res.report["results"]["best_val"] << "\n";
    } else if (c_eval->parsed()) {
      auto res = cmd_eval(load_manifest(eval_args.manifest), load_config(eval_args), sim_dir, ground_dir, eval_args.out);
      std::cout << "eval: accuracy " << res.eval.accuracy_mean << " +- " << res.eval.accuracy_std << ", macro F1 "
                << res.eval.f1_mean << " +- " << res.eval.f1_std << " over " << res.eval.folds.size() << " folds\n";
    } else if (c_sdim->parsed()) {
      auto rep = cmd_sweep_dim(load_manifest(sdim_args.manifest), load_config(sdim_args), dims, sim_dir, ground_dir,
                               sdim_args.out);
      for (const auto& r : rep["results"]["rows"]) {
        std::cout << "dim " << r["x"] << ": F1 " << r["f1_mean"] << " +- " << r["f1_std"] << "\n";
      }
    } else if (c_sfrac->parsed()) {
      auto rep = cmd_sweep_frac(load_manifest(sfrac_args.manifest), load_config(sfrac_args), fractions, sim_dir,
                                ground_dir, sfrac_args.out);
      for (const auto& r : rep["results"]["rows"]) {
        std::cout << "fraction " << r["x"] << " " << r["policy"].get<std::string>() << ": F1 " << r["f1_mean"] << "\n";
      }
    } else if (c_grad->parsed()) {
      std::string table;
      int rc = cmd_gradcheck(grad_seed, &table);
      std::cout << table;
      return rc;
    } else if (c_synth->parsed()) {
      SyntheticSpec spec = synth_spec_path.empty() ? SyntheticSpec{} : SyntheticSpec::from_json(read_json_file(synth_spec_path));
      if (synth_seed) spec.rng_seed = *synth_seed;
      if (const char* env = std::getenv("IMPSIM_SEED")) spec.rng_seed = std::strtoull(env, nullptr, 10);
      json rep = cmd_synth(spec, synth_out);
      std::cout << "synth: " << rep["paths"]["manifest"].get<std::string>() << " digest "
                << rep["results"]["content_digest"].get<std::string>() << "\n";
    } else if (c_repro->parsed()) {
      std::string detail;
      bool ok = reproduce_report(report_path, repro_manifest, repro_scratch, &detail);
      std::cout << (ok ? "reproduce: MATCH " : "reproduce: MISMATCH ") << detail << "\n";
      return ok ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
