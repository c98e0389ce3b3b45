// User-specific grounding of simulated path lengths into impedance.
//
// Dual-branch network: a path-window encoder and a pose-window encoder,
// each producing a 512-dimensional feature vector; a fusion head maps the
// concatenated features to (magnitude, phase). Encoders are temporal
// convolution stacks; a recurrent encoder could be slotted behind the
// same window-in/vector-out interface.
//
// Input and target channels are z-scored with statistics from the training
// split; predictions are de-normalized on output. Ablation modes replace a
// disabled branch's features with zeros, so the output is exactly invariant
// to that branch's input.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "impsim/checkpoint.hpp"
#include "impsim/error.hpp"
#include "impsim/layers.hpp"
#include "impsim/losses.hpp"
#include "impsim/optimizer.hpp"
#include "impsim/rng.hpp"

namespace impsim {

enum class AblationMode { PoseOnly, DistanceOnly, Both };

inline std::string to_string(AblationMode m) {
  switch (m) {
    case AblationMode::PoseOnly: return "pose_only";
    case AblationMode::DistanceOnly: return "distance_only";
    default: return "both";
  }
}

inline AblationMode ablation_from_string(const std::string& s) {
  if (s == "pose_only") return AblationMode::PoseOnly;
  if (s == "distance_only") return AblationMode::DistanceOnly;
  if (s == "both") return AblationMode::Both;
  throw ValidationError("unknown ablation mode '" + s + "'");
}

struct GroundingNetConfig {
  std::size_t window = 60;          // frames per input window
  std::size_t pose_channels = 156;  // 52 joints x 3 axes, flattened per frame
  std::size_t encoder_dim = 512;
  std::size_t path_c1 = 12, path_c2 = 24;
  std::size_t pose_c1 = 16, pose_c2 = 32;
  std::size_t decoder_hidden = 64;

  json to_json() const {
    return json{{"window", window},   {"pose_channels", pose_channels}, {"encoder_dim", encoder_dim},
                {"path_c1", path_c1}, {"path_c2", path_c2},             {"pose_c1", pose_c1},
                {"pose_c2", pose_c2}, {"decoder_hidden", decoder_hidden}};
  }
  static GroundingNetConfig from_json(const json& j) {
    GroundingNetConfig c;
    c.window = j.value("window", c.window);
    c.pose_channels = j.value("pose_channels", c.pose_channels);
    c.encoder_dim = j.value("encoder_dim", c.encoder_dim);
    c.path_c1 = j.value("path_c1", c.path_c1);
    c.path_c2 = j.value("path_c2", c.path_c2);
    c.pose_c1 = j.value("pose_c1", c.pose_c1);
    c.pose_c2 = j.value("pose_c2", c.pose_c2);
    c.decoder_hidden = j.value("decoder_hidden", c.decoder_hidden);
    return c;
  }
};

// One training sample: a path window, the matching pose window (frame-major
// 60 x 156), and the impedance sample at the window's final frame.
struct GroundingSample {
  std::vector<double> path_window;   // window values
  std::vector<double> pose_window;   // window * pose_channels values
  double magnitude = 0.0;            // ohms
  double phase = 0.0;                // radians
};

class GroundingModel {
 public:
  GroundingModel() = default;

  GroundingModel(AblationMode mode, const GroundingNetConfig& cfg, Rng& rng) : mode_(mode), cfg_(cfg) {
    auto conv_out = [](std::size_t len, std::size_t k, std::size_t s) { return (len - k) / s + 1; };

    std::size_t pl = conv_out(cfg.window, 5, 1);   // conv1
    pl = conv_out(pl, 2, 2);                       // pool
    pl = conv_out(pl, 5, 1);                       // conv2
    pl = conv_out(pl, 2, 2);                       // pool
    path_enc_.add(std::make_unique<Conv1d>(1, cfg.path_c1, 5));
    path_enc_.add(std::make_unique<GeLU>());
    path_enc_.add(std::make_unique<MaxPool1d>(2));
    path_enc_.add(std::make_unique<Conv1d>(cfg.path_c1, cfg.path_c2, 5));
    path_enc_.add(std::make_unique<GeLU>());
    path_enc_.add(std::make_unique<MaxPool1d>(2));
    path_enc_.add(std::make_unique<Flatten>());
    path_enc_.add(std::make_unique<Dense>(cfg.path_c2 * pl, cfg.encoder_dim));

    std::size_t ql = conv_out(cfg.window, 5, 2);   // strided conv1
    ql = conv_out(ql, 5, 1);                       // conv2
    ql = conv_out(ql, 2, 2);                       // pool
    pose_enc_.add(std::make_unique<Conv1d>(cfg.pose_channels, cfg.pose_c1, 5, 2));
    pose_enc_.add(std::make_unique<GeLU>());
    pose_enc_.add(std::make_unique<Conv1d>(cfg.pose_c1, cfg.pose_c2, 5));
    pose_enc_.add(std::make_unique<GeLU>());
    pose_enc_.add(std::make_unique<MaxPool1d>(2));
    pose_enc_.add(std::make_unique<Flatten>());
    pose_enc_.add(std::make_unique<Dense>(cfg.pose_c2 * ql, cfg.encoder_dim));

    decoder_.add(std::make_unique<Dense>(2 * cfg.encoder_dim, cfg.decoder_hidden));
    decoder_.add(std::make_unique<GeLU>());
    decoder_.add(std::make_unique<Dense>(cfg.decoder_hidden, 2));

    path_enc_.init(rng);
    pose_enc_.init(rng);
    decoder_.init(rng);
  }

  AblationMode mode() const { return mode_; }
  const GroundingNetConfig& config() const { return cfg_; }
  Sequential& decoder() { return decoder_; }

  bool uses_path() const { return mode_ != AblationMode::PoseOnly; }
  bool uses_pose() const { return mode_ != AblationMode::DistanceOnly; }

  // Active parameters only: a disabled branch stays at initialization and
  // receives neither gradients nor weight decay.
  std::vector<Param*> params() {
    std::vector<Param*> out;
    if (uses_path()) {
      for (Param* p : path_enc_.params()) out.push_back(p);
    }
    if (uses_pose()) {
      for (Param* p : pose_enc_.params()) out.push_back(p);
    }
    for (Param* p : decoder_.params()) out.push_back(p);
    return out;
  }

  // Batched forward in normalized space. path (N, window), pose
  // (N, window * pose_channels) frame-major; result (N, 2).
  Tensor forward(const std::vector<const GroundingSample*>& batch, Mode mode) {
    const std::size_t n = batch.size();
    const std::size_t w = cfg_.window;
    const std::size_t pc = cfg_.pose_channels;

    Tensor fused({n, 2 * cfg_.encoder_dim});
    if (uses_path()) {
      Tensor xp({n, 1, w});
      for (std::size_t b = 0; b < n; ++b) {
        if (batch[b]->path_window.size() != w) throw ValidationError("grounding: path window length mismatch");
        for (std::size_t t = 0; t < w; ++t) {
          xp.at(b, 0, t) = (batch[b]->path_window[t] - path_mean_) / path_std_;
        }
      }
      Tensor hp = path_enc_.forward(xp, mode);
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t c = 0; c < cfg_.encoder_dim; ++c) fused.at(b, c) = hp.at(b, c);
      }
    }
    if (uses_pose()) {
      Tensor xq({n, pc, w});
      for (std::size_t b = 0; b < n; ++b) {
        if (batch[b]->pose_window.size() != w * pc) throw ValidationError("grounding: pose window shape mismatch");
        for (std::size_t t = 0; t < w; ++t) {
          for (std::size_t c = 0; c < pc; ++c) {
            xq.at(b, c, t) = (batch[b]->pose_window[t * pc + c] - pose_mean_[c]) / pose_std_[c];
          }
        }
      }
      Tensor hq = pose_enc_.forward(xq, mode);
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t c = 0; c < cfg_.encoder_dim; ++c) fused.at(b, cfg_.encoder_dim + c) = hq.at(b, c);
      }
    }
    return decoder_.forward(fused, mode);
  }

  void backward(const Tensor& grad_out) {
    Tensor dfused = decoder_.backward(grad_out);
    const std::size_t n = dfused.dim(0);
    if (uses_path()) {
      Tensor dh({n, cfg_.encoder_dim});
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t c = 0; c < cfg_.encoder_dim; ++c) dh.at(b, c) = dfused.at(b, c);
      }
      path_enc_.backward(dh);
    }
    if (uses_pose()) {
      Tensor dh({n, cfg_.encoder_dim});
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t c = 0; c < cfg_.encoder_dim; ++c) dh.at(b, c) = dfused.at(b, cfg_.encoder_dim + c);
      }
      pose_enc_.backward(dh);
    }
  }

  void zero_grads() {
    path_enc_.zero_grads();
    pose_enc_.zero_grads();
    decoder_.zero_grads();
  }

  // De-normalized prediction for one sample.
  std::array<double, 2> predict(const GroundingSample& s) {
    std::vector<const GroundingSample*> batch{&s};
    Tensor y = forward(batch, Mode::Eval);
    return {y.at(0, 0) * target_std_[0] + target_mean_[0], y.at(0, 1) * target_std_[1] + target_mean_[1]};
  }

  // Normalization statistics, set once from the training split.
  void set_input_stats(double path_mean, double path_std, std::vector<double> pose_mean,
                       std::vector<double> pose_std) {
    path_mean_ = path_mean;
    path_std_ = path_std < 1e-12 ? 1.0 : path_std;
    pose_mean_ = std::move(pose_mean);
    pose_std_ = std::move(pose_std);
    for (double& s : pose_std_) {
      if (s < 1e-12) s = 1.0;
    }
  }
  void set_target_stats(std::array<double, 2> mean, std::array<double, 2> stddev) {
    target_mean_ = mean;
    for (std::size_t i = 0; i < 2; ++i) target_std_[i] = stddev[i] < 1e-12 ? 1.0 : stddev[i];
  }
  const std::array<double, 2>& target_mean() const { return target_mean_; }
  const std::array<double, 2>& target_std() const { return target_std_; }

  std::vector<std::vector<double>> snapshot() {
    std::vector<std::vector<double>> s;
    for (Param* p : params()) s.push_back(p->value.data());
    return s;
  }
  void restore(const std::vector<std::vector<double>>& s) {
    auto ps = params();
    if (s.size() != ps.size()) throw ValidationError("grounding snapshot size mismatch");
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value.data() = s[i];
  }

  json save_state() const {
    return json{{"mode", to_string(mode_)},
                {"config", cfg_.to_json()},
                {"path_encoder", path_enc_.save_state()},
                {"pose_encoder", pose_enc_.save_state()},
                {"decoder", decoder_.save_state()},
                {"path_mean", path_mean_},
                {"path_std", path_std_},
                {"pose_mean", pose_mean_},
                {"pose_std", pose_std_},
                {"target_mean", target_mean_},
                {"target_std", target_std_}};
  }

  static GroundingModel load_state(const json& j) {
    GroundingNetConfig cfg = GroundingNetConfig::from_json(j.at("config"));
    Rng rng(0);  // parameters are overwritten right below
    GroundingModel m(ablation_from_string(j.at("mode").get<std::string>()), cfg, rng);
    m.path_enc_.load_state(j.at("path_encoder"));
    m.pose_enc_.load_state(j.at("pose_encoder"));
    m.decoder_.load_state(j.at("decoder"));
    m.path_mean_ = j.at("path_mean").get<double>();
    m.path_std_ = j.at("path_std").get<double>();
    m.pose_mean_ = j.at("pose_mean").get<std::vector<double>>();
    m.pose_std_ = j.at("pose_std").get<std::vector<double>>();
    m.target_mean_ = j.at("target_mean").get<std::array<double, 2>>();
    m.target_std_ = j.at("target_std").get<std::array<double, 2>>();
    return m;
  }

 private:
  AblationMode mode_ = AblationMode::Both;
  GroundingNetConfig cfg_;
  Sequential path_enc_, pose_enc_, decoder_;

  double path_mean_ = 0.0, path_std_ = 1.0;
  std::vector<double> pose_mean_ = std::vector<double>(156, 0.0);
  std::vector<double> pose_std_ = std::vector<double>(156, 1.0);
  std::array<double, 2> target_mean_{0.0, 0.0};
  std::array<double, 2> target_std_{1.0, 1.0};
};

// Coefficient of determination, 1 - SS_res / SS_tot.
inline double r_squared(const std::vector<double>& pred, const std::vector<double>& target) {
  if (pred.size() != target.size()) throw ValidationError("r_squared: length mismatch");
  if (pred.size() < 2) throw ValidationError("r_squared: need at least 2 samples");
  double tmin = target[0], tmax = target[0], mean = 0.0;
  for (double t : target) {
    tmin = std::min(tmin, t);
    tmax = std::max(tmax, t);
    mean += t;
  }
  if (tmin == tmax) throw ValidationError("r_squared: constant target is undefined");
  mean /= static_cast<double>(target.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    ss_res += (target[i] - pred[i]) * (target[i] - pred[i]);
    ss_tot += (target[i] - mean) * (target[i] - mean);
  }
  return 1.0 - ss_res / ss_tot;
}

struct GroundingReport {
  std::string mode;
  std::vector<double> train_mse;  // normalized space
  std::vector<double> val_mse;
  std::size_t best_epoch = 0;
  int epochs_run = 0;
  double r2_magnitude = 0.0;
  double r2_phase = 0.0;
  double r2_mean = 0.0;

  json to_json() const {
    return json{{"mode", mode},          {"train_mse", train_mse},       {"val_mse", val_mse},
                {"best_epoch", best_epoch}, {"epochs_run", epochs_run}, {"r2_magnitude", r2_magnitude},
                {"r2_phase", r2_phase},  {"r2_mean", r2_mean}};
  }
};

// Trains on a 9:1 random train/validation split with MSE over z-scored
// targets; returns the best-validation checkpoint and the report with
// per-channel R^2 on the validation split (computed de-normalized).
inline std::pair<GroundingModel, GroundingReport> train_grounding(const std::vector<GroundingSample>& dataset,
                                                                  AblationMode mode, const TrainSchedule& schedule,
                                                                  const GroundingNetConfig& cfg = {}) {
  validate_schedule(schedule);
  if (dataset.size() < 2) throw ValidationError("train_grounding: need at least 2 samples");

  Rng rng = Rng::for_stage(schedule.rng_seed, "grounding");
  GroundingModel model(mode, cfg, rng);

  // 9:1 random split
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::size_t val_n = std::max<std::size_t>(1, dataset.size() / 10);
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + val_n);
  std::vector<std::size_t> train_idx(order.begin() + val_n, order.end());

  // input and target stats from the training split
  {
    const std::size_t pc = cfg.pose_channels;
    double pm = 0.0, pv = 0.0;
    std::vector<double> qm(pc, 0.0), qv(pc, 0.0);
    std::array<double, 2> tm{0, 0}, tv{0, 0};
    std::size_t path_count = 0, pose_count = 0;
    for (std::size_t i : train_idx) {
      for (double v : dataset[i].path_window) {
        pm += v;
        ++path_count;
      }
      for (std::size_t t = 0; t < dataset[i].pose_window.size() / pc; ++t) {
        for (std::size_t c = 0; c < pc; ++c) qm[c] += dataset[i].pose_window[t * pc + c];
      }
      pose_count += dataset[i].pose_window.size() / pc;
      tm[0] += dataset[i].magnitude;
      tm[1] += dataset[i].phase;
    }
    pm /= path_count;
    for (double& v : qm) v /= pose_count;
    tm[0] /= train_idx.size();
    tm[1] /= train_idx.size();
    for (std::size_t i : train_idx) {
      for (double v : dataset[i].path_window) pv += (v - pm) * (v - pm);
      for (std::size_t t = 0; t < dataset[i].pose_window.size() / pc; ++t) {
        for (std::size_t c = 0; c < pc; ++c) {
          double d = dataset[i].pose_window[t * pc + c] - qm[c];
          qv[c] += d * d;
        }
      }
      tv[0] += (dataset[i].magnitude - tm[0]) * (dataset[i].magnitude - tm[0]);
      tv[1] += (dataset[i].phase - tm[1]) * (dataset[i].phase - tm[1]);
    }
    std::vector<double> qs(pc);
    for (std::size_t c = 0; c < pc; ++c) qs[c] = std::sqrt(qv[c] / pose_count);
    model.set_input_stats(pm, std::sqrt(pv / path_count), qm, qs);
    model.set_target_stats(tm, {std::sqrt(tv[0] / train_idx.size()), std::sqrt(tv[1] / train_idx.size())});
  }

  auto normalized_targets = [&](const std::vector<std::size_t>& idx) {
    Tensor t({idx.size(), 2});
    for (std::size_t b = 0; b < idx.size(); ++b) {
      t.at(b, 0) = (dataset[idx[b]].magnitude - model.target_mean()[0]) / model.target_std()[0];
      t.at(b, 1) = (dataset[idx[b]].phase - model.target_mean()[1]) / model.target_std()[1];
    }
    return t;
  };

  auto eval_split = [&](const std::vector<std::size_t>& idx) {
    std::vector<const GroundingSample*> batch;
    for (std::size_t i : idx) batch.push_back(&dataset[i]);
    Tensor y = model.forward(batch, Mode::Eval);
    return mse(y, normalized_targets(idx)).value;
  };

  AdamW opt(schedule.learning_rate, schedule.weight_decay);
  auto params = model.params();
  opt.attach(params);

  GroundingReport report;
  report.mode = to_string(mode);
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_snapshot = model.snapshot();

  for (int epoch = 0; epoch < schedule.max_epochs; ++epoch) {
    rng.shuffle(train_idx);
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < train_idx.size(); start += schedule.batch_size) {
      std::size_t end = std::min(train_idx.size(), start + schedule.batch_size);
      std::vector<std::size_t> bidx(train_idx.begin() + start, train_idx.begin() + end);
      std::vector<const GroundingSample*> batch;
      for (std::size_t i : bidx) batch.push_back(&dataset[i]);
      Tensor y = model.forward(batch, Mode::Train);
      LossResult lr = mse(y, normalized_targets(bidx));
      model.zero_grads();
      model.backward(lr.grad);
      opt.step(params);
      epoch_loss += lr.value * bidx.size();
      seen += bidx.size();
    }
    report.train_mse.push_back(epoch_loss / seen);
    report.val_mse.push_back(eval_split(val_idx));
    report.epochs_run = epoch + 1;

    if (report.val_mse.back() < best_val - TrainSchedule::kMinDelta) {
      best_val = report.val_mse.back();
      report.best_epoch = report.val_mse.size() - 1;
      best_snapshot = model.snapshot();
    }
    opt.set_lr(plateau_scheduler(report.val_mse, schedule));
    if (early_stop(report.val_mse, schedule.early_stop_patience).stop) break;
  }

  model.restore(best_snapshot);

  // validation R^2 per channel, de-normalized
  std::vector<double> pm, pp, tm, tp;
  for (std::size_t i : val_idx) {
    auto y = model.predict(dataset[i]);
    pm.push_back(y[0]);
    pp.push_back(y[1]);
    tm.push_back(dataset[i].magnitude);
    tp.push_back(dataset[i].phase);
  }
  report.r2_magnitude = r_squared(pm, tm);
  report.r2_phase = r_squared(pp, tp);
  report.r2_mean = 0.5 * (report.r2_magnitude + report.r2_phase);
  return {std::move(model), std::move(report)};
}

// Stride-1 sliding application: the (magnitude, phase) prediction is
// assigned to each window's final frame, so a per-frame signal exists after
// a (window - 1)-frame warm-up.
inline std::vector<std::array<double, 2>> apply_grounding(GroundingModel& model,
                                                          const std::vector<double>& path_values,
                                                          const std::vector<double>& pose_rows) {
  const std::size_t w = model.config().window;
  const std::size_t pc = model.config().pose_channels;
  if (path_values.size() < w) throw ValidationError("apply_grounding: series shorter than one window");
  if (pose_rows.size() != path_values.size() * pc) {
    throw ValidationError("apply_grounding: pose rows do not match path series length");
  }
  std::vector<std::array<double, 2>> out;
  out.reserve(path_values.size() - w + 1);
  GroundingSample s;
  for (std::size_t end = w; end <= path_values.size(); ++end) {
    s.path_window.assign(path_values.begin() + (end - w), path_values.begin() + end);
    s.pose_window.assign(pose_rows.begin() + (end - w) * pc, pose_rows.begin() + end * pc);
    out.push_back(model.predict(s));
  }
  return out;
}

}  // namespace impsim
