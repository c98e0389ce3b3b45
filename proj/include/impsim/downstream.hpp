// Stage-2 HAR: classifier head on the impedance encoder, staged
// fine-tuning, leave-one-user-out evaluation, metrics and the ablation
// sweeps.
//
// Freezing contract: in frozen mode the encoder runs in eval mode and its
// parameters are excluded from the optimizer, so they stay bit-identical.
// Late learning starts frozen and unfreezes once the validation loss
// plateaus (and at least freeze_epochs_min epochs have passed); from then
// on the whole model trains end-to-end with a fresh optimizer at the
// initial learning rate.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "impsim/digest.hpp"
#include "impsim/error.hpp"
#include "impsim/layers.hpp"
#include "impsim/losses.hpp"
#include "impsim/optimizer.hpp"
#include "impsim/rng.hpp"
#include "impsim/signal.hpp"
#include "impsim/simpharnet.hpp"

namespace impsim {

enum class PolicyMode { Frozen, LateLearning, NoPretrain };

inline std::string to_string(PolicyMode m) {
  switch (m) {
    case PolicyMode::Frozen: return "frozen";
    case PolicyMode::LateLearning: return "late_learning";
    default: return "no_pretrain";
  }
}

inline PolicyMode policy_from_string(const std::string& s) {
  if (s == "frozen") return PolicyMode::Frozen;
  if (s == "late_learning") return PolicyMode::LateLearning;
  if (s == "no_pretrain") return PolicyMode::NoPretrain;
  throw ValidationError("unknown policy mode '" + s + "'");
}

struct FinetunePolicy {
  PolicyMode mode = PolicyMode::LateLearning;
  int freeze_epochs_min = 5;
  int unfreeze_plateau_patience = 10;
};

struct HeadConfig {
  std::size_t conv_channels = 8;
  std::size_t conv_kernel = 5;
  std::size_t conv_stride = 2;
  std::size_t hidden = 32;
};

// Encoder (window -> embedding) plus a 1D-CNN-and-two-dense head over the
// embedding treated as a single-channel sequence.
class HarModel {
 public:
  HarModel() = default;

  HarModel(Sequential encoder, std::size_t embedding_dim, std::size_t class_count, const HeadConfig& hc, Rng& rng)
      : encoder_(std::move(encoder)), embedding_dim_(embedding_dim) {
    std::size_t l = (embedding_dim - hc.conv_kernel) / hc.conv_stride + 1;
    l = (l - 2) / 2 + 1;  // pool
    head_.add(std::make_unique<Conv1d>(1, hc.conv_channels, hc.conv_kernel, hc.conv_stride));
    head_.add(std::make_unique<GeLU>());
    head_.add(std::make_unique<MaxPool1d>(2));
    head_.add(std::make_unique<Flatten>());
    head_.add(std::make_unique<Dense>(hc.conv_channels * l, hc.hidden));
    head_.add(std::make_unique<GeLU>());
    head_.add(std::make_unique<Dense>(hc.hidden, class_count));
    head_.init(rng);
  }

  Sequential& encoder() { return encoder_; }
  Sequential& head() { return head_; }
  std::size_t embedding_dim() const { return embedding_dim_; }

  Tensor forward(const Tensor& x, Mode head_mode, Mode encoder_mode) {
    Tensor emb = encoder_.forward(x, encoder_mode);
    if (emb.rank() != 2 || emb.dim(1) != embedding_dim_) {
      throw ValidationError("har model: encoder produced " + Tensor::shape_string(emb.shape()) + ", expected (N," +
                            std::to_string(embedding_dim_) + ")");
    }
    Tensor as_seq({emb.dim(0), 1, embedding_dim_}, emb.data());
    return head_.forward(as_seq, head_mode);
  }

  // Backward through the head and, when the encoder is trainable, the
  // encoder as well.
  void backward(const Tensor& grad_logits, bool through_encoder) {
    Tensor g = head_.backward(grad_logits);
    if (through_encoder) {
      Tensor flat({g.dim(0), embedding_dim_}, g.data());
      encoder_.backward(flat);
    }
  }

  std::string encoder_digest() {
    Digest d;
    for (Param* p : encoder_.params()) d.update(p->value.data());
    return d.hex();
  }

  json save_state() const {
    return json{{"embedding_dim", embedding_dim_},
                {"encoder", encoder_.save_state()},
                {"head", head_.save_state()}};
  }

  static HarModel load_state(const json& j) {
    HarModel m;
    m.embedding_dim_ = j.at("embedding_dim").get<std::size_t>();
    m.encoder_ = Sequential::from_spec(j.at("encoder").at("spec"));
    m.encoder_.load_state(j.at("encoder"));
    m.head_ = Sequential::from_spec(j.at("head").at("spec"));
    m.head_.load_state(j.at("head"));
    return m;
  }

 private:
  Sequential encoder_;
  Sequential head_;
  std::size_t embedding_dim_ = 0;
};

struct Prediction {
  int label = 0;
  std::vector<double> probabilities;
};

// Argmax of the logits; exact ties go to the smaller class index.
inline Prediction predict(HarModel& model, const ImpedanceWindow& w) {
  const std::size_t len = w.window.length();
  Tensor x({1, 2, len});
  for (std::size_t t = 0; t < len; ++t) {
    x.at(0, 0, t) = w.window.samples[t * 2];
    x.at(0, 1, t) = w.window.samples[t * 2 + 1];
  }
  Tensor logits = model.forward(x, Mode::Eval, Mode::Eval);
  std::vector<double> row(logits.data());
  Prediction p;
  p.probabilities = softmax(row);
  p.label = 0;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j] > row[p.label]) p.label = static_cast<int>(j);
  }
  return p;
}

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> per_class_f1;
  std::vector<std::vector<int>> confusion;  // [actual][predicted]
};

// Accuracy and macro F1. A class with neither true nor predicted positives
// contributes F1 = 0 to the macro average.
inline Metrics metrics(const std::vector<int>& preds, const std::vector<int>& labels, int class_count) {
  if (preds.size() != labels.size() || preds.empty()) {
    throw ValidationError("metrics: prediction/label lengths must match and be nonzero");
  }
  Metrics m;
  m.confusion.assign(class_count, std::vector<int>(class_count, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= class_count || labels[i] < 0 || labels[i] >= class_count) {
      throw ValidationError("metrics: label out of range at index " + std::to_string(i));
    }
    m.confusion[labels[i]][preds[i]]++;
    if (preds[i] == labels[i]) ++correct;
  }
  m.accuracy = static_cast<double>(correct) / preds.size();
  for (int c = 0; c < class_count; ++c) {
    int tp = m.confusion[c][c];
    int fp = 0, fn = 0;
    for (int o = 0; o < class_count; ++o) {
      if (o != c) {
        fp += m.confusion[o][c];
        fn += m.confusion[c][o];
      }
    }
    double precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    double recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    double f1 = precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    m.per_class_f1.push_back(f1);
    m.macro_f1 += f1;
  }
  m.macro_f1 /= class_count;
  return m;
}

struct FinetuneReport {
  std::string policy;
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  int epochs_run = 0;
  std::size_t best_epoch = 0;
  int unfreeze_epoch = -1;  // -1: never unfroze
  double best_frozen_val = std::numeric_limits<double>::infinity();
  double best_val = std::numeric_limits<double>::infinity();

  json to_json() const {
    return json{{"policy", policy},         {"train_loss", train_loss},   {"val_loss", val_loss},
                {"epochs_run", epochs_run}, {"best_epoch", best_epoch},   {"unfreeze_epoch", unfreeze_epoch},
                {"best_frozen_val", best_frozen_val}, {"best_val", best_val}};
  }
};

namespace detail {

inline Tensor impedance_batch(const std::vector<const ImpedanceWindow*>& ws) {
  const std::size_t n = ws.size();
  const std::size_t len = ws[0]->window.length();
  Tensor x({n, 2, len});
  for (std::size_t b = 0; b < n; ++b) {
    if (ws[b]->window.arity != 2 || ws[b]->window.length() != len) {
      throw ValidationError("finetune: inconsistent window shapes");
    }
    for (std::size_t t = 0; t < len; ++t) {
      x.at(b, 0, t) = ws[b]->window.samples[t * 2];
      x.at(b, 1, t) = ws[b]->window.samples[t * 2 + 1];
    }
  }
  return x;
}

}  // namespace detail

// Supervised fine-tuning of the classifier (and, depending on policy, the
// encoder) on labeled windows. The windows are expected to be normalized
// already; a stratified 9:1 train/validation split happens inside.
inline std::pair<HarModel, FinetuneReport> finetune(Sequential encoder, std::size_t embedding_dim,
                                                    const std::vector<ImpedanceWindow>& windows, int class_count,
                                                    const FinetunePolicy& policy, const TrainSchedule& schedule,
                                                    const HeadConfig& head_cfg = {}) {
  validate_schedule(schedule);
  if (windows.empty()) throw ValidationError("finetune: empty dataset");

  // every class must appear in the data
  {
    std::set<int> present;
    for (const auto& w : windows) present.insert(w.label);
    std::string missing;
    for (int c = 0; c < class_count; ++c) {
      if (!present.count(c)) missing += (missing.empty() ? "" : ", ") + std::to_string(c);
    }
    if (!missing.empty()) throw ValidationError("finetune: classes absent from training split: " + missing);
  }

  Rng rng = Rng::for_stage(schedule.rng_seed, "finetune");
  HarModel model(std::move(encoder), embedding_dim, static_cast<std::size_t>(class_count), head_cfg, rng);
  model.encoder().set_rng(&rng);
  model.head().set_rng(&rng);

  // stratified 9:1 split
  std::vector<std::size_t> train_idx, val_idx;
  {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < windows.size(); ++i) by_class[windows[i].label].push_back(i);
    for (auto& [c, idx] : by_class) {
      rng.shuffle(idx);
      std::size_t val_n = idx.size() >= 2 ? std::max<std::size_t>(1, idx.size() / 10) : 0;
      for (std::size_t i = 0; i < idx.size(); ++i) (i < val_n ? val_idx : train_idx).push_back(idx[i]);
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
    if (val_idx.empty()) val_idx = train_idx;  // degenerate tiny datasets
  }

  const bool starts_frozen = policy.mode != PolicyMode::NoPretrain;
  bool frozen = starts_frozen;

  auto trainable = [&]() {
    std::vector<Param*> ps = model.head().params();
    if (!frozen) {
      for (Param* p : model.encoder().params()) ps.push_back(p);
    }
    return ps;
  };

  AdamW opt(schedule.learning_rate, schedule.weight_decay);
  auto params = trainable();
  opt.attach(params);

  auto eval_loss = [&](const std::vector<std::size_t>& idx) {
    std::vector<const ImpedanceWindow*> batch;
    std::vector<int> labels;
    for (std::size_t i : idx) {
      batch.push_back(&windows[i]);
      labels.push_back(windows[i].label);
    }
    Tensor logits = model.forward(detail::impedance_batch(batch), Mode::Eval, Mode::Eval);
    return cross_entropy(logits, labels).value;
  };

  FinetuneReport report;
  report.policy = to_string(policy.mode);
  double best_val = std::numeric_limits<double>::infinity();
  json best_state = model.save_state();
  int since_best = 0, plateau_count = 0, frozen_stall = 0;
  double frozen_best = std::numeric_limits<double>::infinity();
  double lr = schedule.learning_rate;

  for (int epoch = 0; epoch < schedule.max_epochs; ++epoch) {
    rng.shuffle(train_idx);
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < train_idx.size(); start += schedule.batch_size) {
      std::size_t end = std::min(train_idx.size(), start + schedule.batch_size);
      std::vector<const ImpedanceWindow*> batch;
      std::vector<int> labels;
      for (std::size_t k = start; k < end; ++k) {
        batch.push_back(&windows[train_idx[k]]);
        labels.push_back(windows[train_idx[k]].label);
      }
      Tensor logits = model.forward(detail::impedance_batch(batch), Mode::Train, frozen ? Mode::Eval : Mode::Train);
      LossResult lr_res = cross_entropy(logits, labels);
      model.head().zero_grads();
      model.encoder().zero_grads();
      model.backward(lr_res.grad, !frozen);
      opt.step(params);
      epoch_loss += lr_res.value * batch.size();
      seen += batch.size();
    }
    report.train_loss.push_back(epoch_loss / seen);
    double vloss = eval_loss(val_idx);
    report.val_loss.push_back(vloss);
    report.epochs_run = epoch + 1;

    bool improved = vloss < best_val - TrainSchedule::kMinDelta;
    if (improved) {
      best_val = vloss;
      report.best_epoch = report.val_loss.size() - 1;
      best_state = model.save_state();
      since_best = 0;
      plateau_count = 0;
    } else {
      ++since_best;
      ++plateau_count;
      if (plateau_count >= schedule.plateau_patience) {
        lr = std::max(lr * schedule.plateau_factor, schedule.min_lr);
        opt.set_lr(lr);
        plateau_count = 0;
      }
    }

    if (frozen) {
      if (vloss < frozen_best - TrainSchedule::kMinDelta) {
        frozen_best = vloss;
        frozen_stall = 0;
      } else {
        ++frozen_stall;
      }
      if (policy.mode == PolicyMode::LateLearning && epoch + 1 >= policy.freeze_epochs_min &&
          frozen_stall >= policy.unfreeze_plateau_patience) {
        // unfreeze: fresh optimizer over all parameters at the initial rate
        frozen = false;
        report.unfreeze_epoch = epoch + 1;
        report.best_frozen_val = best_val;
        params = trainable();
        opt = AdamW(schedule.learning_rate, schedule.weight_decay);
        opt.attach(params);
        lr = schedule.learning_rate;
        since_best = 0;
        plateau_count = 0;
      }
    }

    if (since_best >= schedule.early_stop_patience) break;
  }
  if (frozen && policy.mode == PolicyMode::Frozen) report.best_frozen_val = best_val;
  report.best_val = best_val;

  HarModel best = HarModel::load_state(best_state);
  return {std::move(best), std::move(report)};
}

struct FoldResult {
  std::uint64_t seed = 0;
  std::string test_user;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::size_t test_count = 0;
  std::vector<std::vector<int>> confusion;

  json to_json() const {
    return json{{"seed", seed},           {"test_user", test_user}, {"accuracy", accuracy},
                {"macro_f1", macro_f1},   {"test_count", test_count}, {"confusion", confusion}};
  }
};

struct EvalReport {
  std::string policy;
  int class_count = 0;
  std::vector<std::string> users;
  std::vector<FoldResult> folds;  // one per (run, user)
  double accuracy_mean = 0.0, accuracy_std = 0.0;
  double f1_mean = 0.0, f1_std = 0.0;

  void finalize() {
    double am = 0, fm = 0;
    for (const auto& f : folds) {
      am += f.accuracy;
      fm += f.macro_f1;
    }
    am /= folds.size();
    fm /= folds.size();
    double av = 0, fv = 0;
    for (const auto& f : folds) {
      av += (f.accuracy - am) * (f.accuracy - am);
      fv += (f.macro_f1 - fm) * (f.macro_f1 - fm);
    }
    accuracy_mean = am;
    f1_mean = fm;
    accuracy_std = folds.size() > 1 ? std::sqrt(av / (folds.size() - 1)) : 0.0;
    f1_std = folds.size() > 1 ? std::sqrt(fv / (folds.size() - 1)) : 0.0;
  }

  json to_json() const {
    json fj = json::array();
    for (const auto& f : folds) fj.push_back(f.to_json());
    return json{{"policy", policy},         {"class_count", class_count},   {"users", users},
                {"folds", fj},              {"accuracy_mean", accuracy_mean}, {"accuracy_std", accuracy_std},
                {"f1_mean", f1_mean},       {"f1_std", f1_std}};
  }
};

// Supplies the encoder for a given run seed: a pretrained copy for
// frozen/late_learning, or a freshly initialized one for no_pretrain.
using EncoderProvider = std::function<std::pair<Sequential, std::size_t>(std::uint64_t seed)>;

// Optional per-fold reduction of the training windows (used by the
// data-fraction sweep). Receives the fold-training windows and a seeded rng.
using TrainFilter = std::function<std::vector<ImpedanceWindow>(const std::vector<ImpedanceWindow>&, Rng&)>;

struct LoocvConfig {
  FinetunePolicy policy;
  TrainSchedule schedule;
  HeadConfig head;
  int runs = 5;                 // repeated runs with different seeds
  std::uint64_t base_seed = 1;
  TrainFilter train_filter;     // empty: use all training windows
};

// Leave-one-user-out cross-validation, repeated over `runs` seeds.
// Normalization stats come from each fold's training windows only.
inline EvalReport loocv(const std::vector<ImpedanceWindow>& dataset, int class_count, const LoocvConfig& cfg,
                        const EncoderProvider& provider) {
  std::map<std::string, std::vector<std::size_t>> by_user;
  for (std::size_t i = 0; i < dataset.size(); ++i) by_user[dataset[i].user_id].push_back(i);
  if (by_user.size() < 2) throw ValidationError("loocv: need at least 2 users");
  for (const auto& [user, idx] : by_user) {
    if (idx.empty()) throw ValidationError("loocv: user '" + user + "' has no data");
  }

  EvalReport report;
  report.policy = to_string(cfg.policy.mode);
  report.class_count = class_count;
  for (const auto& [user, idx] : by_user) report.users.push_back(user);

  for (int run = 0; run < cfg.runs; ++run) {
    std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(run);
    auto [encoder_template, embedding_dim] = provider(seed);

    std::size_t covered = 0;
    for (const auto& [test_user, test_idx] : by_user) {
      std::vector<ImpedanceWindow> train_ws, test_ws;
      for (std::size_t i = 0; i < dataset.size(); ++i) {
        (dataset[i].user_id == test_user ? test_ws : train_ws).push_back(dataset[i]);
      }
      // partition integrity
      for (const auto& w : train_ws) {
        if (w.user_id == test_user) throw ValidationError("loocv: test user leaked into training split");
      }
      covered += test_ws.size();

      Rng fold_rng = Rng::for_stage(seed, "loocv/" + test_user);
      if (cfg.train_filter) train_ws = cfg.train_filter(train_ws, fold_rng);

      // z-score with training-fold stats
      std::vector<SignalWindow> raw;
      for (const auto& w : train_ws) raw.push_back(w.window);
      ChannelStats stats = window_stats(raw);
      for (auto& w : train_ws) {
        std::vector<SignalWindow> one = normalize(std::vector<SignalWindow>{w.window}, stats);
        w.window = one[0];
      }
      for (auto& w : test_ws) {
        std::vector<SignalWindow> one = normalize(std::vector<SignalWindow>{w.window}, stats);
        w.window = one[0];
      }

      TrainSchedule fold_schedule = cfg.schedule;
      fold_schedule.rng_seed = Rng::for_stage(seed, "fold/" + test_user).next_u64();

      auto [model, ft_report] =
          finetune(encoder_template, embedding_dim, train_ws, class_count, cfg.policy, fold_schedule, cfg.head);

      std::vector<int> preds, labels;
      for (const auto& w : test_ws) {
        preds.push_back(predict(model, w).label);
        labels.push_back(w.label);
      }
      Metrics m = metrics(preds, labels, class_count);
      FoldResult fr;
      fr.seed = seed;
      fr.test_user = test_user;
      fr.accuracy = m.accuracy;
      fr.macro_f1 = m.macro_f1;
      fr.test_count = test_ws.size();
      fr.confusion = m.confusion;
      report.folds.push_back(std::move(fr));
    }
    if (covered != dataset.size()) throw ValidationError("loocv: folds do not partition the dataset");
  }
  report.finalize();
  return report;
}

// Stratified subsampling to a fraction of each class, for the Fig.-7-style
// data budget sweep. Floor semantics: a fraction that empties a class is an
// error.
inline std::vector<ImpedanceWindow> stratified_fraction(const std::vector<ImpedanceWindow>& ws, double fraction,
                                                        Rng& rng) {
  if (!(fraction > 0.0) || fraction > 1.0) throw ValidationError("fraction must be in (0, 1]");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < ws.size(); ++i) by_class[ws[i].label].push_back(i);
  std::vector<std::size_t> keep;
  for (auto& [c, idx] : by_class) {
    std::size_t n = static_cast<std::size_t>(fraction * static_cast<double>(idx.size()) + 1e-9);
    if (n == 0) {
      throw ValidationError("fraction " + std::to_string(fraction) + " empties class " + std::to_string(c));
    }
    rng.shuffle(idx);
    keep.insert(keep.end(), idx.begin(), idx.begin() + n);
  }
  std::sort(keep.begin(), keep.end());
  std::vector<ImpedanceWindow> out;
  for (std::size_t i : keep) out.push_back(ws[i]);
  return out;
}

struct SweepRow {
  double x = 0.0;          // dimension or fraction
  std::string policy;
  double f1_mean = 0.0, f1_std = 0.0;
  double accuracy_mean = 0.0;

  json to_json() const {
    return json{{"x", x}, {"policy", policy}, {"f1_mean", f1_mean}, {"f1_std", f1_std}, {"accuracy_mean", accuracy_mean}};
  }
};

// F1 vs embedding dimension. `provider_for_dim` yields an encoder provider
// per dimension (typically a pretraining run per seed).
inline std::vector<SweepRow> sweep_embedding_dim(const std::vector<std::size_t>& dims,
                                                 const std::vector<ImpedanceWindow>& dataset, int class_count,
                                                 const LoocvConfig& cfg,
                                                 const std::function<EncoderProvider(std::size_t)>& provider_for_dim) {
  if (dims.empty()) throw ValidationError("sweep_embedding_dim: empty dimension list");
  std::vector<SweepRow> rows;
  for (std::size_t dim : dims) {
    EvalReport r = loocv(dataset, class_count, cfg, provider_for_dim(dim));
    rows.push_back({static_cast<double>(dim), r.policy, r.f1_mean, r.f1_std, r.accuracy_mean});
  }
  return rows;
}

// F1 vs training-data fraction, for each policy mode.
inline std::vector<SweepRow> sweep_data_fraction(const std::vector<double>& fractions,
                                                 const std::vector<ImpedanceWindow>& dataset, int class_count,
                                                 const LoocvConfig& base_cfg,
                                                 const std::function<EncoderProvider(PolicyMode)>& provider_for_mode) {
  if (fractions.empty()) throw ValidationError("sweep_data_fraction: empty fraction list");
  std::vector<SweepRow> rows;
  for (double frac : fractions) {
    for (PolicyMode mode : {PolicyMode::NoPretrain, PolicyMode::Frozen, PolicyMode::LateLearning}) {
      LoocvConfig cfg = base_cfg;
      cfg.policy.mode = mode;
      if (frac < 1.0) {
        cfg.train_filter = [frac](const std::vector<ImpedanceWindow>& ws, Rng& rng) {
          return stratified_fraction(ws, frac, rng);
        };
      }
      EvalReport r = loocv(dataset, class_count, cfg, provider_for_mode(mode));
      rows.push_back({frac, to_string(mode), r.f1_mean, r.f1_std, r.accuracy_mean});
    }
  }
  return rows;
}

}  // namespace impsim
