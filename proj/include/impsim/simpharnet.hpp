// Contrastive pretraining: align impedance-window embeddings with text
// prompt embeddings under the InfoNCE objective.
//
// The text encoder is three dense layers with batch normalization, dropout
// and GeLU; the impedance encoder is a convolution stack ending in a global
// average pool, so one set of weights serves any window length. Each batch
// holds one (window, prompt) pair per distinct prompt; the other prompts in
// the batch act as negatives.
#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "impsim/checkpoint.hpp"
#include "impsim/contrastive.hpp"
#include "impsim/error.hpp"
#include "impsim/layers.hpp"
#include "impsim/optimizer.hpp"
#include "impsim/rng.hpp"
#include "impsim/signal.hpp"

namespace impsim {

struct TextEmbedding {
  std::string prompt_id;
  std::string text;
  int class_hint = -1;
  std::vector<double> vector;
};

// All simulated windows generated from one prompt.
struct PromptWindows {
  std::string prompt_id;
  std::vector<SignalWindow> windows;  // arity 2
};

struct EncoderPairConfig {
  std::size_t embedding_dim = 256;
  std::size_t text_dim = 768;
  std::size_t text_h1 = 512, text_h2 = 256;
  std::size_t imp_c1 = 16, imp_c2 = 32;
  std::size_t imp_kernel = 7;
  double dropout = 0.1;
  double temperature = 1.0;  // 1.0 = plain InfoNCE

  json to_json() const {
    return json{{"embedding_dim", embedding_dim}, {"text_dim", text_dim}, {"text_h1", text_h1},
                {"text_h2", text_h2},             {"imp_c1", imp_c1},     {"imp_c2", imp_c2},
                {"imp_kernel", imp_kernel},       {"dropout", dropout},   {"temperature", temperature}};
  }
  static EncoderPairConfig from_json(const json& j) {
    EncoderPairConfig c;
    c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
    c.text_dim = j.value("text_dim", c.text_dim);
    c.text_h1 = j.value("text_h1", c.text_h1);
    c.text_h2 = j.value("text_h2", c.text_h2);
    c.imp_c1 = j.value("imp_c1", c.imp_c1);
    c.imp_c2 = j.value("imp_c2", c.imp_c2);
    c.imp_kernel = j.value("imp_kernel", c.imp_kernel);
    c.dropout = j.value("dropout", c.dropout);
    c.temperature = j.value("temperature", c.temperature);
    return c;
  }
};

struct EncoderPair {
  Sequential text_encoder;  // (N, text_dim) -> (N, embedding_dim)
  Sequential imp_encoder;   // (N, 2, W)     -> (N, embedding_dim)
  EncoderPairConfig cfg;
  ChannelStats window_stats;  // normalization used during pretraining

  static EncoderPair build(const EncoderPairConfig& cfg, Rng& rng) {
    EncoderPair p;
    p.cfg = cfg;
    p.text_encoder.add(std::make_unique<Dense>(cfg.text_dim, cfg.text_h1));
    p.text_encoder.add(std::make_unique<BatchNorm1d>(cfg.text_h1));
    p.text_encoder.add(std::make_unique<GeLU>());
    p.text_encoder.add(std::make_unique<Dropout>(cfg.dropout));
    p.text_encoder.add(std::make_unique<Dense>(cfg.text_h1, cfg.text_h2));
    p.text_encoder.add(std::make_unique<BatchNorm1d>(cfg.text_h2));
    p.text_encoder.add(std::make_unique<GeLU>());
    p.text_encoder.add(std::make_unique<Dropout>(cfg.dropout));
    p.text_encoder.add(std::make_unique<Dense>(cfg.text_h2, cfg.embedding_dim));

    p.imp_encoder.add(std::make_unique<Conv1d>(2, cfg.imp_c1, cfg.imp_kernel));
    p.imp_encoder.add(std::make_unique<GeLU>());
    p.imp_encoder.add(std::make_unique<MaxPool1d>(2));
    p.imp_encoder.add(std::make_unique<Conv1d>(cfg.imp_c1, cfg.imp_c2, cfg.imp_kernel));
    p.imp_encoder.add(std::make_unique<GeLU>());
    p.imp_encoder.add(std::make_unique<GlobalAvgPool1d>());
    p.imp_encoder.add(std::make_unique<Dense>(cfg.imp_c2, cfg.embedding_dim));

    p.text_encoder.init(rng);
    p.imp_encoder.init(rng);
    return p;
  }

  // Fresh encoders with the same architecture, new random weights.
  static Sequential fresh_imp_encoder(const EncoderPairConfig& cfg, Rng& rng) {
    EncoderPair tmp = build(cfg, rng);
    return std::move(tmp.imp_encoder);
  }

  json save_state() const {
    return json{{"config", cfg.to_json()},
                {"text_encoder", text_encoder.save_state()},
                {"imp_encoder", imp_encoder.save_state()},
                {"stats_mean", window_stats.mean},
                {"stats_std", window_stats.stddev}};
  }

  static EncoderPair load_state(const json& j) {
    Rng rng(0);  // overwritten below
    EncoderPair p = build(EncoderPairConfig::from_json(j.at("config")), rng);
    p.text_encoder.load_state(j.at("text_encoder"));
    p.imp_encoder.load_state(j.at("imp_encoder"));
    p.window_stats.mean = j.at("stats_mean").get<std::vector<double>>();
    p.window_stats.stddev = j.at("stats_std").get<std::vector<double>>();
    return p;
  }
};

struct PretrainReport {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  double initial_loss = 0.0;  // before the first optimizer step
  std::size_t best_epoch = 0;
  int epochs_run = 0;
  double retrieval_top1 = 0.0;  // held-out window -> prompt retrieval
  std::size_t prompt_count = 0;
  std::size_t batch_size = 0;
  std::size_t embedding_dim = 0;

  json to_json() const {
    return json{{"train_loss", train_loss},       {"val_loss", val_loss},   {"initial_loss", initial_loss},
                {"best_epoch", best_epoch},       {"epochs_run", epochs_run}, {"retrieval_top1", retrieval_top1},
                {"prompt_count", prompt_count},   {"batch_size", batch_size}, {"embedding_dim", embedding_dim}};
  }
};

namespace detail {

inline Tensor windows_to_tensor(const std::vector<const SignalWindow*>& ws) {
  const std::size_t n = ws.size();
  const std::size_t len = ws[0]->length();
  Tensor x({n, 2, len});
  for (std::size_t b = 0; b < n; ++b) {
    if (ws[b]->arity != 2 || ws[b]->length() != len) throw ValidationError("pretrain: inconsistent window shapes");
    for (std::size_t t = 0; t < len; ++t) {
      x.at(b, 0, t) = ws[b]->samples[t * 2];
      x.at(b, 1, t) = ws[b]->samples[t * 2 + 1];
    }
  }
  return x;
}

inline Tensor embeddings_to_tensor(const std::vector<const std::vector<double>*>& es, std::size_t dim) {
  Tensor x({es.size(), dim});
  for (std::size_t b = 0; b < es.size(); ++b) {
    if (es[b]->size() != dim) throw ValidationError("pretrain: text embedding dimension mismatch");
    for (std::size_t c = 0; c < dim; ++c) x.at(b, c) = (*es[b])[c];
  }
  return x;
}

}  // namespace detail

// Contrastive pretraining over simulated windows grouped by prompt.
// Returns the best-validation encoder pair plus loss curves and a top-1
// prompt-retrieval accuracy on held-out windows.
inline std::pair<EncoderPair, PretrainReport> pretrain(const std::vector<PromptWindows>& corpus,
                                                       const std::vector<TextEmbedding>& prompts,
                                                       const TrainSchedule& schedule,
                                                       const EncoderPairConfig& cfg = {}) {
  validate_schedule(schedule);
  if (corpus.size() < 2) throw ValidationError("pretrain: need at least 2 distinct prompts");

  std::map<std::string, const TextEmbedding*> embedding_of;
  for (const auto& p : prompts) embedding_of[p.prompt_id] = &p;
  for (const auto& g : corpus) {
    if (g.windows.empty()) throw ValidationError("pretrain: prompt '" + g.prompt_id + "' has no windows");
    if (!embedding_of.count(g.prompt_id)) {
      throw ValidationError("pretrain: no text embedding for prompt '" + g.prompt_id + "'");
    }
  }

  Rng rng = Rng::for_stage(schedule.rng_seed, "pretrain");
  EncoderPair pair = EncoderPair::build(cfg, rng);
  pair.text_encoder.set_rng(&rng);
  pair.imp_encoder.set_rng(&rng);

  // split each prompt's windows 9:1
  struct Split {
    std::vector<const SignalWindow*> train, val;
    const std::vector<double>* embedding;
  };
  std::vector<Split> splits(corpus.size());
  std::size_t total_train = 0;
  for (std::size_t p = 0; p < corpus.size(); ++p) {
    std::vector<std::size_t> order(corpus[p].windows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::size_t val_n = corpus[p].windows.size() >= 2 ? std::max<std::size_t>(1, corpus[p].windows.size() / 10) : 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const SignalWindow* w = &corpus[p].windows[order[i]];
      (i < val_n ? splits[p].val : splits[p].train).push_back(w);
    }
    splits[p].embedding = &embedding_of[corpus[p].prompt_id]->vector;
    total_train += splits[p].train.size();
  }

  // normalization stats over the training windows
  {
    std::vector<SignalWindow> train_copy;
    for (const auto& s : splits) {
      for (const auto* w : s.train) train_copy.push_back(*w);
    }
    pair.window_stats = window_stats(train_copy);
  }
  auto normalize_batch = [&](Tensor& x) {
    for (std::size_t b = 0; b < x.dim(0); ++b) {
      for (std::size_t c = 0; c < 2; ++c) {
        double sd = pair.window_stats.stddev[c];
        for (std::size_t t = 0; t < x.dim(2); ++t) {
          double v = x.at(b, c, t) - pair.window_stats.mean[c];
          x.at(b, c, t) = sd >= 1e-12 ? v / sd : v;
        }
      }
    }
  };

  const std::size_t batch = std::min<std::size_t>(corpus.size(), 32);
  const std::size_t rounds = std::max<std::size_t>(1, total_train / std::max<std::size_t>(1, corpus.size()));

  auto run_batch = [&](const std::vector<std::size_t>& prompt_idx,
                       const std::vector<const SignalWindow*>& window_of, Mode mode, bool update,
                       AdamW* opt, std::vector<Param*>* params) {
    Tensor xw = detail::windows_to_tensor(window_of);
    normalize_batch(xw);
    std::vector<const std::vector<double>*> es;
    for (std::size_t p : prompt_idx) es.push_back(splits[p].embedding);
    Tensor xt = detail::embeddings_to_tensor(es, cfg.text_dim);

    Tensor q = pair.imp_encoder.forward(xw, mode);
    Tensor k = pair.text_encoder.forward(xt, mode);
    InfoNceResult res = info_nce(q, k, cfg.temperature);
    if (update) {
      pair.imp_encoder.zero_grads();
      pair.text_encoder.zero_grads();
      pair.imp_encoder.backward(res.grad_q);
      pair.text_encoder.backward(res.grad_k);
      opt->step(*params);
    }
    return res.loss;
  };

  // fixed validation batches; falls back to training windows when the
  // corpus is too small to hold out anything
  std::vector<std::pair<std::vector<std::size_t>, std::vector<const SignalWindow*>>> val_batches;
  {
    std::vector<std::size_t> with_val;
    for (std::size_t p = 0; p < splits.size(); ++p) {
      if (!splits[p].val.empty()) with_val.push_back(p);
    }
    bool fallback = with_val.size() < 2;
    std::vector<std::size_t> pool;
    if (fallback) {
      for (std::size_t p = 0; p < splits.size(); ++p) pool.push_back(p);
    } else {
      pool = with_val;
    }
    std::size_t max_wins = 0;
    for (std::size_t p : pool) {
      max_wins = std::max(max_wins, fallback ? splits[p].train.size() : splits[p].val.size());
    }
    for (std::size_t r = 0; r < max_wins; ++r) {
      for (std::size_t start = 0; start < pool.size(); start += batch) {
        std::size_t end = std::min(pool.size(), start + batch);
        if (end - start < 2) break;  // a batch needs at least one negative
        std::vector<std::size_t> pidx(pool.begin() + start, pool.begin() + end);
        std::vector<const SignalWindow*> wins;
        for (std::size_t p : pidx) {
          const auto& src = fallback ? splits[p].train : splits[p].val;
          wins.push_back(src[r % src.size()]);
        }
        val_batches.push_back({std::move(pidx), std::move(wins)});
      }
    }
  }
  auto val_loss = [&]() {
    double sum = 0.0;
    for (const auto& [pidx, wins] : val_batches) sum += run_batch(pidx, wins, Mode::Eval, false, nullptr, nullptr);
    return sum / static_cast<double>(val_batches.size());
  };

  AdamW opt(schedule.learning_rate, schedule.weight_decay);
  std::vector<Param*> params;
  for (Param* p : pair.imp_encoder.params()) params.push_back(p);
  for (Param* p : pair.text_encoder.params()) params.push_back(p);
  opt.attach(params);

  PretrainReport report;
  report.prompt_count = corpus.size();
  report.batch_size = batch;
  report.embedding_dim = cfg.embedding_dim;
  report.initial_loss = val_loss();

  double best_val = std::numeric_limits<double>::infinity();
  auto best_text = pair.text_encoder.snapshot();
  auto best_imp = pair.imp_encoder.snapshot();
  json best_buffers;

  std::vector<std::size_t> prompt_order(corpus.size());
  for (std::size_t i = 0; i < prompt_order.size(); ++i) prompt_order[i] = i;

  for (int epoch = 0; epoch < schedule.max_epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::size_t batches_run = 0;
    for (std::size_t round = 0; round < rounds; ++round) {
      rng.shuffle(prompt_order);
      for (std::size_t start = 0; start < prompt_order.size(); start += batch) {
        std::size_t end = std::min(prompt_order.size(), start + batch);
        if (end - start < 2) break;  // a chunk needs negatives
        std::vector<std::size_t> pidx(prompt_order.begin() + start, prompt_order.begin() + end);
        std::vector<const SignalWindow*> wins;
        for (std::size_t p : pidx) wins.push_back(splits[p].train[rng.index(splits[p].train.size())]);
        epoch_loss += run_batch(pidx, wins, Mode::Train, true, &opt, &params);
        ++batches_run;
      }
    }
    report.train_loss.push_back(epoch_loss / std::max<std::size_t>(1, batches_run));
    report.val_loss.push_back(val_loss());
    report.epochs_run = epoch + 1;

    if (report.val_loss.back() < best_val - TrainSchedule::kMinDelta) {
      best_val = report.val_loss.back();
      report.best_epoch = report.val_loss.size() - 1;
      best_text = pair.text_encoder.snapshot();
      best_imp = pair.imp_encoder.snapshot();
      best_buffers = json{{"text", pair.text_encoder.save_state()["buffers"]},
                          {"imp", pair.imp_encoder.save_state()["buffers"]}};
    }
    opt.set_lr(plateau_scheduler(report.val_loss, schedule));
    if (early_stop(report.val_loss, schedule.early_stop_patience).stop) break;
  }

  pair.text_encoder.restore(best_text);
  pair.imp_encoder.restore(best_imp);
  if (!best_buffers.empty()) {
    json text_state = pair.text_encoder.save_state();
    text_state["buffers"] = best_buffers["text"];
    pair.text_encoder.load_state(text_state);
    json imp_state = pair.imp_encoder.save_state();
    imp_state["buffers"] = best_buffers["imp"];
    pair.imp_encoder.load_state(imp_state);
  }

  // top-1 retrieval on the held-out windows
  {
    Tensor all_text({corpus.size(), cfg.text_dim});
    for (std::size_t p = 0; p < splits.size(); ++p) {
      for (std::size_t c = 0; c < cfg.text_dim; ++c) all_text.at(p, c) = (*splits[p].embedding)[c];
    }
    Tensor k_all = pair.text_encoder.forward(all_text, Mode::Eval);
    std::size_t hits = 0, total = 0;
    for (std::size_t p = 0; p < splits.size(); ++p) {
      const auto& pool = splits[p].val.empty() ? splits[p].train : splits[p].val;
      for (const SignalWindow* w : pool) {
        std::vector<const SignalWindow*> one{w};
        Tensor xw = detail::windows_to_tensor(one);
        normalize_batch(xw);
        Tensor q = pair.imp_encoder.forward(xw, Mode::Eval);
        std::vector<double> qv(q.data().begin(), q.data().begin() + cfg.embedding_dim);
        std::size_t best_p = 0;
        double best_s = -2.0;
        for (std::size_t j = 0; j < corpus.size(); ++j) {
          std::vector<double> kv;
          for (std::size_t c = 0; c < cfg.embedding_dim; ++c) kv.push_back(k_all.at(j, c));
          double s = cosine(qv, kv);
          if (s > best_s) {
            best_s = s;
            best_p = j;
          }
        }
        hits += best_p == p ? 1 : 0;
        ++total;
      }
    }
    report.retrieval_top1 = total ? static_cast<double>(hits) / total : 0.0;
  }
  return {std::move(pair), std::move(report)};
}

}  // namespace impsim
