// AdamW optimizer, plateau learning-rate schedule, early stopping.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "impsim/error.hpp"
#include "impsim/layers.hpp"

namespace impsim {

struct TrainSchedule {
  int max_epochs = 300;
  int early_stop_patience = 15;
  int plateau_patience = 10;
  double plateau_factor = 0.1;
  double min_lr = 1e-6;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  std::size_t batch_size = 64;
  std::uint64_t rng_seed = 0;
  // Improvements smaller than this don't reset the patience counters.
  static constexpr double kMinDelta = 1e-8;
};

inline void validate_schedule(const TrainSchedule& s) {
  if (s.max_epochs < 1) throw ValidationError("schedule: max_epochs must be >= 1");
  if (s.early_stop_patience < 1 || s.plateau_patience < 1) throw ValidationError("schedule: patience must be >= 1");
  if (!(s.plateau_factor > 0.0) || !(s.plateau_factor < 1.0)) {
    throw ValidationError("schedule: plateau_factor must be in (0, 1)");
  }
  if (!(s.learning_rate > 0.0)) throw ValidationError("schedule: learning_rate must be positive");
  if (s.batch_size < 1) throw ValidationError("schedule: batch_size must be >= 1");
}

// Decoupled weight decay:
//   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta
class AdamW {
 public:
  explicit AdamW(double learning_rate, double weight_decay = 0.0, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8)
      : lr_(learning_rate), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void attach(const std::vector<Param*>& params) {
    m_.clear();
    v_.clear();
    for (Param* p : params) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
    step_ = 0;
  }

  void step(const std::vector<Param*>& params) {
    if (params.size() != m_.size()) throw ValidationError("adamw: parameter list does not match attached state");
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (std::size_t p = 0; p < params.size(); ++p) {
      Tensor& theta = params[p]->value;
      const Tensor& g = params[p]->grad;
      if (!theta.same_shape(g) || !theta.same_shape(m_[p])) throw ValidationError("adamw: shape mismatch");
      for (std::size_t i = 0; i < theta.numel(); ++i) {
        m_[p][i] = beta1_ * m_[p][i] + (1.0 - beta1_) * g[i];
        v_[p][i] = beta2_ * v_[p][i] + (1.0 - beta2_) * g[i] * g[i];
        double m_hat = m_[p][i] / bc1;
        double v_hat = v_[p][i] / bc2;
        theta[i] -= lr_ * (m_hat / (std::sqrt(v_hat) + eps_)) + lr_ * wd_ * theta[i];
      }
    }
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  long step_count() const { return step_; }

  json save_state() const {
    json st{{"lr", lr_}, {"weight_decay", wd_}, {"beta1", beta1_}, {"beta2", beta2_}, {"eps", eps_}, {"step", step_}};
    json moments = json::array();
    for (std::size_t i = 0; i < m_.size(); ++i) {
      moments.push_back(json{{"m", m_[i].data()}, {"v", v_[i].data()}});
    }
    st["moments"] = moments;
    return st;
  }

  void load_state(const json& st, const std::vector<Param*>& params) {
    lr_ = st.at("lr").get<double>();
    wd_ = st.at("weight_decay").get<double>();
    beta1_ = st.at("beta1").get<double>();
    beta2_ = st.at("beta2").get<double>();
    eps_ = st.at("eps").get<double>();
    step_ = st.at("step").get<long>();
    attach(params);
    step_ = st.at("step").get<long>();
    const json& moments = st.at("moments");
    if (moments.size() != m_.size()) throw ValidationError("adamw: checkpoint moment count mismatch");
    for (std::size_t i = 0; i < m_.size(); ++i) {
      m_[i].data() = moments.at(i).at("m").get<std::vector<double>>();
      v_[i].data() = moments.at(i).at("v").get<std::vector<double>>();
    }
  }

 private:
  double lr_, wd_, beta1_, beta2_, eps_;
  long step_ = 0;
  std::vector<Tensor> m_, v_;
};

// Walks the validation-loss history and returns the learning rate after
// applying every plateau reduction it implies. The counter resets after a
// reduction; the rate never drops below min_lr.
inline double plateau_scheduler(const std::vector<double>& history, const TrainSchedule& schedule) {
  if (history.empty()) throw ValidationError("plateau_scheduler: empty history");
  double lr = schedule.learning_rate;
  double best = history.front();
  int since_improve = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i] < best - TrainSchedule::kMinDelta) {
      best = history[i];
      since_improve = 0;
    } else {
      ++since_improve;
      if (since_improve >= schedule.plateau_patience) {
        lr = std::max(lr * schedule.plateau_factor, schedule.min_lr);
        since_improve = 0;
      }
    }
  }
  return lr;
}

struct EarlyStopDecision {
  bool stop = false;
  std::size_t best_epoch = 0;  // index into history of the best loss
};

// Stop once the loss has not improved for `patience` consecutive epochs.
// Training returns the parameters saved at best_epoch.
inline EarlyStopDecision early_stop(const std::vector<double>& history, int patience = 15) {
  if (history.empty()) throw ValidationError("early_stop: empty history");
  EarlyStopDecision d;
  double best = history.front();
  int since_improve = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i] < best - TrainSchedule::kMinDelta) {
      best = history[i];
      d.best_epoch = i;
      since_improve = 0;
    } else {
      ++since_improve;
    }
  }
  d.stop = since_improve >= patience;
  return d;
}

}  // namespace impsim
