// Neural network layers with manual backpropagation.
//
// Every layer caches what its backward pass needs during forward and
// reports an error if backward runs without a preceding forward. Shapes
// use a leading batch dimension: dense layers take (N, F), convolutional
// layers take (N, C, L).
#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "impsim/error.hpp"
#include "impsim/rng.hpp"
#include "impsim/tensor.hpp"

namespace impsim {

using json = nlohmann::json;

enum class Mode { Train, Eval };

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;

  virtual std::vector<Param*> params() { return {}; }
  virtual std::string kind() const = 0;
  virtual json spec() const { return json{{"kind", kind()}}; }

  // Non-trainable state (batch-norm running statistics).
  virtual json buffers() const { return json::object(); }
  virtual void load_buffers(const json&) {}

  virtual void init(Rng&) {}
  virtual void set_rng(Rng*) {}

 protected:
  void require_cache(const char* who) const {
    if (!has_cache_) throw ValidationError(std::string(who) + ": backward called without a preceding forward");
  }
  bool has_cache_ = false;
};

namespace detail {

inline double xavier_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

inline void fill_uniform(Tensor& t, Rng& rng, double limit) {
  for (double& v : t.data()) v = rng.uniform(-limit, limit);
}

constexpr double kGeluC = 0.79788456080286535588;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

inline double gelu_grad(double x) {
  double u = kGeluC * (x + kGeluA * x * x * x);
  double t = std::tanh(u);
  double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

}  // namespace detail

class Dense : public Layer {
 public:
  Dense(std::size_t in_features, std::size_t out_features) : in_(in_features), out_(out_features) {
    if (in_ == 0 || out_ == 0) throw ValidationError("dense: features must be positive");
    weight_.value = Tensor({out_, in_});
    weight_.grad = Tensor({out_, in_});
    weight_.name = "weight";
    bias_.value = Tensor({out_});
    bias_.grad = Tensor({out_});
    bias_.name = "bias";
  }

  Tensor forward(const Tensor& x, Mode) override {
    if (x.rank() != 2 || x.dim(1) != in_) {
      throw ValidationError("dense: expected input (N," + std::to_string(in_) + "), got " +
                            Tensor::shape_string(x.shape()));
    }
    input_ = x;
    has_cache_ = true;
    const std::size_t n = x.dim(0);
    Tensor y({n, out_});
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t o = 0; o < out_; ++o) {
        double acc = bias_.value[o];
        const double* w = &weight_.value.data()[o * in_];
        const double* xi = &x.data()[b * in_];
        for (std::size_t i = 0; i < in_; ++i) acc += w[i] * xi[i];
        y.at(b, o) = acc;
      }
    }
    return y;
  }

  Tensor backward(const Tensor& g) override {
    require_cache("dense");
    const std::size_t n = input_.dim(0);
    if (g.rank() != 2 || g.dim(0) != n || g.dim(1) != out_) {
      throw ValidationError("dense: gradient shape mismatch");
    }
    Tensor dx({n, in_});
    for (std::size_t b = 0; b < n; ++b) {
      const double* gb = &g.data()[b * out_];
      const double* xb = &input_.data()[b * in_];
      for (std::size_t o = 0; o < out_; ++o) {
        double go = gb[o];
        bias_.grad[o] += go;
        double* wg = &weight_.grad.data()[o * in_];
        const double* w = &weight_.value.data()[o * in_];
        double* dxb = &dx.data()[b * in_];
        for (std::size_t i = 0; i < in_; ++i) {
          wg[i] += go * xb[i];
          dxb[i] += go * w[i];
        }
      }
    }
    return dx;
  }

  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  std::string kind() const override { return "dense"; }
  json spec() const override { return json{{"kind", "dense"}, {"in", in_}, {"out", out_}}; }

  void init(Rng& rng) override {
    detail::fill_uniform(weight_.value, rng, detail::xavier_limit(in_, out_));
    bias_.value.fill(0.0);
  }

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }

 private:
  std::size_t in_, out_;
  Param weight_, bias_;
  Tensor input_;
};

class Conv1d : public Layer {
 public:
  Conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride = 1)
      : in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride) {
    if (in_ == 0 || out_ == 0 || kernel_ == 0 || stride_ == 0) {
      throw ValidationError("conv1d: sizes must be positive");
    }
    weight_.value = Tensor({out_, in_, kernel_});
    weight_.grad = Tensor({out_, in_, kernel_});
    weight_.name = "weight";
    bias_.value = Tensor({out_});
    bias_.grad = Tensor({out_});
    bias_.name = "bias";
  }

  Tensor forward(const Tensor& x, Mode) override {
    if (x.rank() != 3 || x.dim(1) != in_ || x.dim(2) < kernel_) {
      throw ValidationError("conv1d: expected input (N," + std::to_string(in_) + ",L>=" + std::to_string(kernel_) +
                            "), got " + Tensor::shape_string(x.shape()));
    }
    input_ = x;
    has_cache_ = true;
    const std::size_t n = x.dim(0), len = x.dim(2);
    const std::size_t out_len = (len - kernel_) / stride_ + 1;
    Tensor y({n, out_, out_len});
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t oc = 0; oc < out_; ++oc) {
        for (std::size_t ol = 0; ol < out_len; ++ol) {
          double acc = bias_.value[oc];
          for (std::size_t ic = 0; ic < in_; ++ic) {
            const double* w = &weight_.value.data()[(oc * in_ + ic) * kernel_];
            const double* xi = &x.data()[(b * in_ + ic) * len + ol * stride_];
            for (std::size_t k = 0; k < kernel_; ++k) acc += w[k] * xi[k];
          }
          y.at(b, oc, ol) = acc;
        }
      }
    }
    return y;
  }

  Tensor backward(const Tensor& g) override {
    require_cache("conv1d");
    const std::size_t n = input_.dim(0), len = input_.dim(2);
    const std::size_t out_len = (len - kernel_) / stride_ + 1;
    if (g.rank() != 3 || g.dim(0) != n || g.dim(1) != out_ || g.dim(2) != out_len) {
      throw ValidationError("conv1d: gradient shape mismatch");
    }
    Tensor dx({n, in_, len});
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t oc = 0; oc < out_; ++oc) {
        for (std::size_t ol = 0; ol < out_len; ++ol) {
          double go = g.at(b, oc, ol);
          bias_.grad[oc] += go;
          for (std::size_t ic = 0; ic < in_; ++ic) {
            double* wg = &weight_.grad.data()[(oc * in_ + ic) * kernel_];
            const double* w = &weight_.value.data()[(oc * in_ + ic) * kernel_];
            const double* xi = &input_.data()[(b * in_ + ic) * len + ol * stride_];
            double* dxi = &dx.data()[(b * in_ + ic) * len + ol * stride_];
            for (std::size_t k = 0; k < kernel_; ++k) {
              wg[k] += go * xi[k];
              dxi[k] += go * w[k];
            }
          }
        }
      }
    }
    return dx;
  }

  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  std::string kind() const override { return "conv1d"; }
  json spec() const override {
    return json{{"kind", "conv1d"}, {"in", in_}, {"out", out_}, {"kernel", kernel_}, {"stride", stride_}};
  }

  void init(Rng& rng) override {
    detail::fill_uniform(weight_.value, rng, detail::xavier_limit(in_ * kernel_, out_ * kernel_));
    bias_.value.fill(0.0);
  }

  Param& weight() { return weight_; }

 private:
  std::size_t in_, out_, kernel_, stride_;
  Param weight_, bias_;
  Tensor input_;
};

// Batch normalization over the batch (and, for rank-3 inputs, length)
// dimension, one statistic per feature/channel. Eval mode applies the
// frozen running statistics, making the layer an affine map.
class BatchNorm1d : public Layer {
 public:
  explicit BatchNorm1d(std::size_t features, double momentum = 0.1, double eps = 1e-5)
      : features_(features), momentum_(momentum), eps_(eps) {
    if (features_ == 0) throw ValidationError("batch_norm: features must be positive");
    gamma_.value = Tensor({features_});
    gamma_.value.fill(1.0);
    gamma_.grad = Tensor({features_});
    gamma_.name = "gamma";
    beta_.value = Tensor({features_});
    beta_.grad = Tensor({features_});
    beta_.name = "beta";
    running_mean_.assign(features_, 0.0);
    running_var_.assign(features_, 1.0);
  }

  Tensor forward(const Tensor& x, Mode mode) override {
    check_shape(x);
    input_shape_ = x.shape();
    const std::size_t m = group_size(x);
    mode_ = mode;

    std::vector<double> mean(features_), var(features_);
    if (mode == Mode::Train) {
      for (std::size_t f = 0; f < features_; ++f) {
        double s = 0.0;
        for_feature(x, f, [&](double v) { s += v; });
        mean[f] = s / m;
        double sq = 0.0;
        for_feature(x, f, [&](double v) { sq += (v - mean[f]) * (v - mean[f]); });
        var[f] = sq / m;
        running_mean_[f] = (1.0 - momentum_) * running_mean_[f] + momentum_ * mean[f];
        running_var_[f] = (1.0 - momentum_) * running_var_[f] + momentum_ * var[f];
      }
    } else {
      mean = running_mean_;
      var = running_var_;
    }

    inv_std_.resize(features_);
    for (std::size_t f = 0; f < features_; ++f) inv_std_[f] = 1.0 / std::sqrt(var[f] + eps_);

    Tensor y(x.shape());
    xhat_ = Tensor(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
      std::size_t f = feature_of(i);
      double xh = (x[i] - mean[f]) * inv_std_[f];
      xhat_[i] = xh;
      y[i] = gamma_.value[f] * xh + beta_.value[f];
    }
    has_cache_ = true;
    return y;
  }

  Tensor backward(const Tensor& g) override {
    require_cache("batch_norm");
    if (g.shape() != input_shape_) throw ValidationError("batch_norm: gradient shape mismatch");
    const std::size_t m = Tensor::numel_of(input_shape_) / features_;
    Tensor dx(input_shape_);

    std::vector<double> sum_g(features_, 0.0), sum_gx(features_, 0.0);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      std::size_t f = feature_of(i);
      sum_g[f] += g[i];
      sum_gx[f] += g[i] * xhat_[i];
    }
    for (std::size_t f = 0; f < features_; ++f) {
      gamma_.grad[f] += sum_gx[f];
      beta_.grad[f] += sum_g[f];
    }
    if (mode_ == Mode::Train) {
      for (std::size_t i = 0; i < g.numel(); ++i) {
        std::size_t f = feature_of(i);
        dx[i] = gamma_.value[f] * inv_std_[f] *
                (g[i] - sum_g[f] / m - xhat_[i] * sum_gx[f] / m);
      }
    } else {
      for (std::size_t i = 0; i < g.numel(); ++i) {
        std::size_t f = feature_of(i);
        dx[i] = gamma_.value[f] * inv_std_[f] * g[i];
      }
    }
    return dx;
  }

  std::vector<Param*> params() override { return {&gamma_, &beta_}; }
  std::string kind() const override { return "batch_norm"; }
  json spec() const override {
    return json{{"kind", "batch_norm"}, {"features", features_}, {"momentum", momentum_}, {"eps", eps_}};
  }
  json buffers() const override { return json{{"running_mean", running_mean_}, {"running_var", running_var_}}; }
  void load_buffers(const json& b) override {
    running_mean_ = b.at("running_mean").get<std::vector<double>>();
    running_var_ = b.at("running_var").get<std::vector<double>>();
    if (running_mean_.size() != features_ || running_var_.size() != features_) {
      throw ValidationError("batch_norm: buffer size mismatch");
    }
  }

 private:
  void check_shape(const Tensor& x) const {
    bool ok = (x.rank() == 2 && x.dim(1) == features_) || (x.rank() == 3 && x.dim(1) == features_);
    if (!ok) {
      throw ValidationError("batch_norm: expected (N," + std::to_string(features_) + ") or (N," +
                            std::to_string(features_) + ",L), got " + Tensor::shape_string(x.shape()));
    }
  }

  std::size_t group_size(const Tensor& x) const { return x.numel() / features_; }

  std::size_t feature_of(std::size_t flat_index) const {
    if (input_shape_.size() == 2) return flat_index % features_;
    std::size_t len = input_shape_[2];
    return (flat_index / len) % features_;
  }

  template <class F>
  void for_feature(const Tensor& x, std::size_t f, F&& fn) const {
    if (x.rank() == 2) {
      for (std::size_t b = 0; b < x.dim(0); ++b) fn(x.at(b, f));
    } else {
      for (std::size_t b = 0; b < x.dim(0); ++b) {
        for (std::size_t l = 0; l < x.dim(2); ++l) fn(x.at(b, f, l));
      }
    }
  }

  std::size_t features_;
  double momentum_, eps_;
  Param gamma_, beta_;
  std::vector<double> running_mean_, running_var_;

  std::vector<std::size_t> input_shape_;
  std::vector<double> inv_std_;
  Tensor xhat_;
  Mode mode_ = Mode::Eval;
};

// Inverted dropout: surviving activations are scaled by 1/(1-rate) during
// training so eval mode is an exact identity.
class Dropout : public Layer {
 public:
  explicit Dropout(double rate) : rate_(rate) {
    if (rate_ < 0.0 || rate_ >= 1.0) throw ValidationError("dropout rate must be in [0, 1)");
  }

  Tensor forward(const Tensor& x, Mode mode) override {
    has_cache_ = true;
    if (mode == Mode::Eval || rate_ == 0.0) {
      mask_.assign(x.numel(), 1.0);
      return x;
    }
    if (rng_ == nullptr) throw ValidationError("dropout: no rng attached for train mode");
    mask_.resize(x.numel());
    Tensor y(x.shape());
    const double scale = 1.0 / (1.0 - rate_);
    for (std::size_t i = 0; i < x.numel(); ++i) {
      mask_[i] = rng_->uniform() < rate_ ? 0.0 : scale;
      y[i] = x[i] * mask_[i];
    }
    return y;
  }

  Tensor backward(const Tensor& g) override {
    require_cache("dropout");
    if (g.numel() != mask_.size()) throw ValidationError("dropout: gradient shape mismatch");
    Tensor dx(g.shape());
    for (std::size_t i = 0; i < g.numel(); ++i) dx[i] = g[i] * mask_[i];
    return dx;
  }

  std::string kind() const override { return "dropout"; }
  json spec() const override { return json{{"kind", "dropout"}, {"rate", rate_}}; }
  void set_rng(Rng* rng) override { rng_ = rng; }

 private:
  double rate_;
  Rng* rng_ = nullptr;
  std::vector<double> mask_;
};

// GeLU, tanh approximation.
class GeLU : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode) override {
    input_ = x;
    has_cache_ = true;
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = detail::gelu(x[i]);
    return y;
  }

  Tensor backward(const Tensor& g) override {
    require_cache("gelu");
    if (!g.same_shape(input_)) throw ValidationError("gelu: gradient shape mismatch");
    Tensor dx(g.shape());
    for (std::size_t i = 0; i < g.numel(); ++i) dx[i] = g[i] * detail::gelu_grad(input_[i]);
    return dx;
  }

  std::string kind() const override { return "gelu"; }

 private:
  Tensor input_;
};

class ReLU : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode) override {
    input_ = x;
    has_cache_ = true;
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    return y;
  }

  Tensor backward(const Tensor& g) override {
    require_cache("relu");
    if (!g.same_shape(input_)) throw ValidationError("relu: gradient shape mismatch");
    Tensor dx(g.shape());
    for (std::size_t i = 0; i < g.numel(); ++i) dx[i] = input_[i] > 0.0 ? g[i] : 0.0;
    return dx;
  }

  std::string kind() const override { return "relu"; }

 private:
  Tensor input_;
};

// Max pooling over the length axis of (N, C, L). Ties keep the earliest
// index so the backward scatter is deterministic.
class MaxPool1d : public Layer {
 public:
  explicit MaxPool1d(std::size_t kernel, std::size_t stride = 0)
      : kernel_(kernel), stride_(stride == 0 ? kernel : stride) {
    if (kernel_ == 0) throw ValidationError("max_pool1d: kernel must be positive");
  }

  Tensor forward(const Tensor& x, Mode) override {
    if (x.rank() != 3 || x.dim(2) < kernel_) {
      throw ValidationError("max_pool1d: expected (N,C,L>=" + std::to_string(kernel_) + "), got " +
                            Tensor::shape_string(x.shape()));
    }
    in_shape_ = x.shape();
    const std::size_t n = x.dim(0), c = x.dim(1), len = x.dim(2);
    const std::size_t out_len = (len - kernel_) / stride_ + 1;
    Tensor y({n, c, out_len});
    argmax_.assign(n * c * out_len, 0);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t ol = 0; ol < out_len; ++ol) {
          std::size_t base = ol * stride_;
          double best = x.at(b, ch, base);
          std::size_t best_i = base;
          for (std::size_t k = 1; k < kernel_; ++k) {
            double v = x.at(b, ch, base + k);
            if (v > best) {
              best = v;
              best_i = base + k;
            }
          }
          y.at(b, ch, ol) = best;
          argmax_[(b * c + ch) * out_len + ol] = best_i;
        }
      }
    }
    has_cache_ = true;
    return y;
  }

  Tensor backward(const Tensor& g) override {
    require_cache("max_pool1d");
    const std::size_t n = in_shape_[0], c = in_shape_[1], len = in_shape_[2];
    const std::size_t out_len = (len - kernel_) / stride_ + 1;
    if (g.rank() != 3 || g.dim(0) != n || g.dim(1) != c || g.dim(2) != out_len) {
      throw ValidationError("max_pool1d: gradient shape mismatch");
    }
    Tensor dx(in_shape_);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t ol = 0; ol < out_len; ++ol) {
          dx.at(b, ch, argmax_[(b * c + ch) * out_len + ol]) += g.at(b, ch, ol);
        }
      }
    }
    return dx;
  }

  std::string kind() const override { return "max_pool1d"; }
  json spec() const override { return json{{"kind", "max_pool1d"}, {"kernel", kernel_}, {"stride", stride_}}; }

 private:
  std::size_t kernel_, stride_;
  std::vector<std::size_t> in_shape_;
  std::vector<std::size_t> argmax_;
};

// Mean over the length axis: (N, C, L) -> (N, C). Makes the convolutional
// encoders independent of the window length.
class GlobalAvgPool1d : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode) override {
    if (x.rank() != 3) {
      throw ValidationError("global_avg_pool1d: expected (N,C,L), got " + Tensor::shape_string(x.shape()));
    }
    in_shape_ = x.shape();
    const std::size_t n = x.dim(0), c = x.dim(1), len = x.dim(2);
    Tensor y({n, c});
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::size_t l = 0; l < len; ++l) s += x.at(b, ch, l);
        y.at(b, ch) = s / static_cast<double>(len);
      }
    }
    has_cache_ = true;
    return y;
  }

  Tensor backward(const Tensor& g) override {
    require_cache("global_avg_pool1d");
    const std::size_t n = in_shape_[0], c = in_shape_[1], len = in_shape_[2];
    if (g.rank() != 2 || g.dim(0) != n || g.dim(1) != c) {
      throw ValidationError("global_avg_pool1d: gradient shape mismatch");
    }
    Tensor dx(in_shape_);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        double gv = g.at(b, ch) / static_cast<double>(len);
        for (std::size_t l = 0; l < len; ++l) dx.at(b, ch, l) = gv;
      }
    }
    return dx;
  }

  std::string kind() const override { return "global_avg_pool1d"; }

 private:
  std::vector<std::size_t> in_shape_;
};

class Flatten : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode) override {
    if (x.rank() < 2) throw ValidationError("flatten: expected rank >= 2");
    in_shape_ = x.shape();
    has_cache_ = true;
    return Tensor({x.dim(0), x.numel() / x.dim(0)}, x.data());
  }

  Tensor backward(const Tensor& g) override {
    require_cache("flatten");
    if (g.numel() != Tensor::numel_of(in_shape_)) throw ValidationError("flatten: gradient shape mismatch");
    return Tensor(in_shape_, g.data());
  }

  std::string kind() const override { return "flatten"; }

 private:
  std::vector<std::size_t> in_shape_;
};

inline std::unique_ptr<Layer> make_layer(const json& spec) {
  const std::string kind = spec.at("kind").get<std::string>();
  if (kind == "dense") return std::make_unique<Dense>(spec.at("in").get<std::size_t>(), spec.at("out").get<std::size_t>());
  if (kind == "conv1d") {
    return std::make_unique<Conv1d>(spec.at("in").get<std::size_t>(), spec.at("out").get<std::size_t>(),
                                    spec.at("kernel").get<std::size_t>(), spec.value("stride", std::size_t{1}));
  }
  if (kind == "batch_norm") {
    return std::make_unique<BatchNorm1d>(spec.at("features").get<std::size_t>(), spec.value("momentum", 0.1),
                                         spec.value("eps", 1e-5));
  }
  if (kind == "dropout") return std::make_unique<Dropout>(spec.at("rate").get<double>());
  if (kind == "gelu") return std::make_unique<GeLU>();
  if (kind == "relu") return std::make_unique<ReLU>();
  if (kind == "max_pool1d") {
    return std::make_unique<MaxPool1d>(spec.at("kernel").get<std::size_t>(), spec.value("stride", std::size_t{0}));
  }
  if (kind == "global_avg_pool1d") return std::make_unique<GlobalAvgPool1d>();
  if (kind == "flatten") return std::make_unique<Flatten>();
  throw ValidationError("unknown layer kind '" + kind + "'");
}

// Plain layer chain.
class Sequential {
 public:
  Sequential() = default;
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  Sequential(const Sequential& o) { *this = o; }
  Sequential& operator=(const Sequential& o) {
    if (this == &o) return *this;
    layers_.clear();
    for (const auto& l : o.layers_) layers_.push_back(make_layer(l->spec()));
    copy_state_from(o);
    return *this;
  }

  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }

  Tensor forward(const Tensor& x, Mode mode) {
    Tensor cur = x;
    for (auto& l : layers_) cur = l->forward(cur, mode);
    return cur;
  }

  Tensor backward(const Tensor& grad_out) {
    Tensor cur = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
    return cur;
  }

  std::vector<Param*> params() {
    std::vector<Param*> out;
    for (auto& l : layers_) {
      for (Param* p : l->params()) out.push_back(p);
    }
    return out;
  }

  void zero_grads() {
    for (Param* p : params()) p->grad.fill(0.0);
  }

  void init(Rng& rng) {
    for (auto& l : layers_) l->init(rng);
  }

  void set_rng(Rng* rng) {
    for (auto& l : layers_) l->set_rng(rng);
  }

  json to_spec() const {
    json specs = json::array();
    for (const auto& l : layers_) specs.push_back(l->spec());
    return specs;
  }

  static Sequential from_spec(const json& specs) {
    Sequential s;
    for (const auto& ls : specs) s.add(make_layer(ls));
    return s;
  }

  // Parameter values and buffers, for checkpoints and best-epoch snapshots.
  json save_state() const {
    json st;
    st["spec"] = to_spec();
    json params = json::array();
    for (const auto& l : layers_) {
      for (Param* p : const_cast<Layer&>(*l).params()) {
        params.push_back(json{{"name", p->name}, {"shape", p->value.shape()}, {"data", p->value.data()}});
      }
    }
    st["params"] = params;
    json bufs = json::array();
    for (const auto& l : layers_) bufs.push_back(l->buffers());
    st["buffers"] = bufs;
    return st;
  }

  void load_state(const json& st) {
    Sequential rebuilt = from_spec(st.at("spec"));
    if (rebuilt.to_spec() != to_spec()) {
      throw ValidationError("checkpoint layer specs do not match the model architecture");
    }
    std::size_t idx = 0;
    const json& params = st.at("params");
    for (auto& l : layers_) {
      for (Param* p : l->params()) {
        const json& pj = params.at(idx++);
        auto data = pj.at("data").get<std::vector<double>>();
        if (data.size() != p->value.numel()) throw ValidationError("checkpoint parameter size mismatch");
        p->value.data() = std::move(data);
      }
    }
    const json& bufs = st.at("buffers");
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->load_buffers(bufs.at(i));
  }

  // Raw parameter snapshot for best-epoch tracking during training.
  std::vector<std::vector<double>> snapshot() {
    std::vector<std::vector<double>> s;
    for (Param* p : params()) s.push_back(p->value.data());
    return s;
  }

  void restore(const std::vector<std::vector<double>>& s) {
    auto ps = params();
    if (s.size() != ps.size()) throw ValidationError("snapshot size mismatch");
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value.data() = s[i];
  }

 private:
  void copy_state_from(const Sequential& o) {
    auto dst = params();
    auto src = const_cast<Sequential&>(o).params();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value.data() = src[i]->value.data();
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      json b = o.layers_[i]->buffers();
      if (!b.empty()) layers_[i]->load_buffers(b);
    }
  }

  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace impsim
