// Training losses with analytic gradients.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "impsim/error.hpp"
#include "impsim/tensor.hpp"

namespace impsim {

struct LossResult {
  double value = 0.0;
  Tensor grad;  // d(loss)/d(first argument)
};

// Mean squared error, mean over all elements.
inline LossResult mse(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target)) {
    throw ValidationError("mse: shape mismatch " + Tensor::shape_string(pred.shape()) + " vs " +
                          Tensor::shape_string(target.shape()));
  }
  const std::size_t n = pred.numel();
  if (n == 0) throw ValidationError("mse: empty tensors");
  LossResult out;
  out.grad = Tensor(pred.shape());
  for (std::size_t i = 0; i < n; ++i) {
    double d = pred[i] - target[i];
    out.value += d * d;
    out.grad[i] = 2.0 * d / static_cast<double>(n);
  }
  out.value /= static_cast<double>(n);
  return out;
}

// Softmax cross-entropy from logits (N, C), mean over the batch.
// Stabilized with the row max before exponentiation.
inline LossResult cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw ValidationError("cross_entropy: logits must be (N, C)");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n) throw ValidationError("cross_entropy: label count does not match batch");
  LossResult out;
  out.grad = Tensor(logits.shape());
  for (std::size_t b = 0; b < n; ++b) {
    int y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw ValidationError("cross_entropy: label " + std::to_string(y) + " out of range [0, " + std::to_string(c) + ")");
    }
    double mx = logits.at(b, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits.at(b, j));
    double lse = 0.0;
    for (std::size_t j = 0; j < c; ++j) lse += std::exp(logits.at(b, j) - mx);
    lse = std::log(lse) + mx;
    out.value += lse - logits.at(b, static_cast<std::size_t>(y));
    for (std::size_t j = 0; j < c; ++j) {
      double p = std::exp(logits.at(b, j) - lse);
      out.grad.at(b, j) = (p - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0)) / static_cast<double>(n);
    }
  }
  out.value /= static_cast<double>(n);
  return out;
}

// Softmax probabilities of one logit row.
inline std::vector<double> softmax(const std::vector<double>& logits) {
  double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    s += p[i];
  }
  for (double& v : p) v /= s;
  return p;
}

}  // namespace impsim
