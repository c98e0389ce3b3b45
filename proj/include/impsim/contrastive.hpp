// Cosine similarity and the InfoNCE loss over matched embedding batches.
//
// For a batch of N matched pairs (q_i, k_i):
//
//   L = -(1/N) sum_i log( exp(s(q_i,k_i)) / sum_j exp(s(q_i,k_j)) )
//
// with s the cosine similarity; k_j for j != i act as in-batch negatives.
// There is no temperature in this formulation; an optional divisor is
// supported for experimentation and defaults to 1.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "impsim/error.hpp"
#include "impsim/tensor.hpp"

namespace impsim {

namespace detail {

// Max-abs prescaling keeps the norm finite for arbitrary vector scales.
inline double robust_norm(const double* v, std::size_t n) {
  double mx = 0.0;
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, std::abs(v[i]));
  if (mx == 0.0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double u = v[i] / mx;
    s += u * u;
  }
  return mx * std::sqrt(s);
}

}  // namespace detail

// Cosine similarity (q . k) / (|q| |k|), in [-1, 1].
inline double cosine(const std::vector<double>& q, const std::vector<double>& k) {
  if (q.size() != k.size()) throw ValidationError("cosine: dimension mismatch");
  if (q.empty()) throw ValidationError("cosine: empty vectors");
  double nq = detail::robust_norm(q.data(), q.size());
  double nk = detail::robust_norm(k.data(), k.size());
  if (nq <= 1e-12 || nk <= 1e-12) throw ValidationError("cosine: near-zero norm");
  double dot = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) dot += (q[i] / nq) * (k[i] / nk);
  return std::clamp(dot, -1.0, 1.0);
}

struct InfoNceResult {
  double loss = 0.0;
  Tensor grad_q;  // (N, D)
  Tensor grad_k;  // (N, D)
  std::vector<std::vector<double>> similarities;  // row i: s(q_i, k_j)
};

// Loss and analytic gradients w.r.t. both embedding batches Q, K of shape
// (N, D), N >= 2. Log-sum-exp stabilized.
inline InfoNceResult info_nce(const Tensor& Q, const Tensor& K, double temperature = 1.0) {
  if (Q.rank() != 2 || K.rank() != 2 || !Q.same_shape(K)) {
    throw ValidationError("info_nce: Q and K must both be (N, D) with matching shapes");
  }
  const std::size_t n = Q.dim(0), d = Q.dim(1);
  if (n < 2) throw ValidationError("info_nce: need N >= 2 pairs (no negatives otherwise)");
  if (!(temperature > 0.0)) throw ValidationError("info_nce: temperature must be positive");

  // Normalize rows once; keep norms for the chain rule.
  std::vector<double> qn(n), kn(n);
  Tensor Qh({n, d}), Kh({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    qn[i] = detail::robust_norm(&Q.data()[i * d], d);
    kn[i] = detail::robust_norm(&K.data()[i * d], d);
    if (qn[i] <= 1e-12 || kn[i] <= 1e-12) throw ValidationError("info_nce: near-zero embedding norm");
    for (std::size_t c = 0; c < d; ++c) {
      Qh.at(i, c) = Q.at(i, c) / qn[i];
      Kh.at(i, c) = K.at(i, c) / kn[i];
    }
  }

  InfoNceResult out;
  out.similarities.assign(n, std::vector<double>(n, 0.0));
  Tensor S({n, n});  // s / temperature
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double cij = 0.0;
      for (std::size_t c = 0; c < d; ++c) cij += Qh.at(i, c) * Kh.at(j, c);
      out.similarities[i][j] = cij;
      S.at(i, j) = cij / temperature;
    }
  }

  // dL/dS = (softmax(S_i) - e_i) / N per row.
  Tensor dS({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    double mx = S.at(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, S.at(i, j));
    double lse = 0.0;
    for (std::size_t j = 0; j < n; ++j) lse += std::exp(S.at(i, j) - mx);
    lse = std::log(lse) + mx;
    out.loss += lse - S.at(i, i);
    for (std::size_t j = 0; j < n; ++j) {
      double p = std::exp(S.at(i, j) - lse);
      dS.at(i, j) = (p - (i == j ? 1.0 : 0.0)) / static_cast<double>(n);
    }
  }
  out.loss /= static_cast<double>(n);

  // Chain through the cosine: with qh = q/|q|, kh = k/|k|,
  //   d cos / d q = (kh - cos * qh) / |q|
  out.grad_q = Tensor({n, d});
  out.grad_k = Tensor({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double w = dS.at(i, j) / temperature;
      if (w == 0.0) continue;
      double cij = out.similarities[i][j];
      for (std::size_t c = 0; c < d; ++c) {
        out.grad_q.at(i, c) += w * (Kh.at(j, c) - cij * Qh.at(i, c)) / qn[i];
        out.grad_k.at(j, c) += w * (Qh.at(i, c) - cij * Kh.at(j, c)) / kn[j];
      }
    }
  }
  return out;
}

}  // namespace impsim
