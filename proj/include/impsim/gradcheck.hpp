// Finite-difference verification of every analytic gradient.
//
// The numeric side only ever calls forward passes, so it stays independent
// of the backward implementations it checks. Checks run with dropout
// disabled and batch norm in eval mode; batch-norm training-mode backward
// is additionally covered because its batch statistics are a deterministic
// function of the input.
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "impsim/contrastive.hpp"
#include "impsim/layers.hpp"
#include "impsim/losses.hpp"
#include "impsim/rng.hpp"
#include "impsim/tensor.hpp"

namespace impsim {

// Central differences: df/dx_i = (f(x + h e_i) - f(x - h e_i)) / 2h.
template <class F>
Tensor numeric_gradient(F&& f, Tensor x, double h = 1e-5) {
  Tensor g(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    double orig = x[i];
    x[i] = orig + h;
    double fp = f(x);
    x[i] = orig - h;
    double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Pass when |a - n| <= 1e-6 (absolute floor) or the relative error
// |a - n| / max(|a|, |n|) is within `rel_tol`.
struct GradCompare {
  double max_rel_err = 0.0;
  bool pass = true;

  void account(double analytic, double numeric, double rel_tol, double abs_floor) {
    double diff = std::abs(analytic - numeric);
    if (diff <= abs_floor) return;
    double denom = std::max(std::abs(analytic), std::abs(numeric));
    double rel = denom > 0.0 ? diff / denom : 0.0;
    max_rel_err = std::max(max_rel_err, rel);
    if (rel > rel_tol) pass = false;
  }
};

struct GradCheckRow {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

struct GradCheckOptions {
  double rel_tol = 1e-4;
  double abs_floor = 1e-6;
  double h = 1e-5;
  // Test hook: name of a row whose analytic gradients are deliberately
  // corrupted, to prove the table reports failures.
  std::string corrupt;
};

namespace detail {

struct GradCheckContext {
  Rng& rng;
  const GradCheckOptions& opts;
  std::vector<GradCheckRow>& rows;
};

inline Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.normal(0.0, scale);
  return t;
}

// Checks d(loss)/d(input) and d(loss)/d(params) of a single layer under a
// fixed random projection loss L = sum(w .* layer(x)), whose gradient
// w.r.t. the layer output is exactly w.
inline void check_layer(GradCheckContext& ctx, const std::string& name, Layer& layer, Tensor input, Mode mode) {
  Tensor probe_out = layer.forward(input, mode);
  Tensor w = random_tensor(ctx.rng, probe_out.shape());

  auto loss_for_input = [&](const Tensor& x) {
    Tensor y = layer.forward(x, mode);
    double s = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) s += w[i] * y[i];
    return s;
  };

  // Analytic pass.
  layer.forward(input, mode);
  for (Param* p : layer.params()) p->grad.fill(0.0);
  Tensor dx = layer.backward(w);
  const bool corrupt = ctx.opts.corrupt == name;
  if (corrupt && dx.numel() > 0) dx[0] += 1.0;

  GradCompare cmp;
  Tensor ndx = numeric_gradient(loss_for_input, input, ctx.opts.h);
  for (std::size_t i = 0; i < dx.numel(); ++i) cmp.account(dx[i], ndx[i], ctx.opts.rel_tol, ctx.opts.abs_floor);

  for (Param* p : layer.params()) {
    Tensor analytic = p->grad;
    auto loss_for_param = [&](const Tensor& pv) {
      Tensor saved = p->value;
      p->value = pv;
      double s = loss_for_input(input);
      p->value = saved;
      return s;
    };
    Tensor np = numeric_gradient(loss_for_param, p->value, ctx.opts.h);
    for (std::size_t i = 0; i < analytic.numel(); ++i) {
      cmp.account(analytic[i], np[i], ctx.opts.rel_tol, ctx.opts.abs_floor);
    }
  }
  ctx.rows.push_back({name, cmp.max_rel_err, cmp.pass});
}

}  // namespace detail

// Full table: every layer kind, both losses, and info_nce.
inline std::vector<GradCheckRow> run_gradient_checks(std::uint64_t seed, const GradCheckOptions& opts = {}) {
  Rng rng = Rng::for_stage(seed, "gradcheck");
  std::vector<GradCheckRow> rows;
  detail::GradCheckContext ctx{rng, opts, rows};

  {
    Dense layer(5, 4);
    layer.init(rng);
    detail::check_layer(ctx, "dense", layer, detail::random_tensor(rng, {3, 5}), Mode::Train);
  }
  {
    Conv1d layer(2, 3, 3, 2);
    layer.init(rng);
    detail::check_layer(ctx, "conv1d", layer, detail::random_tensor(rng, {2, 2, 9}), Mode::Train);
  }
  {
    BatchNorm1d layer(4);
    detail::check_layer(ctx, "batch_norm(eval)", layer, detail::random_tensor(rng, {3, 4}), Mode::Eval);
  }
  {
    BatchNorm1d layer(3);
    detail::check_layer(ctx, "batch_norm(train)", layer, detail::random_tensor(rng, {4, 3, 5}), Mode::Train);
  }
  {
    Dropout layer(0.4);  // eval mode: exact identity
    detail::check_layer(ctx, "dropout(eval)", layer, detail::random_tensor(rng, {3, 6}), Mode::Eval);
  }
  {
    GeLU layer;
    detail::check_layer(ctx, "gelu", layer, detail::random_tensor(rng, {3, 7}), Mode::Train);
  }
  {
    // Keep activations away from the kink at 0 where the derivative jumps.
    ReLU layer;
    Tensor x = detail::random_tensor(rng, {3, 7});
    for (double& v : x.data()) {
      if (std::abs(v) < 0.05) v = v < 0 ? v - 0.1 : v + 0.1;
    }
    detail::check_layer(ctx, "relu", layer, x, Mode::Train);
  }
  {
    // Spread values so ties and argmax flips stay away from the probe step.
    MaxPool1d layer(2);
    Tensor x({2, 2, 8});
    for (std::size_t i = 0; i < x.numel(); ++i) x[i] = static_cast<double>((i * 7919) % 97) / 10.0 + rng.uniform(-0.01, 0.01);
    detail::check_layer(ctx, "max_pool1d", layer, x, Mode::Train);
  }
  {
    GlobalAvgPool1d layer;
    detail::check_layer(ctx, "global_avg_pool1d", layer, detail::random_tensor(rng, {2, 3, 6}), Mode::Train);
  }
  {
    Flatten layer;
    detail::check_layer(ctx, "flatten", layer, detail::random_tensor(rng, {2, 3, 4}), Mode::Train);
  }

  {
    Tensor pred = detail::random_tensor(rng, {3, 4});
    Tensor target = detail::random_tensor(rng, {3, 4});
    LossResult lr = mse(pred, target);
    if (opts.corrupt == "mse") lr.grad[0] += 1.0;
    Tensor ng = numeric_gradient([&](const Tensor& p) { return mse(p, target).value; }, pred, opts.h);
    GradCompare cmp;
    for (std::size_t i = 0; i < ng.numel(); ++i) cmp.account(lr.grad[i], ng[i], opts.rel_tol, opts.abs_floor);
    rows.push_back({"mse", cmp.max_rel_err, cmp.pass});
  }
  {
    Tensor logits = detail::random_tensor(rng, {4, 5});
    std::vector<int> labels{1, 4, 0, 2};
    LossResult lr = cross_entropy(logits, labels);
    if (opts.corrupt == "cross_entropy") lr.grad[0] += 1.0;
    Tensor ng = numeric_gradient([&](const Tensor& l) { return cross_entropy(l, labels).value; }, logits, opts.h);
    GradCompare cmp;
    for (std::size_t i = 0; i < ng.numel(); ++i) cmp.account(lr.grad[i], ng[i], opts.rel_tol, opts.abs_floor);
    rows.push_back({"cross_entropy", cmp.max_rel_err, cmp.pass});
  }
  for (std::size_t n : {2, 4, 8}) {
    Tensor Q = detail::random_tensor(rng, {n, 6});
    Tensor K = detail::random_tensor(rng, {n, 6});
    InfoNceResult res = info_nce(Q, K);
    if (opts.corrupt == "info_nce" && n == 2) res.grad_q[0] += 1.0;
    GradCompare cmp;
    Tensor nq = numeric_gradient([&](const Tensor& q) { return info_nce(q, K).loss; }, Q, opts.h);
    Tensor nk = numeric_gradient([&](const Tensor& k) { return info_nce(Q, k).loss; }, K, opts.h);
    for (std::size_t i = 0; i < nq.numel(); ++i) {
      cmp.account(res.grad_q[i], nq[i], opts.rel_tol, opts.abs_floor);
      cmp.account(res.grad_k[i], nk[i], opts.rel_tol, opts.abs_floor);
    }
    rows.push_back({"info_nce(N=" + std::to_string(n) + ")", cmp.max_rel_err, cmp.pass});
  }
  return rows;
}

}  // namespace impsim
