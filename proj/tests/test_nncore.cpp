#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "impsim/checkpoint.hpp"
#include "impsim/gradcheck.hpp"
#include "impsim/layers.hpp"
#include "impsim/losses.hpp"
#include "impsim/optimizer.hpp"

using namespace impsim;

TEST_CASE("identity dense layer reproduces its input", "[nncore]") {
  Dense d(3, 3);
  for (std::size_t i = 0; i < 3; ++i) d.weight().value.at(i, i) = 1.0;
  Tensor x({2, 3}, {1, 2, 3, -4, 0.5, 6});
  Tensor y = d.forward(x, Mode::Eval);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("dense shape mismatch names the layer", "[nncore]") {
  Dense d(3, 2);
  Tensor x({2, 4});
  CHECK_THROWS_MATCHES(d.forward(x, Mode::Eval), ValidationError,
                       Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("dense")));
}

TEST_CASE("dense backward matches the textbook derivative", "[nncore]") {
  // y = W x, loss = 0.5 ||y||^2  =>  dL/dW = y x^T
  Dense d(2, 2);
  d.weight().value.data() = {1.0, 2.0, -0.5, 0.25};
  Tensor x({1, 2}, {3.0, -1.0});
  Tensor y = d.forward(x, Mode::Train);
  Tensor g(y.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) g[i] = y[i];  // d(0.5||y||^2)/dy = y
  d.weight().grad.fill(0.0);
  d.bias().grad.fill(0.0);
  d.backward(g);
  for (std::size_t o = 0; o < 2; ++o) {
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(d.weight().grad.at(o, i) == Catch::Approx(y.at(0, o) * x.at(0, i)).epsilon(1e-12));
    }
  }
}

TEST_CASE("backward without forward is an error", "[nncore]") {
  Dense d(2, 2);
  Tensor g({1, 2});
  CHECK_THROWS_AS(d.backward(g), ValidationError);
}

TEST_CASE("zero upstream gradient produces zero parameter gradients", "[nncore]") {
  Rng rng(3);
  Dense d(4, 3);
  d.init(rng);
  Tensor x({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  d.forward(x, Mode::Train);
  d.weight().grad.fill(0.0);
  d.bias().grad.fill(0.0);
  d.backward(Tensor({2, 3}));
  for (double v : d.weight().grad.data()) CHECK(v == 0.0);
  for (double v : d.bias().grad.data()) CHECK(v == 0.0);
}

TEST_CASE("conv1d hand example: kernel [1,0,-1]", "[nncore]") {
  Conv1d c(1, 1, 3);
  c.weight().value.data() = {1.0, 0.0, -1.0};
  Tensor x({1, 1, 4}, {1, 2, 3, 4});
  Tensor y = c.forward(x, Mode::Eval);
  REQUIRE(y.shape() == std::vector<std::size_t>{1, 1, 2});
  CHECK(y[0] == -2.0);
  CHECK(y[1] == -2.0);
}

TEST_CASE("dropout eval mode is the exact identity", "[nncore]") {
  Rng rng(11);
  Dropout drop(0.5);
  drop.set_rng(&rng);
  Tensor x({4, 5});
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] = static_cast<double>(i) * 0.37;
  Tensor y = drop.forward(x, Mode::Eval);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);

  // train mode zeroes roughly rate of the entries and rescales the rest
  Tensor t = drop.forward(x, Mode::Train);
  int zeros = 0;
  for (std::size_t i = 0; i < t.numel(); ++i) {
    if (t[i] == 0.0) {
      ++zeros;
    } else {
      CHECK(t[i] == Catch::Approx(x[i] * 2.0).epsilon(1e-12));
    }
  }
  CHECK(zeros > 0);
}

TEST_CASE("batch norm eval output is affine in its input", "[nncore]") {
  Rng rng(17);
  BatchNorm1d bn(4);
  // push some data through in train mode to move the running stats
  for (int i = 0; i < 5; ++i) {
    Tensor x({8, 4});
    for (auto& v : x.data()) v = rng.normal(2.0, 3.0);
    bn.forward(x, Mode::Train);
  }
  // affine check: f(a*x + b*y) relation via three evaluations
  Tensor x({1, 4}, {1.0, -2.0, 0.5, 3.0});
  Tensor y({1, 4}, {0.25, 1.0, -1.5, 2.0});
  Tensor fx = bn.forward(x, Mode::Eval);
  Tensor fy = bn.forward(y, Mode::Eval);
  Tensor zero({1, 4});
  Tensor f0 = bn.forward(zero, Mode::Eval);
  // f(x) + f(y) - f(0) == f(x + y) for affine f
  Tensor xy({1, 4});
  for (std::size_t i = 0; i < 4; ++i) xy[i] = x[i] + y[i];
  Tensor fxy = bn.forward(xy, Mode::Eval);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(fxy[i] == Catch::Approx(fx[i] + fy[i] - f0[i]).margin(1e-12));
  }
}

TEST_CASE("forward pass keeps finite inputs finite", "[nncore]") {
  Rng rng(23);
  Sequential net;
  net.add(std::make_unique<Conv1d>(2, 8, 5));
  net.add(std::make_unique<GeLU>());
  net.add(std::make_unique<MaxPool1d>(2));
  net.add(std::make_unique<Conv1d>(8, 8, 5));
  net.add(std::make_unique<GlobalAvgPool1d>());
  net.add(std::make_unique<Dense>(8, 4));
  net.init(rng);
  Tensor x({3, 2, 50});
  for (auto& v : x.data()) v = rng.normal(0, 100.0);
  Tensor y = net.forward(x, Mode::Eval);
  CHECK(y.all_finite());
}

TEST_CASE("gradient check table passes for every layer and loss", "[nncore]") {
  auto rows = run_gradient_checks(20250811);
  REQUIRE(rows.size() >= 13);
  bool has_info_nce = false, has_mse = false;
  for (const auto& r : rows) {
    INFO(r.name << " max_rel_err=" << r.max_rel_err);
    CHECK(r.pass);
    if (r.name.rfind("info_nce", 0) == 0) has_info_nce = true;
    if (r.name == "mse") has_mse = true;
  }
  CHECK(has_info_nce);
  CHECK(has_mse);
}

TEST_CASE("corrupted gradient is reported as a failure", "[nncore]") {
  GradCheckOptions opts;
  opts.corrupt = "dense";
  auto rows = run_gradient_checks(20250811, opts);
  bool dense_failed = false;
  for (const auto& r : rows) {
    if (r.name == "dense") dense_failed = !r.pass;
  }
  CHECK(dense_failed);
}

TEST_CASE("adamw hand-computed first step", "[nncore]") {
  Param p;
  p.name = "theta";
  p.value = Tensor({1}, {1.0});
  p.grad = Tensor({1}, {0.5});
  AdamW opt(1e-3, 0.01);
  std::vector<Param*> ps{&p};
  opt.attach(ps);
  opt.step(ps);
  CHECK(p.value[0] == Catch::Approx(0.99899).margin(1e-6));
}

TEST_CASE("adamw: zero gradient leaves params or shrinks with decay", "[nncore]") {
  SECTION("g = 0, wd = 0: unchanged") {
    Param p;
    p.value = Tensor({2}, {1.0, -2.0});
    p.grad = Tensor({2});
    AdamW opt(1e-3, 0.0);
    std::vector<Param*> ps{&p};
    opt.attach(ps);
    opt.step(ps);
    CHECK(p.value[0] == 1.0);
    CHECK(p.value[1] == -2.0);
  }
  SECTION("g = 0, wd > 0: pure multiplicative shrink") {
    Param p;
    p.value = Tensor({1}, {2.0});
    p.grad = Tensor({1});
    AdamW opt(1e-3, 0.1);
    std::vector<Param*> ps{&p};
    opt.attach(ps);
    opt.step(ps);
    CHECK(p.value[0] == Catch::Approx(2.0 * (1.0 - 1e-3 * 0.1)).epsilon(1e-12));
  }
}

TEST_CASE("plateau scheduler rule walk", "[nncore]") {
  TrainSchedule sch;
  sch.learning_rate = 0.001;
  sch.plateau_patience = 10;
  sch.plateau_factor = 0.1;
  sch.min_lr = 1e-6;

  SECTION("strictly decreasing losses keep the rate") {
    std::vector<double> h;
    for (int i = 0; i < 30; ++i) h.push_back(1.0 - 0.01 * i);
    CHECK(plateau_scheduler(h, sch) == 0.001);
  }

  SECTION("10 non-improving epochs cut the rate once") {
    std::vector<double> h{1.0};
    for (int i = 0; i < 10; ++i) h.push_back(1.0);
    CHECK(plateau_scheduler(h, sch) == Catch::Approx(0.0001).epsilon(1e-12));
  }

  SECTION("the rate never goes below min_lr") {
    std::vector<double> h{1.0};
    for (int i = 0; i < 100; ++i) h.push_back(1.0);
    CHECK(plateau_scheduler(h, sch) >= sch.min_lr);
  }
}

TEST_CASE("early stopping rule walk", "[nncore]") {
  SECTION("monotone improvement never stops") {
    std::vector<double> h;
    for (int i = 0; i < 100; ++i) h.push_back(1.0 - 0.001 * i);
    auto d = early_stop(h, 15);
    CHECK_FALSE(d.stop);
    CHECK(d.best_epoch == 99);
  }

  SECTION("improvement at epoch index 2 then flat stops after 15 more") {
    std::vector<double> h{1.0, 0.9, 0.5};
    for (int i = 0; i < 14; ++i) h.push_back(0.5);
    auto d = early_stop(h, 15);
    CHECK_FALSE(d.stop);  // 14 non-improving epochs so far
    h.push_back(0.5);     // the 15th
    d = early_stop(h, 15);
    CHECK(d.stop);
    CHECK(d.best_epoch == 2);
  }

  SECTION("single epoch does not stop") {
    auto d = early_stop({1.0}, 15);
    CHECK_FALSE(d.stop);
    CHECK(d.best_epoch == 0);
  }
}

TEST_CASE("loss closed forms", "[nncore]") {
  SECTION("mse of identical tensors is 0; the spec pair gives 1") {
    Tensor x({2}, {3.0, -1.0});
    CHECK(mse(x, x).value == 0.0);
    CHECK(mse(Tensor({2}, {0.0, 0.0}), Tensor({2}, {1.0, 1.0})).value == 1.0);
  }

  SECTION("uniform logits give ln C") {
    for (std::size_t c : {2u, 3u, 7u}) {
      Tensor logits({1, c});
      logits.fill(0.3);
      CHECK(cross_entropy(logits, {0}).value == Catch::Approx(std::log(static_cast<double>(c))).epsilon(1e-12));
    }
  }

  SECTION("shape and label validation") {
    CHECK_THROWS_AS(mse(Tensor({2}), Tensor({3})), ValidationError);
    Tensor logits({1, 3});
    CHECK_THROWS_AS(cross_entropy(logits, {5}), ValidationError);
  }
}

TEST_CASE("training determinism: same seed, same trajectory", "[nncore]") {
  auto run = [](std::uint64_t seed) {
    Rng rng = Rng::for_stage(seed, "det");
    Sequential net;
    net.add(std::make_unique<Dense>(4, 8));
    net.add(std::make_unique<GeLU>());
    net.add(std::make_unique<Dense>(8, 1));
    net.init(rng);
    net.set_rng(&rng);
    AdamW opt(1e-3, 0.01);
    auto ps = net.params();
    opt.attach(ps);
    std::vector<double> losses;
    for (int epoch = 0; epoch < 10; ++epoch) {
      Tensor x({8, 4});
      Tensor t({8, 1});
      for (auto& v : x.data()) v = rng.normal();
      for (auto& v : t.data()) v = rng.normal();
      Tensor y = net.forward(x, Mode::Train);
      LossResult lr = mse(y, t);
      net.zero_grads();
      net.backward(lr.grad);
      opt.step(ps);
      losses.push_back(lr.value);
    }
    return losses;
  };
  auto a = run(42), b = run(42), c = run(43);
  CHECK(a == b);  // bit-identical
  CHECK(a != c);
}

TEST_CASE("checkpoint round trip reproduces eval outputs bit-exactly", "[nncore]") {
  namespace fs = std::filesystem;
  Rng rng(77);
  Sequential net;
  net.add(std::make_unique<Conv1d>(2, 6, 5));
  net.add(std::make_unique<GeLU>());
  net.add(std::make_unique<MaxPool1d>(2));
  net.add(std::make_unique<Flatten>());
  net.add(std::make_unique<Dense>(6 * 23, 10));
  net.add(std::make_unique<BatchNorm1d>(10));
  net.add(std::make_unique<Dense>(10, 3));
  net.init(rng);

  // move batch-norm running stats away from the defaults
  for (int i = 0; i < 3; ++i) {
    Tensor warm({4, 2, 50});
    for (auto& v : warm.data()) v = rng.normal();
    net.forward(warm, Mode::Train);
  }

  fs::path dir = fs::temp_directory_path() / "impsim_ckpt";
  fs::create_directories(dir);
  std::string path = (dir / "model.json").string();
  save_checkpoint(path, "test_model", json{{"model", net.save_state()}});

  Sequential loaded = Sequential::from_spec(net.to_spec());
  loaded.load_state(load_checkpoint(path, "test_model").at("model"));

  Tensor x({2, 2, 50});
  for (auto& v : x.data()) v = rng.normal();
  Tensor y0 = net.forward(x, Mode::Eval);
  Tensor y1 = loaded.forward(x, Mode::Eval);
  REQUIRE(y0.numel() == y1.numel());
  for (std::size_t i = 0; i < y0.numel(); ++i) CHECK(y0[i] == y1[i]);  // bit-exact

  CHECK_THROWS_AS(load_checkpoint(path, "other_kind"), ValidationError);
  fs::remove_all(dir);
}
