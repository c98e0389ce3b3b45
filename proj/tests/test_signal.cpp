#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "impsim/rng.hpp"
#include "impsim/signal.hpp"

using namespace impsim;

namespace {

TimeSeries ramp(std::size_t n, double rate) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(i) / (n - 1);
  return single_channel_series(std::move(v), rate, "path_len");
}

}  // namespace

TEST_CASE("time series validation", "[signal]") {
  CHECK_THROWS_AS(single_channel_series({1.0, 2.0}, 0.0, "x"), ValidationError);
  CHECK_THROWS_AS(single_channel_series({1.0, std::nan("")}, 20.0, "x"), ValidationError);
  CHECK_THROWS_AS(TimeSeries({1.0, 2.0, 3.0}, 2, 20.0, {"a", "b"}), ValidationError);
}

TEST_CASE("resample: constants, ramps, identity", "[signal]") {
  SECTION("constant series stays constant") {
    TimeSeries s({5.5, 5.5, 5.5, 5.5, 5.5, 5.5}, 1, 30.0, {"x"});
    TimeSeries r = resample(s, 20.0);
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(r.at(i, 0) == 5.5);
  }

  SECTION("linear ramp is reproduced exactly") {
    TimeSeries s = ramp(31, 30.0);  // 0..1 over one second
    TimeSeries r = resample(s, 20.0);
    for (std::size_t i = 0; i < r.size(); ++i) {
      double t = static_cast<double>(i) / 20.0;
      CHECK(std::abs(r.at(i, 0) - t) < 1e-12);
    }
  }

  SECTION("60 samples at 30 Hz become 40 at 20 Hz") {
    TimeSeries s = ramp(60, 30.0);
    TimeSeries r = resample(s, 20.0);
    CHECK(r.size() == 40);
    CHECK(r.at(0, 0) == s.at(0, 0));
    // output duration within one output period of input duration
    CHECK(std::abs(r.duration() - s.duration()) <= 1.0 / 20.0);
  }

  SECTION("resampling at the source rate is the identity") {
    TimeSeries s = ramp(47, 20.0);
    TimeSeries r = resample(s, 20.0);
    REQUIRE(r.size() == s.size());
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(r.at(i, 0) - s.at(i, 0)) < 1e-12);
  }

  SECTION("single sample is an error") {
    TimeSeries s({1.0}, 1, 20.0, {"x"});
    CHECK_THROWS_AS(resample(s, 20.0), ValidationError);
  }
}

TEST_CASE("windows: counts and trailing samples", "[signal]") {
  auto count_for = [](std::size_t total, std::size_t len, std::size_t step) {
    std::vector<double> v(total, 0.0);
    TimeSeries s(std::move(v), 1, 20.0, {"x"});
    return windows(s, {len, step}).size();
  };

  CHECK(count_for(100, 50, 10) == 6);
  CHECK(count_for(50, 50, 10) == 1);
  CHECK(count_for(59, 50, 10) == 1);

  SECTION("last window of T=100 covers samples [50, 100)") {
    std::vector<double> v(100);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
    TimeSeries s(std::move(v), 1, 20.0, {"x"});
    auto ws = windows(s, {50, 10});
    REQUIRE(ws.size() == 6);
    CHECK(ws.back().start == 50);
    CHECK(ws.back().samples.front() == 50.0);
    CHECK(ws.back().samples.back() == 99.0);
  }

  SECTION("series shorter than one window") {
    std::vector<double> v(49, 0.0);
    TimeSeries s(std::move(v), 1, 20.0, {"x"});
    CHECK_THROWS_AS(windows(s, {50, 10}), ValidationError);
  }

  SECTION("property sweep: count matches the closed form") {
    for (std::size_t total : {1u, 2u, 7u, 50u, 51u, 99u, 100u, 123u}) {
      for (std::size_t len : {1u, 2u, 5u, 50u}) {
        for (std::size_t step : {1u, 2u, 5u, 10u}) {
          if (step > len) continue;
          std::vector<double> v(total, 0.0);
          TimeSeries s(std::move(v), 1, 20.0, {"x"});
          if (total < len) {
            CHECK_THROWS_AS(windows(s, {len, step}), ValidationError);
          } else {
            CHECK(windows(s, {len, step}).size() == (total - len) / step + 1);
          }
        }
      }
    }
  }
}

TEST_CASE("normalize: z-score with training stats", "[signal]") {
  Rng rng(99);
  std::vector<SignalWindow> train;
  for (int w = 0; w < 20; ++w) {
    SignalWindow win;
    win.arity = 2;
    for (int i = 0; i < 50; ++i) {
      win.samples.push_back(rng.normal(10.0, 3.0));   // channel 0
      win.samples.push_back(rng.normal(-2.0, 0.5));   // channel 1
    }
    train.push_back(win);
  }

  SECTION("self-normalization gives mean 0, std 1") {
    auto normed = normalize(train, train);
    ChannelStats st = window_stats(normed);
    CHECK(std::abs(st.mean[0]) < 1e-9);
    CHECK(std::abs(st.mean[1]) < 1e-9);
    CHECK(std::abs(st.stddev[0] - 1.0) < 1e-6);
    CHECK(std::abs(st.stddev[1] - 1.0) < 1e-6);
  }

  SECTION("idempotent on normalized data") {
    auto once = normalize(train, train);
    auto twice = normalize(once, once);
    for (std::size_t w = 0; w < once.size(); ++w) {
      for (std::size_t i = 0; i < once[w].samples.size(); ++i) {
        CHECK(std::abs(once[w].samples[i] - twice[w].samples[i]) < 1e-9);
      }
    }
  }

  SECTION("constant channel centers to zero") {
    std::vector<SignalWindow> constant(3);
    for (auto& w : constant) {
      w.arity = 1;
      w.samples.assign(10, 7.25);
    }
    auto normed = normalize(constant, constant);
    for (const auto& w : normed) {
      for (double v : w.samples) CHECK(v == 0.0);
    }
  }

  SECTION("test windows use train stats, not their own") {
    std::vector<SignalWindow> shifted = train;
    for (auto& w : shifted) {
      for (std::size_t i = 0; i < w.samples.size(); i += 2) w.samples[i] += 100.0;
    }
    auto normed = normalize(shifted, train);
    ChannelStats st = window_stats(normed);
    CHECK(st.mean[0] > 10.0);  // the shift survives
  }

  SECTION("empty training split is an error") {
    CHECK_THROWS_AS(window_stats({}), ValidationError);
  }
}

TEST_CASE("align: self, delayed copy, noise", "[signal]") {
  Rng rng(123);
  std::vector<double> base(100);
  for (std::size_t i = 0; i < base.size(); ++i) {
    base[i] = std::sin(0.3 * i) + 0.1 * rng.normal();
  }
  TimeSeries s(std::vector<double>(base), 1, 20.0, {"magnitude"});

  SECTION("identical series align at lag 0 with correlation 1") {
    AlignResult r = align(s, s);
    CHECK(r.lag == 0);
    CHECK(r.correlation == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(r.a.size() == s.size());
  }

  SECTION("5-sample delay is recovered") {
    // delayed: real[t] = base[t - 5]
    std::vector<double> delayed(base.size(), 0.0);
    for (std::size_t i = 5; i < base.size(); ++i) delayed[i] = base[i - 5];
    TimeSeries d(std::move(delayed), 1, 20.0, {"magnitude"});
    AlignResult r = align(s, d);
    CHECK(r.lag == 5);

    // brute-force oracle over all lags
    int best_lag = 0;
    double best = -2;
    for (int lag = -static_cast<int>(base.size()) + 2; lag < static_cast<int>(base.size()) - 1; ++lag) {
      std::vector<double> xs, ys;
      for (std::size_t i = 0; i < base.size(); ++i) {
        long j = static_cast<long>(i) + lag;
        if (j < 0 || j >= static_cast<long>(base.size())) continue;
        xs.push_back(base[i]);
        ys.push_back(d.at(static_cast<std::size_t>(j), 0));
      }
      if (xs.size() < 2) continue;
      double mx = 0, my = 0;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
      }
      mx /= xs.size();
      my /= ys.size();
      double sxy = 0, sxx = 0, syy = 0;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
      }
      double c = (sxx < 1e-24 || syy < 1e-24) ? 0.0 : sxy / std::sqrt(sxx * syy);
      if (c > best) {
        best = c;
        best_lag = lag;
      }
    }
    CHECK(best_lag == r.lag);
  }

  SECTION("uncorrelated noise still aligns without failing") {
    std::vector<double> noise(100);
    for (auto& v : noise) v = rng.normal();
    TimeSeries nz(std::move(noise), 1, 20.0, {"magnitude"});
    AlignResult r = align(s, nz);
    CHECK(std::abs(r.lag) <= 20);
    CHECK(r.correlation <= 1.0);
  }

  SECTION("rate mismatch is an error") {
    TimeSeries other(std::vector<double>(base), 1, 30.0, {"magnitude"});
    CHECK_THROWS_AS(align(s, other), ValidationError);
  }
}

TEST_CASE("signal csv round trip", "[signal]") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "impsim_signal_csv";
  fs::create_directories(dir);
  std::string path = (dir / "sig.csv").string();

  Rng rng(5);
  std::vector<double> data;
  for (int i = 0; i < 40; ++i) {
    data.push_back(rng.normal(250.0, 30.0));  // magnitude
    data.push_back(rng.uniform(-3.1, 3.1));   // phase
  }
  TimeSeries s(std::move(data), 2, 20.0, {"magnitude", "phase"});
  write_signal_csv(path, s);
  TimeSeries r = read_signal_csv(path);
  REQUIRE(r.size() == s.size());
  CHECK(r.rate() == Catch::Approx(20.0).epsilon(1e-9));
  CHECK(r.channel_names() == s.channel_names());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(r.at(i, 0) == s.at(i, 0));  // exact: %.17g round trip
    CHECK(r.at(i, 1) == s.at(i, 1));
  }
  fs::remove_all(dir);
}
