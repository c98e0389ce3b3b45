// Time-series resampling, windowing, normalization and alignment.
//
// File format for signal CSVs: header `t,magnitude,phase` or `t,path_len`,
// `t` in seconds, UTF-8, LF line endings.
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "impsim/csv.hpp"
#include "impsim/error.hpp"

namespace impsim {

// Uniformly sampled multichannel series. Samples are stored row-major:
// sample index varies slowest, channel fastest.
class TimeSeries {
 public:
  TimeSeries(std::vector<double> data, std::size_t arity, double rate, std::vector<std::string> channel_names)
      : data_(std::move(data)), arity_(arity), rate_(rate), channels_(std::move(channel_names)) {
    if (!(rate_ > 0.0)) throw ValidationError("time series rate must be positive");
    if (arity_ == 0) throw ValidationError("time series arity must be >= 1");
    if (data_.size() % arity_ != 0) throw ValidationError("time series data length is not a multiple of arity");
    if (channels_.size() != arity_) throw ValidationError("channel name count does not match arity");
    for (double v : data_) {
      if (std::isnan(v)) throw ValidationError("time series contains NaN");
    }
  }

  std::size_t size() const { return data_.size() / arity_; }
  std::size_t arity() const { return arity_; }
  double rate() const { return rate_; }
  const std::vector<std::string>& channel_names() const { return channels_; }
  const std::vector<double>& data() const { return data_; }

  double at(std::size_t sample, std::size_t channel) const { return data_[sample * arity_ + channel]; }

  double duration() const { return size() < 2 ? 0.0 : (size() - 1) / rate_; }

 private:
  std::vector<double> data_;
  std::size_t arity_;
  double rate_;
  std::vector<std::string> channels_;
};

inline TimeSeries single_channel_series(std::vector<double> values, double rate, const std::string& name) {
  return TimeSeries(std::move(values), 1, rate, {name});
}

// Linear interpolation onto the uniform grid of the target rate. The first
// sample is preserved exactly; the output covers the input duration to
// within one output period.
inline TimeSeries resample(const TimeSeries& series, double target_rate) {
  if (series.size() < 2) throw ValidationError("resample needs at least 2 samples");
  if (!(target_rate > 0.0)) throw ValidationError("resample target rate must be positive");

  const double duration = series.duration();
  const std::size_t out_n = static_cast<std::size_t>(std::floor(duration * target_rate + 1e-9)) + 1;
  std::vector<double> out;
  out.reserve(out_n * series.arity());
  for (std::size_t k = 0; k < out_n; ++k) {
    double t = static_cast<double>(k) / target_rate;
    double pos = t * series.rate();
    std::size_t i0 = std::min(static_cast<std::size_t>(pos), series.size() - 2);
    double frac = pos - static_cast<double>(i0);
    frac = std::clamp(frac, 0.0, 1.0);
    for (std::size_t c = 0; c < series.arity(); ++c) {
      double a = series.at(i0, c);
      double b = series.at(i0 + 1, c);
      out.push_back(frac == 0.0 ? a : a + (b - a) * frac);
    }
  }
  return TimeSeries(std::move(out), series.arity(), target_rate, series.channel_names());
}

struct WindowSpec {
  std::size_t length = 50;
  std::size_t step = 10;
};

inline void validate_window_spec(const WindowSpec& spec) {
  if (spec.length < 1) throw ValidationError("window length must be >= 1");
  if (spec.step < 1 || spec.step > spec.length) throw ValidationError("window step must be in [1, length]");
}

struct SignalWindow {
  std::size_t start = 0;             // sample index in the source series
  std::size_t arity = 1;
  std::vector<double> samples;       // length x arity, row-major
  std::size_t length() const { return samples.size() / arity; }
};

// Windows start at 0, step, 2*step, ...; a trailing partial window is
// discarded. Count = floor((T - length) / step) + 1.
inline std::vector<SignalWindow> windows(const TimeSeries& series, const WindowSpec& spec) {
  validate_window_spec(spec);
  if (series.size() < spec.length) {
    throw ValidationError("series of " + std::to_string(series.size()) + " samples is shorter than one window (" +
                          std::to_string(spec.length) + ")");
  }
  const std::size_t count = (series.size() - spec.length) / spec.step + 1;
  std::vector<SignalWindow> out;
  out.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    SignalWindow win;
    win.start = w * spec.step;
    win.arity = series.arity();
    win.samples.reserve(spec.length * series.arity());
    for (std::size_t i = 0; i < spec.length; ++i) {
      for (std::size_t c = 0; c < series.arity(); ++c) {
        win.samples.push_back(series.at(win.start + i, c));
      }
    }
    out.push_back(std::move(win));
  }
  return out;
}

// Labeled (magnitude, phase) window: the unit of HAR training data.
struct ImpedanceWindow {
  SignalWindow window;  // arity 2: magnitude (ohm), phase (rad)
  std::string user_id;
  int label = -1;
  enum class Source { Real, Simulated } source = Source::Real;
};

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // population std; entries < 1e-12 mark pass-through channels
};

// Stats come from the training split only; evaluation data is normalized
// with these, never with its own.
inline ChannelStats window_stats(const std::vector<SignalWindow>& training) {
  if (training.empty()) throw ValidationError("normalization stats need a non-empty training split");
  const std::size_t arity = training.front().arity;
  ChannelStats st;
  st.mean.assign(arity, 0.0);
  st.stddev.assign(arity, 0.0);
  std::size_t n = 0;
  for (const auto& w : training) {
    if (w.arity != arity) throw ValidationError("mixed-arity windows in training split");
    for (std::size_t i = 0; i < w.samples.size(); ++i) st.mean[i % arity] += w.samples[i];
    n += w.length();
  }
  for (auto& m : st.mean) m /= static_cast<double>(n);
  for (const auto& w : training) {
    for (std::size_t i = 0; i < w.samples.size(); ++i) {
      double d = w.samples[i] - st.mean[i % arity];
      st.stddev[i % arity] += d * d;
    }
  }
  for (auto& s : st.stddev) s = std::sqrt(s / static_cast<double>(n));
  return st;
}

// Per-channel z-score. Channels whose training std is below 1e-12 are only
// mean-centered.
inline std::vector<SignalWindow> normalize(const std::vector<SignalWindow>& ws, const ChannelStats& stats) {
  std::vector<SignalWindow> out = ws;
  for (auto& w : out) {
    if (w.arity != stats.mean.size()) throw ValidationError("window arity does not match normalization stats");
    for (std::size_t i = 0; i < w.samples.size(); ++i) {
      std::size_t c = i % w.arity;
      double v = w.samples[i] - stats.mean[c];
      if (stats.stddev[c] >= 1e-12) v /= stats.stddev[c];
      w.samples[i] = v;
    }
  }
  return out;
}

inline std::vector<SignalWindow> normalize(const std::vector<SignalWindow>& ws,
                                           const std::vector<SignalWindow>& training_split) {
  return normalize(ws, window_stats(training_split));
}

struct AlignResult {
  TimeSeries a, b;       // truncated to the common overlap
  int lag = 0;           // samples by which b trails a
  double correlation = 0.0;
};

namespace detail {

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx < 1e-24 || syy < 1e-24) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace detail

// Temporal synchronization of two same-rate series. Searches integer lags
// within +-1 s for the one maximizing the Pearson correlation of channel 0
// (magnitudes); ties prefer the smaller |lag|, then the smaller lag. The
// correlation is reported, not enforced.
inline AlignResult align(const TimeSeries& sim, const TimeSeries& real) {
  if (sim.rate() != real.rate()) throw ValidationError("align requires both series at the same rate");
  const int max_lag = static_cast<int>(std::lround(sim.rate()));

  int best_lag = 0;
  double best_corr = -2.0;
  for (int lag = -max_lag; lag <= max_lag; ++lag) {
    // pair sim[i] with real[i + lag]
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < sim.size(); ++i) {
      long j = static_cast<long>(i) + lag;
      if (j < 0 || j >= static_cast<long>(real.size())) continue;
      xs.push_back(sim.at(i, 0));
      ys.push_back(real.at(static_cast<std::size_t>(j), 0));
    }
    if (xs.size() < 2) continue;
    double c = detail::pearson(xs, ys);
    bool better = c > best_corr + 1e-15;
    bool tie = std::abs(c - best_corr) <= 1e-15 &&
               (std::abs(lag) < std::abs(best_lag) || (std::abs(lag) == std::abs(best_lag) && lag < best_lag));
    if (best_corr == -2.0 || better || tie) {
      best_corr = c;
      best_lag = lag;
    }
  }
  if (best_corr == -2.0) throw ValidationError("align: no overlap between the series at any lag");

  std::vector<double> da, db;
  std::size_t count = 0;
  for (std::size_t i = 0; i < sim.size(); ++i) {
    long j = static_cast<long>(i) + best_lag;
    if (j < 0 || j >= static_cast<long>(real.size())) continue;
    for (std::size_t c = 0; c < sim.arity(); ++c) da.push_back(sim.at(i, c));
    for (std::size_t c = 0; c < real.arity(); ++c) db.push_back(real.at(static_cast<std::size_t>(j), c));
    ++count;
  }
  if (count < 2) throw ValidationError("align: overlap too short after lag");
  return AlignResult{TimeSeries(std::move(da), sim.arity(), sim.rate(), sim.channel_names()),
                     TimeSeries(std::move(db), real.arity(), real.rate(), real.channel_names()), best_lag, best_corr};
}

// --- signal CSV I/O ---

inline void write_signal_csv(const std::string& path, const TimeSeries& series) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write csv: " + path);
  out << "t";
  for (const auto& c : series.channel_names()) out << ',' << c;
  out << '\n';
  for (std::size_t i = 0; i < series.size(); ++i) {
    out << format_double(static_cast<double>(i) / series.rate());
    for (std::size_t c = 0; c < series.arity(); ++c) out << ',' << format_double(series.at(i, c));
    out << '\n';
  }
}

// Reads a `t,...` CSV written by write_signal_csv (or compatible). The rate
// is inferred from the first two timestamps.
inline TimeSeries read_signal_csv(const std::string& path) {
  CsvTable t = read_numeric_csv(path);
  if (t.header.size() < 2 || t.header[0] != "t") {
    throw ParseError(path + ": expected header starting with 't'");
  }
  if (t.rows.size() < 2) throw ParseError(path + ": need at least 2 samples");
  double dt = t.rows[1][0] - t.rows[0][0];
  if (!(dt > 0.0)) throw ParseError(path + ": non-increasing timestamps");
  std::size_t arity = t.header.size() - 1;
  std::vector<double> data;
  data.reserve(t.rows.size() * arity);
  for (const auto& row : t.rows) {
    if (row.size() != t.header.size()) throw ParseError(path + ": ragged row");
    for (std::size_t c = 1; c < row.size(); ++c) data.push_back(row[c]);
  }
  std::vector<std::string> names(t.header.begin() + 1, t.header.end());
  return TimeSeries(std::move(data), arity, 1.0 / dt, std::move(names));
}

}  // namespace impsim
