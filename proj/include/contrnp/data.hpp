#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "contrnp/error.hpp"

namespace contrnp {

using Rng = std::mt19937_64;

/// A (possibly multichannel) series. `y` is row-major [T, channels].
struct TimeSeries {
  std::vector<double> x;
  std::vector<double> y;
  std::size_t channels = 1;
  std::optional<std::vector<int>> labels;

  std::size_t length() const noexcept { return x.size(); }
};

enum class Waveform { kSine, kSawtooth, kSquare, kAmSine };

/// Parameters a synthetic segment was drawn with.
struct WaveParams {
  Waveform shape = Waveform::kSine;
  double frequency = 1.0;  // cycles per window
  double amplitude = 1.0;
  double phase = 0.0;
  double mod_frequency = 1.0;  // kAmSine only
  double mod_phase = 0.0;      // kAmSine only
};

/// A fixed-length window of a series with x rescaled to [0, 1].
struct Segment {
  std::size_t id = 0;
  std::vector<double> x;
  std::vector<double> y;  // [length, channels]
  std::size_t channels = 1;
  std::optional<int> label;
  std::optional<WaveParams> source;

  std::size_t length() const noexcept { return x.size(); }
};

/// A set of (x, y) observations; y is row-major [size, channels].
struct PointSet {
  std::vector<double> x;
  std::vector<double> y;
  std::size_t channels = 1;

  std::size_t size() const noexcept { return x.size(); }
};

/// One random sampling of a segment: an out-of-context context set and the
/// full-window target set.
struct ViewPair {
  std::size_t segment_id = 0;
  std::size_t view_id = 0;
  PointSet context;
  PointSet target;
};

/// K segments x M views, segment-major: views[k * M + m].
struct SegmentBatch {
  std::size_t segments = 0;
  std::size_t views_per_segment = 0;
  std::vector<std::size_t> segment_ids;
  std::vector<ViewPair> views;
};

/// Context thresholds (a, b) and the context size range.
struct SamplingConfig {
  double a = 0.25;
  double b = 0.75;
  std::size_t n_context_min = 20;
  std::size_t n_context_max = 100;

  void validate() const {
    if (!(0.0 <= a && a < b && b <= 1.0)) {
      throw UsageError("context thresholds need 0 <= a < b <= 1, got a=" + std::to_string(a) +
                       " b=" + std::to_string(b));
    }
    if (n_context_min < 1 || n_context_min > n_context_max) {
      throw UsageError("n_context range [" + std::to_string(n_context_min) + ", " +
                       std::to_string(n_context_max) + "] is empty");
    }
  }
};

namespace detail {

inline std::optional<int> majority_label(std::span<const int> labels) {
  if (labels.empty()) return std::nullopt;
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  // std::map iterates in key order, so ties go to the smallest id.
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return best->first;
}

}  // namespace detail

/// Cuts `series` into windows of `window_size` points every `stride` points.
/// A trailing partial window is dropped. Each window's x is mapped affinely
/// onto [0, 1]; labels become the window's majority class.
inline std::vector<Segment> segmentize(const TimeSeries& series, std::size_t window_size,
                                       std::size_t stride) {
  if (series.length() == 0) throw DataError("segmentize: empty series");
  if (window_size < 2) throw UsageError("segmentize: window_size must be at least 2");
  if (stride < 1) throw UsageError("segmentize: stride must be at least 1");
  if (window_size > series.length()) {
    throw DataError("segmentize: window of " + std::to_string(window_size) +
                    " points exceeds series length " + std::to_string(series.length()));
  }
  const std::size_t c = series.channels;
  if (c == 0 || series.y.size() != series.length() * c) {
    throw DataError("segmentize: y holds " + std::to_string(series.y.size()) + " values, expected " +
                    std::to_string(series.length()) + " x " + std::to_string(c));
  }
  if (series.labels && series.labels->size() != series.length()) {
    throw DataError("segmentize: label count differs from series length");
  }
  for (std::size_t i = 1; i < series.length(); ++i) {
    if (!(series.x[i] > series.x[i - 1])) {
      throw DataError("segmentize: timestamps must be strictly increasing (index " +
                      std::to_string(i) + ")");
    }
  }
  std::vector<Segment> out;
  for (std::size_t start = 0; start + window_size <= series.length(); start += stride) {
    Segment seg;
    seg.id = out.size();
    seg.channels = c;
    const double x0 = series.x[start];
    const double span = series.x[start + window_size - 1] - x0;
    seg.x.reserve(window_size);
    for (std::size_t i = 0; i < window_size; ++i) {
      seg.x.push_back((series.x[start + i] - x0) / span);
    }
    seg.x.back() = 1.0;
    seg.y.assign(series.y.begin() + static_cast<std::ptrdiff_t>(start * c),
                 series.y.begin() + static_cast<std::ptrdiff_t>((start + window_size) * c));
    if (series.labels) {
      seg.label = detail::majority_label(
          std::span<const int>(*series.labels).subspan(start, window_size));
    }
    out.push_back(std::move(seg));
  }
  return out;
}

/// Draws M views of one segment. Context points come uniformly without
/// replacement from the points with a < x < b; the target is the whole
/// window. Views draw independently, so their context sets may overlap.
inline std::vector<ViewPair> sample_views(const Segment& segment, std::size_t views,
                                          const SamplingConfig& cfg, Rng& rng) {
  cfg.validate();
  if (views < 1) throw UsageError("sample_views: need at least one view");
  std::vector<std::size_t> inside;
  for (std::size_t i = 0; i < segment.length(); ++i) {
    if (segment.x[i] > cfg.a && segment.x[i] < cfg.b) inside.push_back(i);
  }
  if (inside.size() < cfg.n_context_max) {
    throw DataError("segment " + std::to_string(segment.id) + " has " +
                    std::to_string(inside.size()) + " points in (" + std::to_string(cfg.a) + ", " +
                    std::to_string(cfg.b) + "), fewer than n_context_max=" +
                    std::to_string(cfg.n_context_max));
  }
  const std::size_t c = segment.channels;

  PointSet target;
  target.channels = c;
  target.x = segment.x;
  target.y = segment.y;

  std::vector<ViewPair> out;
  out.reserve(views);
  for (std::size_t m = 0; m < views; ++m) {
    std::uniform_int_distribution<std::size_t> count(cfg.n_context_min, cfg.n_context_max);
    const std::size_t n = count(rng);
    std::vector<std::size_t> pick = inside;
    // Partial Fisher-Yates: the first n entries become a uniform n-subset.
    for (std::size_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<std::size_t> j(i, pick.size() - 1);
      std::swap(pick[i], pick[j(rng)]);
    }
    pick.resize(n);
    std::sort(pick.begin(), pick.end());

    ViewPair view;
    view.segment_id = segment.id;
    view.view_id = m;
    view.context.channels = c;
    for (std::size_t i : pick) {
      view.context.x.push_back(segment.x[i]);
      for (std::size_t ch = 0; ch < c; ++ch) view.context.y.push_back(segment.y[i * c + ch]);
    }
    view.target = target;
    out.push_back(std::move(view));
  }
  return out;
}

/// Shuffles `segments` and samples M views of each into a contrastive batch.
inline SegmentBatch make_batch(std::span<const Segment> segments, std::size_t views,
                               const SamplingConfig& cfg, Rng& rng) {
  if (segments.size() < 2) throw UsageError("contrastive batch needs K >= 2 segments");
  if (views < 2) throw UsageError("contrastive batch needs M >= 2 views per segment");
  std::vector<std::size_t> order(segments.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);

  SegmentBatch batch;
  batch.segments = segments.size();
  batch.views_per_segment = views;
  for (std::size_t i : order) {
    batch.segment_ids.push_back(segments[i].id);
    for (auto& v : sample_views(segments[i], views, cfg, rng)) batch.views.push_back(std::move(v));
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Synthetic waveforms.

inline double render_wave(const WaveParams& p, double x) {
  const double two_pi = 2.0 * std::numbers::pi;
  const double cycles = p.frequency * x + p.phase / two_pi;
  switch (p.shape) {
    case Waveform::kSine:
      return p.amplitude * std::sin(two_pi * p.frequency * x + p.phase);
    case Waveform::kSawtooth:
      return p.amplitude * (2.0 * (cycles - std::floor(cycles)) - 1.0);
    case Waveform::kSquare:
      return p.amplitude * (std::sin(two_pi * p.frequency * x + p.phase) >= 0.0 ? 1.0 : -1.0);
    case Waveform::kAmSine:
      return p.amplitude * (1.0 + 0.5 * std::sin(two_pi * p.mod_frequency * x + p.mod_phase)) /
             1.5 * std::sin(two_pi * p.frequency * x + p.phase);
  }
  return 0.0;
}

/// Class c draws from waveform family c mod 4 (sine, sawtooth, square,
/// amplitude-modulated sine) with its own frequency band [2 + c, 2.5 + c]
/// cycles per window. Amplitude and phase are random per segment.
inline WaveParams draw_wave_params(int cls, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  WaveParams p;
  p.shape = static_cast<Waveform>(cls % 4);
  p.frequency = 2.0 + static_cast<double>(cls) + 0.5 * unit(rng);
  p.amplitude = 0.8 + 0.4 * unit(rng);
  p.phase = 2.0 * std::numbers::pi * unit(rng);
  p.mod_frequency = 1.0 + unit(rng);
  p.mod_phase = 2.0 * std::numbers::pi * unit(rng);
  return p;
}

/// Renders a segment of `window_len` points of `p` on x = i / (window_len - 1)
/// plus N(0, noise_sd) noise.
inline Segment render_segment(const WaveParams& p, std::size_t window_len, double noise_sd,
                              Rng& rng) {
  Segment seg;
  seg.channels = 1;
  seg.source = p;
  std::normal_distribution<double> noise(0.0, noise_sd > 0.0 ? noise_sd : 1.0);
  for (std::size_t i = 0; i < window_len; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(window_len - 1);
    seg.x.push_back(x);
    double v = render_wave(p, x);
    if (noise_sd > 0.0) v += noise(rng);
    seg.y.push_back(v);
  }
  return seg;
}

/// Labeled synthetic dataset, class-major with ids 0..n-1.
inline std::vector<Segment> synth_generate(int n_classes, std::size_t segments_per_class,
                                           std::size_t window_len, double noise_sd, Rng& rng) {
  if (n_classes < 2) throw UsageError("synth_generate: need at least 2 classes");
  if (window_len < 2) throw UsageError("synth_generate: window_len must be at least 2");
  if (noise_sd < 0.0) throw UsageError("synth_generate: noise_sd must be non-negative");
  std::vector<Segment> out;
  for (int c = 0; c < n_classes; ++c) {
    for (std::size_t s = 0; s < segments_per_class; ++s) {
      Segment seg = render_segment(draw_wave_params(c, rng), window_len, noise_sd, rng);
      seg.id = out.size();
      seg.label = c;
      out.push_back(std::move(seg));
    }
  }
  return out;
}

/// Unit-amplitude sinusoids with frequency in [f_lo, f_hi] and random phase.
inline std::vector<Segment> synth_sines(std::size_t count, std::size_t window_len, double f_lo,
                                        double f_hi, Rng& rng) {
  std::uniform_real_distribution<double> freq(f_lo, f_hi);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::vector<Segment> out;
  for (std::size_t s = 0; s < count; ++s) {
    WaveParams p;
    p.frequency = freq(rng);
    p.phase = phase(rng);
    Segment seg = render_segment(p, window_len, 0.0, rng);
    seg.id = s;
    out.push_back(std::move(seg));
  }
  return out;
}

/// Lays segments end to end on an integer time axis (one series).
inline TimeSeries concat_segments(std::span<const Segment> segments) {
  TimeSeries ts;
  if (segments.empty()) return ts;
  ts.channels = segments.front().channels;
  const bool labeled = segments.front().label.has_value();
  if (labeled) ts.labels.emplace();
  for (const auto& seg : segments) {
    if (seg.channels != ts.channels) throw DataError("concat_segments: channel count differs");
    for (std::size_t i = 0; i < seg.length(); ++i) {
      ts.x.push_back(static_cast<double>(ts.x.size()));
      if (labeled) ts.labels->push_back(seg.label.value_or(0));
    }
    ts.y.insert(ts.y.end(), seg.y.begin(), seg.y.end());
  }
  return ts;
}

// ---------------------------------------------------------------------------
// CSV: header `time,ch0,...,chN[,label]`.

struct CsvOptions {
  bool normalize = true;  // channel-wise z-score
};

/// Channel-wise z-score; sigma is floored at 1e-8 so constant channels map
/// to zero.
inline void zscore_channels(TimeSeries& ts) {
  const std::size_t c = ts.channels;
  const std::size_t n = ts.length();
  if (n == 0) return;
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += ts.y[i * c + ch];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = ts.y[i * c + ch] - mean;
      var += d * d;
    }
    const double sd = std::max(std::sqrt(var / static_cast<double>(n)), 1e-8);
    for (std::size_t i = 0; i < n; ++i) ts.y[i * c + ch] = (ts.y[i * c + ch] - mean) / sd;
  }
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline double parse_double(const std::string& s, std::size_t line_no, const std::string& path) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || !std::isfinite(v)) {
    throw DataError(path + ":" + std::to_string(line_no) + ": cannot parse number '" + s + "'");
  }
  return v;
}

}  // namespace detail

inline TimeSeries load_csv(const std::string& path, const CsvOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ":1: missing header");
  const auto header = detail::split_csv_line(line);
  if (header.size() < 2 || header[0] != "time") {
    throw DataError(path + ":1: header must start with 'time' followed by channel columns");
  }
  const bool has_label = header.back() == "label";
  const std::size_t channels = header.size() - 1 - (has_label ? 1 : 0);
  if (channels == 0) throw DataError(path + ":1: no value columns");

  TimeSeries ts;
  ts.channels = channels;
  if (has_label) ts.labels.emplace();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " columns, found " +
                      std::to_string(cells.size()));
    }
    const double t = detail::parse_double(cells[0], line_no, path);
    if (!ts.x.empty() && !(t > ts.x.back())) {
      throw DataError(path + ":" + std::to_string(line_no) + ": time " + cells[0] +
                      " is not greater than the previous timestamp (series must be monotone)");
    }
    ts.x.push_back(t);
    for (std::size_t ch = 0; ch < channels; ++ch) {
      ts.y.push_back(detail::parse_double(cells[1 + ch], line_no, path));
    }
    if (has_label) {
      const double l = detail::parse_double(cells.back(), line_no, path);
      if (l != std::floor(l)) {
        throw DataError(path + ":" + std::to_string(line_no) + ": label must be an integer");
      }
      ts.labels->push_back(static_cast<int>(l));
    }
  }
  if (ts.x.empty()) throw DataError(path + ": no data rows");
  if (opts.normalize) zscore_channels(ts);
  return ts;
}

inline void write_csv(const TimeSeries& ts, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out.precision(17);
  out << "time";
  for (std::size_t ch = 0; ch < ts.channels; ++ch) out << ",ch" << ch;
  if (ts.labels) out << ",label";
  out << '\n';
  for (std::size_t i = 0; i < ts.length(); ++i) {
    out << ts.x[i];
    for (std::size_t ch = 0; ch < ts.channels; ++ch) out << ',' << ts.y[i * ts.channels + ch];
    if (ts.labels) out << ',' << (*ts.labels)[i];
    out << '\n';
  }
  if (!out) throw DataError("error writing " + path);
}

}  // namespace contrnp
