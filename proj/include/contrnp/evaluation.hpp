#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "contrnp/data.hpp"
#include "contrnp/model.hpp"
#include "contrnp/optim.hpp"

namespace contrnp {

/// N aggregated representations (row-major [N, dim]) with class ids.
struct EncodedDataset {
  std::size_t dim = 0;
  std::vector<double> reps;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(reps).subspan(i * dim, dim);
  }
  void push_back(std::span<const double> r, int label) {
    if (dim == 0) dim = r.size();
    if (r.size() != dim) throw ShapeError("EncodedDataset: row width differs");
    reps.insert(reps.end(), r.begin(), r.end());
    labels.push_back(label);
  }
  EncodedDataset subset(std::span<const std::size_t> index) const {
    EncodedDataset out;
    out.dim = dim;
    for (auto i : index) out.push_back(row(i), labels[i]);
    return out;
  }
};

/// Encodes M sampled views of every segment and averages them into R_k.
/// Segments without a label get -1.
inline EncodedDataset extract(const ConvCnpModel& model, std::span<const Segment> segments,
                              std::size_t views, const SamplingConfig& sampling, Rng& rng) {
  if (views < 1) throw UsageError("extract: need at least one view per segment");
  EncodedDataset out;
  out.dim = model.config.encoding_size;
  std::vector<double> acc(out.dim);
  for (const auto& seg : segments) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (const auto& view : sample_views(seg, views, sampling, rng)) {
      const auto r = represent(view.context, model);
      for (std::size_t j = 0; j < out.dim; ++j) acc[j] += r.r[j];
    }
    for (auto& v : acc) v /= static_cast<double>(views);
    out.push_back(acc, seg.label.value_or(-1));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stratified splitting.

namespace detail {

inline std::map<int, std::vector<std::size_t>> by_class(std::span<const int> labels) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  return groups;
}

}  // namespace detail

struct SplitIndices {
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
};

/// Per class, shuffles the members and puts round(fraction * n) of them in
/// `first`. Equal seeds give nested `first` sets for growing fractions.
inline SplitIndices stratified_split(std::span<const int> labels, double fraction, Rng& rng) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw UsageError("split fraction must lie in [0, 1]");
  }
  SplitIndices out;
  for (auto& [cls, members] : detail::by_class(labels)) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size())));
    for (std::size_t i = 0; i < members.size(); ++i) {
      (i < take ? out.first : out.second).push_back(members[i]);
    }
  }
  std::sort(out.first.begin(), out.first.end());
  std::sort(out.second.begin(), out.second.end());
  return out;
}

// ---------------------------------------------------------------------------
// Linear probe.

struct ProbeConfig {
  double learning_rate = 1e-2;
  std::size_t steps = 500;
  double validation_fraction = 0.2;
  std::size_t validate_every = 10;
};

/// Single linear layer over standardised features.
struct ProbeModel {
  std::size_t dim = 0;
  std::vector<int> classes;           // class id of each output
  std::vector<double> weights;        // [dim, classes]
  std::vector<double> bias;           // [classes]
  std::vector<double> feature_mean;   // [dim]
  std::vector<double> feature_scale;  // [dim]

  std::vector<double> logits(std::span<const double> x) const {
    const std::size_t k = classes.size();
    std::vector<double> out(bias);
    for (std::size_t j = 0; j < dim; ++j) {
      const double z = (x[j] - feature_mean[j]) / feature_scale[j];
      for (std::size_t c = 0; c < k; ++c) out[c] += z * weights[j * k + c];
    }
    return out;
  }

  std::vector<double> probabilities(std::span<const double> x) const {
    auto l = logits(x);
    const double top = *std::max_element(l.begin(), l.end());
    double s = 0.0;
    for (auto& v : l) s += (v = std::exp(v - top));
    for (auto& v : l) v /= s;
    return l;
  }

  int predict(std::span<const double> x) const {
    const auto l = logits(x);
    return classes[static_cast<std::size_t>(std::max_element(l.begin(), l.end()) - l.begin())];
  }
};

namespace detail {

inline double probe_accuracy(const ProbeModel& probe, const EncodedDataset& data,
                             std::span<const std::size_t> index) {
  std::size_t hit = 0;
  for (auto i : index) hit += probe.predict(data.row(i)) == data.labels[i];
  return index.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(index.size());
}

}  // namespace detail

/// Multinomial logistic regression on a stratified `label_fraction` of
/// `train`, fitted by full-batch Adam on cross-entropy. A further 20% of the
/// labeled examples is held out; the weights with the best held-out
/// accuracy are kept.
inline ProbeModel train_probe(const EncodedDataset& train, double label_fraction, Rng& rng,
                              const ProbeConfig& cfg = {}) {
  if (train.size() == 0) throw DataError("train_probe: empty training set");
  if (!(label_fraction > 0.0 && label_fraction <= 1.0)) {
    throw UsageError("label_fraction must lie in (0, 1]");
  }
  const auto groups = detail::by_class(train.labels);
  const auto labeled = stratified_split(train.labels, label_fraction, rng);
  std::map<int, std::vector<std::size_t>> labeled_by_class;
  for (auto i : labeled.first) labeled_by_class[train.labels[i]].push_back(i);
  std::string missing;
  for (const auto& [cls, members] : groups) {
    if (!labeled_by_class.count(cls)) missing += (missing.empty() ? "" : ", ") + std::to_string(cls);
  }
  if (!missing.empty()) {
    throw DataError("label fraction " + std::to_string(label_fraction) +
                    " leaves no labeled example for class(es) " + missing);
  }

  // Validation hold-out, per class, never emptying a class's training part.
  std::vector<std::size_t> fit;
  std::vector<std::size_t> held;
  for (auto& [cls, members] : labeled_by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    auto n_val = static_cast<std::size_t>(
        std::llround(cfg.validation_fraction * static_cast<double>(members.size())));
    n_val = std::min(n_val, members.size() - 1);
    for (std::size_t i = 0; i < members.size(); ++i) (i < n_val ? held : fit).push_back(members[i]);
  }
  std::sort(fit.begin(), fit.end());
  std::sort(held.begin(), held.end());

  ProbeModel probe;
  probe.dim = train.dim;
  for (const auto& [cls, members] : groups) probe.classes.push_back(cls);
  const std::size_t k = probe.classes.size();
  const std::size_t d = probe.dim;
  std::map<int, std::size_t> column;
  for (std::size_t c = 0; c < k; ++c) column[probe.classes[c]] = c;

  probe.feature_mean.assign(d, 0.0);
  probe.feature_scale.assign(d, 0.0);
  for (auto i : fit) {
    const auto r = train.row(i);
    for (std::size_t j = 0; j < d; ++j) probe.feature_mean[j] += r[j];
  }
  for (auto& v : probe.feature_mean) v /= static_cast<double>(fit.size());
  for (auto i : fit) {
    const auto r = train.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      const double z = r[j] - probe.feature_mean[j];
      probe.feature_scale[j] += z * z;
    }
  }
  for (auto& v : probe.feature_scale) v = std::max(std::sqrt(v / static_cast<double>(fit.size())), 1e-8);
  probe.weights.assign(d * k, 0.0);
  probe.bias.assign(k, 0.0);

  // Standardised design matrix of the fitting set.
  std::vector<double> z(fit.size() * d);
  for (std::size_t n = 0; n < fit.size(); ++n) {
    const auto r = train.row(fit[n]);
    for (std::size_t j = 0; j < d; ++j) {
      z[n * d + j] = (r[j] - probe.feature_mean[j]) / probe.feature_scale[j];
    }
  }

  Tensor w(Shape{d, k});
  Tensor b(Shape{k});
  AdamState state;
  AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  const std::array<Tensor*, 2> params{&w, &b};

  ProbeModel best = probe;
  double best_acc = -1.0;
  std::vector<double> gw(d * k);
  std::vector<double> gb(k);
  std::vector<double> p(k);
  const double inv_n = 1.0 / static_cast<double>(fit.size());
  for (std::size_t step = 0; step <= cfg.steps; ++step) {
    if (!held.empty() && (step % cfg.validate_every == 0 || step == cfg.steps)) {
      probe.weights.assign(w.data().begin(), w.data().end());
      probe.bias.assign(b.data().begin(), b.data().end());
      const double acc = detail::probe_accuracy(probe, train, held);
      if (acc >= best_acc) {
        best_acc = acc;
        best = probe;
      }
    }
    if (step == cfg.steps) break;
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    const auto wd = w.data();
    const auto bd = b.data();
    for (std::size_t n = 0; n < fit.size(); ++n) {
      const double* zr = z.data() + n * d;
      for (std::size_t c = 0; c < k; ++c) p[c] = bd[c];
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t c = 0; c < k; ++c) p[c] += zr[j] * wd[j * k + c];
      const double top = *std::max_element(p.begin(), p.end());
      double s = 0.0;
      for (auto& v : p) s += (v = std::exp(v - top));
      for (auto& v : p) v /= s;
      p[column[train.labels[fit[n]]]] -= 1.0;
      for (std::size_t c = 0; c < k; ++c) gb[c] += p[c] * inv_n;
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t c = 0; c < k; ++c) gw[j * k + c] += zr[j] * p[c] * inv_n;
    }
    w.set_grad(gw);
    b.set_grad(gb);
    adam_step(params, state, adam);
  }
  if (held.empty()) {
    probe.weights.assign(w.data().begin(), w.data().end());
    probe.bias.assign(b.data().begin(), b.data().end());
    return probe;
  }
  return best;
}

inline double accuracy(const ProbeModel& probe, const EncodedDataset& test) {
  if (test.size() == 0) throw DataError("accuracy: empty test set");
  std::vector<std::size_t> all(test.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return detail::probe_accuracy(probe, test, all);
}

/// Area under the precision-recall curve by step integration,
/// sum over thresholds of (R_t - R_{t-1}) * P_t. Tied scores form one
/// threshold.
inline double average_precision(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) throw ShapeError("average_precision: length mismatch");
  const auto total_pos = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
  if (total_pos == 0) throw NumericError("average_precision: no positive examples");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double ap = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0;
  std::size_t seen = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      tp += positive[order[j]];
      ++j;
    }
    seen = j;
    const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

/// Macro average over classes of the one-vs-rest average precision, scored
/// by the probe's class probabilities.
inline double auprc(const ProbeModel& probe, const EncodedDataset& test) {
  const auto groups = detail::by_class(test.labels);
  if (groups.size() < 2) {
    throw NumericError("AUPRC is undefined for a test set with a single class");
  }
  std::vector<std::vector<double>> probs;
  probs.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) probs.push_back(probe.probabilities(test.row(i)));
  double sum = 0.0;
  std::size_t counted = 0;
  std::vector<double> scores(test.size());
  std::unique_ptr<bool[]> pos(new bool[test.size()]);
  for (std::size_t c = 0; c < probe.classes.size(); ++c) {
    const int cls = probe.classes[c];
    if (!groups.count(cls)) continue;
    for (std::size_t i = 0; i < test.size(); ++i) {
      scores[i] = probs[i][c];
      pos[i] = test.labels[i] == cls;
    }
    sum += average_precision(scores, std::span<const bool>(pos.get(), test.size()));
    ++counted;
  }
  if (counted == 0) throw NumericError("AUPRC: no test class is known to the probe");
  return sum / static_cast<double>(counted);
}

// ---------------------------------------------------------------------------
// Clustering indices over the class labels (Euclidean distance).

namespace detail {

inline double euclidean(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace detail

/// Mean silhouette. A point in a singleton class scores 0, as does a point
/// with a = b = 0.
inline double silhouette(const EncodedDataset& data) {
  const auto groups = detail::by_class(data.labels);
  if (groups.size() < 2) throw NumericError("silhouette needs at least two classes");
  const std::size_t n = data.size();
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      dist[i * n + j] = dist[j * n + i] = detail::euclidean(data.row(i), data.row(j));
    }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& own = groups.at(data.labels[i]);
    if (own.size() < 2) continue;
    double a = 0.0;
    for (auto j : own) a += dist[i * n + j];
    a /= static_cast<double>(own.size() - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [cls, members] : groups) {
      if (cls == data.labels[i]) continue;
      double m = 0.0;
      for (auto j : members) m += dist[i * n + j];
      b = std::min(b, m / static_cast<double>(members.size()));
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

inline double davies_bouldin(const EncodedDataset& data) {
  const auto groups = detail::by_class(data.labels);
  if (groups.size() < 2) throw NumericError("Davies-Bouldin index needs at least two classes");
  const std::size_t d = data.dim;
  std::vector<int> ids;
  std::vector<std::vector<double>> centroid;
  std::vector<double> scatter;
  for (const auto& [cls, members] : groups) {
    std::vector<double> c(d, 0.0);
    for (auto i : members) {
      const auto r = data.row(i);
      for (std::size_t j = 0; j < d; ++j) c[j] += r[j];
    }
    for (auto& v : c) v /= static_cast<double>(members.size());
    double s = 0.0;
    for (auto i : members) s += detail::euclidean(data.row(i), c);
    ids.push_back(cls);
    scatter.push_back(s / static_cast<double>(members.size()));
    centroid.push_back(std::move(c));
  }
  const std::size_t k = ids.size();
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double worst = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      const double sep = detail::euclidean(centroid[i], centroid[j]);
      if (sep == 0.0) {
        throw NumericError("Davies-Bouldin index: classes " + std::to_string(ids[i]) + " and " +
                           std::to_string(ids[j]) + " have coincident centroids");
      }
      worst = std::max(worst, (scatter[i] + scatter[j]) / sep);
    }
    total += worst;
  }
  return total / static_cast<double>(k);
}

// ---------------------------------------------------------------------------
// Evaluation protocol.

struct Metrics {
  double accuracy = 0.0;
  double auprc = 0.0;
  double silhouette = 0.0;
  double davies_bouldin = 0.0;
};

/// 80/20 stratified train/test split of the encoded dataset; the probe sees
/// `label_fraction` of the training labels; clustering indices are taken on
/// the test encodings.
inline Metrics evaluate(const EncodedDataset& encoded, double label_fraction, std::uint64_t seed,
                        const ProbeConfig& probe_cfg = {}) {
  Rng rng(seed);
  const auto split = stratified_split(encoded.labels, 0.8, rng);
  const auto train = encoded.subset(split.first);
  const auto test = encoded.subset(split.second);
  if (test.size() == 0) throw DataError("evaluate: test split is empty");
  const auto probe = train_probe(train, label_fraction, rng, probe_cfg);
  Metrics m;
  m.accuracy = accuracy(probe, test);
  m.auprc = auprc(probe, test);
  m.silhouette = silhouette(test);
  m.davies_bouldin = davies_bouldin(test);
  return m;
}

struct SweepPoint {
  double fraction = 0.0;
  double accuracy = 0.0;
  double auprc = 0.0;
};

/// Probe accuracy for each label fraction on one fixed train/test split.
/// Labeled sets are nested across fractions.
inline std::vector<SweepPoint> sweep_labels(const EncodedDataset& encoded,
                                            std::span<const double> fractions, std::uint64_t seed,
                                            const ProbeConfig& probe_cfg = {}) {
  Rng split_rng(seed);
  const auto split = stratified_split(encoded.labels, 0.8, split_rng);
  const auto train = encoded.subset(split.first);
  const auto test = encoded.subset(split.second);
  std::vector<SweepPoint> out;
  for (double f : fractions) {
    Rng rng(seed + 1);
    const auto probe = train_probe(train, f, rng, probe_cfg);
    out.push_back({f, accuracy(probe, test), auprc(probe, test)});
  }
  return out;
}

inline void write_metrics_csv(const Metrics& m, std::uint64_t seed, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out.precision(17);
  out << "metric,value,seed\n";
  out << "accuracy," << m.accuracy << ',' << seed << '\n';
  out << "auprc," << m.auprc << ',' << seed << '\n';
  out << "silhouette," << m.silhouette << ',' << seed << '\n';
  out << "davies_bouldin," << m.davies_bouldin << ',' << seed << '\n';
}

inline void write_sweep_csv(std::span<const SweepPoint> points, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out.precision(17);
  out << "fraction,accuracy,auprc\n";
  for (const auto& p : points) out << p.fraction << ',' << p.accuracy << ',' << p.auprc << '\n';
}

// ---------------------------------------------------------------------------
// Forecasting.

struct ForecastResult {
  std::size_t channels = 1;
  PointSet context;
  std::vector<double> x;
  std::vector<double> y_true;  // [points, channels]
  std::vector<double> mu;
  std::vector<double> sigma;
};

/// Predicts the whole window of `segment` from `n_context` points drawn
/// from (a, b) as in training.
inline ForecastResult forecast(const ConvCnpModel& model, const Segment& segment,
                               std::size_t n_context, SamplingConfig sampling, Rng& rng) {
  sampling.n_context_min = sampling.n_context_max = n_context;
  sampling.validate();
  auto view = std::move(sample_views(segment, 1, sampling, rng).front());
  const auto pred = forward_view(view, model).prediction;
  ForecastResult out;
  out.channels = segment.channels;
  out.x = view.target.x;
  out.y_true = view.target.y;
  out.mu.assign(pred.mu.data().begin(), pred.mu.data().end());
  out.sigma.assign(pred.sigma.data().begin(), pred.sigma.data().end());
  out.context = std::move(view.context);
  return out;
}

inline double rmse(const ForecastResult& f) {
  if (f.mu.empty() || f.mu.size() != f.y_true.size()) throw ShapeError("rmse: prediction and truth differ in size");
  double sq = 0.0;
  for (std::size_t i = 0; i < f.mu.size(); ++i) sq += (f.mu[i] - f.y_true[i]) * (f.mu[i] - f.y_true[i]);
  return std::sqrt(sq / static_cast<double>(f.mu.size()));
}

/// Columns x,y_true,mu,sigma; multichannel output adds a channel column.
inline void write_forecast_csv(const ForecastResult& f, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out.precision(17);
  const std::size_t c = f.channels;
  out << (c > 1 ? "x,channel,y_true,mu,sigma\n" : "x,y_true,mu,sigma\n");
  for (std::size_t i = 0; i < f.x.size(); ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t k = i * c + ch;
      out << f.x[i] << ',';
      if (c > 1) out << ch << ',';
      out << f.y_true[k] << ',' << f.mu[k] << ',' << f.sigma[k] << '\n';
    }
  }
  if (!out) throw DataError("error writing " + path);
}

}  // namespace contrnp
