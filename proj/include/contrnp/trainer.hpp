#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "contrnp/checkpoint.hpp"
#include "contrnp/data.hpp"
#include "contrnp/model.hpp"
#include "contrnp/objectives.hpp"
#include "contrnp/optim.hpp"

namespace contrnp {

struct TrainConfig {
  ModelConfig model;
  SamplingConfig sampling;
  std::size_t window_size = 2500;
  std::size_t stride = 0;  // 0: same as window_size
  std::size_t batch_segments = 8;  // K per batch
  std::size_t views = 2;           // M
  ContrastiveConfig contrastive;
  double lambda = 0.01;
  AdamConfig adam;
  double clip_norm = 10.0;
  std::size_t epochs = 1;
  std::size_t max_steps = 0;  // 0: no cap beyond epochs
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0: never
  std::string checkpoint_path;

  void validate() const {
    model.validate();
    sampling.validate();
    contrastive.validate();
    if (batch_segments < 2) throw UsageError("K_per_batch must be >= 2");
    if (views < 2) throw UsageError("M must be >= 2");
    if (!(lambda >= 0.0)) throw UsageError("lambda must be >= 0");
    if (!(adam.learning_rate > 0.0) || !(adam.eps > 0.0)) {
      throw UsageError("learning_rate and eps must be > 0");
    }
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
      throw UsageError("Adam betas must lie in [0, 1)");
    }
    if (!(clip_norm > 0.0)) throw UsageError("clip_norm must be > 0");
    if (window_size < 2) throw UsageError("window_size must be >= 2");
    if (checkpoint_every > 0 && checkpoint_path.empty()) {
      throw UsageError("checkpoint_every needs a checkpoint path");
    }
  }
};

struct TrainRecord {
  std::size_t step = 0;
  double nll = 0.0;
  double contrastive = 0.0;
  double total = 0.0;
  double wall_ms = 0.0;
};

/// Append-only per-step log.
class TrainLog {
 public:
  void append(const TrainRecord& r) {
    if (!records_.empty() && r.step <= records_.back().step) {
      throw UsageError("TrainLog: step indices must increase");
    }
    records_.push_back(r);
  }
  const std::vector<TrainRecord>& records() const noexcept { return records_; }
  bool empty() const noexcept { return records_.empty(); }
  std::size_t size() const noexcept { return records_.size(); }

  void write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out.precision(17);
    out << "step,nll,contrastive,total,wall_ms\n";
    for (const auto& r : records_) {
      out << r.step << ',' << r.nll << ',' << r.contrastive << ',' << r.total << ','
          << r.wall_ms << '\n';
    }
  }

 private:
  std::vector<TrainRecord> records_;
};

struct TrainResult {
  ConvCnpModel model;
  TrainLog log;
};

/// Called after every step; returning false stops training.
using TrainObserver = std::function<bool(const TrainRecord&, const ConvCnpModel&)>;

namespace detail {

inline Tensor target_tensor(const PointSet& target) {
  return Tensor(Shape{target.size(), target.channels}, target.y);
}

/// Forward + backward for one batch; leaves gradients on the parameters.
inline LossBreakdown batch_gradients(ConvCnpModel& model, const SegmentBatch& batch,
                                     const TrainConfig& cfg) {
  GradientTape tape;
  auto params = model.parameters();
  for (auto& p : params) tape.watch(*p.tensor);
  std::vector<GaussianPrediction> preds;
  std::vector<Tensor> targets;
  std::vector<Representation> reps;
  preds.reserve(batch.views.size());
  for (const auto& view : batch.views) {
    auto out = forward_view(view, model);
    preds.push_back(std::move(out.prediction));
    reps.push_back(std::move(out.representation));
    targets.push_back(target_tensor(view.target));
  }
  auto loss = combined_loss(preds, targets, reps, batch.segments, batch.views_per_segment,
                            cfg.lambda, cfg.contrastive);
  tape.backward(loss.total);
  return loss;
}

/// Model-initialization and sampling seeds derived from the run seed.
inline std::array<std::uint64_t, 2> stream_seeds(std::uint64_t seed) {
  std::seed_seq seq{seed, std::uint64_t{0x5eed}};
  std::array<std::uint32_t, 2> words{};
  seq.generate(words.begin(), words.end());
  return {words[0], words[1]};
}

}  // namespace detail

/// The parameters train() starts from for this config and seed.
inline ConvCnpModel initial_model(const TrainConfig& cfg) {
  return init_model(cfg.model, detail::stream_seeds(cfg.seed)[0]);
}

/// Loss and gradients of one batch under the given model (no update).
inline LossBreakdown compute_batch_loss(ConvCnpModel& model, const SegmentBatch& batch,
                                        const TrainConfig& cfg) {
  return detail::batch_gradients(model, batch, cfg);
}

/// Self-supervised training loop. Each epoch shuffles the segments, groups
/// them into batches of K (the remainder is dropped), samples M views per
/// segment, and takes one clipped Adam step per batch on
/// lambda * NLL + contrastive. Deterministic for a fixed seed.
inline TrainResult train(std::span<const Segment> dataset, const TrainConfig& cfg,
                         const TrainObserver& observer = {}) {
  cfg.validate();
  if (dataset.size() < cfg.batch_segments) {
    throw DataError("training needs at least K_per_batch=" + std::to_string(cfg.batch_segments) +
                    " segments, got " + std::to_string(dataset.size()));
  }
  for (const auto& s : dataset) {
    if (s.channels != cfg.model.channels) {
      throw DataError("segment " + std::to_string(s.id) + " has " + std::to_string(s.channels) +
                      " channels, model expects " + std::to_string(cfg.model.channels));
    }
  }
  const auto seeds = detail::stream_seeds(cfg.seed);
  TrainResult result{init_model(cfg.model, seeds[0]), {}};
  Rng rng(seeds[1]);
  AdamState adam;
  auto named = result.model.parameters();
  std::vector<Tensor*> params;
  for (auto& p : named) params.push_back(p.tensor);

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t step = 0;
  const std::size_t per_epoch = dataset.size() / cfg.batch_segments;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < per_epoch; ++b) {
      if (cfg.max_steps > 0 && step >= cfg.max_steps) return result;
      const auto t0 = std::chrono::steady_clock::now();
      std::vector<Segment> chunk;
      chunk.reserve(cfg.batch_segments);
      for (std::size_t i = 0; i < cfg.batch_segments; ++i) {
        chunk.push_back(dataset[order[b * cfg.batch_segments + i]]);
      }
      const auto batch = make_batch(chunk, cfg.views, cfg.sampling, rng);
      const auto loss = detail::batch_gradients(result.model, batch, cfg);
      TrainRecord rec;
      rec.step = ++step;
      rec.nll = loss.nll.item();
      rec.contrastive = loss.contrastive.item();
      rec.total = loss.total.item();
      if (!std::isfinite(rec.total) || !std::isfinite(rec.nll) || !std::isfinite(rec.contrastive)) {
        throw NumericError("non-finite loss at step " + std::to_string(rec.step) +
                           ": nll=" + std::to_string(rec.nll) +
                           " contrastive=" + std::to_string(rec.contrastive) +
                           " total=" + std::to_string(rec.total));
      }
      clip_grad_norm(params, cfg.clip_norm);
      adam_step(params, adam, cfg.adam);
      rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      result.log.append(rec);
      if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
        save_checkpoint(result.model, cfg.checkpoint_path, cfg.seed);
      }
      if (observer && !observer(rec, result.model)) return result;
    }
  }
  return result;
}

}  // namespace contrnp
