#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "contrnp/model.hpp"
#include "contrnp/ops.hpp"

namespace contrnp {

enum class ContrastiveMode {
  kExpSim,  // NT-Xent style: -log(exp(s_pos / tau) / sum_neg exp(s_neg / tau))
  kLiteral  // log((s_pos / tau) / sum_neg (s_neg / tau)), no exponentiation; ablation only
};

struct ContrastiveConfig {
  double tau = 0.5;
  ContrastiveMode mode = ContrastiveMode::kExpSim;

  void validate() const {
    if (!(tau > 0.0)) throw UsageError("contrastive temperature tau must be > 0");
  }
};

/// Contrastive loss over K segments x M views of representations, given
/// segment-major (reps[k * M + m]). For every ordered pair of distinct views
/// (m, m') of segment k, the anchor R_km is scored against the positive
/// R_km' and the negatives R_k'm'' of all other segments k' != k; the
/// positive is not part of the denominator. Similarity is cosine. Returns
/// the mean over the K * M * (M - 1) anchor/positive terms.
inline Tensor contrastive_loss(std::span<const Tensor> reps, std::size_t segments,
                               std::size_t views, const ContrastiveConfig& cfg) {
  cfg.validate();
  if (segments < 2) throw UsageError("contrastive loss needs K >= 2 segments");
  if (views < 2) throw UsageError("contrastive loss needs M >= 2 views");
  const std::size_t n = segments * views;
  if (reps.size() != n) {
    throw ShapeError("contrastive loss: expected " + std::to_string(n) + " representations, got " +
                     std::to_string(reps.size()));
  }
  const std::size_t d = reps[0].numel();
  std::vector<Tensor> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (reps[i].numel() != d) throw ShapeError("contrastive loss: representation sizes differ");
    double sq = 0.0;
    for (double v : reps[i].data()) sq += v * v;
    if (!(sq > 0.0) || !std::isfinite(sq)) {
      throw NumericError("contrastive loss: representation " + std::to_string(i) +
                         " (segment " + std::to_string(i / views) + ", view " +
                         std::to_string(i % views) + ") has zero or non-finite norm");
    }
    rows.push_back(reshape(reps[i], {1, d}));
  }
  const Tensor stacked = concat(rows, 0);                                // [N, d]
  const Tensor unit = div(stacked, l2_norm(stacked, 1, /*keepdim=*/true));
  const Tensor cosine = matmul(unit, transpose(unit));                    // [N, N]
  const Tensor scaled = scale(cosine, 1.0 / cfg.tau);

  Tensor negatives(Shape{n, n});
  Tensor positives(Shape{n, n});
  {
    auto neg = negatives.mutable_data();
    auto pos = positives.mutable_data();
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b) {
        const bool same = a / views == b / views;
        neg[a * n + b] = same ? 0.0 : 1.0;
        pos[a * n + b] = same && a != b ? 1.0 : 0.0;
      }
  }
  const double terms = static_cast<double>(segments * views * (views - 1));

  if (cfg.mode == ContrastiveMode::kExpSim) {
    // scaled <= 1/tau, so shifting by it keeps every exponent <= 0.
    const double top = 1.0 / cfg.tau;
    const Tensor denom = sum_axis(mul(exp(shift(scaled, -top)), negatives), 1);  // [N]
    const Tensor log_denom = shift(log(denom), top);
    const Tensor total = sub(scale(sum(log_denom), static_cast<double>(views - 1)),
                             sum(mul(scaled, positives)));
    return scale(total, 1.0 / terms);
  }

  // Literal: the ratio of scaled similarities inside the log, as typeset.
  const Tensor neg_sum = sum_axis(mul(scaled, negatives), 1, /*keepdim=*/true);  // [N, 1]
  const Tensor ratio = div(scaled, neg_sum);
  Tensor off_positive(Shape{n, n});
  {
    auto o = off_positive.mutable_data();
    const auto p = positives.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = 1.0 - p[i];
  }
  // log(1) = 0 off the positive pairs.
  const Tensor masked = add(mul(ratio, positives), off_positive);
  return scale(sum(log(masked)), 1.0 / terms);
}

inline Tensor contrastive_loss(std::span<const Representation> reps, std::size_t segments,
                               std::size_t views, const ContrastiveConfig& cfg) {
  std::vector<Tensor> rs;
  rs.reserve(reps.size());
  for (const auto& r : reps) rs.push_back(r.r);
  return contrastive_loss(std::span<const Tensor>(rs), segments, views, cfg);
}

/// Mean over points and channels of 0.5 log(2 pi sigma^2) + (y - mu)^2 / (2 sigma^2).
inline Tensor gaussian_nll(const GaussianPrediction& pred, const Tensor& target_y) {
  if (pred.mu.shape() != pred.sigma.shape() || pred.mu.shape() != target_y.shape()) {
    throw ShapeError("gaussian_nll: mu " + shape_str(pred.mu.shape()) + ", sigma " +
                     shape_str(pred.sigma.shape()) + " and target " + shape_str(target_y.shape()) +
                     " must match");
  }
  const Tensor z = div(sub(target_y, pred.mu), pred.sigma);
  const Tensor per_point = add(log(pred.sigma), scale(square(z), 0.5));
  return shift(mean(per_point), 0.5 * std::log(2.0 * std::numbers::pi));
}

struct LossBreakdown {
  Tensor total;
  Tensor nll;
  Tensor contrastive;
  double lambda = 0.0;
};

/// total = lambda * (mean NLL over the K * M views) + contrastive term.
inline LossBreakdown combined_loss(std::span<const GaussianPrediction> predictions,
                                   std::span<const Tensor> targets,
                                   std::span<const Representation> reps, std::size_t segments,
                                   std::size_t views, double lambda,
                                   const ContrastiveConfig& cfg) {
  if (predictions.size() != targets.size() || predictions.size() != reps.size()) {
    throw ShapeError("combined_loss: need one prediction and target per representation");
  }
  if (!(lambda >= 0.0)) throw UsageError("combined_loss: lambda must be >= 0");
  if (predictions.empty()) throw ShapeError("combined_loss: empty batch");
  Tensor nll_sum = gaussian_nll(predictions[0], targets[0]);
  for (std::size_t i = 1; i < predictions.size(); ++i) {
    nll_sum = add(nll_sum, gaussian_nll(predictions[i], targets[i]));
  }
  LossBreakdown out;
  out.lambda = lambda;
  out.nll = scale(nll_sum, 1.0 / static_cast<double>(predictions.size()));
  out.contrastive = contrastive_loss(reps, segments, views, cfg);
  out.total = add(scale(out.nll, lambda), out.contrastive);
  return out;
}

}  // namespace contrnp
