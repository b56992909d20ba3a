#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "contrnp/tensor.hpp"

namespace contrnp {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates, one buffer per parameter.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t step = 0;
};

/// One bias-corrected Adam update using each parameter's grad().
inline void adam_step(std::span<Tensor* const> params, AdamState& state, const AdamConfig& cfg) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->grad()) {
      throw TapeError("adam_step: parameter " + std::to_string(i) + " has no gradient");
    }
  }
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->numel(), 0.0);
      state.v.emplace_back(p->numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: state/parameter count mismatch");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i]->mutable_data();
    const auto& g = *params[i]->grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      w[j] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
inline double clip_grad_norm(std::span<Tensor* const> params, double max_norm) {
  double sq = 0.0;
  for (const auto* p : params) {
    if (!p->grad()) continue;
    for (double g : *p->grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (auto* p : params) {
      if (!p->grad()) continue;
      auto g = *p->grad();
      for (auto& v : g) v *= factor;
      p->set_grad(std::move(g));
    }
  }
  return norm;
}

}  // namespace contrnp
