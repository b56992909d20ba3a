#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "contrnp/data.hpp"
#include "contrnp/ops.hpp"
#include "contrnp/tensor.hpp"

namespace contrnp {

/// Architecture of the encoder/decoder pair.
struct ModelConfig {
  std::size_t channels = 1;        // signal channels C of the series
  std::size_t grid_size = 64;      // G
  double grid_margin = 0.1;        // grid spans [-margin, 1 + margin]
  std::size_t cnn_layers = 6;
  std::size_t cnn_width = 64;
  std::size_t kernel_width = 5;    // odd
  std::size_t encoding_size = 128;  // d_R
  std::size_t decoder_hidden = 64;
  double sigma_min = 1e-4;
  double density_eps = 1e-6;

  void validate() const {
    if (channels < 1) throw UsageError("model: channels must be >= 1");
    if (grid_size < 2) throw UsageError("model: grid_size must be >= 2");
    if (!(grid_margin >= 0.0)) throw UsageError("model: grid_margin must be >= 0");
    if (cnn_layers < 1 || cnn_width < 1 || encoding_size < 1 || decoder_hidden < 1) {
      throw UsageError("model: layer counts and widths must be positive");
    }
    if (kernel_width % 2 == 0) throw UsageError("model: kernel_width must be odd");
    if (kernel_width > grid_size) throw UsageError("model: kernel_width exceeds grid_size");
    if (!(sigma_min > 0.0)) throw UsageError("model: sigma_min must be positive");
  }

  double grid_spacing() const {
    return (1.0 + 2.0 * grid_margin) / static_cast<double>(grid_size - 1);
  }

  /// Grid steps from a grid point to the farthest input the CNN sees.
  std::size_t receptive_radius() const { return cnn_layers * (kernel_width / 2); }

  std::vector<double> grid() const {
    std::vector<double> g(grid_size);
    for (std::size_t i = 0; i < grid_size; ++i) {
      g[i] = -grid_margin + static_cast<double>(i) * grid_spacing();
    }
    return g;
  }
};

struct ConvLayer {
  Tensor kernel;  // [out, in, W]
  Tensor bias;    // [1, out, 1]
};

/// Parameters of the encoder (set convolution, CNN, representation head) and
/// the decoder (output set convolution, MLP). Length-scales are stored
/// before softplus.
struct ConvCnpModel {
  ModelConfig config;
  Tensor lengthscale_in_raw;
  std::vector<ConvLayer> cnn;
  Tensor head_weight;  // [H, d_R]
  Tensor head_bias;    // [d_R]
  Tensor lengthscale_out_raw;
  Tensor fc1_weight;  // [H, hidden]
  Tensor fc1_bias;    // [hidden]
  Tensor fc2_weight;  // [hidden, 2C]
  Tensor fc2_bias;    // [2C]

  struct Parameter {
    std::string name;
    Tensor* tensor;
  };
  struct ConstParameter {
    std::string name;
    const Tensor* tensor;
  };

  /// Every learnable tensor, in a fixed order.
  std::vector<Parameter> parameters() {
    std::vector<Parameter> out;
    out.push_back({"encoder.lengthscale", &lengthscale_in_raw});
    for (std::size_t i = 0; i < cnn.size(); ++i) {
      out.push_back({"encoder.conv" + std::to_string(i) + ".kernel", &cnn[i].kernel});
      out.push_back({"encoder.conv" + std::to_string(i) + ".bias", &cnn[i].bias});
    }
    out.push_back({"encoder.head.weight", &head_weight});
    out.push_back({"encoder.head.bias", &head_bias});
    out.push_back({"decoder.lengthscale", &lengthscale_out_raw});
    out.push_back({"decoder.fc1.weight", &fc1_weight});
    out.push_back({"decoder.fc1.bias", &fc1_bias});
    out.push_back({"decoder.fc2.weight", &fc2_weight});
    out.push_back({"decoder.fc2.bias", &fc2_bias});
    return out;
  }

  std::vector<ConstParameter> parameters() const {
    std::vector<ConstParameter> out;
    for (auto& p : const_cast<ConvCnpModel*>(this)->parameters()) out.push_back({p.name, p.tensor});
    return out;
  }

  double lengthscale_in() const { return softplus(lengthscale_in_raw.item()); }
  double lengthscale_out() const { return softplus(lengthscale_out_raw.item()); }
};

namespace detail {

inline Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t(std::move(shape));
  for (auto& v : t.mutable_data()) v = u(rng);
  return t;
}

}  // namespace detail

/// Fresh parameters: weights and biases uniform in +-1/sqrt(fan_in),
/// input length-scale 2 grid steps, output length-scale 1 grid step.
inline ConvCnpModel init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ConvCnpModel m;
  m.config = cfg;
  const double h = cfg.grid_spacing();
  m.lengthscale_in_raw = Tensor::scalar(softplus_inverse(2.0 * h));
  std::size_t in = 1 + cfg.channels;
  for (std::size_t i = 0; i < cfg.cnn_layers; ++i) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * cfg.kernel_width));
    ConvLayer layer;
    layer.kernel = detail::uniform_tensor({cfg.cnn_width, in, cfg.kernel_width}, bound, rng);
    layer.bias = detail::uniform_tensor({1, cfg.cnn_width, 1}, bound, rng);
    m.cnn.push_back(std::move(layer));
    in = cfg.cnn_width;
  }
  const double head_bound = 1.0 / std::sqrt(static_cast<double>(cfg.cnn_width));
  m.head_weight = detail::uniform_tensor({cfg.cnn_width, cfg.encoding_size}, head_bound, rng);
  m.head_bias = detail::uniform_tensor({cfg.encoding_size}, head_bound, rng);
  m.lengthscale_out_raw = Tensor::scalar(softplus_inverse(h));
  m.fc1_weight = detail::uniform_tensor({cfg.cnn_width, cfg.decoder_hidden}, head_bound, rng);
  m.fc1_bias = detail::uniform_tensor({cfg.decoder_hidden}, head_bound, rng);
  const double fc2_bound = 1.0 / std::sqrt(static_cast<double>(cfg.decoder_hidden));
  m.fc2_weight = detail::uniform_tensor({cfg.decoder_hidden, 2 * cfg.channels}, fc2_bound, rng);
  m.fc2_bias = detail::uniform_tensor({2 * cfg.channels}, fc2_bound, rng);
  return m;
}

/// Context set discretised on the model grid.
struct GridEmbedding {
  std::vector<double> grid_x;
  Tensor channels;  // [1 + C, G]: density row, then one normalised signal row per channel
};

struct Representation {
  Tensor r;  // [d_R]
  std::size_t segment_id = 0;
  std::size_t view_id = 0;
};

struct EncoderOutput {
  Tensor grid_features;  // [H, G]
  Representation representation;
};

struct GaussianPrediction {
  Tensor mu;     // [n_target, C]
  Tensor sigma;  // [n_target, C]
};

namespace detail {

inline void check_on_grid(std::span<const double> xs, const ModelConfig& cfg, const char* what) {
  const double lo = -cfg.grid_margin - 1e-12;
  const double hi = 1.0 + cfg.grid_margin + 1e-12;
  for (double x : xs) {
    if (!(x >= lo && x <= hi)) {
      throw DataError(std::string(what) + " location " + std::to_string(x) +
                      " lies outside the grid span [" + std::to_string(-cfg.grid_margin) + ", " +
                      std::to_string(1.0 + cfg.grid_margin) + "]");
    }
  }
}

/// -1 / (2 l^2) with l = softplus(raw), as a tracked scalar.
inline Tensor rbf_coefficient(const Tensor& raw_lengthscale) {
  const Tensor ls = softplus(raw_lengthscale);
  return div(Tensor::scalar(-0.5), square(ls));
}

/// Squared distances [rows.size(), cols.size()].
inline Tensor squared_distances(std::span<const double> rows, std::span<const double> cols) {
  Tensor d(Shape{rows.size(), cols.size()});
  auto v = d.mutable_data();
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const double diff = rows[i] - cols[j];
      v[i * cols.size() + j] = diff * diff;
    }
  return d;
}

}  // namespace detail

/// Set convolution of the context onto the grid:
///   density h0(u) = sum_i k(u - x_i)
///   signal  h_c(u) = sum_i k(u - x_i) y_ic / (h0(u) + eps)
/// with an RBF kernel k of learnable length-scale. Points are summed in a
/// canonical (sorted) order, so any permutation of the context gives a
/// bit-identical embedding.
inline GridEmbedding embed_context(const PointSet& context, const ConvCnpModel& model) {
  const auto& cfg = model.config;
  if (context.size() == 0) throw DataError("embed_context: empty context set");
  if (context.channels != cfg.channels || context.y.size() != context.size() * cfg.channels) {
    throw ShapeError("embed_context: context has " + std::to_string(context.channels) +
                     " channels, model expects " + std::to_string(cfg.channels));
  }
  detail::check_on_grid(context.x, cfg, "context");

  const std::size_t n = context.size();
  const std::size_t c = cfg.channels;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    if (context.x[i] != context.x[j]) return context.x[i] < context.x[j];
    return std::lexicographical_compare(context.y.begin() + i * c, context.y.begin() + (i + 1) * c,
                                        context.y.begin() + j * c, context.y.begin() + (j + 1) * c);
  });
  std::vector<double> xs(n);
  Tensor ys(Shape{n, c});
  auto yd = ys.mutable_data();
  for (std::size_t k = 0; k < n; ++k) {
    xs[k] = context.x[order[k]];
    for (std::size_t ch = 0; ch < c; ++ch) yd[k * c + ch] = context.y[order[k] * c + ch];
  }

  GridEmbedding emb;
  emb.grid_x = cfg.grid();
  const Tensor weights =
      exp(mul(detail::squared_distances(emb.grid_x, xs), detail::rbf_coefficient(model.lengthscale_in_raw)));
  const Tensor density = sum_axis(weights, 1, /*keepdim=*/true);               // [G, 1]
  const Tensor signal = div(matmul(weights, ys), shift(density, cfg.density_eps));  // [G, C]
  emb.channels = transpose(concat({density, signal}, 1));                       // [1 + C, G]
  return emb;
}

/// CNN over the grid embedding, then mean-pool over the grid and a linear
/// head to the representation.
inline EncoderOutput encode(const GridEmbedding& embedding, const ConvCnpModel& model) {
  const auto& cfg = model.config;
  const std::size_t g = cfg.grid_size;
  if (embedding.channels.shape() != Shape{1 + cfg.channels, g}) {
    throw ShapeError("encode: embedding shape " + shape_str(embedding.channels.shape()) +
                     " does not match model grid");
  }
  const std::size_t pad = cfg.kernel_width / 2;
  Tensor h = reshape(embedding.channels, {1, 1 + cfg.channels, g});
  for (const auto& layer : model.cnn) {
    Tensor y = relu(add(conv1d(h, layer.kernel, pad), layer.bias));
    h = h.dim(1) == y.dim(1) ? add(h, y) : std::move(y);
  }
  EncoderOutput out;
  out.grid_features = reshape(h, {cfg.cnn_width, g});
  const Tensor pooled = reshape(mean_axis(out.grid_features, 1), {1, cfg.cnn_width});
  out.representation.r =
      reshape(add(matmul(pooled, model.head_weight), model.head_bias), {cfg.encoding_size});
  return out;
}

/// Smooths grid features onto each target location with a normalised RBF
/// kernel and maps them through the MLP to (mu, sigma), where
/// sigma = softplus(pre_sigma) + sigma_min.
inline GaussianPrediction decode(const Tensor& grid_features, std::span<const double> target_x,
                                 const ConvCnpModel& model) {
  const auto& cfg = model.config;
  if (grid_features.shape() != Shape{cfg.cnn_width, cfg.grid_size}) {
    throw ShapeError("decode: grid features " + shape_str(grid_features.shape()) +
                     " do not match model width/grid");
  }
  if (target_x.empty()) throw DataError("decode: empty target set");
  detail::check_on_grid(target_x, cfg, "target");

  const auto grid = cfg.grid();
  const std::size_t n = target_x.size();
  const Tensor logits =
      mul(detail::squared_distances(target_x, grid), detail::rbf_coefficient(model.lengthscale_out_raw));
  // Subtracting the row maximum cancels in the normalisation but keeps the
  // largest weight at exp(0) = 1.
  Tensor row_max(Shape{n, 1});
  {
    const auto l = logits.data();
    auto rm = row_max.mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
      rm[i] = *std::max_element(l.begin() + i * grid.size(), l.begin() + (i + 1) * grid.size());
    }
  }
  const Tensor weights = exp(sub(logits, row_max));
  const Tensor normalised = div(weights, sum_axis(weights, 1, /*keepdim=*/true));
  const Tensor smoothed = matmul(normalised, transpose(grid_features));  // [n, H]
  const Tensor hidden = relu(add(matmul(smoothed, model.fc1_weight), model.fc1_bias));
  const Tensor out = add(matmul(hidden, model.fc2_weight), model.fc2_bias);  // [n, 2C]
  GaussianPrediction pred;
  pred.mu = slice(out, 1, 0, cfg.channels);
  pred.sigma = shift(softplus(slice(out, 1, cfg.channels, cfg.channels)), cfg.sigma_min);
  return pred;
}

/// embed -> encode -> decode for one view.
struct ViewOutput {
  Representation representation;
  GaussianPrediction prediction;
};

inline ViewOutput forward_view(const ViewPair& view, const ConvCnpModel& model) {
  EncoderOutput enc = encode(embed_context(view.context, model), model);
  ViewOutput out;
  out.prediction = decode(enc.grid_features, view.target.x, model);
  out.representation = std::move(enc.representation);
  out.representation.segment_id = view.segment_id;
  out.representation.view_id = view.view_id;
  return out;
}

/// Representation of a context set alone (no decoding).
inline Representation represent(const PointSet& context, const ConvCnpModel& model) {
  return encode(embed_context(context, model), model).representation;
}

/// Predictions at `target_x` for context and targets as given, and with all
/// locations shifted by `shift_steps` grid steps.
inline std::pair<GaussianPrediction, GaussianPrediction> translate_check(
    const ConvCnpModel& model, const PointSet& context, std::span<const double> target_x,
    long shift_steps) {
  const double delta = static_cast<double>(shift_steps) * model.config.grid_spacing();
  PointSet moved = context;
  for (auto& x : moved.x) x += delta;
  std::vector<double> moved_targets(target_x.begin(), target_x.end());
  for (auto& x : moved_targets) x += delta;
  try {
    detail::check_on_grid(moved.x, model.config, "shifted context");
    detail::check_on_grid(moved_targets, model.config, "shifted target");
  } catch (const DataError& e) {
    throw UsageError(std::string("translate_check: shift pushes points off-grid: ") + e.what());
  }
  auto predict = [&](const PointSet& ctx, std::span<const double> tx) {
    return decode(encode(embed_context(ctx, model), model).grid_features, tx, model);
  };
  return {predict(context, target_x), predict(moved, moved_targets)};
}

}  // namespace contrnp
