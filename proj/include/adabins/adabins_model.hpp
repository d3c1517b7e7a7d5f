#pragma once

#include <memory>
#include <optional>
#include <string>

#include "adabins/backbone.hpp"
#include "adabins/binning.hpp"
#include "adabins/mini_vit.hpp"

namespace adabins {

// c_i = d_min + (d_max - d_min) * (b_i / 2 + sum_{j<i} b_j)
// Strictly increasing, strictly inside (d_min, d_max), differentiable in b.
template <typename T>
Tensor<T> bin_centers(const Tensor<T>& widths, double d_min, double d_max) {
  if (!(d_min >= 0) || d_min >= d_max)
    throw ConfigError("bin_centers: need 0 <= d_min < d_max, got (" + std::to_string(d_min) +
                      ", " + std::to_string(d_max) + ")");
  Tensor<T> csum = cumsum(widths, -1);                      // b_i + sum_{j<i} b_j
  Tensor<T> inner = sub(csum, mul_scalar(widths, T(0.5)));  // b_i/2 + sum_{j<i} b_j
  return add_scalar(mul_scalar(inner, static_cast<T>(d_max - d_min)), static_cast<T>(d_min));
}

// Dot products between pixel features (keys) and output embeddings 2..C+1
// (queries); equivalent to using the embeddings as 1x1 conv kernels.
// keys: [B, E, h, w], x_o: [B, S, E] -> R: [B, C, h, w]
template <typename T>
Tensor<T> range_attention(const Tensor<T>& keys, const Tensor<T>& x_o, index_t kernel_count) {
  const index_t B = keys.shape()[0], E = keys.shape()[1];
  const index_t h = keys.shape()[2], w = keys.shape()[3];
  if (x_o.shape()[2] != E)
    throw ShapeError("range_attention: key channels " + std::to_string(E) +
                     " != embedding dim " + std::to_string(x_o.shape()[2]));
  if (x_o.shape()[1] < kernel_count + 1)
    throw ConfigError("range_attention: sequence length " + std::to_string(x_o.shape()[1]) +
                      " < kernel_count+1");
  Tensor<T> queries = slice(x_o, 1, 1, kernel_count);      // [B, C, E]
  Tensor<T> keys_flat = reshape(keys, {B, E, h * w});      // [B, E, hw]
  return reshape(matmul(queries, keys_flat), {B, kernel_count, h, w});
}

// Softmax-weighted combination of bin centers per pixel (Softmax over the
// bin axis). Output stays strictly inside (d_min, d_max).
// logits: [B, N, h, w], centers: [B, N] or [1, N] -> [B, 1, h, w]
template <typename T>
Tensor<T> hybrid_regress(const Tensor<T>& logits, const Tensor<T>& centers) {
  Tensor<T> probs = softmax(logits, 1);
  Tensor<T> c = reshape(centers, {centers.shape()[0], centers.shape()[1], 1, 1});
  return sum_axis(mul(probs, c), 1, /*keepdim=*/true);
}

// Classification-style baseline: each pixel snaps to its most likely bin
// center, so a map carries at most N distinct values. Not differentiable;
// evaluation only.
template <typename T>
Tensor<T> argmax_regress(const Tensor<T>& logits, const Tensor<T>& centers) {
  NoGradGuard ng;
  const index_t B = logits.shape()[0], N = logits.shape()[1];
  const index_t h = logits.shape()[2], w = logits.shape()[3];
  const bool shared = centers.shape()[0] == 1;
  Tensor<T> out(Shape{B, 1, h, w});
  const auto& lv = logits.data();
  const auto& cv = centers.data();
  auto& ov = out.data();
  for (index_t b = 0; b < B; ++b)
    for (index_t i = 0; i < h * w; ++i) {
      index_t best = 0;
      T best_v = lv[(b * N) * h * w + i];
      for (index_t k = 1; k < N; ++k) {
        const T v = lv[(b * N + k) * h * w + i];
        if (v > best_v) {
          best_v = v;
          best = k;
        }
      }
      ov[b * h * w + i] = cv[(shared ? 0 : b) * N + best];
    }
  return out;
}

enum class ModelKind { adabins, regression };

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "adabins") return ModelKind::adabins;
  if (s == "regression") return ModelKind::regression;
  throw ConfigError("model.kind must be adabins|regression, got '" + s + "'");
}

struct ModelConfig {
  ModelKind kind = ModelKind::adabins;
  BackboneConfig backbone;
  MiniVitConfig mvit;
  BinKind bin_kind = BinKind::adaptive;
  double bin_d_low_factor = 1e-3;
  double d_min = 0.1;
  double d_max = 10.0;
};

template <typename T>
struct ForwardResult {
  Tensor<T> depth;    // [B, 1, H, W], strictly inside (d_min, d_max)
  Tensor<T> widths;   // [B, N] or [1, N]; undefined for plain regression
  Tensor<T> centers;  // same leading shape as widths
  Tensor<T> logits;   // [B, N, h, w]; undefined for plain regression
};

// Full depth estimator: backbone -> (mini-ViT -> bins + range attention ->
// hybrid regression) -> bilinear x2 to input resolution. With
// kind=regression the head is a sigmoid squashed into (d_min, d_max) and
// C_d is forced to 1.
template <typename T>
struct DepthModel {
  ModelConfig cfg;
  Backbone<T> backbone;
  std::optional<MiniVit<T>> mvit;
  Conv2dLayer<T> key_conv;    // 3x3, C_d -> E, no nonlinearity
  Conv2dLayer<T> logit_conv;  // 1x1, C -> N, zero-init bias
  BinStrategy<T> bins;

  DepthModel() = default;

  DepthModel(ModelConfig c, uint64_t seed) : cfg(std::move(c)) {
    Rng rng(seed);
    if (cfg.kind == ModelKind::regression) cfg.backbone.decoded_channels = 1;
    backbone = Backbone<T>(cfg.backbone, rng);
    if (cfg.kind == ModelKind::adabins) {
      const index_t h = cfg.backbone.input_h / 2, w = cfg.backbone.input_w / 2;
      mvit.emplace(cfg.mvit, cfg.backbone.decoded_channels, h, w, rng);
      key_conv = Conv2dLayer<T>(cfg.backbone.decoded_channels, cfg.mvit.embed_dim, 3, 1, 1, rng);
      logit_conv = Conv2dLayer<T>(cfg.mvit.kernel_count, cfg.mvit.n_bins, 1, 1, 0, rng);
      bins = BinStrategy<T>(cfg.bin_kind, cfg.mvit.n_bins, cfg.d_min, cfg.d_max,
                            cfg.bin_d_low_factor);
    }
  }

  ForwardResult<T> forward(const Tensor<T>& image) const {
    ForwardResult<T> r;
    Tensor<T> x_d = backbone.forward(image);
    if (cfg.kind == ModelKind::regression) {
      const double range = cfg.d_max - cfg.d_min;
      Tensor<T> half = add_scalar(mul_scalar(sigmoid(x_d), static_cast<T>(range)),
                                  static_cast<T>(cfg.d_min));
      r.depth = bilinear_upsample(half, 2);
      return r;
    }
    Tensor<T> keys = key_conv.forward(x_d);
    Tensor<T> x_o = mvit->encode(mvit->embed_patches(x_d));
    if (cfg.bin_kind == BinKind::adaptive) {
      Tensor<T> first = select(x_o, 1, 0);  // [B, E]
      Tensor<T> head_widths = mvit->bin_widths_head(first);
      r.widths = bins.widths_for(&head_widths);
    } else {
      r.widths = bins.widths_for(nullptr);
    }
    r.centers = bin_centers(r.widths, cfg.d_min, cfg.d_max);
    Tensor<T> R = range_attention(keys, x_o, cfg.mvit.kernel_count);
    r.logits = logit_conv.forward(R);
    Tensor<T> half = hybrid_regress(r.logits, r.centers);
    r.depth = bilinear_upsample(half, 2);
    return r;
  }

  ParamList<T> named_params() {
    ParamList<T> out;
    backbone.collect("backbone", out);
    if (cfg.kind == ModelKind::adabins) {
      mvit->collect("mvit", out);
      key_conv.collect("keys", out);
      logit_conv.collect("logits", out);
      bins.collect("bins", out);
    }
    return out;
  }
};

}  // namespace adabins
