#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "adabins/ops.hpp"
#include "adabins/conv.hpp"
#include "adabins/random.hpp"

namespace adabins {

struct LossConfig {
  double lambda = 0.85;
  double alpha = 10.0;
  double beta = 0.1;
  index_t chamfer_sample_cap = 1024;

  void validate() const {
    if (lambda < 0 || lambda > 1) throw ConfigError("loss: lambda must be in [0,1]");
    if (alpha <= 0) throw ConfigError("loss: alpha must be > 0");
    if (beta < 0) throw ConfigError("loss: beta must be >= 0");
    if (chamfer_sample_cap < 1) throw ConfigError("loss: chamfer_sample_cap must be >= 1");
  }
};

// Pixel validity grid; invalid pixels never enter any loss or metric sum.
struct ValidMask {
  std::vector<uint8_t> valid;
  index_t count = 0;

  static ValidMask all_valid(index_t n) {
    ValidMask m;
    m.valid.assign(static_cast<size_t>(n), 1);
    m.count = n;
    return m;
  }
};

// Valid = finite and strictly inside (d_min, d_max).
template <typename T>
ValidMask mask_from_depth(const std::vector<T>& depth, double d_min, double d_max) {
  ValidMask m;
  m.valid.resize(depth.size());
  for (size_t i = 0; i < depth.size(); ++i) {
    const double v = static_cast<double>(depth[i]);
    m.valid[i] = (std::isfinite(v) && v > d_min && v < d_max) ? 1 : 0;
    m.count += m.valid[i];
  }
  return m;
}

// Scaled scale-invariant log loss:
//   L = alpha * sqrt( (1/T) sum g_i^2 - (lambda/T^2) (sum g_i)^2 ),
//   g_i = log(pred_i) - log(gt_i) over valid pixels.
// The sqrt argument is clamped at zero; it can only round below zero when
// the prediction equals the ground truth up to a global scale.
template <typename T>
Tensor<T> si_loss(const Tensor<T>& pred, const Tensor<T>& gt, const ValidMask& mask,
                  const LossConfig& cfg) {
  if (pred.numel() != gt.numel() ||
      static_cast<index_t>(mask.valid.size()) != pred.numel())
    throw ShapeError("si_loss: pred/gt/mask sizes differ");
  if (mask.count < 1) throw DomainError("si_loss: no valid pixels");
  for (size_t i = 0; i < mask.valid.size(); ++i)
    if (mask.valid[i]) {
      if (!(pred.data()[i] > T(0)))
        throw DomainError("si_loss: non-positive prediction under mask");
      if (!(gt.data()[i] > T(0)))
        throw DomainError("si_loss: non-positive ground truth under mask");
    }
  Tensor<T> g = sub(log(masked_select(pred, mask.valid)), log(masked_select(gt, mask.valid)));
  const T inv_t = T(1) / static_cast<T>(mask.count);
  Tensor<T> mean_sq = mul_scalar(sum_all(square(g)), inv_t);
  Tensor<T> mean_g = mul_scalar(sum_all(g), inv_t);
  Tensor<T> arg = sub(mean_sq, mul_scalar(square(mean_g), static_cast<T>(cfg.lambda)));
  return mul_scalar(sqrt(relu(arg)), static_cast<T>(cfg.alpha));
}

// Valid ground-truth depths of one image, subsampled without replacement to
// at most `cap` values. The draw is fully determined by `seed`.
template <typename T>
std::vector<T> chamfer_depth_sample(const Tensor<T>& gt, const ValidMask& mask, index_t cap,
                                    uint64_t seed) {
  std::vector<index_t> idx;
  for (size_t i = 0; i < mask.valid.size(); ++i)
    if (mask.valid[i]) idx.push_back(static_cast<index_t>(i));
  if (idx.empty()) throw DomainError("chamfer: image has no valid depths");
  if (static_cast<index_t>(idx.size()) > cap) {
    Rng rng(seed);
    for (index_t i = 0; i < cap; ++i) {
      index_t j = i + rng.uniform_int(static_cast<index_t>(idx.size()) - i);
      std::swap(idx[i], idx[j]);
    }
    idx.resize(static_cast<size_t>(cap));
  }
  std::vector<T> out;
  out.reserve(idx.size());
  for (index_t i : idx) out.push_back(gt.data()[i]);
  return out;
}

// Bidirectional Chamfer in 1-D depth space with squared distance and a mean
// per direction:
//   L = mean_x min_k (x - c_k)^2 + mean_k min_x (c_k - x)^2.
// Nearest-neighbour assignments are held fixed in the backward pass.
template <typename T>
Tensor<T> chamfer_pair(const Tensor<T>& centers, const std::vector<T>& depths) {
  if (depths.empty()) throw DomainError("chamfer: empty depth set");
  const index_t n_c = centers.numel();
  const index_t n_x = static_cast<index_t>(depths.size());
  const auto& cv = centers.data();

  std::vector<index_t> nearest_center(static_cast<size_t>(n_x));
  std::vector<index_t> nearest_depth(static_cast<size_t>(n_c));
  double acc_xc = 0;
  for (index_t i = 0; i < n_x; ++i) {
    double best = std::numeric_limits<double>::infinity();
    index_t arg = 0;
    for (index_t k = 0; k < n_c; ++k) {
      const double d = static_cast<double>(depths[i]) - static_cast<double>(cv[k]);
      if (d * d < best) {
        best = d * d;
        arg = k;
      }
    }
    nearest_center[i] = arg;
    acc_xc += best;
  }
  double acc_cx = 0;
  for (index_t k = 0; k < n_c; ++k) {
    double best = std::numeric_limits<double>::infinity();
    index_t arg = 0;
    for (index_t i = 0; i < n_x; ++i) {
      const double d = static_cast<double>(cv[k]) - static_cast<double>(depths[i]);
      if (d * d < best) {
        best = d * d;
        arg = i;
      }
    }
    nearest_depth[k] = arg;
    acc_cx += best;
  }
  const double total = acc_xc / static_cast<double>(n_x) + acc_cx / static_cast<double>(n_c);

  Tensor<T> out = Tensor<T>::from_data({1}, {static_cast<T>(total)});
  attach_backward<T>(out, "chamfer", {&centers},
                     [cn = centers.node(), depths, nearest_center = std::move(nearest_center),
                      nearest_depth = std::move(nearest_depth), n_c, n_x](TensorNode<T>& self) {
    const T g = self.grad[0];
    const T inv_x = T(1) / static_cast<T>(n_x);
    const T inv_c = T(1) / static_cast<T>(n_c);
    for (index_t i = 0; i < n_x; ++i) {
      const index_t k = nearest_center[i];
      cn->grad[k] += g * T(2) * (cn->value[k] - depths[i]) * inv_x;
    }
    for (index_t k = 0; k < n_c; ++k) {
      cn->grad[k] += g * T(2) * (cn->value[k] - depths[nearest_depth[k]]) * inv_c;
    }
  });
  return out;
}

// One image: centers may be [N], [1,N] or a [B,N] row already sliced out.
template <typename T>
Tensor<T> chamfer_bins_loss(const Tensor<T>& centers, const Tensor<T>& gt,
                            const ValidMask& mask, const LossConfig& cfg, uint64_t seed) {
  if (mask.count < 1) throw DomainError("chamfer_bins_loss: no valid pixels");
  std::vector<T> depths = chamfer_depth_sample(gt, mask, cfg.chamfer_sample_cap, seed);
  return chamfer_pair(centers, depths);
}

// L_total = L_pixel + beta * L_bins; beta = 0 reduces to si_loss exactly.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& pred, const Tensor<T>& gt, const ValidMask& mask,
                     const Tensor<T>& centers, const LossConfig& cfg, uint64_t seed) {
  Tensor<T> pixel = si_loss(pred, gt, mask, cfg);
  if (cfg.beta == 0) return pixel;
  Tensor<T> bins = chamfer_bins_loss(centers, gt, mask, cfg, seed);
  return add(pixel, mul_scalar(bins, static_cast<T>(cfg.beta)));
}

namespace detail {

template <typename T>
Tensor<T> gaussian_window(index_t size, double sigma) {
  std::vector<T> k1(static_cast<size_t>(size));
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  double norm = 0;
  for (index_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - c;
    const double v = std::exp(-d * d / (2 * sigma * sigma));
    k1[static_cast<size_t>(i)] = static_cast<T>(v);
    norm += v;
  }
  std::vector<T> k2(static_cast<size_t>(size * size));
  for (index_t i = 0; i < size; ++i)
    for (index_t j = 0; j < size; ++j)
      k2[static_cast<size_t>(i * size + j)] =
          static_cast<T>(static_cast<double>(k1[i]) * static_cast<double>(k1[j]) / (norm * norm));
  return Tensor<T>::from_data({1, 1, size, size}, std::move(k2));
}

}  // namespace detail

// Combined loss for the loss ablation: w*(1-SSIM)/2 + (1-w)*L1 with w=0.85.
// SSIM uses an 11x11 Gaussian window (sigma 1.5), valid positions only, and
// constants scaled by `data_range`. Invalid ground-truth pixels are filled
// with the (detached) prediction so they contribute no difference; the L1
// term runs over valid pixels only.
template <typename T>
Tensor<T> l1_ssim_loss(const Tensor<T>& pred, const Tensor<T>& gt, const ValidMask& mask,
                       double data_range) {
  if (pred.ndim() != 4 || pred.shape()[1] != 1)
    throw ShapeError("l1_ssim_loss: expected [B,1,h,w], got " + shape_str(pred.shape()));
  if (pred.numel() != gt.numel() ||
      static_cast<index_t>(mask.valid.size()) != pred.numel())
    throw ShapeError("l1_ssim_loss: pred/gt/mask sizes differ");
  if (mask.count < 1) throw DomainError("l1_ssim_loss: no valid pixels");
  const index_t h = pred.shape()[2], w = pred.shape()[3];
  constexpr index_t kWin = 11;
  if (h < kWin || w < kWin)
    throw DomainError("l1_ssim_loss: map smaller than the 11x11 SSIM window");

  std::vector<T> filled = gt.data();
  for (size_t i = 0; i < mask.valid.size(); ++i)
    if (!mask.valid[i]) filled[i] = pred.data()[i];
  Tensor<T> gt_f = Tensor<T>::from_data(gt.shape(), std::move(filled));

  const double kW = 0.85;
  Tensor<T> l1 = mean_all(abs(sub(masked_select(pred, mask.valid),
                                  masked_select(gt, mask.valid))));

  static const Tensor<T> window = detail::gaussian_window<T>(kWin, 1.5);
  const T c1 = static_cast<T>(0.01 * data_range * 0.01 * data_range);
  const T c2 = static_cast<T>(0.03 * data_range * 0.03 * data_range);
  Tensor<T> mu_p = conv2d(pred, window, 1, 0);
  Tensor<T> mu_g = conv2d(gt_f, window, 1, 0);
  Tensor<T> mu_pp = conv2d(square(pred), window, 1, 0);
  Tensor<T> mu_gg = conv2d(square(gt_f), window, 1, 0);
  Tensor<T> mu_pg = conv2d(mul(pred, gt_f), window, 1, 0);
  Tensor<T> var_p = sub(mu_pp, square(mu_p));
  Tensor<T> var_g = sub(mu_gg, square(mu_g));
  Tensor<T> cov = sub(mu_pg, mul(mu_p, mu_g));
  Tensor<T> num = mul(add_scalar(mul_scalar(mul(mu_p, mu_g), T(2)), c1),
                      add_scalar(mul_scalar(cov, T(2)), c2));
  Tensor<T> den = mul(add_scalar(add(square(mu_p), square(mu_g)), c1),
                      add_scalar(add(var_p, var_g), c2));
  Tensor<T> mean_ssim = mean_all(div(num, den));

  Tensor<T> ssim_term = mul_scalar(add_scalar(neg(mean_ssim), T(1)), static_cast<T>(kW / 2));
  return add(ssim_term, mul_scalar(l1, static_cast<T>(1 - kW)));
}

}  // namespace adabins
