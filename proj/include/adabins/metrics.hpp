#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "adabins/adabins_model.hpp"
#include "adabins/losses.hpp"
#include "adabins/synthdata.hpp"

namespace adabins {

// The eight standard depth-evaluation numbers over one masked map.
struct MetricReport {
  double delta1 = 0, delta2 = 0, delta3 = 0;
  double rel = 0, rms = 0, log10 = 0;
  double sq_rel = 0, rmse_log = 0;
  index_t n_pixels = 0;
};

// REL:      mean |y - p| / y
// RMS:      sqrt(mean (y - p)^2)
// log10:    mean |log10 y - log10 p|
// Sq Rel:   mean (y - p)^2 / y
// RMSE log: sqrt(mean (ln y - ln p)^2)
// delta_i:  fraction with max(y/p, p/y) < 1.25^i (strict)
// y = ground truth, p = prediction, over valid pixels only.
template <typename T>
MetricReport compute_metrics(const std::vector<T>& pred, const std::vector<T>& gt,
                             const ValidMask& mask) {
  if (pred.size() != gt.size() || mask.valid.size() != gt.size())
    throw ShapeError("compute_metrics: size mismatch");
  if (mask.count < 1) throw DomainError("compute_metrics: empty mask");
  double s_rel = 0, s_sq = 0, s_log10 = 0, s_sqrel = 0, s_logsq = 0;
  index_t d1 = 0, d2 = 0, d3 = 0;
  const double thr1 = 1.25, thr2 = 1.25 * 1.25, thr3 = 1.25 * 1.25 * 1.25;
  for (size_t i = 0; i < gt.size(); ++i) {
    if (!mask.valid[i]) continue;
    const double y = static_cast<double>(gt[i]);
    const double p = static_cast<double>(pred[i]);
    if (!(y > 0) || !(p > 0))
      throw DomainError("compute_metrics: non-positive depth under mask");
    const double diff = y - p;
    s_rel += std::abs(diff) / y;
    s_sq += diff * diff;
    s_sqrel += diff * diff / y;
    s_log10 += std::abs(std::log10(y) - std::log10(p));
    const double dl = std::log(y) - std::log(p);
    s_logsq += dl * dl;
    const double ratio = std::max(y / p, p / y);
    if (ratio < thr1) ++d1;
    if (ratio < thr2) ++d2;
    if (ratio < thr3) ++d3;
  }
  const double n = static_cast<double>(mask.count);
  MetricReport r;
  r.delta1 = d1 / n;
  r.delta2 = d2 / n;
  r.delta3 = d3 / n;
  r.rel = s_rel / n;
  r.rms = std::sqrt(s_sq / n);
  r.log10 = s_log10 / n;
  r.sq_rel = s_sqrel / n;
  r.rmse_log = std::sqrt(s_logsq / n);
  r.n_pixels = mask.count;
  return r;
}

struct CropRect {
  index_t row0 = 0, row1 = 0, col0 = 0, col1 = 0;  // half-open
  bool empty() const { return row1 <= row0 || col1 <= col0; }
};

struct EvalProtocol {
  CropRect crop;               // empty = full image
  bool mirror_average = true;  // average prediction with the mirrored one
  double clamp_min = 0.1, clamp_max = 10.0;
};

namespace detail {

// flip a [C, H, W] buffer along its last axis
template <typename T>
std::vector<T> flip_w(const std::vector<T>& src, index_t c, index_t h, index_t w) {
  std::vector<T> dst(src.size());
  for (index_t ch = 0; ch < c; ++ch)
    for (index_t i = 0; i < h; ++i)
      for (index_t j = 0; j < w; ++j)
        dst[(ch * h + i) * w + j] = src[(ch * h + i) * w + (w - 1 - j)];
  return dst;
}

}  // namespace detail

// Evaluation over a generic single-image predictor. The predictor maps a
// [3*H*W] image buffer to an [H*W] depth buffer; evaluate() below adapts a
// DepthModel. Per image: optional mirror averaging, bilinear resize to the
// ground-truth grid, clamp, crop, metrics; the report is the per-image mean.
template <typename PredictFn>
MetricReport evaluate_with(PredictFn predict, const std::vector<SceneSample>& samples,
                           const EvalProtocol& proto) {
  if (samples.empty()) throw UsageError("evaluate: no samples");
  MetricReport avg;
  for (const auto& s : samples) {
    std::vector<float> depth = predict(s.image, s.h, s.w);
    if (proto.mirror_average) {
      std::vector<float> mirrored_in = detail::flip_w(s.image, 3, s.h, s.w);
      std::vector<float> mirrored_out = predict(mirrored_in, s.h, s.w);
      std::vector<float> back = detail::flip_w(mirrored_out, 1, s.h, s.w);
      for (size_t i = 0; i < depth.size(); ++i) depth[i] = 0.5f * (depth[i] + back[i]);
    }
    const index_t ph = static_cast<index_t>(depth.size()) / s.w;
    if (ph != s.h)
      depth = bilinear_resize(depth, ph, s.w, s.h, s.w);
    for (auto& v : depth)
      v = std::min(static_cast<float>(proto.clamp_max),
                   std::max(static_cast<float>(proto.clamp_min), v));

    CropRect crop = proto.crop;
    if (crop.empty()) crop = {0, s.h, 0, s.w};
    if (crop.row0 < 0 || crop.col0 < 0 || crop.row1 > s.h || crop.col1 > s.w)
      throw ConfigError("evaluate: crop outside image bounds");
    std::vector<float> cp, cg;
    ValidMask cm;
    for (index_t i = crop.row0; i < crop.row1; ++i)
      for (index_t j = crop.col0; j < crop.col1; ++j) {
        const index_t k = i * s.w + j;
        cp.push_back(depth[k]);
        cg.push_back(s.depth[k]);
        cm.valid.push_back(s.mask.valid[k]);
        cm.count += s.mask.valid[k];
      }
    MetricReport r = compute_metrics(cp, cg, cm);
    avg.delta1 += r.delta1;
    avg.delta2 += r.delta2;
    avg.delta3 += r.delta3;
    avg.rel += r.rel;
    avg.rms += r.rms;
    avg.log10 += r.log10;
    avg.sq_rel += r.sq_rel;
    avg.rmse_log += r.rmse_log;
    avg.n_pixels += r.n_pixels;
  }
  const double n = static_cast<double>(samples.size());
  avg.delta1 /= n;
  avg.delta2 /= n;
  avg.delta3 /= n;
  avg.rel /= n;
  avg.rms /= n;
  avg.log10 /= n;
  avg.sq_rel /= n;
  avg.rmse_log /= n;
  return avg;
}

// Adapter running a DepthModel; use_argmax swaps in the classification-style
// head (nearest upsampling preserves its discrete value set).
template <typename T>
MetricReport evaluate(const DepthModel<T>& model, const std::vector<SceneSample>& samples,
                      const EvalProtocol& proto, bool use_argmax = false) {
  if (use_argmax && model.cfg.kind != ModelKind::adabins)
    throw UsageError("evaluate: argmax head requires the adabins model");
  auto predict = [&](const std::vector<float>& img, index_t h, index_t w) {
    NoGradGuard ng;
    std::vector<T> data(img.begin(), img.end());
    Tensor<T> image = Tensor<T>::from_data({1, 3, h, w}, std::move(data));
    ForwardResult<T> out = model.forward(image);
    Tensor<T> depth = out.depth;
    if (use_argmax)
      depth = nearest_upsample(argmax_regress(out.logits, out.centers), 2);
    std::vector<float> res(depth.data().begin(), depth.data().end());
    return res;
  };
  return evaluate_with(predict, samples, proto);
}

// Per-pixel unit normal from a dense depth map: normalize(-ddx, -ddy, 1),
// central differences inside, one-sided at the borders. Output is three
// row-major planes (x, y, z).
struct NormalMap {
  index_t h = 0, w = 0;
  std::vector<float> data;  // 3 * h * w
};

template <typename T>
NormalMap normals_from_depth(const std::vector<T>& depth, index_t h, index_t w) {
  if (static_cast<index_t>(depth.size()) != h * w)
    throw ShapeError("normals_from_depth: buffer does not match h*w");
  NormalMap nm;
  nm.h = h;
  nm.w = w;
  nm.data.assign(static_cast<size_t>(3 * h * w), 0.0f);
  auto d = [&](index_t i, index_t j) { return static_cast<double>(depth[i * w + j]); };
  for (index_t i = 0; i < h; ++i)
    for (index_t j = 0; j < w; ++j) {
      double ddx, ddy;
      if (j == 0)
        ddx = d(i, 1) - d(i, 0);
      else if (j == w - 1)
        ddx = d(i, w - 1) - d(i, w - 2);
      else
        ddx = 0.5 * (d(i, j + 1) - d(i, j - 1));
      if (i == 0)
        ddy = d(1, j) - d(0, j);
      else if (i == h - 1)
        ddy = d(h - 1, j) - d(h - 2, j);
      else
        ddy = 0.5 * (d(i + 1, j) - d(i - 1, j));
      const double norm = std::sqrt(ddx * ddx + ddy * ddy + 1.0);
      nm.data[0 * h * w + i * w + j] = static_cast<float>(-ddx / norm);
      nm.data[1 * h * w + i * w + j] = static_cast<float>(-ddy / norm);
      nm.data[2 * h * w + i * w + j] = static_cast<float>(1.0 / norm);
    }
  return nm;
}

// Normalized histogram over (d_min, d_max); values outside land in the edge
// bins. Sums to 1 whenever `values` is non-empty.
inline std::vector<double> depth_histogram(const std::vector<double>& values, double d_min,
                                           double d_max, index_t n_bins) {
  if (n_bins < 1) throw UsageError("depth_histogram: n_bins must be >= 1");
  std::vector<double> hist(static_cast<size_t>(n_bins), 0.0);
  if (values.empty()) return hist;
  const double span = d_max - d_min;
  for (double v : values) {
    index_t k = static_cast<index_t>(std::floor((v - d_min) / span * n_bins));
    k = std::max<index_t>(0, std::min(n_bins - 1, k));
    hist[k] += 1.0;
  }
  for (auto& x : hist) x /= static_cast<double>(values.size());
  return hist;
}

// Fig-style export pair: GT depth histogram vs predicted-center histogram.
struct HistogramPair {
  double d_min = 0, d_max = 0;
  std::vector<double> gt;
  std::vector<double> centers;
};

template <typename T>
HistogramPair bin_histogram_export(const Tensor<T>& centers, const std::vector<T>& gt_depth,
                                   const ValidMask& mask, double d_min, double d_max,
                                   index_t n_hist_bins) {
  std::vector<double> gv;
  for (size_t i = 0; i < mask.valid.size(); ++i)
    if (mask.valid[i]) gv.push_back(static_cast<double>(gt_depth[i]));
  std::vector<double> cv(centers.data().begin(), centers.data().end());
  HistogramPair out;
  out.d_min = d_min;
  out.d_max = d_max;
  out.gt = depth_histogram(gv, d_min, d_max, n_hist_bins);
  out.centers = depth_histogram(cv, d_min, d_max, n_hist_bins);
  return out;
}

}  // namespace adabins
