#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "adabins/losses.hpp"
#include "adabins/random.hpp"

namespace adabins {

// Synthetic (image, depth) pairs standing in for real capture data. The two
// main scene families deliberately contrast in depth distribution: closeups
// live in a narrow band at the bottom of the range, corridors sweep nearly
// the whole range. Images are rendered from depth (shading plus seeded
// texture), so depth is recoverable from appearance.

enum class SceneType { closeup, corridor, mixed };

inline SceneType scene_type_from_string(const std::string& s) {
  if (s == "closeup") return SceneType::closeup;
  if (s == "corridor") return SceneType::corridor;
  if (s == "mixed") return SceneType::mixed;
  throw ConfigError("unknown scene type '" + s + "'");
}

inline std::string to_string(SceneType t) {
  switch (t) {
    case SceneType::closeup: return "closeup";
    case SceneType::corridor: return "corridor";
    case SceneType::mixed: return "mixed";
  }
  return "?";
}

struct SceneSample {
  index_t h = 0, w = 0;
  std::vector<float> image;  // [3, h, w] in [0, 1]
  std::vector<float> depth;  // [h, w] meters; NaN where invalid
  ValidMask mask;
  SceneType scene_type = SceneType::closeup;
  uint64_t seed = 0;
};

struct CorpusConfig {
  index_t n_samples = 64;
  index_t h = 32, w = 32;
  uint64_t seed = 1234;
  double mix_closeup = 0.5, mix_corridor = 0.5, mix_mixed = 0.0;
  double invalid_fraction = 0.05;
  double d_min = 0.1, d_max = 10.0;

  void validate() const {
    if (n_samples < 2) throw ConfigError("data: n_samples must be >= 2");
    if (h < 2 || w < 2) throw ConfigError("data: image extent must be >= 2");
    const double s = mix_closeup + mix_corridor + mix_mixed;
    if (std::abs(s - 1.0) > 1e-9)
      throw ConfigError("data: scene mix proportions must sum to 1, got " + std::to_string(s));
    if (mix_closeup < 0 || mix_corridor < 0 || mix_mixed < 0)
      throw ConfigError("data: scene mix proportions must be >= 0");
    if (invalid_fraction < 0 || invalid_fraction > 0.3)
      throw ConfigError("data: invalid_fraction must be in [0, 0.3]");
    if (!(d_min >= 0) || d_min >= d_max) throw ConfigError("data: need 0 <= d_min < d_max");
  }
};

namespace detail {

// Smooth low-frequency field in [-1, 1], sum of three seeded cosine waves.
inline double smooth_noise(double u, double v, const double* phase, const double* freq) {
  double acc = 0;
  for (int k = 0; k < 3; ++k)
    acc += std::cos(freq[2 * k] * u + freq[2 * k + 1] * v + phase[k]);
  return acc / 3.0;
}

// Piecewise-planar patches in a narrow low-depth band plus smooth noise.
inline void fill_closeup(std::vector<double>& d, index_t h, index_t w, double d_min,
                         double range, Rng& rng) {
  const double lo = d_min + 0.04 * range, hi = d_min + 0.34 * range;
  const double base = rng.uniform(lo, d_min + 0.20 * range);
  double gx = rng.uniform(-0.03, 0.03) * range;
  double gy = rng.uniform(-0.03, 0.03) * range;
  double phase[3], freq[6];
  for (auto& p : phase) p = rng.uniform(0, 6.28318530717958647);
  for (auto& f : freq) f = rng.uniform(1.5, 5.0);
  for (index_t i = 0; i < h; ++i)
    for (index_t j = 0; j < w; ++j) {
      const double u = static_cast<double>(j) / std::max<index_t>(1, w - 1);
      const double v = static_cast<double>(i) / std::max<index_t>(1, h - 1);
      d[i * w + j] = base + gx * (u - 0.5) + gy * (v - 0.5) +
                     0.02 * range * smooth_noise(u, v, phase, freq);
    }
  const index_t n_patches = 3 + rng.uniform_int(4);
  for (index_t p = 0; p < n_patches; ++p) {
    const index_t pw = 2 + rng.uniform_int(std::max<index_t>(1, w / 2));
    const index_t ph = 2 + rng.uniform_int(std::max<index_t>(1, h / 2));
    const index_t px = rng.uniform_int(std::max<index_t>(1, w - pw + 1));
    const index_t py = rng.uniform_int(std::max<index_t>(1, h - ph + 1));
    const double pd = rng.uniform(lo, hi);
    const double slope = rng.uniform(-0.02, 0.02) * range;
    for (index_t i = py; i < std::min(h, py + ph); ++i)
      for (index_t j = px; j < std::min(w, px + pw); ++j)
        d[i * w + j] = pd + slope * (static_cast<double>(j - px) / std::max<index_t>(1, pw));
  }
  for (auto& v : d) v = std::clamp(v, d_min + 0.02 * range, d_min + 0.36 * range);
}

// Perspective box ramp renormalized to span [near, far] exactly, then mild
// noise. Far point sits toward the image center, near at the borders.
inline void fill_corridor(std::vector<double>& d, index_t h, index_t w, double d_min,
                          double range, Rng& rng) {
  const double near = d_min + 0.05 * range, far = d_min + 0.95 * range;
  const double cx = rng.uniform(0.35, 0.65);
  const double cy = rng.uniform(0.35, 0.65);
  double phase[3], freq[6];
  for (auto& p : phase) p = rng.uniform(0, 6.28318530717958647);
  for (auto& f : freq) f = rng.uniform(4.0, 9.0);
  double t_min = 1e300, t_max = -1e300;
  for (index_t i = 0; i < h; ++i)
    for (index_t j = 0; j < w; ++j) {
      const double u = static_cast<double>(j) / std::max<index_t>(1, w - 1);
      const double v = static_cast<double>(i) / std::max<index_t>(1, h - 1);
      const double t = 1.0 - std::max(std::abs(u - cx) / std::max(cx, 1.0 - cx),
                                      std::abs(v - cy) / std::max(cy, 1.0 - cy));
      d[i * w + j] = t;
      t_min = std::min(t_min, t);
      t_max = std::max(t_max, t);
    }
  for (index_t i = 0; i < h; ++i)
    for (index_t j = 0; j < w; ++j) {
      const double u = static_cast<double>(j) / std::max<index_t>(1, w - 1);
      const double v = static_cast<double>(i) / std::max<index_t>(1, h - 1);
      const double t = (d[i * w + j] - t_min) / (t_max - t_min);
      double val = near + (far - near) * t + 0.01 * range * smooth_noise(u, v, phase, freq);
      d[i * w + j] = std::clamp(val, near, far);
    }
}

}  // namespace detail

// Fully deterministic in (type, seed, cfg): every value comes from one
// seeded stream in a fixed order.
inline SceneSample generate_scene(SceneType type, uint64_t seed, const CorpusConfig& cfg) {
  cfg.validate();
  Rng rng(seed);
  const index_t h = cfg.h, w = cfg.w;
  const double range = cfg.d_max - cfg.d_min;
  std::vector<double> depth(static_cast<size_t>(h * w), 0.0);

  switch (type) {
    case SceneType::closeup:
      detail::fill_closeup(depth, h, w, cfg.d_min, range, rng);
      break;
    case SceneType::corridor:
      detail::fill_corridor(depth, h, w, cfg.d_min, range, rng);
      break;
    case SceneType::mixed: {
      detail::fill_corridor(depth, h, w, cfg.d_min, range, rng);
      std::vector<double> patch(static_cast<size_t>(h * w));
      detail::fill_closeup(patch, h, w, cfg.d_min, range, rng);
      const index_t bw = w / 2 + rng.uniform_int(std::max<index_t>(1, w / 4));
      const index_t bh = h / 2 + rng.uniform_int(std::max<index_t>(1, h / 4));
      const index_t bx = rng.uniform_int(std::max<index_t>(1, w - bw + 1));
      const index_t by = rng.uniform_int(std::max<index_t>(1, h - bh + 1));
      for (index_t i = by; i < std::min(h, by + bh); ++i)
        for (index_t j = bx; j < std::min(w, bx + bw); ++j)
          depth[i * w + j] = patch[i * w + j];
      break;
    }
  }

  SceneSample s;
  s.h = h;
  s.w = w;
  s.scene_type = type;
  s.seed = seed;
  s.image.resize(static_cast<size_t>(3 * h * w));
  auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
  for (index_t i = 0; i < h * w; ++i) {
    const double shade = (cfg.d_max - depth[i]) / range;  // near = bright
    const double n0 = rng.uniform() - 0.5;
    const double n1 = rng.uniform() - 0.5;
    const double n2 = rng.uniform() - 0.5;
    s.image[i] = static_cast<float>(clamp01(shade + 0.06 * n0));
    s.image[h * w + i] = static_cast<float>(clamp01(0.25 + 0.5 * shade + 0.06 * n1));
    s.image[2 * h * w + i] = static_cast<float>(clamp01(shade * shade + 0.06 * n2));
  }

  s.depth.resize(static_cast<size_t>(h * w));
  for (index_t i = 0; i < h * w; ++i) s.depth[i] = static_cast<float>(depth[i]);

  // KITTI-style sparsity: an exact seeded fraction of pixels is dropped.
  const index_t n_invalid = static_cast<index_t>(cfg.invalid_fraction * static_cast<double>(h * w));
  std::vector<index_t> order(static_cast<size_t>(h * w));
  for (index_t i = 0; i < h * w; ++i) order[i] = i;
  for (index_t i = 0; i < n_invalid; ++i) {
    index_t j = i + rng.uniform_int(h * w - i);
    std::swap(order[i], order[j]);
  }
  s.mask = ValidMask::all_valid(h * w);
  for (index_t i = 0; i < n_invalid; ++i) {
    s.depth[order[i]] = std::numeric_limits<float>::quiet_NaN();
    s.mask.valid[order[i]] = 0;
    --s.mask.count;
  }
  return s;
}

struct Corpus {
  std::vector<SceneSample> train;
  std::vector<SceneSample> val;
};

// Deterministic corpus: exact per-type counts (largest-remainder rounding),
// seeded order shuffle, per-sample seeds derived from the corpus seed, last
// 25% held out for validation.
inline Corpus make_corpus(const CorpusConfig& cfg) {
  cfg.validate();
  const index_t n = cfg.n_samples;
  const double props[3] = {cfg.mix_closeup, cfg.mix_corridor, cfg.mix_mixed};
  index_t counts[3];
  double fracs[3];
  index_t total = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = props[k] * static_cast<double>(n);
    counts[k] = static_cast<index_t>(std::floor(exact + 1e-9));
    fracs[k] = exact - static_cast<double>(counts[k]);
    total += counts[k];
  }
  while (total < n) {
    int best = 0;
    for (int k = 1; k < 3; ++k)
      if (fracs[k] > fracs[best]) best = k;
    ++counts[best];
    fracs[best] = -1;
    ++total;
  }

  std::vector<SceneType> types;
  for (index_t i = 0; i < counts[0]; ++i) types.push_back(SceneType::closeup);
  for (index_t i = 0; i < counts[1]; ++i) types.push_back(SceneType::corridor);
  for (index_t i = 0; i < counts[2]; ++i) types.push_back(SceneType::mixed);
  Rng shuffle_rng(mix_seed(cfg.seed, 0xC0FFEEULL));
  for (index_t i = 0; i < n - 1; ++i) {
    index_t j = i + shuffle_rng.uniform_int(n - i);
    std::swap(types[i], types[j]);
  }

  Corpus corpus;
  const index_t n_val = std::max<index_t>(1, n / 4);
  for (index_t i = 0; i < n; ++i) {
    SceneSample s = generate_scene(types[i], mix_seed(cfg.seed, 1000 + i), cfg);
    if (i < n - n_val)
      corpus.train.push_back(std::move(s));
    else
      corpus.val.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace adabins
