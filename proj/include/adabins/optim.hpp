#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "adabins/nn.hpp"

namespace adabins {

// 1-cycle policy: linear warm-up from max_lr/start_div to max_lr over the
// first warmup_fraction of steps, then cosine annealing down to
// max_lr/end_div. Evaluated in double regardless of model precision.
struct LRSchedule {
  double max_lr = 3.5e-4;
  double warmup_fraction = 0.3;
  double start_div = 25.0;
  double end_div = 75.0;
  index_t total_steps = 500;
};

inline double lr_at(index_t step, const LRSchedule& s) {
  if (step < 0 || step > s.total_steps)
    throw UsageError("lr_at: step " + std::to_string(step) + " outside [0, " +
                     std::to_string(s.total_steps) + "]");
  const double warmup = s.warmup_fraction * static_cast<double>(s.total_steps);
  const double lo = s.max_lr / s.start_div;
  const double end = s.max_lr / s.end_div;
  const double t = static_cast<double>(step);
  if (t < warmup) return lo + (s.max_lr - lo) * (t / warmup);
  const double span = static_cast<double>(s.total_steps) - warmup;
  const double frac = span > 0 ? (t - warmup) / span : 1.0;
  return end + (s.max_lr - end) * (1.0 + std::cos(3.14159265358979323846 * frac)) / 2.0;
}

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

// Decoupled-weight-decay Adam. Moments are kept in the model's precision;
// the step arithmetic runs in T as well, so a double instantiation can be
// checked against a hand trace to machine accuracy.
template <typename T>
class AdamW {
 public:
  AdamW() = default;
  AdamW(ParamList<T> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].tensor.data().size(), T(0));
      v_[i].assign(params_[i].tensor.data().size(), T(0));
    }
  }

  index_t step_count() const { return t_; }
  ParamList<T>& params() { return params_; }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  // Aborts on any non-finite gradient, naming the offending parameter.
  // Parameters the backward pass never reached (no grad allocated) are
  // skipped by step(), matching the usual lazy-gradient convention.
  void check_grads_finite() const {
    for (const auto& p : params_) {
      if (!p.tensor.has_grad()) continue;
      for (T g : p.tensor.node()->grad)
        if (!std::isfinite(static_cast<double>(g)))
          throw DomainError("optimizer: non-finite gradient in parameter '" + p.name + "'");
    }
  }

  void step(double lr) {
    check_grads_finite();
    ++t_;
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T bc1 = T(1) - static_cast<T>(std::pow(cfg_.beta1, static_cast<double>(t_)));
    const T bc2 = T(1) - static_cast<T>(std::pow(cfg_.beta2, static_cast<double>(t_)));
    const T eps = static_cast<T>(cfg_.eps);
    const T lrT = static_cast<T>(lr);
    const T wd = static_cast<T>(cfg_.weight_decay);
    for (size_t i = 0; i < params_.size(); ++i) {
      if (!params_[i].tensor.has_grad()) continue;
      auto& w = params_[i].tensor.data();
      const auto& g = params_[i].tensor.node()->grad;
      auto& m = m_[i];
      auto& v = v_[i];
      for (size_t j = 0; j < w.size(); ++j) {
        m[j] = b1 * m[j] + (T(1) - b1) * g[j];
        v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
        const T mhat = m[j] / bc1;
        const T vhat = v[j] / bc2;
        w[j] -= lrT * (mhat / (std::sqrt(vhat) + eps) + wd * w[j]);
      }
    }
  }

  // checkpoint access: moments exposed as named blobs
  std::vector<std::vector<T>>& moment1() { return m_; }
  std::vector<std::vector<T>>& moment2() { return v_; }
  void set_step_count(index_t t) { t_ = t; }

 private:
  ParamList<T> params_;
  AdamWConfig cfg_;
  std::vector<std::vector<T>> m_, v_;
  index_t t_ = 0;
};

}  // namespace adabins
