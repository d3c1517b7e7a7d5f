#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "adabins/mini_vit.hpp"

namespace adabins {

// The four bin-width designs behind one interface: fixed uniform, fixed
// log-spaced, trained-but-shared, and per-image adaptive.
enum class BinKind { uniform_fix, log_fix, train_fix, adaptive };

inline BinKind bin_kind_from_string(const std::string& s) {
  if (s == "uniform_fix") return BinKind::uniform_fix;
  if (s == "log_fix") return BinKind::log_fix;
  if (s == "train_fix") return BinKind::train_fix;
  if (s == "adaptive") return BinKind::adaptive;
  throw ConfigError("bins.kind must be uniform_fix|log_fix|train_fix|adaptive, got '" + s + "'");
}

inline std::string to_string(BinKind k) {
  switch (k) {
    case BinKind::uniform_fix: return "uniform_fix";
    case BinKind::log_fix: return "log_fix";
    case BinKind::train_fix: return "train_fix";
    case BinKind::adaptive: return "adaptive";
  }
  return "?";
}

template <typename T>
Tensor<T> uniform_widths(index_t n_bins) {
  return Tensor<T>({1, n_bins}, static_cast<T>(1.0 / static_cast<double>(n_bins)));
}

// Edges equally spaced in log depth over [d_low, d_max]; widths are the
// normalized edge gaps. d_low = max(d_min, d_low_factor * d_max) keeps the
// log well defined when d_min is at or near zero.
template <typename T>
Tensor<T> log_fix_widths(index_t n_bins, double d_min, double d_max,
                         double d_low_factor = 1e-3) {
  const double d_low = std::max(d_min, d_low_factor * d_max);
  if (d_low <= 0 || d_low >= d_max)
    throw ConfigError("log_fix: need 0 < d_low < d_max, got d_low=" + std::to_string(d_low));
  const double log_lo = std::log(d_low), log_hi = std::log(d_max);
  std::vector<T> w(static_cast<size_t>(n_bins));
  const double span = d_max - d_low;
  double prev = d_low;
  for (index_t i = 1; i <= n_bins; ++i) {
    const double edge = std::exp(log_lo + (log_hi - log_lo) * static_cast<double>(i) /
                                              static_cast<double>(n_bins));
    w[static_cast<size_t>(i - 1)] = static_cast<T>((edge - prev) / span);
    prev = edge;
  }
  return Tensor<T>::from_data({1, n_bins}, std::move(w));
}

template <typename T>
struct BinStrategy {
  BinKind kind = BinKind::adaptive;
  index_t n_bins = 64;
  double d_min = 0.1, d_max = 10.0;
  double d_low_factor = 1e-3;
  Tensor<T> trained_raw;  // train_fix only; zero init -> uniform start

  BinStrategy() = default;
  BinStrategy(BinKind k, index_t n, double dmin, double dmax, double low_factor = 1e-3)
      : kind(k), n_bins(n), d_min(dmin), d_max(dmax), d_low_factor(low_factor) {
    if (!(d_min >= 0) || d_min >= d_max)
      throw ConfigError("bin strategy: need 0 <= d_min < d_max");
    if (kind == BinKind::train_fix) trained_raw = init_zeros<T>({1, n_bins});
  }

  // adaptive_widths: the mViT head output for this batch; required for the
  // adaptive kind and ignored by every other kind.
  Tensor<T> widths_for(const Tensor<T>* adaptive_widths) const {
    switch (kind) {
      case BinKind::uniform_fix:
        return uniform_widths<T>(n_bins);
      case BinKind::log_fix:
        return log_fix_widths<T>(n_bins, d_min, d_max, d_low_factor);
      case BinKind::train_fix:
        return normalize_bin_widths(trained_raw);
      case BinKind::adaptive:
        if (adaptive_widths == nullptr)
          throw UsageError("adaptive bins require the mViT head output");
        return *adaptive_widths;
    }
    throw UsageError("unknown bin kind");
  }

  void collect(const std::string& prefix, ParamList<T>& out) {
    if (kind == BinKind::train_fix) out.push_back({prefix + ".raw", trained_raw});
  }
};

}  // namespace adabins
