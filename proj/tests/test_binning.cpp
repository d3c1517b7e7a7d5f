#include <catch2/catch_amalgamated.hpp>

#include "adabins/binning.hpp"

using namespace adabins;
using Catch::Approx;

TEST_CASE("uniform_fix gives 1/N everywhere") {
  BinStrategy<float> s(BinKind::uniform_fix, 4, 0.0, 10.0);
  auto w = s.widths_for(nullptr);
  REQUIRE(w.shape() == Shape{1, 4});
  for (float v : w.data()) REQUIRE(v == Approx(0.25f));
}

TEST_CASE("log_fix matches the closed-form log-spaced edges") {
  // d_low = 0.1 * d_max (via d_min), N = 2: edges d_low, sqrt(0.1)*d_max, d_max
  const double d_max = 10.0, d_low = 1.0;
  BinStrategy<double> s(BinKind::log_fix, 2, d_low, d_max);
  auto w = s.widths_for(nullptr);
  const double mid = std::sqrt(0.1) * d_max;
  const double span = d_max - d_low;
  REQUIRE(w.data()[0] == Approx((mid - d_low) / span).epsilon(1e-12));
  REQUIRE(w.data()[1] == Approx((d_max - mid) / span).epsilon(1e-12));

  // general case vs an independent scalar edge computation
  const index_t n = 7;
  BinStrategy<double> s7(BinKind::log_fix, n, 0.0, 8.0, 1e-2);
  auto w7 = s7.widths_for(nullptr);
  const double lo = std::max(0.0, 1e-2 * 8.0);
  double prev = lo;
  double sum = 0;
  for (index_t i = 0; i < n; ++i) {
    const double edge =
        std::exp(std::log(lo) + (std::log(8.0) - std::log(lo)) * (i + 1.0) / n);
    REQUIRE(w7.data()[static_cast<size_t>(i)] ==
            Approx((edge - prev) / (8.0 - lo)).epsilon(1e-9));
    sum += w7.data()[static_cast<size_t>(i)];
    prev = edge;
  }
  REQUIRE(sum == Approx(1.0).margin(1e-9));
}

TEST_CASE("train_fix starts uniform at zero parameters and carries gradients") {
  BinStrategy<float> s(BinKind::train_fix, 5, 0.1, 10.0);
  auto w = s.widths_for(nullptr);
  for (float v : w.data()) REQUIRE(v == Approx(0.2f));

  // widths are differentiable in the raw parameter
  sum_all(mul(w, w)).backward();
  REQUIRE(s.trained_raw.has_grad());
}

TEST_CASE("adaptive requires the head output; fixed kinds ignore it") {
  BinStrategy<float> adaptive(BinKind::adaptive, 4, 0.1, 10.0);
  REQUIRE_THROWS_AS(adaptive.widths_for(nullptr), UsageError);
  auto head = normalize_bin_widths(Tensor<float>::from_data({2, 4}, {1, 2, 3, 4, 4, 3, 2, 1}));
  auto w = adaptive.widths_for(&head);
  REQUIRE(w.shape() == Shape{2, 4});

  BinStrategy<float> uni(BinKind::uniform_fix, 4, 0.1, 10.0);
  auto w2 = uni.widths_for(&head);  // context ignored
  for (float v : w2.data()) REQUIRE(v == Approx(0.25f));
}

TEST_CASE("every kind produces positive rows summing to 1") {
  Rng rng(3);
  auto head = normalize_bin_widths(Tensor<float>::uniform({3, 16}, rng, 0.0f, 2.0f));
  for (BinKind kind : {BinKind::uniform_fix, BinKind::log_fix, BinKind::train_fix,
                       BinKind::adaptive}) {
    BinStrategy<float> s(kind, 16, 0.05, 12.0);
    auto w = s.widths_for(&head);
    const index_t rows = w.shape()[0];
    for (index_t r = 0; r < rows; ++r) {
      float sum = 0;
      for (index_t k = 0; k < 16; ++k) {
        REQUIRE(w.at({r, k}) > 0.0f);
        sum += w.at({r, k});
      }
      REQUIRE(sum == Approx(1.0f).margin(1e-6));
    }
  }
}

TEST_CASE("fixed kinds are image-independent, adaptive is not") {
  Rng rng(4);
  auto head = normalize_bin_widths(Tensor<float>::uniform({4, 8}, rng, 0.0f, 2.0f));
  BinStrategy<float> uni(BinKind::uniform_fix, 8, 0.1, 10.0);
  BinStrategy<float> log(BinKind::log_fix, 8, 0.1, 10.0);
  REQUIRE(uni.widths_for(&head).shape()[0] == 1);  // one shared row
  REQUIRE(log.widths_for(&head).shape()[0] == 1);

  BinStrategy<float> ada(BinKind::adaptive, 8, 0.1, 10.0);
  auto w = ada.widths_for(&head);
  REQUIRE(w.shape()[0] == 4);  // one row per image
  bool differs = false;
  for (index_t k = 0; k < 8 && !differs; ++k)
    differs = std::abs(w.at({0, k}) - w.at({1, k})) > 1e-7f;
  REQUIRE(differs);
}
