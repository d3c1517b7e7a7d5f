#include <catch2/catch_amalgamated.hpp>

#include "adabins/conv.hpp"
#include "adabins/ops.hpp"

using namespace adabins;

using Catch::Approx;

namespace {

Tensor<float> tf(Shape s, std::vector<float> v, bool rg = false) {
  return Tensor<float>::from_data(std::move(s), std::move(v), rg);
}

}  // namespace

TEST_CASE("conv2d all-ones 3x3 sums to 9") {
  auto x = tf({1, 1, 3, 3}, std::vector<float>(9, 1.0f));
  auto k = tf({1, 1, 3, 3}, std::vector<float>(9, 1.0f));
  auto y = conv2d(x, k, 1, 0);
  REQUIRE(y.shape() == Shape{1, 1, 1, 1});
  REQUIRE(y.item() == Approx(9.0f));
}

TEST_CASE("conv2d with identity 1x1 kernel is the identity map") {
  Rng rng(3);
  auto x = Tensor<float>::uniform({2, 1, 4, 5}, rng, -2.0f, 2.0f);
  auto k = tf({1, 1, 1, 1}, {1.0f});
  auto y = conv2d(x, k, 1, 0);
  REQUIRE(y.shape() == x.shape());
  for (index_t i = 0; i < x.numel(); ++i) REQUIRE(y.data()[i] == x.data()[i]);
}

TEST_CASE("conv2d output extents follow floor((H+2p-k)/s)+1") {
  Rng rng(4);
  auto x = Tensor<float>::uniform({1, 2, 11, 7}, rng, -1.0f, 1.0f);
  auto k = Tensor<float>::uniform({3, 2, 3, 3}, rng, -1.0f, 1.0f);
  auto y = conv2d(x, k, 2, 1);
  REQUIRE(y.shape() == Shape{1, 3, 6, 4});
}

TEST_CASE("conv2d reports offending axes on channel mismatch") {
  auto x = tf({1, 2, 3, 3}, std::vector<float>(18, 0.0f));
  auto k = tf({1, 3, 3, 3}, std::vector<float>(27, 0.0f));
  REQUIRE_THROWS_MATCHES(conv2d(x, k), ShapeError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("axis 1")));
}

TEST_CASE("matmul hand cases") {
  auto eye = tf({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Rng rng(5);
  auto a = Tensor<float>::uniform({3, 3}, rng, -1.0f, 1.0f);
  auto ya = matmul(eye, a);
  for (index_t i = 0; i < 9; ++i) REQUIRE(ya.data()[i] == Approx(a.data()[i]));

  auto m = tf({2, 2}, {1, 2, 3, 4});
  auto v = tf({2, 1}, {1, 1});
  auto y = matmul(m, v);
  REQUIRE(y.data()[0] == Approx(3.0f));
  REQUIRE(y.data()[1] == Approx(7.0f));
}

TEST_CASE("matmul rejects inner-dim mismatch") {
  auto a = tf({2, 3}, std::vector<float>(6, 0.0f));
  auto b = tf({4, 2}, std::vector<float>(8, 0.0f));
  REQUIRE_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("matmul broadcasts batch dims") {
  Rng rng(6);
  auto a = Tensor<float>::uniform({2, 2, 3, 4}, rng, -1.0f, 1.0f);
  auto b = Tensor<float>::uniform({4, 2}, rng, -1.0f, 1.0f);
  auto y = matmul(a, b);
  REQUIRE(y.shape() == Shape{2, 2, 3, 2});
  // spot-check one batch element against a plain 2-D product
  auto a01 = slice(slice(a, 0, 0, 1), 1, 1, 1);
  auto ref = matmul(reshape(a01, {3, 4}), b);
  for (index_t i = 0; i < 6; ++i)
    REQUIRE(y.data()[6 + i] == Approx(ref.data()[i]).margin(1e-6));
}

TEST_CASE("softmax spec cases") {
  auto c = softmax(tf({4}, {2, 2, 2, 2}), 0);
  for (float v : c.data()) REQUIRE(v == Approx(0.25f));

  auto big = softmax(tf({2}, {1000, 1000}), 0);
  REQUIRE(big.data()[0] == Approx(0.5f));
  REQUIRE(big.data()[1] == Approx(0.5f));

  auto t = softmax(tf({2}, {0.0f, std::log(3.0f)}), 0);
  REQUIRE(t.data()[0] == Approx(0.25f).epsilon(1e-5));
  REQUIRE(t.data()[1] == Approx(0.75f).epsilon(1e-5));
}

TEST_CASE("softmax rows sum to 1 and stay nonnegative on random input") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    auto x = Tensor<float>::uniform({3, 8}, rng, -30.0f, 30.0f);
    auto y = softmax(x, 1);
    for (index_t r = 0; r < 3; ++r) {
      float sum = 0;
      for (index_t k = 0; k < 8; ++k) {
        REQUIRE(y.at({r, k}) >= 0.0f);
        sum += y.at({r, k});
      }
      REQUIRE(sum == Approx(1.0f).margin(1e-6));
    }
  }
}

TEST_CASE("activation spec cases") {
  auto r = relu(tf({3}, {-1, 0, 2}));
  REQUIRE(r.data() == std::vector<float>({0, 0, 2}));
  auto l = leaky_relu(tf({1}, {-1}), 0.01f);
  REQUIRE(l.item() == Approx(-0.01f));
}

TEST_CASE("relu and leaky_relu kink derivative convention") {
  auto x = tf({3}, {-1, 0, 2}, true);
  auto loss = sum_all(relu(x));
  loss.backward();
  REQUIRE(x.grad() == std::vector<float>({0, 0, 1}));

  auto x2 = tf({3}, {-1, 0, 2}, true);
  auto loss2 = sum_all(leaky_relu(x2, 0.01f));
  loss2.backward();
  REQUIRE(x2.grad()[0] == Approx(0.01f));
  REQUIRE(x2.grad()[1] == Approx(1.0f));  // slope applies only on x < 0
  REQUIRE(x2.grad()[2] == Approx(1.0f));
}

TEST_CASE("layer_norm constant input returns bias") {
  auto x = tf({2, 3}, {5, 5, 5, 5, 5, 5});
  auto g = tf({3}, {1, 1, 1});
  auto b = tf({3}, {0.5f, -0.5f, 2.0f});
  auto y = layer_norm(x, -1, g, b, 1e-5f);
  for (index_t r = 0; r < 2; ++r)
    for (index_t k = 0; k < 3; ++k) REQUIRE(y.at({r, k}) == Approx(b.data()[k]).margin(1e-4));
}

TEST_CASE("layer_norm (1,3) normalizes to (-1,1)") {
  auto x = tf({2}, {1, 3});
  auto g = tf({2}, {1, 1});
  auto b = tf({2}, {0, 0});
  auto y = layer_norm(x, 0, g, b, 1e-12f);
  REQUIRE(y.data()[0] == Approx(-1.0f).margin(1e-5));
  REQUIRE(y.data()[1] == Approx(1.0f).margin(1e-5));
}

TEST_CASE("bilinear upsample keeps constants and factor 1 is identity") {
  auto c = tf({1, 1, 2, 2}, {3, 3, 3, 3});
  auto up = bilinear_upsample(c, 2);
  for (float v : up.data()) REQUIRE(v == Approx(3.0f));

  Rng rng(8);
  auto x = Tensor<float>::uniform({1, 2, 3, 3}, rng, -1.0f, 1.0f);
  auto same = bilinear_upsample(x, 1);
  for (index_t i = 0; i < x.numel(); ++i) REQUIRE(same.data()[i] == x.data()[i]);
}

TEST_CASE("bilinear upsample matches a per-pixel interpolation oracle") {
  auto x = tf({1, 1, 2, 2}, {0, 1, 2, 3});
  const index_t f = 2;
  auto y = bilinear_upsample(x, f);

  // independent scalar re-implementation of half-pixel-center sampling
  auto sample = [&](double i, double j) {
    auto coord = [&](double s, index_t n) {
      s = std::min(std::max(s, 0.0), static_cast<double>(n - 1));
      index_t lo = static_cast<index_t>(std::floor(s));
      index_t hi = std::min(lo + 1, n - 1);
      return std::tuple<index_t, index_t, double>(lo, hi, s - lo);
    };
    auto [y0, y1, fy] = coord(i, 2);
    auto [x0, x1, fx] = coord(j, 2);
    auto v = [&](index_t r, index_t c) { return static_cast<double>(x.at({0, 0, r, c})); };
    return (1 - fy) * ((1 - fx) * v(y0, x0) + fx * v(y0, x1)) +
           fy * ((1 - fx) * v(y1, x0) + fx * v(y1, x1));
  };
  for (index_t i = 0; i < 4; ++i)
    for (index_t j = 0; j < 4; ++j) {
      const double si = (i + 0.5) / f - 0.5;
      const double sj = (j + 0.5) / f - 0.5;
      REQUIRE(y.at({0, 0, i, j}) == Approx(sample(si, sj)).margin(1e-6));
    }
}

TEST_CASE("backward of sum gives ones; of sum of squares gives 2x") {
  Rng rng(9);
  auto x = Tensor<float>::uniform({7}, rng, -2.0f, 2.0f, true);
  sum_all(x).backward();
  for (float g : x.grad()) REQUIRE(g == Approx(1.0f));

  auto x2 = Tensor<float>::uniform({7}, rng, -2.0f, 2.0f, true);
  sum_all(mul(x2, x2)).backward();
  for (index_t i = 0; i < 7; ++i) REQUIRE(x2.grad()[i] == Approx(2 * x2.data()[i]).margin(1e-6));
}

TEST_CASE("fan-out accumulates: d/dx of f(x)+f(x) is 2 f'(x)") {
  auto x = tf({3}, {1, 2, 3}, true);
  auto f1 = mul(x, x);
  auto once = sum_all(f1);
  once.backward();
  std::vector<float> single = x.grad();

  auto x2 = tf({3}, {1, 2, 3}, true);
  auto f = mul(x2, x2);
  auto twice = add(sum_all(f), sum_all(f));
  twice.backward();
  for (index_t i = 0; i < 3; ++i) REQUIRE(x2.grad()[i] == Approx(2 * single[i]));
}

TEST_CASE("backward rejects non-scalar losses") {
  auto x = tf({3}, {1, 2, 3}, true);
  auto y = mul(x, x);
  REQUIRE_THROWS_AS(y.backward(), UsageError);
}

TEST_CASE("movement ops round values correctly") {
  auto x = tf({2, 3}, {1, 2, 3, 4, 5, 6});
  auto t = permute(x, {1, 0});
  REQUIRE(t.shape() == Shape{3, 2});
  REQUIRE(t.data() == std::vector<float>({1, 4, 2, 5, 3, 6}));

  auto s = slice(x, 1, 1, 2);
  REQUIRE(s.data() == std::vector<float>({2, 3, 5, 6}));

  auto c = cumsum(x, 1);
  REQUIRE(c.data() == std::vector<float>({1, 3, 6, 4, 9, 15}));

  auto r = reshape(x, {3, -1});
  REQUIRE(r.shape() == Shape{3, 2});
}

TEST_CASE("broadcasting add reduces gradients over expanded axes") {
  auto a = tf({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  auto b = tf({3}, {10, 20, 30}, true);
  sum_all(add(a, b)).backward();
  for (float g : a.grad()) REQUIRE(g == Approx(1.0f));
  for (float g : b.grad()) REQUIRE(g == Approx(2.0f));  // summed over the broadcast rows
}

TEST_CASE("finite debug check flags NaN-producing ops") {
  finite_checks_flag() = true;
  auto x = tf({2}, {-1.0f, 4.0f});
  REQUIRE_THROWS_AS(sqrt(x), DomainError);
  finite_checks_flag() = false;
}

TEST_CASE("masked_select drops masked-out garbage entirely") {
  auto x = tf({4}, {1.0f, std::numeric_limits<float>::quiet_NaN(), 3.0f, 4.0f}, true);
  std::vector<uint8_t> mask = {1, 0, 1, 0};
  auto y = masked_select(x, mask);
  REQUIRE(y.data() == std::vector<float>({1, 3}));
  sum_all(y).backward();
  REQUIRE(x.grad() == std::vector<float>({1, 0, 1, 0}));
}
