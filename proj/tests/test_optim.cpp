#include <catch2/catch_amalgamated.hpp>

#include "adabins/optim.hpp"

using namespace adabins;
using Catch::Approx;

TEST_CASE("1-cycle schedule hits its pinned endpoints") {
  LRSchedule s;  // max_lr 3.5e-4, warmup 0.3, divs 25/75
  s.total_steps = 1000;
  REQUIRE(lr_at(0, s) == Approx(1.4e-5).epsilon(1e-9));
  REQUIRE(lr_at(300, s) == Approx(3.5e-4).epsilon(1e-9));
  REQUIRE(lr_at(1000, s) == Approx(3.5e-4 / 75.0).epsilon(1e-9));
}

TEST_CASE("schedule is a linear ramp then a cosine") {
  LRSchedule s;
  s.total_steps = 1000;
  // halfway through warmup: midpoint of (max/25, max)
  REQUIRE(lr_at(150, s) == Approx((1.4e-5 + 3.5e-4) / 2).epsilon(1e-9));
  // halfway through the anneal: cos(pi/2) midpoint of (max, max/75)
  const double end = 3.5e-4 / 75.0;
  REQUIRE(lr_at(650, s) == Approx(end + (3.5e-4 - end) * 0.5).epsilon(1e-9));
  // monotone up then monotone down
  for (index_t t = 1; t <= 300; ++t) REQUIRE(lr_at(t, s) >= lr_at(t - 1, s));
  for (index_t t = 301; t <= 1000; ++t) REQUIRE(lr_at(t, s) <= lr_at(t - 1, s));
}

TEST_CASE("schedule rejects out-of-range steps") {
  LRSchedule s;
  s.total_steps = 100;
  REQUIRE_THROWS_AS(lr_at(-1, s), UsageError);
  REQUIRE_THROWS_AS(lr_at(101, s), UsageError);
}

namespace {

ParamList<double> single_param(double value) {
  ParamList<double> params;
  params.push_back({"w", Tensor<double>::from_data({1}, {value}, true)});
  return params;
}

}  // namespace

TEST_CASE("zero gradient and zero decay leave parameters untouched") {
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  AdamW<double> opt(single_param(1.5), cfg);
  opt.params()[0].tensor.grad();  // zero-filled
  opt.step(0.1);
  REQUIRE(opt.params()[0].tensor.item() == 1.5);
}

TEST_CASE("zero gradient with decay d scales weights by (1 - lr*d)") {
  AdamWConfig cfg;
  cfg.weight_decay = 0.01;
  AdamW<double> opt(single_param(2.0), cfg);
  opt.params()[0].tensor.grad();
  opt.step(0.5);
  REQUIRE(opt.params()[0].tensor.item() == Approx(2.0 * (1.0 - 0.5 * 0.01)).epsilon(1e-15));
}

TEST_CASE("3-step scalar trace matches a hand-rolled AdamW to 1e-12") {
  AdamWConfig cfg;  // betas 0.9/0.999, eps 1e-8, wd 1e-2
  const double g = 0.3, lr = 1e-2;
  AdamW<double> opt(single_param(1.0), cfg);

  // independent scalar recurrence
  double w = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 3; ++t) {
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mhat = m / (1.0 - std::pow(0.9, t));
    const double vhat = v / (1.0 - std::pow(0.999, t));
    w -= lr * (mhat / (std::sqrt(vhat) + 1e-8) + 0.01 * w);

    auto& grad = opt.params()[0].tensor.grad();
    grad[0] = g;
    opt.step(lr);
    REQUIRE(opt.params()[0].tensor.item() == Approx(w).margin(1e-12));
  }
  REQUIRE(opt.step_count() == 3);
}

TEST_CASE("non-finite gradients abort with the parameter name") {
  AdamWConfig cfg;
  AdamW<double> opt(single_param(1.0), cfg);
  opt.params()[0].tensor.grad()[0] = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_MATCHES(opt.step(0.1), DomainError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("'w'")));
}
