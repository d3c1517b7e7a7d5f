#include <catch2/catch_amalgamated.hpp>

#include "adabins/gradcheck.hpp"

using namespace adabins;

TEST_CASE("per-op gradients match central finite differences over 10 seeds") {
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    auto cases = run_op_gradcheck(seed);
    for (const auto& c : cases) {
      INFO("op " << c.name << " seed " << seed << " max_rel_err " << c.max_rel_err
                 << " kink_skipped " << c.kink_skipped << "/" << c.checked);
      CHECK(c.passed());
    }
  }
}

TEST_CASE("full pipeline gradients match finite differences (2-sample 16x16 batch)") {
  GradCheckCase c = check_full_pipeline(/*seed=*/3, /*batch=*/2);
  INFO("max_rel_err " << c.max_rel_err << " kink_skipped " << c.kink_skipped << "/"
                      << c.checked);
  CHECK(c.passed());
  CHECK(c.checked > 1000);  // every parameter coordinate probed
}
