#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <filesystem>

#include "adabins/ablation.hpp"
#include "adabins/trainer.hpp"

using namespace adabins;
using Catch::Approx;

namespace {

std::string tmp_dir(const std::string& leaf) {
  auto dir = std::filesystem::temp_directory_path() / "adabins_trainer_test" / leaf;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

AppConfig tiny_train_config(index_t steps) {
  AppConfig c = parse_config(
      "data.n_samples = 6\n"
      "data.height = 16\n"
      "data.width = 16\n"
      "data.seed = 21\n"
      "model.stages = 2\n"
      "model.base_channels = 4\n"
      "model.decoded_channels = 8\n"
      "model.patch_size = 2\n"
      "model.embed_dim = 8\n"
      "model.layers = 1\n"
      "model.heads = 2\n"
      "model.kernel_count = 8\n"
      "model.mlp_hidden = 16\n"
      "model.head_hidden = 16\n"
      "model.n_bins = 8\n"
      "loss.chamfer_cap = 64\n"
      "train.batch_size = 2\n"
      "train.log_every = 1\n"
      "train.seed = 3\n"
      "train.steps = " + std::to_string(steps) + "\n");
  return c;
}

std::vector<float> flat_params(Trainer<float>& t) {
  std::vector<float> out;
  for (auto& p : t.model().named_params())
    out.insert(out.end(), p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

}  // namespace

TEST_CASE("one training step changes at least one parameter") {
  Trainer<float> trainer(tiny_train_config(1), tmp_dir("one_step"));
  std::vector<float> before = flat_params(trainer);
  trainer.run();
  std::vector<float> after = flat_params(trainer);
  REQUIRE(before.size() == after.size());
  REQUIRE(before != after);
}

TEST_CASE("identical config and seed give bitwise-identical loss logs") {
  Trainer<float> a(tiny_train_config(6), tmp_dir("det_a"));
  a.run();
  Trainer<float> b(tiny_train_config(6), tmp_dir("det_b"));
  b.run();
  REQUIRE(a.log_lines() == b.log_lines());
  REQUIRE(flat_params(a) == flat_params(b));

  AppConfig other = tiny_train_config(6);
  other.train.seed = 4;
  Trainer<float> c(other, tmp_dir("det_c"));
  c.run();
  REQUIRE(a.log_lines() != c.log_lines());
}

TEST_CASE("checkpoint resume continues bitwise-identically") {
  // uninterrupted run to 6 steps, with a mid-run checkpoint at step 3
  AppConfig cfg = tiny_train_config(6);
  cfg.train.checkpoint_every = 3;
  const std::string dir_full = tmp_dir("resume_full");
  Trainer<float> full(cfg, dir_full);
  full.run();

  // resume from the step-3 checkpoint and finish the schedule
  Trainer<float> tail(cfg, tmp_dir("resume_tail"), dir_full + "/ckpt_3.adbc");
  REQUIRE(tail.step() == 3);
  tail.run();

  std::vector<float> a = flat_params(full);
  std::vector<float> b = flat_params(tail);
  REQUIRE(std::memcmp(a.data(), b.data(), a.size() * 4) == 0);

  // the resumed log reproduces the tail of the uninterrupted log
  const auto& full_log = full.log_lines();
  const auto& tail_log = tail.log_lines();
  REQUIRE(tail_log.size() == 3);
  REQUIRE(std::equal(tail_log.begin(), tail_log.end(), full_log.end() - 3));
}

TEST_CASE("training reduces the loss on a tiny overfit run") {
  AppConfig cfg = tiny_train_config(60);
  cfg.train.lr.max_lr = 3e-3;
  Trainer<float> trainer(cfg, tmp_dir("loss_down"));
  trainer.run();
  const auto& log = trainer.log_lines();
  auto loss_of = [](const std::string& line) {
    const size_t pos = line.find("loss=");
    return std::stod(line.substr(pos + 5));
  };
  const double first = loss_of(log.front());
  const double last = loss_of(log.back());
  REQUIRE(last < first);
}

TEST_CASE("validation metric lines appear when requested") {
  AppConfig cfg = tiny_train_config(4);
  cfg.train.val_every = 2;
  Trainer<float> trainer(cfg, tmp_dir("val_lines"));
  trainer.run();
  index_t val_lines = 0;
  for (const auto& line : trainer.log_lines())
    val_lines += line.rfind("val ", 0) == 0;
  REQUIRE(val_lines == 2);
}

TEST_CASE("mirror averaging never beats the worse single orientation on RMS") {
  AppConfig cfg = tiny_train_config(30);
  Trainer<float> trainer(cfg, tmp_dir("mirror"));
  trainer.run();

  EvalProtocol plain = cfg.eval_protocol();
  plain.mirror_average = false;
  EvalProtocol mirrored = cfg.eval_protocol();
  mirrored.mirror_average = true;

  // flipped-only prediction protocol, realized by flipping the samples
  std::vector<SceneSample> flipped = trainer.corpus().val;
  for (auto& s : flipped) {
    std::vector<float> img(s.image.size());
    std::vector<float> dep(s.depth.size());
    std::vector<uint8_t> msk(s.mask.valid.size());
    for (index_t c = 0; c < 3; ++c)
      for (index_t i = 0; i < s.h; ++i)
        for (index_t j = 0; j < s.w; ++j)
          img[(c * s.h + i) * s.w + j] = s.image[(c * s.h + i) * s.w + (s.w - 1 - j)];
    for (index_t i = 0; i < s.h; ++i)
      for (index_t j = 0; j < s.w; ++j) {
        dep[i * s.w + j] = s.depth[i * s.w + (s.w - 1 - j)];
        msk[i * s.w + j] = s.mask.valid[i * s.w + (s.w - 1 - j)];
      }
    s.image = std::move(img);
    s.depth = std::move(dep);
    s.mask.valid = std::move(msk);
  }

  MetricReport straight = evaluate(trainer.model(), trainer.corpus().val, plain);
  MetricReport mirror_only = evaluate(trainer.model(), flipped, plain);
  MetricReport averaged = evaluate(trainer.model(), trainer.corpus().val, mirrored);
  REQUIRE(averaged.rms <= std::max(straight.rms, mirror_only.rms) + 1e-9);
}

TEST_CASE("ablation variant list matches the five named designs") {
  AppConfig base = tiny_train_config(2);
  auto variants = ablation_variants(base);
  REQUIRE(variants.size() == 5);
  REQUIRE(variants[0].first == "Base+R");
  REQUIRE(variants[0].second.model.kind == ModelKind::regression);
  REQUIRE(variants[1].first == "Base+Uniform-Fix-HR");
  REQUIRE(variants[2].first == "Base+Log-Fix-HR");
  REQUIRE(variants[3].first == "Base+Train-Fix-HR");
  REQUIRE(variants[3].second.model.bin_kind == BinKind::train_fix);
  REQUIRE(variants[4].first == "Base+AdaBins-HR");
  REQUIRE(variants[4].second.model.bin_kind == BinKind::adaptive);
}

TEST_CASE("train_fix centers move during training") {
  AppConfig cfg = tiny_train_config(15);
  cfg.model.bin_kind = BinKind::train_fix;
  Trainer<float> trainer(cfg, tmp_dir("train_fix"));
  auto& raw = trainer.model().bins.trained_raw;
  std::vector<float> before = raw.data();
  trainer.run();
  REQUIRE(raw.data() != before);
}
