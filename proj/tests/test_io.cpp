#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <filesystem>

#include "adabins/checkpoint.hpp"
#include "adabins/config.hpp"
#include "adabins/depth_io.hpp"

using namespace adabins;
using Catch::Approx;

namespace {

std::string tmp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "adabins_io_test";
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace

TEST_CASE("config: defaults load from empty text") {
  AppConfig c = parse_config("");
  REQUIRE(c.data.n_samples == 64);
  REQUIRE(c.model.mvit.n_bins == 64);
  REQUIRE(c.loss.lambda == 0.85);
  REQUIRE(c.train.lr.max_lr == Approx(3.5e-4));
  REQUIRE(c.model.backbone.input_h == c.data.h);
}

TEST_CASE("config: values, comments and whitespace parse") {
  AppConfig c = parse_config(
      "# comment line\n"
      "data.height = 16   # trailing comment\n"
      "data.width=16\n"
      "model.kernel_count = 8\n"
      "model.n_bins = 8\n"
      "bins.kind = log_fix\n"
      "loss.kind = si\n"
      "train.steps = 42\n");
  REQUIRE(c.data.h == 16);
  REQUIRE(c.model.mvit.n_bins == 8);
  REQUIRE(c.model.bin_kind == BinKind::log_fix);
  REQUIRE(c.loss_kind == LossKind::si);
  REQUIRE(c.train.steps == 42);
  REQUIRE(c.train.lr.total_steps == 42);
}

TEST_CASE("config: unknown keys are errors") {
  REQUIRE_THROWS_MATCHES(parse_config("data.heihgt = 16\n"), ConfigError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("data.heihgt")));
  REQUIRE_THROWS_AS(parse_config("notakey = 3\n"), ConfigError);
  REQUIRE_THROWS_AS(parse_config("train.steps = abc\n"), ConfigError);
}

TEST_CASE("config: cross-field validation") {
  REQUIRE_THROWS_AS(parse_config("model.kind = regression\nloss.kind = si+bins\n"),
                    ConfigError);
  REQUIRE_THROWS_AS(parse_config("data.height = 30\n"), ConfigError);  // 30 % 8 != 0
  REQUIRE_THROWS_AS(parse_config("model.kernel_count = 100\n"), ConfigError);  // S too short
}

TEST_CASE("config: render/parse round trip") {
  AppConfig c = parse_config("data.height = 16\ndata.width = 16\nmodel.kernel_count = 8\n"
                             "model.n_bins = 12\neval.crop = 1 15 2 14\ntrain.seed = 99\n");
  AppConfig c2 = parse_config(render_config(c));
  REQUIRE(render_config(c2) == render_config(c));
  REQUIRE(c2.model.mvit.n_bins == 12);
  REQUIRE(c2.eval_crop.row0 == 1);
  REQUIRE(c2.train.seed == 99);
}

TEST_CASE("depth file round-trips bitwise, including the NaN mask") {
  const std::string path = tmp_dir() + "/depth.adbd";
  Rng rng(1);
  std::vector<float> data(6 * 4);
  for (auto& v : data) v = static_cast<float>(rng.uniform(0.1, 10.0));
  data[5] = std::numeric_limits<float>::quiet_NaN();
  data[17] = std::numeric_limits<float>::quiet_NaN();
  write_depth_file(path, 6, 4, data);
  DepthFile f = read_depth_file(path);
  REQUIRE(f.w == 6);
  REQUIRE(f.h == 4);
  REQUIRE(std::memcmp(f.data.data(), data.data(), data.size() * 4) == 0);
}

TEST_CASE("depth file header is the documented byte layout") {
  const std::string path = tmp_dir() + "/hdr.adbd";
  write_depth_file(path, 3, 2, std::vector<float>(6, 1.0f));
  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  REQUIRE(bytes.size() == 14 + 6 * 4);
  REQUIRE(bytes.compare(0, 4, "ADBD") == 0);
  REQUIRE(static_cast<unsigned char>(bytes[4]) == 1);  // version u16 LE
  REQUIRE(static_cast<unsigned char>(bytes[5]) == 0);
  REQUIRE(static_cast<unsigned char>(bytes[6]) == 3);  // width u32 LE
  REQUIRE(static_cast<unsigned char>(bytes[10]) == 2);  // height u32 LE
}

TEST_CASE("depth file reader rejects bad magic and truncation") {
  const std::string path = tmp_dir() + "/bad.adbd";
  detail::write_file(path, "NOPE");
  REQUIRE_THROWS_AS(read_depth_file(path), ConfigError);
  detail::write_file(path, std::string("ADBD") + std::string(9, '\0'));
  REQUIRE_THROWS_AS(read_depth_file(path), ConfigError);
}

TEST_CASE("rgb raw round-trips through 8-bit quantization") {
  const std::string path = tmp_dir() + "/img.rgb";
  Rng rng(2);
  std::vector<float> img(3 * 4 * 5);
  for (auto& v : img) v = static_cast<float>(rng.uniform());
  write_rgb_raw(path, 5, 4, img);
  std::vector<float> back = read_rgb_raw(path, 5, 4);
  for (size_t i = 0; i < img.size(); ++i)
    REQUIRE(back[i] == Approx(img[i]).margin(0.5 / 255.0 + 1e-6));
}

TEST_CASE("corpus save/load preserves depth bitwise and masks exactly") {
  CorpusConfig cfg;
  cfg.n_samples = 4;
  cfg.h = 16;
  cfg.w = 16;
  cfg.seed = 5;
  cfg.invalid_fraction = 0.1;
  Corpus corpus = make_corpus(cfg);
  const std::string dir = tmp_dir() + "/corpus";
  save_corpus(dir, corpus);
  Corpus loaded = load_corpus(dir, cfg.d_min, cfg.d_max);
  REQUIRE(loaded.train.size() == corpus.train.size());
  REQUIRE(loaded.val.size() == corpus.val.size());
  for (size_t i = 0; i < corpus.train.size(); ++i) {
    REQUIRE(std::memcmp(loaded.train[i].depth.data(), corpus.train[i].depth.data(),
                        corpus.train[i].depth.size() * 4) == 0);
    REQUIRE(loaded.train[i].mask.valid == corpus.train[i].mask.valid);
    REQUIRE(loaded.train[i].scene_type == corpus.train[i].scene_type);
  }
}

TEST_CASE("checkpoint round-trips tensors bitwise with step and rng state") {
  Checkpoint ck;
  ck.config_text = "train.steps = 7\n";
  ck.step = 5;
  ck.opt_step = 5;
  Rng rng(99);
  rng.next_u64();
  ck.rng_state = rng.save_state();
  Rng data_rng(3);
  CheckpointBlob blob;
  blob.shape = {2, 3};
  for (int i = 0; i < 6; ++i) blob.data.push_back(static_cast<float>(data_rng.uniform(-1, 1)));
  ck.tensors.push_back({"layer.w", blob});
  CheckpointBlob scalar;
  scalar.shape = {1};
  scalar.data = {42.0f};
  ck.tensors.push_back({"layer.b", scalar});

  const std::string path = tmp_dir() + "/ck.adbc";
  save_checkpoint(path, ck);
  Checkpoint back = load_checkpoint(path);
  REQUIRE(back.config_text == ck.config_text);
  REQUIRE(back.step == 5);
  REQUIRE(back.rng_state == ck.rng_state);
  REQUIRE(back.tensors.size() == 2);
  REQUIRE(back.find("layer.w") != nullptr);
  REQUIRE(back.find("layer.w")->shape == Shape{2, 3});
  REQUIRE(std::memcmp(back.find("layer.w")->data.data(), blob.data.data(), 6 * 4) == 0);
  REQUIRE(back.find("layer.b")->data[0] == 42.0f);
  REQUIRE(back.find("missing") == nullptr);
}

TEST_CASE("rng state round-trips through text") {
  Rng a(12345);
  a.uniform();
  a.normal();
  const std::string state = a.save_state();
  Rng b(0);
  b.load_state(state);
  for (int i = 0; i < 10; ++i) REQUIRE(a.next_u64() == b.next_u64());
}
