#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "adabins/depth_io.hpp"

using namespace adabins;

namespace {

std::string tmp_dir(const std::string& leaf) {
  auto dir = std::filesystem::temp_directory_path() / "adabins_cli_test" / leaf;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ADABINS_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string write_tiny_config(const std::string& dir, index_t steps) {
  const std::string path = dir + "/tiny.cfg";
  std::ofstream f(path);
  f << "data.n_samples = 6\n"
       "data.height = 16\n"
       "data.width = 16\n"
       "data.seed = 5\n"
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
       "train.steps = " << steps << "\n";
  return path;
}

}  // namespace

TEST_CASE("unknown flags and missing configs exit with code 2") {
  REQUIRE(run_cli("train --no-such-flag") == 2);
  REQUIRE(run_cli("definitely-not-a-subcommand") == 2);
  REQUIRE(run_cli("train --config /nonexistent/missing.cfg") == 2);
}

TEST_CASE("gradcheck subcommand passes and prints per-op lines") {
  const std::string dir = tmp_dir("gradcheck");
  const std::string cmd = std::string(ADABINS_CLI_PATH) + " gradcheck --seed 7 --seeds 1 > " +
                          dir + "/gc.txt 2>&1";
  REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
  std::ifstream f(dir + "/gc.txt");
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  REQUIRE(text.find("[PASS] conv2d") != std::string::npos);
  REQUIRE(text.find("[PASS] full_pipeline") != std::string::npos);
  REQUIRE(text.find("[FAIL]") == std::string::npos);
}

TEST_CASE("train then predict yields a depth file inside the configured range") {
  const std::string dir = tmp_dir("train_predict");
  const std::string cfg = write_tiny_config(dir, 12);
  REQUIRE(run_cli("train --config " + cfg + " --out " + dir + "/run") == 0);
  REQUIRE(std::filesystem::exists(dir + "/run/ckpt_final.adbc"));
  REQUIRE(std::filesystem::exists(dir + "/run/train.log"));

  // generate a corpus to obtain a corridor RGB input
  REQUIRE(run_cli("gen-data --config " + cfg + " --out " + dir + "/corpus") == 0);
  std::string rgb;
  for (const auto& entry : std::filesystem::directory_iterator(dir + "/corpus"))
    if (entry.path().extension() == ".rgb") {
      rgb = entry.path().string();
      break;
    }
  REQUIRE_FALSE(rgb.empty());

  REQUIRE(run_cli("predict --checkpoint " + dir + "/run/ckpt_final.adbc --input " + rgb +
                  " --out " + dir + "/pred --normals") == 0);
  DepthFile depth = read_depth_file(dir + "/pred/depth.adbd");
  REQUIRE(depth.w == 16);
  REQUIRE(depth.h == 16);
  for (float v : depth.data) {
    REQUIRE(v > 0.1f);
    REQUIRE(v < 10.0f);
  }
  REQUIRE(std::filesystem::exists(dir + "/pred/normals.adbn"));
}

TEST_CASE("eval and histogram run from a checkpoint") {
  const std::string dir = tmp_dir("eval_hist");
  const std::string cfg = write_tiny_config(dir, 8);
  REQUIRE(run_cli("train --config " + cfg + " --out " + dir + "/run") == 0);
  REQUIRE(run_cli("eval --checkpoint " + dir + "/run/ckpt_final.adbc --out " + dir + "/eval") ==
          0);
  REQUIRE(std::filesystem::exists(dir + "/eval/metrics.txt"));

  REQUIRE(run_cli("histogram --checkpoint " + dir + "/run/ckpt_final.adbc --out " + dir +
                  "/hist") == 0);
  for (const char* name : {"/hist/gt_hist.txt", "/hist/center_hist.txt"}) {
    std::ifstream f(dir + name);
    REQUIRE(f.good());
    double center, freq, total = 0;
    index_t rows = 0;
    while (f >> center >> freq) {
      total += freq;
      ++rows;
    }
    REQUIRE(rows == 64);
    REQUIRE(total == Catch::Approx(1.0).margin(1e-6));
  }
}

TEST_CASE("histogram centers confirm closeup-vs-corridor adaptivity export format") {
  // format check only; the trend itself is covered by the acceptance suite
  const std::string dir = tmp_dir("hist_fmt");
  const std::string cfg = write_tiny_config(dir, 4);
  REQUIRE(run_cli("train --config " + cfg + " --out " + dir + "/run") == 0);
  REQUIRE(run_cli("histogram --checkpoint " + dir + "/run/ckpt_final.adbc --bins 16 --out " +
                  dir + "/hist") == 0);
  std::ifstream f(dir + "/hist/center_hist.txt");
  index_t rows = 0;
  double a, b;
  while (f >> a >> b) ++rows;
  REQUIRE(rows == 16);
}
