#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "adabins/checkpoint.hpp"
#include "adabins/config.hpp"
#include "adabins/depth_io.hpp"
#include "adabins/metrics.hpp"
#include "adabins/optim.hpp"

namespace adabins {

namespace detail {

inline std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace detail

// Training orchestration. Everything downstream of (config, seed) is
// functional: batch order, Chamfer subsampling and initialization all derive
// from the seed and the step index, so reruns and checkpoint-resumed runs
// produce bitwise-identical parameter and log streams.
template <typename T = float>
class Trainer {
 public:
  Trainer(AppConfig cfg, std::string out_dir, std::string resume_path = "")
      : cfg_(std::move(cfg)), out_dir_(std::move(out_dir)), rng_(mix_seed(cfg_.train.seed, 0xA11CE)) {
    namespace fs = std::filesystem;
    if (!out_dir_.empty()) fs::create_directories(out_dir_);
    corpus_ = cfg_.data_dir.empty() ? make_corpus(cfg_.data)
                                    : load_corpus(cfg_.data_dir, cfg_.data.d_min, cfg_.data.d_max);
    if (corpus_.train.empty()) throw ConfigError("trainer: empty training split");
    model_ = DepthModel<T>(cfg_.model, cfg_.train.seed);
    opt_ = AdamW<T>(model_.named_params(), cfg_.train.adamw);
    if (!resume_path.empty()) restore(resume_path);
  }

  DepthModel<T>& model() { return model_; }
  const Corpus& corpus() const { return corpus_; }
  const std::vector<std::string>& log_lines() const { return log_; }
  index_t step() const { return step_; }

  // Trains from the current step up to cfg.train.steps.
  void run() {
    std::ofstream log_file;
    if (!out_dir_.empty())
      log_file.open(out_dir_ + "/train.log", step_ > 0 ? std::ios::app : std::ios::trunc);
    const index_t batch = std::min<index_t>(cfg_.train.batch_size,
                                            static_cast<index_t>(corpus_.train.size()));
    const index_t steps_per_epoch =
        std::max<index_t>(1, static_cast<index_t>(corpus_.train.size()) / batch);

    while (step_ < cfg_.train.steps) {
      const index_t epoch = step_ / steps_per_epoch;
      const index_t pos = step_ % steps_per_epoch;
      const std::vector<index_t> order = epoch_order(epoch);
      std::vector<index_t> batch_idx(order.begin() + pos * batch,
                                     order.begin() + (pos + 1) * batch);

      const double lr = lr_at(step_, cfg_.train.lr);
      auto [total, pixel, bins] = train_step(batch_idx, epoch, lr);
      ++step_;

      if (cfg_.train.log_every > 0 &&
          (step_ % cfg_.train.log_every == 0 || step_ == cfg_.train.steps)) {
        std::string line = "step=" + std::to_string(step_) + " lr=" + detail::fmt_g(lr) +
                           " loss=" + detail::fmt_g(total) + " pixel=" + detail::fmt_g(pixel) +
                           " bins=" + detail::fmt_g(bins);
        emit(log_file, line);
      }
      if (cfg_.train.val_every > 0 && step_ % cfg_.train.val_every == 0 &&
          !corpus_.val.empty()) {
        MetricReport r = evaluate(model_, corpus_.val, cfg_.eval_protocol());
        emit(log_file, val_line("val", step_, r));
      }
      if (cfg_.train.checkpoint_every > 0 && step_ % cfg_.train.checkpoint_every == 0 &&
          step_ < cfg_.train.steps)
        save(out_dir_ + "/ckpt_" + std::to_string(step_) + ".adbc");
    }
    if (!out_dir_.empty()) save(out_dir_ + "/ckpt_final.adbc");
  }

  // Checkpoint round-trip; saving at step k and resuming reproduces the
  // uninterrupted run bitwise.
  void save(const std::string& path) {
    Checkpoint ck;
    ck.config_text = render_config(cfg_);
    ck.step = step_;
    ck.opt_step = opt_.step_count();
    ck.rng_state = rng_.save_state();
    auto& params = opt_.params();
    for (size_t i = 0; i < params.size(); ++i) {
      ck.tensors.push_back({params[i].name, to_blob(params[i].tensor.shape(),
                                                    params[i].tensor.data())});
      ck.tensors.push_back({params[i].name + ".m1",
                            to_blob(params[i].tensor.shape(), opt_.moment1()[i])});
      ck.tensors.push_back({params[i].name + ".m2",
                            to_blob(params[i].tensor.shape(), opt_.moment2()[i])});
    }
    save_checkpoint(path, ck);
  }

  void restore(const std::string& path) {
    const Checkpoint ck = load_checkpoint(path);
    step_ = ck.step;
    opt_.set_step_count(ck.opt_step);
    rng_.load_state(ck.rng_state);
    auto& params = opt_.params();
    for (size_t i = 0; i < params.size(); ++i) {
      copy_blob(ck, params[i].name, params[i].tensor.data(), params[i].tensor.shape());
      copy_blob(ck, params[i].name + ".m1", opt_.moment1()[i], params[i].tensor.shape());
      copy_blob(ck, params[i].name + ".m2", opt_.moment2()[i], params[i].tensor.shape());
    }
  }

  static std::string val_line(const char* tag, index_t step, const MetricReport& r) {
    std::string line = std::string(tag) + " step=" + std::to_string(step);
    line += " delta1=" + detail::fmt_g(r.delta1) + " delta2=" + detail::fmt_g(r.delta2) +
            " delta3=" + detail::fmt_g(r.delta3) + " rel=" + detail::fmt_g(r.rel) +
            " rms=" + detail::fmt_g(r.rms) + " log10=" + detail::fmt_g(r.log10) +
            " sq_rel=" + detail::fmt_g(r.sq_rel) + " rmse_log=" + detail::fmt_g(r.rmse_log);
    return line;
  }

 private:
  std::vector<index_t> epoch_order(index_t epoch) const {
    std::vector<index_t> order(corpus_.train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<index_t>(i);
    Rng rng(mix_seed(cfg_.train.seed, 0xE90C0 + static_cast<uint64_t>(epoch)));
    for (index_t i = 0; i < static_cast<index_t>(order.size()) - 1; ++i) {
      index_t j = i + rng.uniform_int(static_cast<index_t>(order.size()) - i);
      std::swap(order[i], order[j]);
    }
    return order;
  }

  struct StepLosses {
    double total, pixel, bins;
  };

  StepLosses train_step(const std::vector<index_t>& batch_idx, index_t epoch, double lr) {
    const index_t B = static_cast<index_t>(batch_idx.size());
    const index_t H = cfg_.data.h, W = cfg_.data.w;
    std::vector<T> image_data;
    image_data.reserve(static_cast<size_t>(B * 3 * H * W));
    for (index_t i : batch_idx) {
      const auto& img = corpus_.train[static_cast<size_t>(i)].image;
      image_data.insert(image_data.end(), img.begin(), img.end());
    }
    Tensor<T> images = Tensor<T>::from_data({B, 3, H, W}, std::move(image_data));

    ForwardResult<T> out = model_.forward(images);
    Tensor<T> total;
    double pixel_acc = 0, bins_acc = 0;
    for (index_t bi = 0; bi < B; ++bi) {
      const SceneSample& s = corpus_.train[static_cast<size_t>(batch_idx[bi])];
      Tensor<T> pred = slice(out.depth, 0, bi, 1);
      std::vector<T> gt_data(s.depth.begin(), s.depth.end());
      Tensor<T> gt = Tensor<T>::from_data({1, 1, H, W}, std::move(gt_data));

      Tensor<T> pixel_loss;
      if (cfg_.loss_kind == LossKind::l1ssim)
        pixel_loss = l1_ssim_loss(pred, gt, s.mask, cfg_.data.d_max - cfg_.data.d_min);
      else
        pixel_loss = si_loss(pred, gt, s.mask, cfg_.loss);
      pixel_acc += static_cast<double>(pixel_loss.item());

      Tensor<T> sample_loss = pixel_loss;
      if (cfg_.loss_kind == LossKind::si_bins && cfg_.loss.beta > 0) {
        const index_t row = out.centers.shape()[0] == 1 ? 0 : bi;
        Tensor<T> centers_row = slice(out.centers, 0, row, 1);
        const uint64_t seed =
            mix_seed(mix_seed(cfg_.train.seed, 0x5EED00 + static_cast<uint64_t>(epoch)),
                     static_cast<uint64_t>(batch_idx[bi]));
        Tensor<T> bins_loss = chamfer_bins_loss(centers_row, gt, s.mask, cfg_.loss, seed);
        bins_acc += static_cast<double>(bins_loss.item());
        sample_loss = add(sample_loss, mul_scalar(bins_loss, static_cast<T>(cfg_.loss.beta)));
      }
      total = total.defined() ? add(total, sample_loss) : sample_loss;
    }
    total = mul_scalar(total, T(1) / static_cast<T>(B));
    const double total_v = static_cast<double>(total.item());
    if (!std::isfinite(total_v)) throw DomainError("trainer: non-finite loss at step " +
                                                   std::to_string(step_ + 1));

    opt_.zero_grad();
    total.backward();
    opt_.step(lr);
    return {total_v, pixel_acc / static_cast<double>(B), bins_acc / static_cast<double>(B)};
  }

  void emit(std::ofstream& file, const std::string& line) {
    log_.push_back(line);
    if (file.is_open()) file << line << "\n" << std::flush;
  }

  static CheckpointBlob to_blob(const Shape& shape, const std::vector<T>& data) {
    CheckpointBlob b;
    b.shape = shape;
    b.data.assign(data.begin(), data.end());
    return b;
  }

  void copy_blob(const Checkpoint& ck, const std::string& name, std::vector<T>& dst,
                 const Shape& expect_shape) {
    const CheckpointBlob* blob = ck.find(name);
    if (!blob) throw ConfigError("checkpoint: missing tensor '" + name + "'");
    if (blob->shape != expect_shape)
      throw ConfigError("checkpoint: tensor '" + name + "' has shape " + shape_str(blob->shape) +
                        ", model expects " + shape_str(expect_shape));
    dst.assign(blob->data.begin(), blob->data.end());
  }

  AppConfig cfg_;
  std::string out_dir_;
  Corpus corpus_;
  DepthModel<T> model_;
  AdamW<T> opt_;
  Rng rng_;
  index_t step_ = 0;
  std::vector<std::string> log_;
};

// Builds a model from the config embedded in a checkpoint and loads its
// weights (optimizer state ignored); for eval / predict / histogram flows.
template <typename T = float>
std::pair<DepthModel<T>, AppConfig> model_from_checkpoint(const std::string& path) {
  const Checkpoint ck = load_checkpoint(path);
  AppConfig cfg = parse_config(ck.config_text);
  DepthModel<T> model(cfg.model, cfg.train.seed);
  ParamList<T> params = model.named_params();
  for (auto& p : params) {
    const CheckpointBlob* blob = ck.find(p.name);
    if (!blob) throw ConfigError("checkpoint: missing tensor '" + p.name + "'");
    if (blob->shape != p.tensor.shape())
      throw ConfigError("checkpoint: tensor '" + p.name + "' shape mismatch");
    p.tensor.data().assign(blob->data.begin(), blob->data.end());
  }
  return {std::move(model), std::move(cfg)};
}

}  // namespace adabins
