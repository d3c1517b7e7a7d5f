#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "adabins/adabins_model.hpp"
#include "adabins/losses.hpp"
#include "adabins/metrics.hpp"
#include "adabins/optim.hpp"
#include "adabins/synthdata.hpp"

namespace adabins {

enum class LossKind { si, si_bins, l1ssim };

inline LossKind loss_kind_from_string(const std::string& s) {
  if (s == "si") return LossKind::si;
  if (s == "si+bins") return LossKind::si_bins;
  if (s == "l1ssim") return LossKind::l1ssim;
  throw ConfigError("loss.kind must be si|si+bins|l1ssim, got '" + s + "'");
}

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::si: return "si";
    case LossKind::si_bins: return "si+bins";
    case LossKind::l1ssim: return "l1ssim";
  }
  return "?";
}

struct TrainConfig {
  index_t steps = 500;
  index_t batch_size = 4;
  uint64_t seed = 1;
  LRSchedule lr;
  AdamWConfig adamw;
  index_t log_every = 10;
  index_t val_every = 0;        // 0 = no periodic validation
  index_t checkpoint_every = 0;  // 0 = final checkpoint only
};

struct AppConfig {
  CorpusConfig data;
  std::string data_dir;  // when set, the corpus is loaded instead of generated
  ModelConfig model;
  LossKind loss_kind = LossKind::si_bins;
  LossConfig loss;
  TrainConfig train;
  bool eval_mirror = true;
  CropRect eval_crop;  // empty = full image
  bool eval_argmax = false;
  index_t hist_bins = 64;

  EvalProtocol eval_protocol() const {
    EvalProtocol p;
    p.crop = eval_crop;
    p.mirror_average = eval_mirror;
    p.clamp_min = data.d_min;
    p.clamp_max = data.d_max;
    return p;
  }
};

namespace detail {

// Line format: `section.key = value`, '#' starts a comment. Unknown keys are
// errors, caught after every known key has been consumed.
class KeyValueReader {
 public:
  explicit KeyValueReader(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    index_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto trim = [](std::string s) {
        const char* ws = " \t\r\n";
        const size_t b = s.find_first_not_of(ws);
        if (b == std::string::npos) return std::string();
        const size_t e = s.find_last_not_of(ws);
        return s.substr(b, e - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      const size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.find('.') == std::string::npos)
        throw ConfigError("config line " + std::to_string(lineno) + ": key '" + key +
                          "' must be section.key");
      kv_[key] = value;
    }
  }

  std::string get_string(const std::string& key, const std::string& dflt) {
    consumed_.insert(key);
    auto it = kv_.find(key);
    return it == kv_.end() ? dflt : it->second;
  }

  double get_double(const std::string& key, double dflt) {
    consumed_.insert(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    try {
      size_t pos = 0;
      double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config: '" + key + "' expects a number, got '" + it->second + "'");
    }
  }

  index_t get_int(const std::string& key, index_t dflt) {
    consumed_.insert(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    try {
      size_t pos = 0;
      long long v = std::stoll(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config: '" + key + "' expects an integer, got '" + it->second + "'");
    }
  }

  uint64_t get_u64(const std::string& key, uint64_t dflt) {
    consumed_.insert(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    try {
      size_t pos = 0;
      unsigned long long v = std::stoull(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config: '" + key + "' expects an unsigned integer, got '" +
                        it->second + "'");
    }
  }

  bool get_bool(const std::string& key, bool dflt) {
    consumed_.insert(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("config: '" + key + "' expects true|false, got '" + it->second + "'");
  }

  void finish() const {
    std::string unknown;
    for (const auto& [k, v] : kv_)
      if (!consumed_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
    if (!unknown.empty()) throw ConfigError("config: unknown keys: " + unknown);
  }

 private:
  std::map<std::string, std::string> kv_;
  std::set<std::string> consumed_;
};

}  // namespace detail

inline AppConfig parse_config(const std::string& text) {
  detail::KeyValueReader r(text);
  AppConfig c;

  c.data.n_samples = r.get_int("data.n_samples", c.data.n_samples);
  c.data.h = r.get_int("data.height", c.data.h);
  c.data.w = r.get_int("data.width", c.data.w);
  c.data.seed = r.get_u64("data.seed", c.data.seed);
  c.data.mix_closeup = r.get_double("data.mix_closeup", c.data.mix_closeup);
  c.data.mix_corridor = r.get_double("data.mix_corridor", c.data.mix_corridor);
  c.data.mix_mixed = r.get_double("data.mix_mixed", c.data.mix_mixed);
  c.data.invalid_fraction = r.get_double("data.invalid_fraction", c.data.invalid_fraction);
  c.data.d_min = r.get_double("data.d_min", c.data.d_min);
  c.data.d_max = r.get_double("data.d_max", c.data.d_max);
  c.data_dir = r.get_string("data.dir", "");

  c.model.kind = model_kind_from_string(r.get_string("model.kind", "adabins"));
  c.model.backbone.stages = r.get_int("model.stages", c.model.backbone.stages);
  c.model.backbone.base_channels = r.get_int("model.base_channels", c.model.backbone.base_channels);
  c.model.backbone.decoded_channels =
      r.get_int("model.decoded_channels", c.model.backbone.decoded_channels);
  c.model.mvit.patch_size = r.get_int("model.patch_size", c.model.mvit.patch_size);
  c.model.mvit.embed_dim = r.get_int("model.embed_dim", c.model.mvit.embed_dim);
  c.model.mvit.layers = r.get_int("model.layers", c.model.mvit.layers);
  c.model.mvit.heads = r.get_int("model.heads", c.model.mvit.heads);
  c.model.mvit.kernel_count = r.get_int("model.kernel_count", c.model.mvit.kernel_count);
  c.model.mvit.mlp_hidden = r.get_int("model.mlp_hidden", c.model.mvit.mlp_hidden);
  c.model.mvit.head_hidden = r.get_int("model.head_hidden", c.model.mvit.head_hidden);
  c.model.mvit.n_bins = r.get_int("model.n_bins", c.model.mvit.n_bins);
  c.model.bin_kind = bin_kind_from_string(r.get_string("bins.kind", "adaptive"));
  c.model.bin_d_low_factor = r.get_double("bins.d_low_factor", c.model.bin_d_low_factor);

  c.loss_kind = loss_kind_from_string(r.get_string("loss.kind", "si+bins"));
  c.loss.lambda = r.get_double("loss.lambda", c.loss.lambda);
  c.loss.alpha = r.get_double("loss.alpha", c.loss.alpha);
  c.loss.beta = r.get_double("loss.beta", c.loss.beta);
  c.loss.chamfer_sample_cap = r.get_int("loss.chamfer_cap", c.loss.chamfer_sample_cap);

  c.train.steps = r.get_int("train.steps", c.train.steps);
  c.train.batch_size = r.get_int("train.batch_size", c.train.batch_size);
  c.train.seed = r.get_u64("train.seed", c.train.seed);
  c.train.lr.max_lr = r.get_double("train.max_lr", c.train.lr.max_lr);
  c.train.lr.warmup_fraction = r.get_double("train.warmup_fraction", c.train.lr.warmup_fraction);
  c.train.lr.start_div = r.get_double("train.start_div", c.train.lr.start_div);
  c.train.lr.end_div = r.get_double("train.end_div", c.train.lr.end_div);
  c.train.adamw.weight_decay = r.get_double("train.weight_decay", c.train.adamw.weight_decay);
  c.train.adamw.beta1 = r.get_double("train.beta1", c.train.adamw.beta1);
  c.train.adamw.beta2 = r.get_double("train.beta2", c.train.adamw.beta2);
  c.train.adamw.eps = r.get_double("train.eps", c.train.adamw.eps);
  c.train.log_every = r.get_int("train.log_every", c.train.log_every);
  c.train.val_every = r.get_int("train.val_every", c.train.val_every);
  c.train.checkpoint_every = r.get_int("train.checkpoint_every", c.train.checkpoint_every);

  c.eval_mirror = r.get_bool("eval.mirror_average", c.eval_mirror);
  const std::string crop = r.get_string("eval.crop", "");
  if (!crop.empty()) {
    std::istringstream cs(crop);
    if (!(cs >> c.eval_crop.row0 >> c.eval_crop.row1 >> c.eval_crop.col0 >> c.eval_crop.col1))
      throw ConfigError("config: eval.crop expects 'row0 row1 col0 col1'");
  }
  c.eval_argmax = r.get_bool("eval.argmax", c.eval_argmax);
  c.hist_bins = r.get_int("eval.hist_bins", c.hist_bins);

  r.finish();

  // wire shared values and validate cross-section constraints
  c.model.backbone.input_h = c.data.h;
  c.model.backbone.input_w = c.data.w;
  c.model.d_min = c.data.d_min;
  c.model.d_max = c.data.d_max;
  c.data.validate();
  c.loss.validate();
  c.model.backbone.validate();
  if (c.model.kind == ModelKind::adabins)
    c.model.mvit.validate(c.data.h / 2, c.data.w / 2);
  if (c.model.kind == ModelKind::regression && c.loss_kind == LossKind::si_bins)
    throw ConfigError("config: loss.kind si+bins needs bin centers; model.kind regression "
                      "has none (use loss.kind = si)");
  if (c.train.steps < 1 || c.train.batch_size < 1)
    throw ConfigError("config: train.steps and train.batch_size must be >= 1");
  c.train.lr.total_steps = c.train.steps;
  return c;
}

inline AppConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// Canonical serialization; parse_config(render_config(c)) reproduces c.
inline std::string render_config(const AppConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "data.n_samples = " << c.data.n_samples << "\n";
  os << "data.height = " << c.data.h << "\n";
  os << "data.width = " << c.data.w << "\n";
  os << "data.seed = " << c.data.seed << "\n";
  os << "data.mix_closeup = " << c.data.mix_closeup << "\n";
  os << "data.mix_corridor = " << c.data.mix_corridor << "\n";
  os << "data.mix_mixed = " << c.data.mix_mixed << "\n";
  os << "data.invalid_fraction = " << c.data.invalid_fraction << "\n";
  os << "data.d_min = " << c.data.d_min << "\n";
  os << "data.d_max = " << c.data.d_max << "\n";
  if (!c.data_dir.empty()) os << "data.dir = " << c.data_dir << "\n";
  os << "model.kind = " << (c.model.kind == ModelKind::adabins ? "adabins" : "regression") << "\n";
  os << "model.stages = " << c.model.backbone.stages << "\n";
  os << "model.base_channels = " << c.model.backbone.base_channels << "\n";
  os << "model.decoded_channels = " << c.model.backbone.decoded_channels << "\n";
  os << "model.patch_size = " << c.model.mvit.patch_size << "\n";
  os << "model.embed_dim = " << c.model.mvit.embed_dim << "\n";
  os << "model.layers = " << c.model.mvit.layers << "\n";
  os << "model.heads = " << c.model.mvit.heads << "\n";
  os << "model.kernel_count = " << c.model.mvit.kernel_count << "\n";
  os << "model.mlp_hidden = " << c.model.mvit.mlp_hidden << "\n";
  os << "model.head_hidden = " << c.model.mvit.head_hidden << "\n";
  os << "model.n_bins = " << c.model.mvit.n_bins << "\n";
  os << "bins.kind = " << to_string(c.model.bin_kind) << "\n";
  os << "bins.d_low_factor = " << c.model.bin_d_low_factor << "\n";
  os << "loss.kind = " << to_string(c.loss_kind) << "\n";
  os << "loss.lambda = " << c.loss.lambda << "\n";
  os << "loss.alpha = " << c.loss.alpha << "\n";
  os << "loss.beta = " << c.loss.beta << "\n";
  os << "loss.chamfer_cap = " << c.loss.chamfer_sample_cap << "\n";
  os << "train.steps = " << c.train.steps << "\n";
  os << "train.batch_size = " << c.train.batch_size << "\n";
  os << "train.seed = " << c.train.seed << "\n";
  os << "train.max_lr = " << c.train.lr.max_lr << "\n";
  os << "train.warmup_fraction = " << c.train.lr.warmup_fraction << "\n";
  os << "train.start_div = " << c.train.lr.start_div << "\n";
  os << "train.end_div = " << c.train.lr.end_div << "\n";
  os << "train.weight_decay = " << c.train.adamw.weight_decay << "\n";
  os << "train.beta1 = " << c.train.adamw.beta1 << "\n";
  os << "train.beta2 = " << c.train.adamw.beta2 << "\n";
  os << "train.eps = " << c.train.adamw.eps << "\n";
  os << "train.log_every = " << c.train.log_every << "\n";
  os << "train.val_every = " << c.train.val_every << "\n";
  os << "train.checkpoint_every = " << c.train.checkpoint_every << "\n";
  os << "eval.mirror_average = " << (c.eval_mirror ? "true" : "false") << "\n";
  if (!c.eval_crop.empty())
    os << "eval.crop = " << c.eval_crop.row0 << " " << c.eval_crop.row1 << " "
       << c.eval_crop.col0 << " " << c.eval_crop.col1 << "\n";
  os << "eval.argmax = " << (c.eval_argmax ? "true" : "false") << "\n";
  os << "eval.hist_bins = " << c.hist_bins << "\n";
  return os.str();
}

}  // namespace adabins
