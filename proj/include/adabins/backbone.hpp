#pragma once

#include <vector>

#include "adabins/nn.hpp"

namespace adabins {

// Compact stand-in for the usual pretrained encoder / upsampling decoder
// pair: a strided conv encoder and a nearest-upsample conv decoder with
// additive skips. Decoded features come out at half the input resolution.
struct BackboneConfig {
  index_t stages = 3;          // number of stride-2 downsampling steps
  index_t base_channels = 16;
  index_t decoded_channels = 128;  // C_d; 1 turns the model into plain regression
  index_t input_h = 32;
  index_t input_w = 32;

  void validate() const {
    if (stages < 1) throw ConfigError("backbone: stages must be >= 1");
    if (base_channels < 1 || decoded_channels < 1)
      throw ConfigError("backbone: channel counts must be >= 1");
    const index_t div = index_t(1) << stages;
    if (input_h % div != 0 || input_w % div != 0)
      throw ConfigError("backbone: input " + std::to_string(input_h) + "x" +
                        std::to_string(input_w) + " not divisible by 2^stages = " +
                        std::to_string(div));
  }
};

template <typename T>
struct Backbone {
  BackboneConfig cfg;
  Conv2dLayer<T> stem;                  // 3 -> base, full resolution
  std::vector<Conv2dLayer<T>> encoder;  // stride-2, doubling channels
  std::vector<Conv2dLayer<T>> decoder;  // after nearest x2, halving channels
  Conv2dLayer<T> proj;                  // -> C_d at half resolution, linear

  Backbone() = default;

  Backbone(const BackboneConfig& c, Rng& rng) : cfg(c) {
    cfg.validate();
    stem = Conv2dLayer<T>(3, cfg.base_channels, 3, 1, 1, rng);
    index_t ch = cfg.base_channels;
    for (index_t s = 0; s < cfg.stages; ++s) {
      encoder.emplace_back(ch, ch * 2, 3, 2, 1, rng);
      ch *= 2;
    }
    for (index_t s = 0; s < cfg.stages - 1; ++s) {
      decoder.emplace_back(ch, ch / 2, 3, 1, 1, rng);
      ch /= 2;
    }
    proj = Conv2dLayer<T>(ch, cfg.decoded_channels, 3, 1, 1, rng);
  }

  // image: [B, 3, H, W] -> decoded features [B, C_d, H/2, W/2]
  Tensor<T> forward(const Tensor<T>& image) const {
    if (image.ndim() != 4 || image.shape()[1] != 3 || image.shape()[2] != cfg.input_h ||
        image.shape()[3] != cfg.input_w)
      throw ConfigError("backbone: expected input [B,3," + std::to_string(cfg.input_h) + "," +
                        std::to_string(cfg.input_w) + "], got " + shape_str(image.shape()));
    Tensor<T> x = gelu(stem.forward(image));
    std::vector<Tensor<T>> skips;  // encoder outputs at each resolution
    for (const auto& enc : encoder) {
      x = gelu(enc.forward(x));
      skips.push_back(x);
    }
    for (size_t s = 0; s < decoder.size(); ++s) {
      Tensor<T> up = nearest_upsample(x, 2);
      Tensor<T> y = decoder[s].forward(up);
      // skip from the encoder stage at the matching resolution
      const Tensor<T>& skip = skips[skips.size() - 2 - s];
      x = gelu(add(y, skip));
    }
    return proj.forward(x);
  }

  void collect(const std::string& prefix, ParamList<T>& out) {
    stem.collect(prefix + ".stem", out);
    for (size_t i = 0; i < encoder.size(); ++i)
      encoder[i].collect(prefix + ".enc" + std::to_string(i), out);
    for (size_t i = 0; i < decoder.size(); ++i)
      decoder[i].collect(prefix + ".dec" + std::to_string(i), out);
    proj.collect(prefix + ".proj", out);
  }
};

}  // namespace adabins
