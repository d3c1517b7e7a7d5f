#pragma once

#include <cmath>
#include <vector>

#include "adabins/nn.hpp"

namespace adabins {

// Eq.-style width normalization: b_i = (b'_i + eps) / sum_j (b'_j + eps).
// Keeps every width strictly positive and each row summing to 1.
inline constexpr double kBinWidthEpsilon = 1e-3;

template <typename T>
Tensor<T> normalize_bin_widths(const Tensor<T>& raw) {
  Tensor<T> shifted = add_scalar(raw, static_cast<T>(kBinWidthEpsilon));
  Tensor<T> total = sum_axis(shifted, -1, /*keepdim=*/true);
  return div(shifted, total);
}

struct MiniVitConfig {
  index_t patch_size = 2;
  index_t embed_dim = 32;
  index_t layers = 2;
  index_t heads = 4;
  index_t kernel_count = 32;  // C: embeddings 2..C+1 become 1x1 kernels
  index_t mlp_hidden = 128;   // transformer feed-forward width
  index_t head_hidden = 256;  // bin-width MLP hidden width
  index_t n_bins = 64;

  void validate(index_t feat_h, index_t feat_w) const {
    if (n_bins < 2) throw ConfigError("mvit: n_bins must be >= 2");
    if (embed_dim % heads != 0)
      throw ConfigError("mvit: embed_dim " + std::to_string(embed_dim) +
                        " not divisible by heads " + std::to_string(heads));
    if (patch_size < 1 || feat_h % patch_size != 0 || feat_w % patch_size != 0)
      throw ConfigError("mvit: patch size " + std::to_string(patch_size) +
                        " does not divide feature map " + std::to_string(feat_h) + "x" +
                        std::to_string(feat_w));
    const index_t seq = (feat_h / patch_size) * (feat_w / patch_size);
    if (seq < kernel_count + 1)
      throw ConfigError("mvit: sequence length " + std::to_string(seq) +
                        " < kernel_count+1 = " + std::to_string(kernel_count + 1));
  }
};

template <typename T>
struct TransformerBlock {
  LayerNormLayer<T> ln_attn;
  Linear<T> qkv;   // E -> 3E
  Linear<T> proj;  // E -> E
  LayerNormLayer<T> ln_mlp;
  Linear<T> fc1;   // E -> mlp_hidden
  Linear<T> fc2;   // mlp_hidden -> E
  index_t heads = 1;

  TransformerBlock() = default;
  TransformerBlock(index_t embed, index_t mlp_hidden, index_t heads_, Rng& rng)
      : ln_attn(embed),
        qkv(embed, 3 * embed, rng),
        proj(embed, embed, rng),
        ln_mlp(embed),
        fc1(embed, mlp_hidden, rng),
        fc2(mlp_hidden, embed, rng),
        heads(heads_) {}

  // Pre-norm residual block with scaled dot-product self-attention.
  Tensor<T> forward(const Tensor<T>& x) const {
    const index_t B = x.shape()[0], S = x.shape()[1], E = x.shape()[2];
    const index_t Dh = E / heads;

    Tensor<T> h = ln_attn.forward(x);
    Tensor<T> qkv_out = qkv.forward(h);  // [B, S, 3E]
    auto split_heads = [&](index_t part) {
      Tensor<T> s = slice(qkv_out, 2, part * E, E);             // [B, S, E]
      return permute(reshape(s, {B, S, heads, Dh}), {0, 2, 1, 3});  // [B, H, S, Dh]
    };
    Tensor<T> q = split_heads(0);
    Tensor<T> k = split_heads(1);
    Tensor<T> v = split_heads(2);

    Tensor<T> scores = matmul(q, permute(k, {0, 1, 3, 2}));  // [B, H, S, S]
    scores = mul_scalar(scores, static_cast<T>(1.0 / std::sqrt(static_cast<double>(Dh))));
    Tensor<T> attn = softmax(scores, -1);
    Tensor<T> ctx = matmul(attn, v);                              // [B, H, S, Dh]
    ctx = reshape(permute(ctx, {0, 2, 1, 3}), {B, S, E});
    Tensor<T> y = add(x, proj.forward(ctx));

    Tensor<T> m = ln_mlp.forward(y);
    m = fc2.forward(gelu(fc1.forward(m)));
    return add(y, m);
  }

  void collect(const std::string& prefix, ParamList<T>& out) {
    ln_attn.collect(prefix + ".ln1", out);
    qkv.collect(prefix + ".qkv", out);
    proj.collect(prefix + ".proj", out);
    ln_mlp.collect(prefix + ".ln2", out);
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
  }
};

// Patch-embedding conv + learned positional encodings + transformer encoder
// + bin-width MLP head over the first output embedding.
template <typename T>
struct MiniVit {
  MiniVitConfig cfg;
  index_t feat_h = 0, feat_w = 0, seq_len = 0;
  Conv2dLayer<T> embed;  // p x p, stride p, C_d -> E
  Tensor<T> pos_enc;     // [S, E], learned
  std::vector<TransformerBlock<T>> blocks;
  LayerNormLayer<T> ln_out;
  Linear<T> head_fc1, head_fc2, head_fc3;  // E -> hh -> hh -> N

  MiniVit() = default;

  MiniVit(const MiniVitConfig& c, index_t decoded_channels, index_t h, index_t w, Rng& rng)
      : cfg(c), feat_h(h), feat_w(w) {
    cfg.validate(h, w);
    seq_len = (h / cfg.patch_size) * (w / cfg.patch_size);
    embed = Conv2dLayer<T>(decoded_channels, cfg.embed_dim, cfg.patch_size, cfg.patch_size, 0, rng);
    pos_enc = init_weight<T>({seq_len, cfg.embed_dim}, cfg.embed_dim, rng);
    for (index_t i = 0; i < cfg.layers; ++i)
      blocks.emplace_back(cfg.embed_dim, cfg.mlp_hidden, cfg.heads, rng);
    ln_out = LayerNormLayer<T>(cfg.embed_dim);
    head_fc1 = Linear<T>(cfg.embed_dim, cfg.head_hidden, rng);
    head_fc2 = Linear<T>(cfg.head_hidden, cfg.head_hidden, rng);
    head_fc3 = Linear<T>(cfg.head_hidden, cfg.n_bins, rng);
  }

  // x_d: [B, C_d, h, w] -> patch embeddings [B, S, E] (positional encodings added)
  Tensor<T> embed_patches(const Tensor<T>& x_d) const {
    if (x_d.shape()[2] != feat_h || x_d.shape()[3] != feat_w)
      throw ConfigError("mvit: decoded features " + shape_str(x_d.shape()) +
                        " do not match configured " + std::to_string(feat_h) + "x" +
                        std::to_string(feat_w));
    const index_t B = x_d.shape()[0];
    Tensor<T> patches = embed.forward(x_d);  // [B, E, h/p, w/p]
    Tensor<T> x = permute(reshape(patches, {B, cfg.embed_dim, seq_len}), {0, 2, 1});
    return add(x, pos_enc);
  }

  // patch embeddings [B, S, E] -> output embeddings [B, S, E]
  Tensor<T> encode(const Tensor<T>& xp) const {
    Tensor<T> x = xp;
    for (const auto& blk : blocks) x = blk.forward(x);
    return ln_out.forward(x);
  }

  // first output embedding [B, E] -> normalized bin widths [B, N]
  Tensor<T> bin_widths_head(const Tensor<T>& xo_first) const {
    Tensor<T> h = leaky_relu(head_fc1.forward(xo_first), static_cast<T>(0.01));
    h = leaky_relu(head_fc2.forward(h), static_cast<T>(0.01));
    Tensor<T> raw = relu(head_fc3.forward(h));
    return normalize_bin_widths(raw);
  }

  void collect(const std::string& prefix, ParamList<T>& out) {
    embed.collect(prefix + ".embed", out);
    out.push_back({prefix + ".pos", pos_enc});
    for (size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect(prefix + ".blk" + std::to_string(i), out);
    ln_out.collect(prefix + ".ln_out", out);
    head_fc1.collect(prefix + ".head1", out);
    head_fc2.collect(prefix + ".head2", out);
    head_fc3.collect(prefix + ".head3", out);
  }
};

}  // namespace adabins
