#pragma once

#include <string>
#include <vector>

#include "adabins/conv.hpp"
#include "adabins/ops.hpp"
#include "adabins/random.hpp"

namespace adabins {

// Named trainable tensor. Names are dot paths, unique within a model, and
// stable across save/load.
template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

// Weights draw from uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)); biases start
// at zero. All draws come from the model's seeded generator in construction
// order, which pins initialization for a given seed.
template <typename T>
Tensor<T> init_weight(Shape shape, index_t fan_in, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  return Tensor<T>::uniform(std::move(shape), rng, static_cast<T>(-bound),
                            static_cast<T>(bound), true);
}

template <typename T>
Tensor<T> init_zeros(Shape shape) {
  return Tensor<T>(std::move(shape), T(0), true);
}

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out]

  Linear() = default;
  Linear(index_t in, index_t out, Rng& rng)
      : weight(init_weight<T>({in, out}, in, rng)), bias(init_zeros<T>({out})) {}

  Tensor<T> forward(const Tensor<T>& x) const { return add(matmul(x, weight), bias); }

  void collect(const std::string& prefix, ParamList<T>& out) {
    out.push_back({prefix + ".w", weight});
    out.push_back({prefix + ".b", bias});
  }
};

template <typename T>
struct Conv2dLayer {
  Tensor<T> weight;  // [Cout, Cin, kh, kw]
  Tensor<T> bias;    // [Cout]
  index_t stride = 1;
  index_t pad = 0;

  Conv2dLayer() = default;
  Conv2dLayer(index_t cin, index_t cout, index_t k, index_t stride_, index_t pad_, Rng& rng)
      : weight(init_weight<T>({cout, cin, k, k}, cin * k * k, rng)),
        bias(init_zeros<T>({cout})),
        stride(stride_),
        pad(pad_) {}

  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> y = conv2d(x, weight, stride, pad);
    return add(y, reshape(bias, {bias.numel(), 1, 1}));
  }

  void collect(const std::string& prefix, ParamList<T>& out) {
    out.push_back({prefix + ".w", weight});
    out.push_back({prefix + ".b", bias});
  }
};

template <typename T>
struct LayerNormLayer {
  Tensor<T> gain;
  Tensor<T> bias;
  T eps = static_cast<T>(1e-5);

  LayerNormLayer() = default;
  explicit LayerNormLayer(index_t n)
      : gain(Tensor<T>({n}, T(1), true)), bias(init_zeros<T>({n})) {}

  Tensor<T> forward(const Tensor<T>& x) const { return layer_norm(x, -1, gain, bias, eps); }

  void collect(const std::string& prefix, ParamList<T>& out) {
    out.push_back({prefix + ".g", gain});
    out.push_back({prefix + ".b", bias});
  }
};

}  // namespace adabins
