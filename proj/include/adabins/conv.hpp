#pragma once

#include <cmath>
#include <vector>

#include "adabins/ops.hpp"

namespace adabins {

namespace detail {

// col layout: [Cin*kh*kw, OH*OW], one matrix per batch element.
template <typename T>
void im2col(const T* in, index_t Cin, index_t H, index_t W, index_t kh, index_t kw,
            index_t stride, index_t pad, index_t OH, index_t OW, T* col) {
  for (index_t c = 0; c < Cin; ++c)
    for (index_t ki = 0; ki < kh; ++ki)
      for (index_t kj = 0; kj < kw; ++kj) {
        T* dst = col + ((c * kh + ki) * kw + kj) * OH * OW;
        for (index_t oy = 0; oy < OH; ++oy) {
          const index_t iy = oy * stride + ki - pad;
          for (index_t ox = 0; ox < OW; ++ox) {
            const index_t ix = ox * stride + kj - pad;
            dst[oy * OW + ox] = (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                    ? in[(c * H + iy) * W + ix]
                                    : T(0);
          }
        }
      }
}

template <typename T>
void col2im_add(const T* col, index_t Cin, index_t H, index_t W, index_t kh, index_t kw,
                index_t stride, index_t pad, index_t OH, index_t OW, T* in_grad) {
  for (index_t c = 0; c < Cin; ++c)
    for (index_t ki = 0; ki < kh; ++ki)
      for (index_t kj = 0; kj < kw; ++kj) {
        const T* src = col + ((c * kh + ki) * kw + kj) * OH * OW;
        for (index_t oy = 0; oy < OH; ++oy) {
          const index_t iy = oy * stride + ki - pad;
          if (iy < 0 || iy >= H) continue;
          for (index_t ox = 0; ox < OW; ++ox) {
            const index_t ix = ox * stride + kj - pad;
            if (ix < 0 || ix >= W) continue;
            in_grad[(c * H + iy) * W + ix] += src[oy * OW + ox];
          }
        }
      }
}

}  // namespace detail

// 2-D convolution, im2col + matmul formulation.
// input: [B, Cin, H, W], kernel: [Cout, Cin, kh, kw] -> [B, Cout, OH, OW]
// with OH = floor((H + 2*pad - kh)/stride) + 1 (same for OW).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, index_t stride = 1,
                 index_t pad = 0) {
  if (input.ndim() != 4)
    throw ShapeError("conv2d: input must be [B,Cin,H,W], got " + shape_str(input.shape()));
  if (kernel.ndim() != 4)
    throw ShapeError("conv2d: kernel must be [Cout,Cin,kh,kw], got " + shape_str(kernel.shape()));
  const index_t B = input.shape()[0], Cin = input.shape()[1];
  const index_t H = input.shape()[2], W = input.shape()[3];
  const index_t Cout = kernel.shape()[0], Ck = kernel.shape()[1];
  const index_t kh = kernel.shape()[2], kw = kernel.shape()[3];
  if (Cin != Ck)
    throw ShapeError("conv2d: input channel axis 1 (" + std::to_string(Cin) +
                     ") != kernel channel axis 1 (" + std::to_string(Ck) + ")");
  if (kh < 1 || kw < 1 || stride < 1)
    throw ShapeError("conv2d: kernel extents and stride must be >= 1");
  if (H + 2 * pad < kh || W + 2 * pad < kw)
    throw ShapeError("conv2d: padded input " + std::to_string(H + 2 * pad) + "x" +
                     std::to_string(W + 2 * pad) + " smaller than kernel " +
                     std::to_string(kh) + "x" + std::to_string(kw));
  const index_t OH = (H + 2 * pad - kh) / stride + 1;
  const index_t OW = (W + 2 * pad - kw) / stride + 1;
  const index_t K = Cin * kh * kw;
  const index_t OHW = OH * OW;

  Tensor<T> out(Shape{B, Cout, OH, OW});
  {
    const T* in = input.data().data();
    const T* wk = kernel.data().data();
    T* ov = out.data().data();
    parallel_for(B, [&](index_t b) {
      std::vector<T> col(static_cast<size_t>(K * OHW));
      detail::im2col(in + b * Cin * H * W, Cin, H, W, kh, kw, stride, pad, OH, OW, col.data());
      T* O = ov + b * Cout * OHW;
      for (index_t co = 0; co < Cout; ++co)
        for (index_t k = 0; k < K; ++k) {
          const T a = wk[co * K + k];
          const T* crow = col.data() + k * OHW;
          T* orow = O + co * OHW;
          for (index_t i = 0; i < OHW; ++i) orow[i] += a * crow[i];
        }
    });
  }

  attach_backward<T>(out, "conv2d", {&input, &kernel},
                     [xn = input.node(), kn = kernel.node(), B, Cin, H, W, Cout, kh, kw, stride,
                      pad, OH, OW, K, OHW](TensorNode<T>& self) {
    const bool need_dx = xn->requires_grad;
    const bool need_dk = kn->requires_grad;
    // per-batch kernel-grad partials, reduced in batch order afterwards
    std::vector<T> dk_partial(need_dk ? static_cast<size_t>(B * Cout * K) : 0, T(0));
    parallel_for(B, [&](index_t b) {
      std::vector<T> col(static_cast<size_t>(K * OHW));
      detail::im2col(xn->value.data() + b * Cin * H * W, Cin, H, W, kh, kw, stride, pad, OH,
                     OW, col.data());
      const T* G = self.grad.data() + b * Cout * OHW;
      if (need_dk) {
        T* dK = dk_partial.data() + b * Cout * K;
        for (index_t co = 0; co < Cout; ++co)
          for (index_t k = 0; k < K; ++k) {
            const T* grow = G + co * OHW;
            const T* crow = col.data() + k * OHW;
            T acc = T(0);
            for (index_t i = 0; i < OHW; ++i) acc += grow[i] * crow[i];
            dK[co * K + k] = acc;
          }
      }
      if (need_dx) {
        std::vector<T> dcol(static_cast<size_t>(K * OHW), T(0));
        for (index_t co = 0; co < Cout; ++co)
          for (index_t k = 0; k < K; ++k) {
            const T a = kn->value[co * K + k];
            const T* grow = G + co * OHW;
            T* drow = dcol.data() + k * OHW;
            for (index_t i = 0; i < OHW; ++i) drow[i] += a * grow[i];
          }
        detail::col2im_add(dcol.data(), Cin, H, W, kh, kw, stride, pad, OH, OW,
                           xn->grad.data() + b * Cin * H * W);
      }
    });
    if (need_dk)
      for (index_t b = 0; b < B; ++b) {
        const T* dK = dk_partial.data() + b * Cout * K;
        for (index_t i = 0; i < Cout * K; ++i) kn->grad[i] += dK[i];
      }
  });
  return out;
}

// Nearest-neighbour upsampling by an integer factor.
template <typename T>
Tensor<T> nearest_upsample(const Tensor<T>& x, index_t factor) {
  if (x.ndim() != 4) throw ShapeError("nearest_upsample: expected [B,C,H,W]");
  if (factor < 1) throw ShapeError("nearest_upsample: factor must be >= 1");
  const index_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const index_t OH = H * factor, OW = W * factor;
  Tensor<T> out(Shape{B, C, OH, OW});
  const auto& xv = x.data();
  auto& ov = out.data();
  for (index_t bc = 0; bc < B * C; ++bc)
    for (index_t i = 0; i < OH; ++i)
      for (index_t j = 0; j < OW; ++j)
        ov[(bc * OH + i) * OW + j] = xv[(bc * H + i / factor) * W + j / factor];
  attach_backward<T>(out, "nearest_upsample", {&x},
                     [xn = x.node(), B, C, H, W, OH, OW, factor](TensorNode<T>& self) {
    for (index_t bc = 0; bc < B * C; ++bc)
      for (index_t i = 0; i < OH; ++i)
        for (index_t j = 0; j < OW; ++j)
          xn->grad[(bc * H + i / factor) * W + j / factor] += self.grad[(bc * OH + i) * OW + j];
  });
  return out;
}

namespace detail {

// half-pixel-center source coordinate (align-corners-false)
inline void bilinear_coords(index_t dst, double scale, index_t src_extent, index_t& i0,
                            index_t& i1, double& frac) {
  double s = (static_cast<double>(dst) + 0.5) * scale - 0.5;
  if (s < 0) s = 0;
  const double hi = static_cast<double>(src_extent - 1);
  if (s > hi) s = hi;
  i0 = static_cast<index_t>(std::floor(s));
  i1 = std::min(i0 + 1, src_extent - 1);
  frac = s - static_cast<double>(i0);
}

}  // namespace detail

// Bilinear upsampling by an integer factor, half-pixel-center convention.
// Constant maps stay constant.
template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, index_t factor) {
  if (x.ndim() != 4) throw ShapeError("bilinear_upsample: expected [B,C,H,W]");
  if (factor < 1) throw ShapeError("bilinear_upsample: factor must be >= 1");
  const index_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const index_t OH = H * factor, OW = W * factor;
  const double scale = 1.0 / static_cast<double>(factor);
  Tensor<T> out(Shape{B, C, OH, OW});
  const auto& xv = x.data();
  auto& ov = out.data();
  for (index_t bc = 0; bc < B * C; ++bc) {
    const T* src = xv.data() + bc * H * W;
    T* dst = ov.data() + bc * OH * OW;
    for (index_t i = 0; i < OH; ++i) {
      index_t y0, y1;
      double fy;
      detail::bilinear_coords(i, scale, H, y0, y1, fy);
      for (index_t j = 0; j < OW; ++j) {
        index_t x0, x1;
        double fx;
        detail::bilinear_coords(j, scale, W, x0, x1, fx);
        const double v00 = src[y0 * W + x0], v01 = src[y0 * W + x1];
        const double v10 = src[y1 * W + x0], v11 = src[y1 * W + x1];
        dst[i * OW + j] = static_cast<T>((1 - fy) * ((1 - fx) * v00 + fx * v01) +
                                         fy * ((1 - fx) * v10 + fx * v11));
      }
    }
  }
  attach_backward<T>(out, "bilinear_upsample", {&x},
                     [xn = x.node(), B, C, H, W, OH, OW, scale](TensorNode<T>& self) {
    for (index_t bc = 0; bc < B * C; ++bc) {
      T* dsrc = xn->grad.data() + bc * H * W;
      const T* g = self.grad.data() + bc * OH * OW;
      for (index_t i = 0; i < OH; ++i) {
        index_t y0, y1;
        double fy;
        detail::bilinear_coords(i, scale, H, y0, y1, fy);
        for (index_t j = 0; j < OW; ++j) {
          index_t x0, x1;
          double fx;
          detail::bilinear_coords(j, scale, W, x0, x1, fx);
          const T gv = g[i * OW + j];
          dsrc[y0 * W + x0] += static_cast<T>((1 - fy) * (1 - fx)) * gv;
          dsrc[y0 * W + x1] += static_cast<T>((1 - fy) * fx) * gv;
          dsrc[y1 * W + x0] += static_cast<T>(fy * (1 - fx)) * gv;
          dsrc[y1 * W + x1] += static_cast<T>(fy * fx) * gv;
        }
      }
    }
  });
  return out;
}

// Plain bilinear resize to an arbitrary target size (no gradient; evaluation
// protocol only). Same half-pixel-center convention as bilinear_upsample.
template <typename T>
std::vector<T> bilinear_resize(const std::vector<T>& src, index_t H, index_t W, index_t OH,
                               index_t OW) {
  std::vector<T> dst(static_cast<size_t>(OH * OW));
  const double sy = static_cast<double>(H) / static_cast<double>(OH);
  const double sx = static_cast<double>(W) / static_cast<double>(OW);
  for (index_t i = 0; i < OH; ++i) {
    index_t y0, y1;
    double fy;
    detail::bilinear_coords(i, sy, H, y0, y1, fy);
    for (index_t j = 0; j < OW; ++j) {
      index_t x0, x1;
      double fx;
      detail::bilinear_coords(j, sx, W, x0, x1, fx);
      const double v00 = src[y0 * W + x0], v01 = src[y0 * W + x1];
      const double v10 = src[y1 * W + x0], v11 = src[y1 * W + x1];
      dst[i * OW + j] = static_cast<T>((1 - fy) * ((1 - fx) * v00 + fx * v01) +
                                       fy * ((1 - fx) * v10 + fx * v11));
    }
  }
  return dst;
}

}  // namespace adabins
