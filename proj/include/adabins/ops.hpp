#pragma once

#include <algorithm>
#include <cmath>

#include "adabins/tensor.hpp"
#include "adabins/threading.hpp"

namespace adabins {

// ---------------------------------------------------------------------------
// Differentiable ops. Every op builds its result eagerly and, when grad mode
// is on, records a closure that routes d(out) into the parents' accumulators.
// Backward accumulation is sequential so runs are bitwise reproducible.
// ---------------------------------------------------------------------------

namespace detail {

// Generic broadcasting binary op. FwdF: (a,b)->out. GradA/GradB: local
// derivative out/da resp. out/db evaluated at (a, b).
template <typename T, typename FwdF, typename GradA, typename GradB>
Tensor<T> broadcast_binary(const Tensor<T>& a, const Tensor<T>& b, const char* name,
                           FwdF fwd, GradA dfda, GradB dfdb) {
  Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  Tensor<T> out(out_shape);
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  const index_t n = out.numel();

  if (a.shape() == out_shape && b.shape() == out_shape) {
    for (index_t i = 0; i < n; ++i) ov[i] = fwd(av[i], bv[i]);
  } else if (b.numel() == 1) {
    const T s = bv[0];
    for (index_t i = 0; i < n; ++i) ov[i] = fwd(av[i], s);
  } else {
    auto ast = broadcast_strides(a.shape(), out_shape);
    auto bst = broadcast_strides(b.shape(), out_shape);
    size_t nd = out_shape.size();
    std::vector<index_t> coord(nd, 0);
    index_t ai = 0, bi = 0;
    for (index_t i = 0; i < n; ++i) {
      ov[i] = fwd(av[ai], bv[bi]);
      for (int ax = static_cast<int>(nd) - 1; ax >= 0; --ax) {
        ai += ast[ax];
        bi += bst[ax];
        if (++coord[ax] < out_shape[ax]) break;
        coord[ax] = 0;
        ai -= ast[ax] * out_shape[ax];
        bi -= bst[ax] * out_shape[ax];
      }
    }
  }

  attach_backward<T>(out, name, {&a, &b},
                     [an = a.node(), bn = b.node(), dfda, dfdb](TensorNode<T>& self) {
    Shape out_shape = self.shape;
    const index_t n = static_cast<index_t>(self.value.size());
    auto ast = broadcast_strides(an->shape, out_shape);
    auto bst = broadcast_strides(bn->shape, out_shape);
    size_t nd = out_shape.size();
    std::vector<index_t> coord(nd, 0);
    index_t ai = 0, bi = 0;
    for (index_t i = 0; i < n; ++i) {
      const T g = self.grad[i];
      if (an->requires_grad) an->grad[ai] += g * dfda(an->value[ai], bn->value[bi]);
      if (bn->requires_grad) bn->grad[bi] += g * dfdb(an->value[ai], bn->value[bi]);
      for (int ax = static_cast<int>(nd) - 1; ax >= 0; --ax) {
        ai += ast[ax];
        bi += bst[ax];
        if (++coord[ax] < out_shape[ax]) break;
        coord[ax] = 0;
        ai -= ast[ax] * out_shape[ax];
        bi -= bst[ax] * out_shape[ax];
      }
    }
  });
  return out;
}

// Elementwise unary op. GradF: derivative evaluated at (x, y=f(x)).
template <typename T, typename FwdF, typename GradF>
Tensor<T> unary(const Tensor<T>& x, const char* name, FwdF fwd, GradF dfdx) {
  Tensor<T> out(x.shape());
  const auto& xv = x.data();
  auto& ov = out.data();
  for (size_t i = 0; i < xv.size(); ++i) ov[i] = fwd(xv[i]);
  attach_backward<T>(out, name, {&x}, [xn = x.node(), dfdx](TensorNode<T>& self) {
    for (size_t i = 0; i < self.value.size(); ++i)
      xn->grad[i] += self.grad[i] * dfdx(xn->value[i], self.value[i]);
  });
  return out;
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::broadcast_binary(a, b, "add",
      [](T x, T y) { return x + y; },
      [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::broadcast_binary(a, b, "sub",
      [](T x, T y) { return x - y; },
      [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::broadcast_binary(a, b, "mul",
      [](T x, T y) { return x * y; },
      [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::broadcast_binary(a, b, "div",
      [](T x, T y) { return x / y; },
      [](T, T y) { return T(1) / y; },
      [](T x, T y) { return -x / (y * y); });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
  return detail::unary(x, "add_scalar",
      [s](T v) { return v + s; },
      [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T s) {
  return detail::unary(x, "mul_scalar",
      [s](T v) { return v * s; },
      [s](T, T) { return s; });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) { return mul_scalar(x, T(-1)); }

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return detail::unary(x, "exp",
      [](T v) { return std::exp(v); },
      [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  return detail::unary(x, "log",
      [](T v) { return std::log(v); },
      [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
  return detail::unary(x, "sqrt",
      [](T v) { return std::sqrt(v); },
      [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return detail::unary(x, "abs",
      [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return detail::unary(x, "square",
      [](T v) { return v * v; },
      [](T v, T) { return T(2) * v; });
}

// --- activations ------------------------------------------------------------

// Subgradient at the kink is 0.
template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary(x, "relu",
      [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

// The negative slope applies strictly on x < 0; the derivative at 0 is 1.
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  return detail::unary(x, "leaky_relu",
      [slope](T v) { return v >= T(0) ? v : slope * v; },
      [slope](T v, T) { return v < T(0) ? slope : T(1); });
}

// Exact erf form: x * Phi(x).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  constexpr double kInvSqrt2Pi = 0.3989422804014326779;
  return detail::unary(x, "gelu",
      [](T v) {
        double d = static_cast<double>(v);
        return static_cast<T>(d * 0.5 * (1.0 + std::erf(d * kInvSqrt2)));
      },
      [](T v, T) {
        double d = static_cast<double>(v);
        double phi = std::exp(-0.5 * d * d) * kInvSqrt2Pi;
        double Phi = 0.5 * (1.0 + std::erf(d * kInvSqrt2));
        return static_cast<T>(Phi + d * phi);
      });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary(x, "sigmoid",
      [](T v) {
        double d = static_cast<double>(v);
        return static_cast<T>(d >= 0 ? 1.0 / (1.0 + std::exp(-d))
                                     : std::exp(d) / (1.0 + std::exp(d)));
      },
      [](T, T y) { return y * (T(1) - y); });
}

enum class Activation { relu, leaky_relu, gelu };

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind, T slope = T(0.01)) {
  switch (kind) {
    case Activation::relu: return relu(x);
    case Activation::leaky_relu: return leaky_relu(x, slope);
    case Activation::gelu: return gelu(x);
  }
  throw UsageError("unknown activation kind");
}

// --- reductions ---------------------------------------------------------

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.data()) acc += v;
  Tensor<T> out = Tensor<T>::from_data({1}, {acc});
  attach_backward<T>(out, "sum_all", {&x}, [xn = x.node()](TensorNode<T>& self) {
    const T g = self.grad[0];
    for (auto& gv : xn->grad) gv += g;
  });
  return out;
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  return mul_scalar(sum_all(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> sum_axis(const Tensor<T>& x, index_t axis, bool keepdim = true) {
  axis = normalize_axis(axis, x.ndim());
  const Shape& xs = x.shape();
  Shape out_shape = xs;
  out_shape[axis] = 1;
  index_t n_axis = xs[axis];
  index_t inner = 1;
  for (index_t i = axis + 1; i < x.ndim(); ++i) inner *= xs[i];
  index_t outer = x.numel() / (n_axis * inner);

  Tensor<T> out(out_shape);
  const auto& xv = x.data();
  auto& ov = out.data();
  for (index_t o = 0; o < outer; ++o)
    for (index_t k = 0; k < n_axis; ++k) {
      const T* src = xv.data() + (o * n_axis + k) * inner;
      T* dst = ov.data() + o * inner;
      for (index_t i = 0; i < inner; ++i) dst[i] += src[i];
    }

  attach_backward<T>(out, "sum_axis", {&x},
                     [xn = x.node(), outer, n_axis, inner](TensorNode<T>& self) {
    for (index_t o = 0; o < outer; ++o)
      for (index_t k = 0; k < n_axis; ++k) {
        T* dst = xn->grad.data() + (o * n_axis + k) * inner;
        const T* g = self.grad.data() + o * inner;
        for (index_t i = 0; i < inner; ++i) dst[i] += g[i];
      }
  });
  if (!keepdim) {
    Shape squeezed = xs;
    squeezed.erase(squeezed.begin() + axis);
    if (squeezed.empty()) squeezed = {1};
    return reshape(out, squeezed);
  }
  return out;
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& x, index_t axis, bool keepdim = true) {
  axis = normalize_axis(axis, x.ndim());
  return mul_scalar(sum_axis(x, axis, keepdim), T(1) / static_cast<T>(x.shape()[axis]));
}

// --- movement -------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
  index_t infer = -1;
  index_t known = 1;
  for (size_t i = 0; i < new_shape.size(); ++i) {
    if (new_shape[i] == -1) {
      if (infer >= 0) throw ShapeError("reshape: more than one -1 extent");
      infer = static_cast<index_t>(i);
    } else {
      known *= new_shape[i];
    }
  }
  if (infer >= 0) new_shape[infer] = x.numel() / known;
  if (numel(new_shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(new_shape));
  Tensor<T> out = Tensor<T>::from_data(new_shape, x.data());
  attach_backward<T>(out, "reshape", {&x}, [xn = x.node()](TensorNode<T>& self) {
    for (size_t i = 0; i < self.value.size(); ++i) xn->grad[i] += self.grad[i];
  });
  return out;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<index_t>& axes) {
  const index_t nd = x.ndim();
  if (static_cast<index_t>(axes.size()) != nd)
    throw ShapeError("permute: axes rank mismatch");
  Shape out_shape(nd);
  for (index_t i = 0; i < nd; ++i) out_shape[i] = x.shape()[axes[i]];
  auto xst = row_major_strides(x.shape());
  std::vector<index_t> gather_stride(nd);
  for (index_t i = 0; i < nd; ++i) gather_stride[i] = xst[axes[i]];

  Tensor<T> out(out_shape);
  const auto& xv = x.data();
  auto& ov = out.data();
  const index_t n = out.numel();
  std::vector<index_t> coord(nd, 0);
  index_t src = 0;
  for (index_t i = 0; i < n; ++i) {
    ov[i] = xv[src];
    for (index_t ax = nd - 1; ax >= 0; --ax) {
      src += gather_stride[ax];
      if (++coord[ax] < out_shape[ax]) break;
      coord[ax] = 0;
      src -= gather_stride[ax] * out_shape[ax];
    }
  }

  attach_backward<T>(out, "permute", {&x},
                     [xn = x.node(), gather_stride, out_shape, nd](TensorNode<T>& self) {
    std::vector<index_t> coord(nd, 0);
    index_t src = 0;
    const index_t n = static_cast<index_t>(self.value.size());
    for (index_t i = 0; i < n; ++i) {
      xn->grad[src] += self.grad[i];
      for (index_t ax = nd - 1; ax >= 0; --ax) {
        src += gather_stride[ax];
        if (++coord[ax] < out_shape[ax]) break;
        coord[ax] = 0;
        src -= gather_stride[ax] * out_shape[ax];
      }
    }
  });
  return out;
}

// Contiguous slice along one axis.
template <typename T>
Tensor<T> slice(const Tensor<T>& x, index_t axis, index_t start, index_t len) {
  axis = normalize_axis(axis, x.ndim());
  const Shape& xs = x.shape();
  if (start < 0 || len < 1 || start + len > xs[axis])
    throw ShapeError("slice: [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") out of range for axis extent " +
                     std::to_string(xs[axis]));
  Shape out_shape = xs;
  out_shape[axis] = len;
  index_t inner = 1;
  for (index_t i = axis + 1; i < x.ndim(); ++i) inner *= xs[i];
  index_t outer = x.numel() / (xs[axis] * inner);

  Tensor<T> out(out_shape);
  const auto& xv = x.data();
  auto& ov = out.data();
  for (index_t o = 0; o < outer; ++o)
    std::memcpy(ov.data() + o * len * inner,
                xv.data() + (o * xs[axis] + start) * inner,
                sizeof(T) * static_cast<size_t>(len * inner));

  index_t n_axis = xs[axis];
  attach_backward<T>(out, "slice", {&x},
                     [xn = x.node(), outer, n_axis, inner, start, len](TensorNode<T>& self) {
    for (index_t o = 0; o < outer; ++o) {
      T* dst = xn->grad.data() + (o * n_axis + start) * inner;
      const T* g = self.grad.data() + o * len * inner;
      for (index_t i = 0; i < len * inner; ++i) dst[i] += g[i];
    }
  });
  return out;
}

// slice of extent 1 with the axis dropped
template <typename T>
Tensor<T> select(const Tensor<T>& x, index_t axis, index_t idx) {
  axis = normalize_axis(axis, x.ndim());
  Tensor<T> s = slice(x, axis, idx, 1);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + axis);
  if (out_shape.empty()) out_shape = {1};
  return reshape(s, out_shape);
}

// Inclusive cumulative sum; gradient is the reversed cumulative sum.
template <typename T>
Tensor<T> cumsum(const Tensor<T>& x, index_t axis) {
  axis = normalize_axis(axis, x.ndim());
  const Shape& xs = x.shape();
  index_t n_axis = xs[axis];
  index_t inner = 1;
  for (index_t i = axis + 1; i < x.ndim(); ++i) inner *= xs[i];
  index_t outer = x.numel() / (n_axis * inner);

  Tensor<T> out(xs);
  const auto& xv = x.data();
  auto& ov = out.data();
  for (index_t o = 0; o < outer; ++o)
    for (index_t i = 0; i < inner; ++i) {
      T acc = T(0);
      for (index_t k = 0; k < n_axis; ++k) {
        acc += xv[(o * n_axis + k) * inner + i];
        ov[(o * n_axis + k) * inner + i] = acc;
      }
    }

  attach_backward<T>(out, "cumsum", {&x},
                     [xn = x.node(), outer, n_axis, inner](TensorNode<T>& self) {
    for (index_t o = 0; o < outer; ++o)
      for (index_t i = 0; i < inner; ++i) {
        T acc = T(0);
        for (index_t k = n_axis - 1; k >= 0; --k) {
          acc += self.grad[(o * n_axis + k) * inner + i];
          xn->grad[(o * n_axis + k) * inner + i] += acc;
        }
      }
  });
  return out;
}

// Gathers elements where mask != 0 into a dense vector (masked values never
// enter downstream math, so garbage in masked-out slots cannot leak).
template <typename T>
Tensor<T> masked_select(const Tensor<T>& x, const std::vector<uint8_t>& mask) {
  if (static_cast<index_t>(mask.size()) != x.numel())
    throw ShapeError("masked_select: mask size " + std::to_string(mask.size()) +
                     " != tensor size " + std::to_string(x.numel()));
  std::vector<index_t> idx;
  for (size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) idx.push_back(static_cast<index_t>(i));
  if (idx.empty()) throw DomainError("masked_select: empty mask");
  Tensor<T> out(Shape{static_cast<index_t>(idx.size())});
  const auto& xv = x.data();
  auto& ov = out.data();
  for (size_t i = 0; i < idx.size(); ++i) ov[i] = xv[idx[i]];
  attach_backward<T>(out, "masked_select", {&x},
                     [xn = x.node(), idx = std::move(idx)](TensorNode<T>& self) {
    for (size_t i = 0; i < idx.size(); ++i) xn->grad[idx[i]] += self.grad[i];
  });
  return out;
}

// --- matmul ------------------------------------------------------------

// a: [..., M, K], b: [..., K, P]; leading batch dims broadcast.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.ndim() < 2 || b.ndim() < 2)
    throw ShapeError("matmul: operands must have rank >= 2, got " +
                     shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  const index_t M = as[a.ndim() - 2], K = as[a.ndim() - 1];
  const index_t Kb = bs[b.ndim() - 2], P = bs[b.ndim() - 1];
  if (K != Kb)
    throw ShapeError("matmul: inner dims differ (" + std::to_string(K) + " vs " +
                     std::to_string(Kb) + ") for " + shape_str(as) + " x " + shape_str(bs));
  Shape a_batch(as.begin(), as.end() - 2), b_batch(bs.begin(), bs.end() - 2);
  Shape batch = broadcast_shapes(a_batch, b_batch);
  Shape out_shape = batch;
  out_shape.push_back(M);
  out_shape.push_back(P);

  const index_t n_batch = numel(batch);
  auto a_bst = broadcast_strides(a_batch, batch);
  auto b_bst = broadcast_strides(b_batch, batch);
  for (auto& s : a_bst) s *= M * K;
  for (auto& s : b_bst) s *= K * P;

  auto batch_offset = [batch](index_t flat, const std::vector<index_t>& st) {
    index_t off = 0;
    for (int ax = static_cast<int>(batch.size()) - 1; ax >= 0; --ax) {
      off += (flat % batch[ax]) * st[ax];
      flat /= batch[ax];
    }
    return off;
  };

  Tensor<T> out(out_shape);
  {
    const T* av = a.data().data();
    const T* bv = b.data().data();
    T* ov = out.data().data();
    parallel_for(n_batch, [&](index_t nb) {
      const T* A = av + batch_offset(nb, a_bst);
      const T* B = bv + batch_offset(nb, b_bst);
      T* O = ov + nb * M * P;
      for (index_t m = 0; m < M; ++m)
        for (index_t k = 0; k < K; ++k) {
          const T x = A[m * K + k];
          const T* brow = B + k * P;
          T* orow = O + m * P;
          for (index_t p = 0; p < P; ++p) orow[p] += x * brow[p];
        }
    });
  }

  attach_backward<T>(out, "matmul", {&a, &b},
                     [an = a.node(), bn = b.node(), n_batch, batch_offset, a_bst, b_bst, M, K,
                      P](TensorNode<T>& self) {
    for (index_t nb = 0; nb < n_batch; ++nb) {
      const T* G = self.grad.data() + nb * M * P;
      const T* A = an->value.data() + batch_offset(nb, a_bst);
      const T* B = bn->value.data() + batch_offset(nb, b_bst);
      if (an->requires_grad) {
        T* dA = an->grad.data() + batch_offset(nb, a_bst);
        for (index_t m = 0; m < M; ++m)
          for (index_t p = 0; p < P; ++p) {
            const T g = G[m * P + p];
            const T* brow = B + p;
            T* darow = dA + m * K;
            for (index_t k = 0; k < K; ++k) darow[k] += g * brow[k * P];
          }
      }
      if (bn->requires_grad) {
        T* dB = bn->grad.data() + batch_offset(nb, b_bst);
        for (index_t m = 0; m < M; ++m)
          for (index_t k = 0; k < K; ++k) {
            const T x = A[m * K + k];
            const T* grow = G + m * P;
            T* dbrow = dB + k * P;
            for (index_t p = 0; p < P; ++p) dbrow[p] += x * grow[p];
          }
      }
    }
  });
  return out;
}

// --- softmax / layer norm ----------------------------------------------

// Max-subtracted softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, index_t axis) {
  axis = normalize_axis(axis, x.ndim());
  const Shape& xs = x.shape();
  index_t n_axis = xs[axis];
  index_t inner = 1;
  for (index_t i = axis + 1; i < x.ndim(); ++i) inner *= xs[i];
  index_t outer = x.numel() / (n_axis * inner);

  Tensor<T> out(xs);
  const auto& xv = x.data();
  auto& ov = out.data();
  for (index_t o = 0; o < outer; ++o)
    for (index_t i = 0; i < inner; ++i) {
      const index_t base = o * n_axis * inner + i;
      T mx = xv[base];
      for (index_t k = 1; k < n_axis; ++k) mx = std::max(mx, xv[base + k * inner]);
      T denom = T(0);
      for (index_t k = 0; k < n_axis; ++k) {
        T e = std::exp(xv[base + k * inner] - mx);
        ov[base + k * inner] = e;
        denom += e;
      }
      for (index_t k = 0; k < n_axis; ++k) ov[base + k * inner] /= denom;
    }

  attach_backward<T>(out, "softmax", {&x},
                     [xn = x.node(), outer, n_axis, inner](TensorNode<T>& self) {
    for (index_t o = 0; o < outer; ++o)
      for (index_t i = 0; i < inner; ++i) {
        const index_t base = o * n_axis * inner + i;
        T dot = T(0);
        for (index_t k = 0; k < n_axis; ++k)
          dot += self.grad[base + k * inner] * self.value[base + k * inner];
        for (index_t k = 0; k < n_axis; ++k) {
          const index_t j = base + k * inner;
          xn->grad[j] += self.value[j] * (self.grad[j] - dot);
        }
      }
  });
  return out;
}

// Normalizes along `axis` (biased variance), then applies gain/bias of shape
// [extent(axis)].
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, index_t axis, const Tensor<T>& gain,
                     const Tensor<T>& bias, T eps) {
  axis = normalize_axis(axis, x.ndim());
  const Shape& xs = x.shape();
  const index_t n_axis = xs[axis];
  if (gain.numel() != n_axis || bias.numel() != n_axis)
    throw ShapeError("layer_norm: gain/bias must have " + std::to_string(n_axis) +
                     " entries, got " + std::to_string(gain.numel()) + "/" +
                     std::to_string(bias.numel()));
  index_t inner = 1;
  for (index_t i = axis + 1; i < x.ndim(); ++i) inner *= xs[i];
  index_t outer = x.numel() / (n_axis * inner);

  Tensor<T> out(xs);
  std::vector<T> xhat(x.data().size());
  std::vector<T> inv_std(static_cast<size_t>(outer * inner));
  const auto& xv = x.data();
  const auto& gv = gain.data();
  const auto& bv = bias.data();
  auto& ov = out.data();
  for (index_t o = 0; o < outer; ++o)
    for (index_t i = 0; i < inner; ++i) {
      const index_t base = o * n_axis * inner + i;
      T mu = T(0);
      for (index_t k = 0; k < n_axis; ++k) mu += xv[base + k * inner];
      mu /= static_cast<T>(n_axis);
      T var = T(0);
      for (index_t k = 0; k < n_axis; ++k) {
        T d = xv[base + k * inner] - mu;
        var += d * d;
      }
      var /= static_cast<T>(n_axis);
      const T inv = T(1) / std::sqrt(var + eps);
      inv_std[o * inner + i] = inv;
      for (index_t k = 0; k < n_axis; ++k) {
        const index_t j = base + k * inner;
        xhat[j] = (xv[j] - mu) * inv;
        ov[j] = gv[k] * xhat[j] + bv[k];
      }
    }

  attach_backward<T>(out, "layer_norm", {&x, &gain, &bias},
                     [xn = x.node(), gn = gain.node(), bn = bias.node(), outer, n_axis, inner,
                      xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorNode<T>& self) {
    const T inv_n = T(1) / static_cast<T>(n_axis);
    for (index_t o = 0; o < outer; ++o)
      for (index_t i = 0; i < inner; ++i) {
        const index_t base = o * n_axis * inner + i;
        T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
        for (index_t k = 0; k < n_axis; ++k) {
          const index_t j = base + k * inner;
          const T dxhat = self.grad[j] * gn->value[k];
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * xhat[j];
        }
        if (xn->requires_grad) {
          const T inv = inv_std[o * inner + i];
          for (index_t k = 0; k < n_axis; ++k) {
            const index_t j = base + k * inner;
            const T dxhat = self.grad[j] * gn->value[k];
            xn->grad[j] += inv * (dxhat - inv_n * sum_dxhat - xhat[j] * inv_n * sum_dxhat_xhat);
          }
        }
        if (gn->requires_grad)
          for (index_t k = 0; k < n_axis; ++k)
            gn->grad[k] += self.grad[base + k * inner] * xhat[base + k * inner];
        if (bn->requires_grad)
          for (index_t k = 0; k < n_axis; ++k) bn->grad[k] += self.grad[base + k * inner];
      }
  });
  return out;
}

// --- operator sugar -------------------------------------------------------

template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T> Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }
template <typename T> Tensor<T> operator+(const Tensor<T>& a, T s) { return add_scalar(a, s); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, T s) { return add_scalar(a, -s); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, T s) { return mul_scalar(a, s); }
template <typename T> Tensor<T> operator*(T s, const Tensor<T>& a) { return mul_scalar(a, s); }

}  // namespace adabins
