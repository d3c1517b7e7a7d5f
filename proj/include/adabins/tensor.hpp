#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <initializer_list>
#include <memory>
#include <unordered_set>
#include <vector>

#include "adabins/common.hpp"
#include "adabins/random.hpp"

namespace adabins {

// ---------------------------------------------------------------------------
// Reverse-mode autodiff core. A Tensor is a shared handle to a graph node
// holding the value buffer, an optional gradient accumulator and, for op
// results, the parent links plus a backprop closure. Graphs are built eagerly
// during the forward pass and freed when the loss handle goes out of scope.
// ---------------------------------------------------------------------------

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode<T>>> parents;
  std::function<void(TensorNode<T>&)> backprop;
  const char* op = "leaf";

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

// Disables graph recording in a scope (inference / metric evaluation).
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode_flag()) { grad_mode_flag() = false; }
  ~NoGradGuard() { grad_mode_flag() = prev; }
};

// Debug check: ops on finite inputs must produce finite outputs. Off by
// default; tests and the gradcheck harness switch it on.
inline bool& finite_checks_flag() {
  static bool enabled = false;
  return enabled;
}

template <typename T>
class Tensor {
 public:
  using Node = TensorNode<T>;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    node_->shape = std::move(shape);
    node_->value.assign(static_cast<size_t>(adabins::numel(node_->shape)), fill);
    node_->requires_grad = requires_grad;
  }

  static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false) {
    if (adabins::numel(shape) != static_cast<index_t>(data.size()))
      throw ShapeError("from_data: " + shape_str(shape) + " needs " +
                       std::to_string(adabins::numel(shape)) + " values, got " +
                       std::to_string(data.size()));
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(data);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(T v) { return from_data({1}, {v}); }

  static Tensor uniform(Shape shape, Rng& rng, T lo, T hi, bool requires_grad = false) {
    Tensor t(std::move(shape), T(0), requires_grad);
    for (auto& v : t.node_->value) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  index_t ndim() const { return static_cast<index_t>(node_->shape.size()); }
  index_t numel() const { return static_cast<index_t>(node_->value.size()); }
  index_t extent(index_t axis) const { return node_->shape[normalize_axis(axis, ndim())]; }

  std::vector<T>& data() { return node_->value; }
  const std::vector<T>& data() const { return node_->value; }
  std::vector<T>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) {
    if (node_->backprop) throw UsageError("set_requires_grad: only valid on leaf tensors");
    node_->requires_grad = rg;
  }

  T item() const {
    if (numel() != 1) throw UsageError("item: tensor has " + std::to_string(numel()) + " values");
    return node_->value[0];
  }

  T& at(std::initializer_list<index_t> idx) {
    return node_->value[flat_index(idx)];
  }
  T at(std::initializer_list<index_t> idx) const {
    return node_->value[flat_index(idx)];
  }

  void zero_grad() { node_->grad.clear(); }

  // Value copy cut off from the graph.
  Tensor detach() const { return from_data(node_->shape, node_->value, false); }

  std::shared_ptr<Node> node() const { return node_; }

  // Reverse topological traversal from a scalar loss. Gradients accumulate
  // by += across fan-out, so every reachable requires_grad tensor ends with
  // the full derivative.
  void backward() const {
    if (numel() != 1) throw UsageError("backward: loss must be a scalar");
    if (!node_->requires_grad)
      throw UsageError("backward: loss does not require gradients");
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.push_back({node_.get(), 0});
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, i] = stack.back();
      if (i < n->parents.size()) {
        Node* p = n->parents[i++].get();
        if (p->requires_grad && !seen.count(p)) {
          seen.insert(p);
          stack.push_back({p, 0});
        }
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    node_->ensure_grad();
    node_->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backprop) {
        for (auto& p : n->parents)
          if (p->requires_grad) p->ensure_grad();
        n->backprop(*n);
      }
    }
  }

 private:
  index_t flat_index(std::initializer_list<index_t> idx) const {
    if (static_cast<index_t>(idx.size()) != ndim())
      throw ShapeError("index rank mismatch for " + shape_str(node_->shape));
    index_t flat = 0, axis = 0;
    auto strides = row_major_strides(node_->shape);
    for (index_t i : idx) flat += i * strides[axis++];
    return flat;
  }

  std::shared_ptr<Node> node_;
};

// --- op construction helpers ------------------------------------------------

template <typename T>
inline void check_finite_result(const Tensor<T>& t, const char* op) {
  if (!finite_checks_flag()) return;
  for (T v : t.data())
    if (!std::isfinite(static_cast<double>(v)))
      throw DomainError(std::string("non-finite value produced by op '") + op + "'");
}

template <typename T>
inline bool any_requires_grad(std::initializer_list<const Tensor<T>*> ts) {
  if (!grad_mode_flag()) return false;
  for (auto* t : ts)
    if (t->requires_grad()) return true;
  return false;
}

// Attaches graph metadata to an op result when recording is active.
template <typename T>
inline void attach_backward(Tensor<T>& out, const char* op,
                            std::initializer_list<const Tensor<T>*> parents,
                            std::function<void(TensorNode<T>&)> fn) {
  check_finite_result(out, op);
  if (!any_requires_grad<T>(parents)) return;
  auto n = out.node();
  n->requires_grad = true;
  n->op = op;
  for (auto* p : parents) n->parents.push_back(p->node());
  n->backprop = std::move(fn);
}

// --- broadcasting machinery ---------------------------------------------

inline Shape broadcast_shapes(const Shape& a, const Shape& b) {
  size_t nd = std::max(a.size(), b.size());
  Shape out(nd, 1);
  for (size_t i = 0; i < nd; ++i) {
    index_t da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
    index_t db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b) +
                       " (axis " + std::to_string(i) + ")");
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `shape` expanded to rank of `out`, with 0 on broadcast axes.
inline std::vector<index_t> broadcast_strides(const Shape& shape, const Shape& out) {
  auto st = row_major_strides(shape);
  std::vector<index_t> r(out.size(), 0);
  size_t off = out.size() - shape.size();
  for (size_t i = 0; i < shape.size(); ++i)
    r[off + i] = shape[i] == 1 ? 0 : st[i];
  return r;
}

// Sums `src` (shaped like `src_shape`) into `dst` (shaped like `dst_shape`),
// reversing a broadcast. Sequential accumulation keeps results deterministic.
template <typename T>
inline void reduce_into(const std::vector<T>& src, const Shape& src_shape,
                        std::vector<T>& dst, const Shape& dst_shape) {
  if (src_shape == dst_shape) {
    for (size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
    return;
  }
  auto dst_st = broadcast_strides(dst_shape, src_shape);
  auto src_st = row_major_strides(src_shape);
  index_t n = numel(src_shape);
  size_t nd = src_shape.size();
  std::vector<index_t> coord(nd, 0);
  index_t doff = 0;
  for (index_t i = 0; i < n; ++i) {
    dst[doff] += src[i];
    for (int ax = static_cast<int>(nd) - 1; ax >= 0; --ax) {
      doff += dst_st[ax];
      if (++coord[ax] < src_shape[ax]) break;
      coord[ax] = 0;
      doff -= dst_st[ax] * src_shape[ax];
    }
  }
}

}  // namespace adabins
