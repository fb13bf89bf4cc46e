#pragma once

// Minimal reverse-mode autodiff engine. Tensors are n-d real arrays that
// record a define-by-run tape; backward() walks the tape in reverse
// creation order. The scalar type is a template parameter: the pipeline
// instantiates double, tests exercise float as well. Single-threaded per
// graph; independent graphs may live on different threads.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "homosynth/errors.hpp"

namespace homosynth::nn {

template <typename T>
struct Node;

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

inline std::uint64_t next_node_order() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

template <typename T>
struct Node {
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::uint64_t order = next_node_order();
  std::vector<NodePtr<T>> parents;
  std::function<void(Node<T>&)> backward_fn;

  std::int64_t size() const {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr<T> node) : node_(std::move(node)) {}

  static Tensor leaf(std::vector<int> shape, std::vector<T> value, bool requires_grad = false) {
    auto node = std::make_shared<Node<T>>();
    std::int64_t expect = 1;
    for (int d : shape) expect *= d;
    require(static_cast<std::int64_t>(value.size()) == expect, "Tensor: shape/value size mismatch");
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return leaf(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static Tensor scalar(T v) { return leaf({1}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  std::int64_t size() const { return node_->size(); }
  const std::vector<T>& value() const { return node_->value; }
  std::vector<T>& mutable_value() { return node_->value; }
  const std::vector<T>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }
  NodePtr<T> node() const { return node_; }

  T item() const {
    require(size() == 1, "Tensor::item: tensor is not scalar");
    return node_->value[0];
  }

  void zero_grad() { node_->grad.clear(); }

  // Reverse pass from a scalar root. Gradients accumulate into every node
  // with requires_grad along the recorded tape.
  void backward() const {
    require(size() == 1, "backward: root must be scalar");
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<Node<T>*> stack{node_.get()};
    seen.insert(node_.get());
    while (!stack.empty()) {
      Node<T>* n = stack.back();
      stack.pop_back();
      order.push_back(n);
      for (const auto& p : n->parents)
        if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
    std::sort(order.begin(), order.end(),
              [](const Node<T>* a, const Node<T>* b) { return a->order > b->order; });
    node_->ensure_grad();
    node_->grad[0] += T(1);
    for (Node<T>* n : order) {
      if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
  }

 private:
  NodePtr<T> node_;
};

namespace detail {

template <typename T>
Tensor<T> make_op(std::vector<int> shape, std::vector<T> value, std::vector<NodePtr<T>> parents,
                  std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = false;
  for (const auto& p : parents) needs = needs || p->requires_grad;
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  require(a.shape() == b.shape(), std::string(what) + ": shape mismatch");
}

}  // namespace detail

// ---- elementwise binary ----

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<T> v(a.value());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += b.value()[i];
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(a.shape(), std::move(v), {an, bn}, [an, bn](Node<T>& out) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < out.grad.size(); ++i) an->grad[i] += out.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < out.grad.size(); ++i) bn->grad[i] += out.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<T> v(a.value());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= b.value()[i];
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(a.shape(), std::move(v), {an, bn}, [an, bn](Node<T>& out) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < out.grad.size(); ++i) an->grad[i] += out.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < out.grad.size(); ++i) bn->grad[i] -= out.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<T> v(a.value());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= b.value()[i];
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(a.shape(), std::move(v), {an, bn}, [an, bn](Node<T>& out) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < out.grad.size(); ++i) an->grad[i] += out.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < out.grad.size(); ++i) bn->grad[i] += out.grad[i] * an->value[i];
    }
  });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "div");
  std::vector<T> v(a.value());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] /= b.value()[i];
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(a.shape(), std::move(v), {an, bn}, [an, bn](Node<T>& out) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < out.grad.size(); ++i) an->grad[i] += out.grad[i] / bn->value[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < out.grad.size(); ++i)
        bn->grad[i] -= out.grad[i] * an->value[i] / (bn->value[i] * bn->value[i]);
    }
  });
}

// ---- elementwise unary ----

namespace detail {

// df(x_value, y_value) returns the local derivative dy/dx.
template <typename T, typename F, typename DF>
Tensor<T> unary_op(const Tensor<T>& x, F f, DF df, const char* /*name*/) {
  std::vector<T> v(x.value());
  for (auto& e : v) e = f(e);
  auto xn = x.node();
  auto out = make_op<T>(
      x.shape(), std::move(v), {xn}, [xn, df](Node<T>& out_node) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < out_node.grad.size(); ++i)
          xn->grad[i] += out_node.grad[i] * df(xn->value[i], out_node.value[i]);
      });
  return out;
}

}  // namespace detail

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return std::exp(v); }, [](T, T y) { return y; }, "exp");
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; }, "log");
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return std::sqrt(v); }, [](T, T y) { return T(0.5) / y; }, "sqrt");
}

template <typename T>
Tensor<T> sin(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return std::sin(v); }, [](T v, T) { return std::cos(v); }, "sin");
}

template <typename T>
Tensor<T> cos(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return std::cos(v); }, [](T v, T) { return -std::sin(v); }, "cos");
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; }, "tanh");
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary_op(
      x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); }, "sigmoid");
}

template <typename T>
Tensor<T> elu(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return v > T(0) ? v : std::expm1(v); },
      [](T v, T y) { return v > T(0) ? T(1) : y + T(1); }, "elu");
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return -v; }, [](T, T) { return T(-1); }, "neg");
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  return detail::unary_op(
      x, [c](T v) { return v + c; }, [](T, T) { return T(1); }, "add_scalar");
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T c) {
  return detail::unary_op(
      x, [c](T v) { return v * c; }, [c](T, T) { return c; }, "mul_scalar");
}

// x^p for x > 0 (use after clamp_min when the base can touch zero).
template <typename T>
Tensor<T> pow_scalar(const Tensor<T>& x, T p) {
  return detail::unary_op(
      x, [p](T v) { return std::pow(v, p); },
      [p](T v, T y) { return p * y / v; }, "pow_scalar");
}

// max(x, c); the gradient vanishes on the floored side.
template <typename T>
Tensor<T> clamp_min(const Tensor<T>& x, T c) {
  return detail::unary_op(
      x, [c](T v) { return v > c ? v : c; }, [c](T v, T) { return v > c ? T(1) : T(0); },
      "clamp_min");
}

template <typename T>
Tensor<T> one_minus(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return T(1) - v; }, [](T, T) { return T(-1); }, "one_minus");
}

// ---- reductions and broadcasts ----

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  T acc(0);
  for (T v : x.value()) acc += v;
  auto xn = x.node();
  return detail::make_op<T>({1}, {acc}, {xn}, [xn](Node<T>& out) {
    xn->ensure_grad();
    for (auto& g : xn->grad) g += out.grad[0];
  });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  return mul_scalar(sum_all(x), T(1) / static_cast<T>(x.size()));
}

template <typename T>
Tensor<T> broadcast_scalar(const Tensor<T>& s, int n) {
  require(s.size() == 1, "broadcast_scalar: source must be scalar");
  std::vector<T> v(n, s.value()[0]);
  auto sn = s.node();
  return detail::make_op<T>({n}, std::move(v), {sn}, [sn](Node<T>& out) {
    sn->ensure_grad();
    for (T g : out.grad) sn->grad[0] += g;
  });
}

template <typename T>
Tensor<T> dot(const Tensor<T>& a, const Tensor<T>& b) {
  return sum_all(mul(a, b));
}

// ---- matrix products ----

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape().size() == 2 && b.shape().size() == 2, "matmul: rank-2 tensors required");
  const int m = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], n = b.shape()[1];
  require(k == k2, "matmul: inner dimensions differ");
  std::vector<T> v(static_cast<std::size_t>(m) * n, T(0));
  const auto& av = a.value();
  const auto& bv = b.value();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const T aip = av[i * k + p];
      if (aip == T(0)) continue;
      const T* brow = &bv[p * n];
      T* orow = &v[i * n];
      for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>({m, n}, std::move(v), {an, bn}, [an, bn, m, k, n](Node<T>& out) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          T acc(0);
          const T* grow = &out.grad[i * n];
          const T* brow = &bn->value[p * n];
          for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
          an->grad[i * k + p] += acc;
        }
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          const T aip = an->value[i * k + p];
          if (aip == T(0)) continue;
          const T* grow = &out.grad[i * n];
          T* brow = &bn->grad[p * n];
          for (int j = 0; j < n; ++j) brow[j] += aip * grow[j];
        }
    }
  });
}

// A [m,k] times B^T for B [n,k].
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape().size() == 2 && b.shape().size() == 2, "matmul_nt: rank-2 tensors required");
  const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  require(b.shape()[1] == k, "matmul_nt: inner dimensions differ");
  std::vector<T> v(static_cast<std::size_t>(m) * n, T(0));
  const auto& av = a.value();
  const auto& bv = b.value();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      T acc(0);
      const T* arow = &av[i * k];
      const T* brow = &bv[j * k];
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      v[i * n + j] = acc;
    }
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>({m, n}, std::move(v), {an, bn}, [an, bn, m, k, n](Node<T>& out) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const T g = out.grad[i * n + j];
          if (g == T(0)) continue;
          const T* brow = &bn->value[j * k];
          T* arow = &an->grad[i * k];
          for (int p = 0; p < k; ++p) arow[p] += g * brow[p];
        }
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const T g = out.grad[i * n + j];
          if (g == T(0)) continue;
          const T* arow = &an->value[i * k];
          T* brow = &bn->grad[j * k];
          for (int p = 0; p < k; ++p) brow[p] += g * arow[p];
        }
    }
  });
}

// X [m,n] + row vector b [n], broadcast over rows.
template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& b) {
  require(x.shape().size() == 2 && b.shape().size() == 1, "add_rowvec: need matrix and vector");
  const int m = x.shape()[0], n = x.shape()[1];
  require(b.shape()[0] == n, "add_rowvec: width mismatch");
  std::vector<T> v(x.value());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) v[i * n + j] += b.value()[j];
  auto xn = x.node(), bn = b.node();
  return detail::make_op<T>({m, n}, std::move(v), {xn, bn}, [xn, bn, m, n](Node<T>& out) {
    if (xn->requires_grad) {
      xn->ensure_grad();
      for (std::size_t i = 0; i < out.grad.size(); ++i) xn->grad[i] += out.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) bn->grad[j] += out.grad[i * n + j];
    }
  });
}

// ---- shape ops ----

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<int> shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  require(n == x.size(), "reshape: element count mismatch");
  auto xn = x.node();
  return detail::make_op<T>(std::move(shape), std::vector<T>(x.value()), {xn}, [xn](Node<T>& out) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < out.grad.size(); ++i) xn->grad[i] += out.grad[i];
  });
}

namespace detail {

inline std::int64_t prod_range(const std::vector<int>& shape, std::size_t lo, std::size_t hi) {
  std::int64_t p = 1;
  for (std::size_t i = lo; i < hi; ++i) p *= shape[i];
  return p;
}

}  // namespace detail

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, int start, int len) {
  const auto& shape = x.shape();
  require(axis >= 0 && axis < static_cast<int>(shape.size()), "slice: bad axis");
  require(start >= 0 && len > 0 && start + len <= shape[axis], "slice: range out of bounds");
  const std::int64_t outer = detail::prod_range(shape, 0, axis);
  const std::int64_t inner = detail::prod_range(shape, axis + 1, shape.size());
  std::vector<int> out_shape = shape;
  out_shape[axis] = len;
  std::vector<T> v(static_cast<std::size_t>(outer) * len * inner);
  const auto& xv = x.value();
  for (std::int64_t o = 0; o < outer; ++o)
    for (int a = 0; a < len; ++a)
      std::copy_n(&xv[(o * shape[axis] + start + a) * inner], inner, &v[(o * len + a) * inner]);
  auto xn = x.node();
  const int full = shape[axis];
  return detail::make_op<T>(std::move(out_shape), std::move(v), {xn},
                            [xn, outer, inner, start, len, full](Node<T>& out) {
                              xn->ensure_grad();
                              for (std::int64_t o = 0; o < outer; ++o)
                                for (int a = 0; a < len; ++a) {
                                  const T* src = &out.grad[(o * len + a) * inner];
                                  T* dst = &xn->grad[(o * full + start + a) * inner];
                                  for (std::int64_t i = 0; i < inner; ++i) dst[i] += src[i];
                                }
                            });
}

template <typename T>
Tensor<T> concat(int axis, const std::vector<Tensor<T>>& parts) {
  require(!parts.empty(), "concat: no inputs");
  const auto& base = parts[0].shape();
  require(axis >= 0 && axis < static_cast<int>(base.size()), "concat: bad axis");
  int total = 0;
  for (const auto& p : parts) {
    require(p.shape().size() == base.size(), "concat: rank mismatch");
    for (std::size_t d = 0; d < base.size(); ++d)
      if (static_cast<int>(d) != axis)
        require(p.shape()[d] == base[d], "concat: non-axis dimension mismatch");
    total += p.shape()[axis];
  }
  std::vector<int> out_shape = base;
  out_shape[axis] = total;
  const std::int64_t outer = detail::prod_range(base, 0, axis);
  const std::int64_t inner = detail::prod_range(base, axis + 1, base.size());
  std::vector<T> v(static_cast<std::size_t>(outer) * total * inner);
  std::vector<NodePtr<T>> nodes;
  std::vector<int> widths;
  int offset = 0;
  for (const auto& p : parts) {
    const int w = p.shape()[axis];
    const auto& pv = p.value();
    for (std::int64_t o = 0; o < outer; ++o)
      std::copy_n(&pv[o * w * inner], w * inner, &v[(o * total + offset) * inner]);
    nodes.push_back(p.node());
    widths.push_back(w);
    offset += w;
  }
  return detail::make_op<T>(std::move(out_shape), std::move(v), nodes,
                            [nodes, widths, outer, inner, total](Node<T>& out) {
                              int off = 0;
                              for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
                                const int w = widths[pi];
                                if (nodes[pi]->requires_grad) {
                                  nodes[pi]->ensure_grad();
                                  for (std::int64_t o = 0; o < outer; ++o) {
                                    const T* src = &out.grad[(o * total + off) * inner];
                                    T* dst = &nodes[pi]->grad[o * w * inner];
                                    for (std::int64_t i = 0; i < w * inner; ++i) dst[i] += src[i];
                                  }
                                }
                                off += w;
                              }
                            });
}

}  // namespace homosynth::nn
