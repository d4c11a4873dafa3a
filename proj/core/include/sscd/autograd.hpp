#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sscd/tensor.hpp"

namespace sscd::ag {

using sscd::Tensor;

// Reverse-mode tape. Each op allocates a Node holding its output value and a
// closure that routes the output gradient to the parents. Holding the loss
// root keeps the step's graph alive; parameters are long-lived leaves.
template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  bool grad_ready = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Node() = default;
  explicit Node(Tensor<T> v, bool rg = false)
      : value(std::move(v)), requires_grad(rg) {}

  Tensor<T>& ensure_grad() {
    if (!grad_ready) {
      grad = Tensor<T>(value.shape());
      grad_ready = true;
    }
    return grad;
  }

  void zero_grad() {
    grad = Tensor<T>();
    grad_ready = false;
  }
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

template <class T>
Var<T> make_leaf(Tensor<T> value, bool requires_grad = false) {
  return std::make_shared<Node<T>>(std::move(value), requires_grad);
}

template <class T>
Var<T> constant(Tensor<T> value) {
  return make_leaf(std::move(value), false);
}

template <class T>
Var<T> detach(const Var<T>& v) {
  return make_leaf(v->value, false);
}

template <class T>
bool any_requires_grad(const std::vector<Var<T>>& vars) {
  for (const auto& v : vars)
    if (v->requires_grad) return true;
  return false;
}

inline bool& grad_enabled() {
  thread_local bool enabled = true;
  return enabled;
}

// Ops created while a guard is alive record plain values; gradients stop at
// the guarded region's outputs (pseudo-label and gate-score paths).
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_enabled()) { grad_enabled() = false; }
  ~NoGradGuard() { grad_enabled() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Builds an op node. When no parent needs gradients the node is recorded as a
// plain value (no parents, no closure), which prunes no-grad subgraphs.
template <class T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents,
               std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>(std::move(value));
  if (grad_enabled() && any_requires_grad(parents)) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return node;
}

// Accumulates d(root)/d(node) into every reachable node that requires grad.
template <class T>
void backward(const Var<T>& root) {
  if (!root->requires_grad) return;
  if (root->value.numel() != 1)
    throw std::invalid_argument("backward: root must be scalar");

  // Iterative DFS postorder; reversed it gives consumers-before-producers.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad()[0] = T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward_fn && node->grad_ready) node->backward_fn(*node);
  }
}

// ---- elementwise ops ----

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a->value, b->value, "add");
  Tensor<T> out = a->value;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
  return make_op<T>(std::move(out), {a, b}, [a, b](Node<T>& n) {
    if (a->requires_grad) {
      auto& ga = a->ensure_grad();
      for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += n.grad[i];
    }
    if (b->requires_grad) {
      auto& gb = b->ensure_grad();
      for (std::int64_t i = 0; i < gb.numel(); ++i) gb[i] += n.grad[i];
    }
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a->value, b->value, "sub");
  Tensor<T> out = a->value;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
  return make_op<T>(std::move(out), {a, b}, [a, b](Node<T>& n) {
    if (a->requires_grad) {
      auto& ga = a->ensure_grad();
      for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += n.grad[i];
    }
    if (b->requires_grad) {
      auto& gb = b->ensure_grad();
      for (std::int64_t i = 0; i < gb.numel(); ++i) gb[i] -= n.grad[i];
    }
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a->value, b->value, "mul");
  Tensor<T> out = a->value;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
  return make_op<T>(std::move(out), {a, b}, [a, b](Node<T>& n) {
    if (a->requires_grad) {
      auto& ga = a->ensure_grad();
      for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += n.grad[i] * b->value[i];
    }
    if (b->requires_grad) {
      auto& gb = b->ensure_grad();
      for (std::int64_t i = 0; i < gb.numel(); ++i) gb[i] += n.grad[i] * a->value[i];
    }
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = a->value;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= factor;
  return make_op<T>(std::move(out), {a}, [a, factor](Node<T>& n) {
    auto& ga = a->ensure_grad();
    for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += n.grad[i] * factor;
  });
}

// out = a * c with c a frozen tensor (perturbation masks, noise factors).
template <class T>
Var<T> mul_const(const Var<T>& a, Tensor<T> c) {
  check_same_shape(a->value, c, "mul_const");
  Tensor<T> out = a->value;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= c[i];
  auto cp = std::make_shared<Tensor<T>>(std::move(c));
  return make_op<T>(std::move(out), {a}, [a, cp](Node<T>& n) {
    auto& ga = a->ensure_grad();
    for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += n.grad[i] * (*cp)[i];
  });
}

template <class T>
Var<T> add_const(const Var<T>& a, const Tensor<T>& c) {
  check_same_shape(a->value, c, "add_const");
  Tensor<T> out = a->value;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += c[i];
  return make_op<T>(std::move(out), {a}, [a](Node<T>& n) {
    auto& ga = a->ensure_grad();
    for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += n.grad[i];
  });
}

template <class T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> out = a->value;
  for (std::int64_t i = 0; i < out.numel(); ++i)
    if (out[i] < T{0}) out[i] = T{0};
  return make_op<T>(std::move(out), {a}, [a](Node<T>& n) {
    auto& ga = a->ensure_grad();
    for (std::int64_t i = 0; i < ga.numel(); ++i)
      if (a->value[i] > T{0}) ga[i] += n.grad[i];
  });
}

template <class T>
Var<T> abs_diff(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a->value, b->value, "abs_diff");
  Tensor<T> out(a->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i)
    out[i] = std::abs(a->value[i] - b->value[i]);
  return make_op<T>(std::move(out), {a, b}, [a, b](Node<T>& n) {
    for (std::int64_t i = 0; i < n.grad.numel(); ++i) {
      T d = a->value[i] - b->value[i];
      T s = d > T{0} ? T{1} : (d < T{0} ? T{-1} : T{0});
      if (a->requires_grad) a->ensure_grad()[i] += n.grad[i] * s;
      if (b->requires_grad) b->ensure_grad()[i] -= n.grad[i] * s;
    }
  });
}

// Channel concatenation of NCHW tensors.
template <class T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: empty");
  const auto& s0 = parts[0]->value.shape();
  int n = s0[0], h = s0[2], w = s0[3];
  int c_total = 0;
  for (const auto& p : parts) {
    const auto& s = p->value.shape();
    if (s[0] != n || s[2] != h || s[3] != w)
      throw std::invalid_argument("concat_channels: incompatible shapes");
    c_total += s[1];
  }
  Tensor<T> out({n, c_total, h, w});
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  for (int b = 0; b < n; ++b) {
    std::int64_t c_off = 0;
    for (const auto& p : parts) {
      int c = p->value.shape(1);
      const T* src = p->value.data() + (static_cast<std::int64_t>(b) * c) * plane;
      T* dst = out.data() + (static_cast<std::int64_t>(b) * c_total + c_off) * plane;
      std::copy(src, src + static_cast<std::int64_t>(c) * plane, dst);
      c_off += c;
    }
  }
  auto parts_copy = parts;
  return make_op<T>(std::move(out), parts,
                    [parts_copy, n, c_total, plane](Node<T>& node) {
    for (int b = 0; b < n; ++b) {
      std::int64_t c_off = 0;
      for (const auto& p : parts_copy) {
        int c = p->value.shape(1);
        if (p->requires_grad) {
          auto& g = p->ensure_grad();
          T* dst = g.data() + (static_cast<std::int64_t>(b) * c) * plane;
          const T* src =
              node.grad.data() + (static_cast<std::int64_t>(b) * c_total + c_off) * plane;
          for (std::int64_t i = 0; i < static_cast<std::int64_t>(c) * plane; ++i)
            dst[i] += src[i];
        }
        c_off += c;
      }
    }
  });
}

// Mean of all entries as a scalar node.
template <class T>
Var<T> mean_all(const Var<T>& a) {
  Tensor<T> out({1});
  out[0] = static_cast<T>(a->value.mean());
  const T inv = static_cast<T>(1.0 / static_cast<double>(a->value.numel()));
  return make_op<T>(std::move(out), {a}, [a, inv](Node<T>& n) {
    auto& ga = a->ensure_grad();
    const T g = n.grad[0] * inv;
    for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
  });
}

// total = sum_i weights[i] * scalars[i]; value carried in double internally.
template <class T>
Var<T> weighted_sum(const std::vector<Var<T>>& scalars,
                    const std::vector<double>& weights) {
  if (scalars.size() != weights.size())
    throw std::invalid_argument("weighted_sum: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i]->value.numel() != 1)
      throw std::invalid_argument("weighted_sum: non-scalar term");
    acc += weights[i] * static_cast<double>(scalars[i]->value[0]);
  }
  Tensor<T> out({1});
  out[0] = static_cast<T>(acc);
  auto scalars_copy = scalars;
  return make_op<T>(std::move(out), scalars,
                    [scalars_copy, weights](Node<T>& n) {
    for (std::size_t i = 0; i < scalars_copy.size(); ++i)
      if (scalars_copy[i]->requires_grad)
        scalars_copy[i]->ensure_grad()[0] +=
            n.grad[0] * static_cast<T>(weights[i]);
  });
}

}  // namespace sscd::ag
