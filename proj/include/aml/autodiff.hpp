#pragma once

// Define-by-run reverse-mode autodiff. Every operation returns a Var (a
// shared graph node) whose closure knows how to push gradients into its
// parents. Values are immutable once produced; parameters are leaves
// mutated only by the optimizer between steps.

#include <algorithm>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "aml/tensor.hpp"

namespace aml {

template <typename T>
struct Node;

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first use
  bool requires_grad = false;
  std::string name;
  std::vector<Var<T>> parents;
  std::function<void(Node<T>&)> backward_fn;

  Tensor<T>& ensure_grad() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
  void zero_grad() {
    if (!grad.empty()) grad.fill(T(0));
  }
};

template <typename T>
Var<T> leaf(Tensor<T> value, bool requires_grad = false, std::string name = "") {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->name = std::move(name);
  return n;
}

template <typename T>
Var<T> constant(Tensor<T> value) {
  return leaf(std::move(value), false);
}

// Shares the same numeric value but cuts the graph.
template <typename T>
Var<T> detach(const Var<T>& x) {
  return leaf(x->value, false, x->name.empty() ? "" : x->name + ".detached");
}

template <typename T>
Var<T> make_node(Tensor<T> value, std::vector<Var<T>> parents,
                 std::function<void(Node<T>&)> backward_fn) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  n->requires_grad = rg;
  if (rg) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

// Reverse topological order from root, then one backward sweep.
// The root must be a scalar (losses are); use backward_seeded otherwise.
template <typename T>
void backward(const Var<T>& root) {
  check(root->value.numel() == 1,
        "backward() root must be scalar, got " + root->value.shape().str());
  root->ensure_grad().fill(T(1));
  backward_seeded(root);
}

template <typename T>
void backward_seeded(const Var<T>& root) {
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.push_back({root.get(), 0});
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<T>* p = node->parents[idx++].get();
      if (p->requires_grad && seen.insert(p).second)
        stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

// ---- elementwise and reduction ops ----

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check(a->value.shape() == b->value.shape(),
        "add: shape mismatch " + a->value.shape().str() + " vs " +
            b->value.shape().str());
  Tensor<T> out(a->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i)
    out[i] = a->value[i] + b->value[i];
  return make_node<T>(std::move(out), {a, b}, [a, b](Node<T>& self) {
    if (a->requires_grad) {
      auto& g = a->ensure_grad();
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
    if (b->requires_grad) {
      auto& g = b->ensure_grad();
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  check(a->value.shape() == b->value.shape(), "sub: shape mismatch");
  Tensor<T> out(a->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i)
    out[i] = a->value[i] - b->value[i];
  return make_node<T>(std::move(out), {a, b}, [a, b](Node<T>& self) {
    if (a->requires_grad) {
      auto& g = a->ensure_grad();
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
    if (b->requires_grad) {
      auto& g = b->ensure_grad();
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check(a->value.shape() == b->value.shape(), "mul: shape mismatch");
  Tensor<T> out(a->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i)
    out[i] = a->value[i] * b->value[i];
  return make_node<T>(std::move(out), {a, b}, [a, b](Node<T>& self) {
    if (a->requires_grad) {
      auto& g = a->ensure_grad();
      for (std::int64_t i = 0; i < g.numel(); ++i)
        g[i] += self.grad[i] * b->value[i];
    }
    if (b->requires_grad) {
      auto& g = b->ensure_grad();
      for (std::int64_t i = 0; i < g.numel(); ++i)
        g[i] += self.grad[i] * a->value[i];
    }
  });
}

template <typename T>
Var<T> mul_const(const Var<T>& a, T k) {
  Tensor<T> out(a->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * k;
  return make_node<T>(std::move(out), {a}, [a, k](Node<T>& self) {
    if (!a->requires_grad) return;
    auto& g = a->ensure_grad();
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * k;
  });
}

template <typename T>
Var<T> add_const(const Var<T>& a, T k) {
  Tensor<T> out(a->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] + k;
  return make_node<T>(std::move(out), {a}, [a](Node<T>& self) {
    if (!a->requires_grad) return;
    auto& g = a->ensure_grad();
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
  });
}

// x scaled by a learned scalar parameter (shape (1,1,1,1)).
template <typename T>
Var<T> scale(const Var<T>& x, const Var<T>& alpha) {
  check(alpha->value.numel() == 1, "scale: alpha must be scalar");
  T a = alpha->value[0];
  Tensor<T> out(x->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = x->value[i] * a;
  return make_node<T>(std::move(out), {x, alpha}, [x, alpha, a](Node<T>& self) {
    if (x->requires_grad) {
      auto& g = x->ensure_grad();
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * a;
    }
    if (alpha->requires_grad) {
      auto& g = alpha->ensure_grad();
      T acc = T(0);
      for (std::int64_t i = 0; i < self.grad.numel(); ++i)
        acc += self.grad[i] * x->value[i];
      g[0] += acc;
    }
  });
}

template <typename T>
Var<T> one_minus(const Var<T>& a) {
  Tensor<T> out(a->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = T(1) - a->value[i];
  return make_node<T>(std::move(out), {a}, [a](Node<T>& self) {
    if (!a->requires_grad) return;
    auto& g = a->ensure_grad();
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
  });
}

// Clamp to [0,1]; gradient passes where the value was strictly inside.
template <typename T>
Var<T> clamp01(const Var<T>& a) {
  Tensor<T> out(a->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i)
    out[i] = std::min(T(1), std::max(T(0), a->value[i]));
  return make_node<T>(std::move(out), {a}, [a](Node<T>& self) {
    if (!a->requires_grad) return;
    auto& g = a->ensure_grad();
    for (std::int64_t i = 0; i < g.numel(); ++i) {
      T v = a->value[i];
      if (v >= T(0) && v <= T(1)) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> out(a->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i)
    out[i] = a->value[i] > T(0) ? a->value[i] : T(0);
  return make_node<T>(std::move(out), {a}, [a](Node<T>& self) {
    if (!a->requires_grad) return;
    auto& g = a->ensure_grad();
    for (std::int64_t i = 0; i < g.numel(); ++i)
      if (a->value[i] > T(0)) g[i] += self.grad[i];
  });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope = T(0.2)) {
  Tensor<T> out(a->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i)
    out[i] = a->value[i] > T(0) ? a->value[i] : slope * a->value[i];
  return make_node<T>(std::move(out), {a}, [a, slope](Node<T>& self) {
    if (!a->requires_grad) return;
    auto& g = a->ensure_grad();
    for (std::int64_t i = 0; i < g.numel(); ++i)
      g[i] += self.grad[i] * (a->value[i] > T(0) ? T(1) : slope);
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> out(a->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    T v = a->value[i];
    out[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v))
                       : std::exp(v) / (T(1) + std::exp(v));
  }
  return make_node<T>(std::move(out), {a}, [a](Node<T>& self) {
    if (!a->requires_grad) return;
    auto& g = a->ensure_grad();
    for (std::int64_t i = 0; i < g.numel(); ++i) {
      T s = self.value[i];
      g[i] += self.grad[i] * s * (T(1) - s);
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T acc = T(0);
  for (std::int64_t i = 0; i < a->value.numel(); ++i) acc += a->value[i];
  return make_node<T>(Tensor<T>::scalar(acc), {a}, [a](Node<T>& self) {
    if (!a->requires_grad) return;
    auto& g = a->ensure_grad();
    T s = self.grad[0];
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += s;
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  std::int64_t n = a->value.numel();
  T acc = T(0);
  for (std::int64_t i = 0; i < n; ++i) acc += a->value[i];
  T inv = T(1) / static_cast<T>(n);
  return make_node<T>(Tensor<T>::scalar(acc * inv), {a}, [a, inv](Node<T>& self) {
    if (!a->requires_grad) return;
    auto& g = a->ensure_grad();
    T s = self.grad[0] * inv;
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += s;
  });
}

// Channel concatenation (spatial/batch dims must match).
template <typename T>
Var<T> concat_c(const Var<T>& a, const Var<T>& b) {
  const Shape& sa = a->value.shape();
  const Shape& sb = b->value.shape();
  check(sa.n == sb.n && sa.h == sb.h && sa.w == sb.w,
        "concat_c: non-channel dims differ, " + sa.str() + " vs " + sb.str());
  Tensor<T> out(Shape(sa.n, sa.c + sb.c, sa.h, sa.w));
  std::int64_t pa = sa.c * sa.plane(), pb = sb.c * sb.plane();
  for (int n = 0; n < sa.n; ++n) {
    std::copy_n(a->value.batch_ptr(n), pa, out.batch_ptr(n));
    std::copy_n(b->value.batch_ptr(n), pb, out.batch_ptr(n) + pa);
  }
  return make_node<T>(std::move(out), {a, b}, [a, b, pa, pb](Node<T>& self) {
    int nb = a->value.shape().n;
    if (a->requires_grad) {
      auto& g = a->ensure_grad();
      for (int n = 0; n < nb; ++n) {
        const T* src = self.grad.batch_ptr(n);
        T* dst = g.batch_ptr(n);
        for (std::int64_t i = 0; i < pa; ++i) dst[i] += src[i];
      }
    }
    if (b->requires_grad) {
      auto& g = b->ensure_grad();
      for (int n = 0; n < nb; ++n) {
        const T* src = self.grad.batch_ptr(n) + pa;
        T* dst = g.batch_ptr(n);
        for (std::int64_t i = 0; i < pb; ++i) dst[i] += src[i];
      }
    }
  });
}

// feat * attn + feat with attn broadcast across channels; attn is (n,1,h,w).
template <typename T>
Var<T> apply_attention(const Var<T>& feat, const Var<T>& attn) {
  const Shape& sf = feat->value.shape();
  const Shape& sa = attn->value.shape();
  check(sa.c == 1, "apply_attention: attention map must have one channel");
  check(sf.n == sa.n && sf.h == sa.h && sf.w == sa.w,
        "apply_attention: spatial mismatch, feature " + sf.str() +
            " vs attention " + sa.str());
  Tensor<T> out(sf);
  std::int64_t plane = sf.plane();
  for (int n = 0; n < sf.n; ++n) {
    const T* am = attn->value.batch_ptr(n);
    for (int c = 0; c < sf.c; ++c) {
      const T* f = feat->value.batch_ptr(n) + c * plane;
      T* o = out.batch_ptr(n) + c * plane;
      for (std::int64_t i = 0; i < plane; ++i) o[i] = f[i] * (T(1) + am[i]);
    }
  }
  return make_node<T>(std::move(out), {feat, attn}, [feat, attn, plane](Node<T>& self) {
    const Shape& sf = feat->value.shape();
    if (feat->requires_grad) {
      auto& g = feat->ensure_grad();
      for (int n = 0; n < sf.n; ++n) {
        const T* am = attn->value.batch_ptr(n);
        for (int c = 0; c < sf.c; ++c) {
          const T* go = self.grad.batch_ptr(n) + c * plane;
          T* gf = g.batch_ptr(n) + c * plane;
          for (std::int64_t i = 0; i < plane; ++i)
            gf[i] += go[i] * (T(1) + am[i]);
        }
      }
    }
    if (attn->requires_grad) {
      auto& g = attn->ensure_grad();
      for (int n = 0; n < sf.n; ++n) {
        T* ga = g.batch_ptr(n);
        for (int c = 0; c < sf.c; ++c) {
          const T* go = self.grad.batch_ptr(n) + c * plane;
          const T* f = feat->value.batch_ptr(n) + c * plane;
          for (std::int64_t i = 0; i < plane; ++i) ga[i] += go[i] * f[i];
        }
      }
    }
  });
}

// Per-channel gate g (n,c,1,1) applied to x (n,c,h,w).
template <typename T>
Var<T> mul_channel_gate(const Var<T>& x, const Var<T>& gate) {
  const Shape& sx = x->value.shape();
  const Shape& sg = gate->value.shape();
  check(sg.n == sx.n && sg.c == sx.c && sg.h == 1 && sg.w == 1,
        "mul_channel_gate: gate must be (n,c,1,1)");
  Tensor<T> out(sx);
  std::int64_t plane = sx.plane();
  for (int n = 0; n < sx.n; ++n)
    for (int c = 0; c < sx.c; ++c) {
      T gv = gate->value.at(n, c, 0, 0);
      const T* xi = x->value.batch_ptr(n) + c * plane;
      T* o = out.batch_ptr(n) + c * plane;
      for (std::int64_t i = 0; i < plane; ++i) o[i] = xi[i] * gv;
    }
  return make_node<T>(std::move(out), {x, gate}, [x, gate, plane](Node<T>& self) {
    const Shape& sx = x->value.shape();
    for (int n = 0; n < sx.n; ++n)
      for (int c = 0; c < sx.c; ++c) {
        const T* go = self.grad.batch_ptr(n) + c * plane;
        if (x->requires_grad) {
          T gv = gate->value.at(n, c, 0, 0);
          T* gx = x->ensure_grad().batch_ptr(n) + c * plane;
          for (std::int64_t i = 0; i < plane; ++i) gx[i] += go[i] * gv;
        }
        if (gate->requires_grad) {
          const T* xi = x->value.batch_ptr(n) + c * plane;
          T acc = T(0);
          for (std::int64_t i = 0; i < plane; ++i) acc += go[i] * xi[i];
          gate->ensure_grad().at(n, c, 0, 0) += acc;
        }
      }
  });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  const Shape& s = x->value.shape();
  Tensor<T> out(Shape(s.n, s.c, 1, 1));
  std::int64_t plane = s.plane();
  T inv = T(1) / static_cast<T>(plane);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* xi = x->value.batch_ptr(n) + c * plane;
      T acc = T(0);
      for (std::int64_t i = 0; i < plane; ++i) acc += xi[i];
      out.at(n, c, 0, 0) = acc * inv;
    }
  return make_node<T>(std::move(out), {x}, [x, plane, inv](Node<T>& self) {
    if (!x->requires_grad) return;
    auto& g = x->ensure_grad();
    const Shape& s = x->value.shape();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        T gv = self.grad.at(n, c, 0, 0) * inv;
        T* gx = g.batch_ptr(n) + c * plane;
        for (std::int64_t i = 0; i < plane; ++i) gx[i] += gv;
      }
  });
}

}  // namespace aml
