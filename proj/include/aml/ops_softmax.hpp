#pragma once

// Softmaxes, the attention matmuls, and the loss reductions.

#include <cmath>
#include <string>

#include "aml/autodiff.hpp"
#include "aml/mat.hpp"

namespace aml {

namespace detail {

// Row-wise softmax with max subtraction. Rejects non-finite input by
// flat index so a blown-up attention energy is easy to locate.
template <typename T>
void softmax_rows_kernel(const T* in, T* out, std::int64_t rows,
                         std::int64_t cols, const char* what) {
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* ip = in + r * cols;
    T* op = out + r * cols;
    T mx = ip[0];
    for (std::int64_t j = 0; j < cols; ++j) {
      if (!std::isfinite(static_cast<double>(ip[j])))
        fail(std::string(what) + ": non-finite logit at row " +
             std::to_string(r) + " col " + std::to_string(j));
      if (ip[j] > mx) mx = ip[j];
    }
    T sum = T(0);
    for (std::int64_t j = 0; j < cols; ++j) {
      op[j] = std::exp(ip[j] - mx);
      sum += op[j];
    }
    T inv = T(1) / sum;
    for (std::int64_t j = 0; j < cols; ++j) op[j] *= inv;
  }
}

}  // namespace detail

// Plain softmax over the last axis of a (1,1,rows,cols) tensor.
template <typename T>
Tensor<T> position_softmax(const Tensor<T>& logits) {
  const Shape& s = logits.shape();
  check(s.n == 1 && s.c == 1, "position_softmax: expects a (1,1,rows,cols) matrix");
  Tensor<T> out(s);
  detail::softmax_rows_kernel(logits.data(), out.data(), s.h, s.w,
                              "position_softmax");
  return out;
}

// Autodiff row softmax over (N,1,R,C): each of the N*R rows sums to 1.
template <typename T>
Var<T> softmax_rows(const Var<T>& x) {
  const Shape& s = x->value.shape();
  check(s.c == 1, "softmax_rows: expects (N,1,R,C)");
  Tensor<T> out(s);
  detail::softmax_rows_kernel(x->value.data(), out.data(),
                              static_cast<std::int64_t>(s.n) * s.h, s.w,
                              "softmax_rows");
  return make_node<T>(std::move(out), {x}, [x](Node<T>& self) {
    if (!x->requires_grad) return;
    const Shape& s = x->value.shape();
    auto& g = x->ensure_grad();
    const std::int64_t rows = static_cast<std::int64_t>(s.n) * s.h;
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* sp = self.value.data() + r * s.w;
      const T* gp = self.grad.data() + r * s.w;
      T* dst = g.data() + r * s.w;
      T dot = T(0);
      for (int j = 0; j < s.w; ++j) dot += gp[j] * sp[j];
      for (int j = 0; j < s.w; ++j) dst[j] += sp[j] * (gp[j] - dot);
    }
  });
}

// Softmax over the channel axis, per pixel.
template <typename T>
Var<T> softmax_c(const Var<T>& x) {
  const Shape& s = x->value.shape();
  const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
  Tensor<T> out(s);
  for (int n = 0; n < s.n; ++n) {
    const T* xp = x->value.batch_ptr(n);
    T* op = out.batch_ptr(n);
    for (std::int64_t i = 0; i < plane; ++i) {
      T mx = xp[i];
      for (int c = 1; c < s.c; ++c) mx = std::max(mx, xp[c * plane + i]);
      T sum = T(0);
      for (int c = 0; c < s.c; ++c) {
        T e = std::exp(xp[c * plane + i] - mx);
        op[c * plane + i] = e;
        sum += e;
      }
      T inv = T(1) / sum;
      for (int c = 0; c < s.c; ++c) op[c * plane + i] *= inv;
    }
  }
  return make_node<T>(std::move(out), {x}, [x, plane](Node<T>& self) {
    if (!x->requires_grad) return;
    const Shape& s = x->value.shape();
    auto& g = x->ensure_grad();
    for (int n = 0; n < s.n; ++n) {
      const T* sp = self.value.batch_ptr(n);
      const T* gp = self.grad.batch_ptr(n);
      T* dst = g.batch_ptr(n);
      for (std::int64_t i = 0; i < plane; ++i) {
        T dot = T(0);
        for (int c = 0; c < s.c; ++c) dot += gp[c * plane + i] * sp[c * plane + i];
        for (int c = 0; c < s.c; ++c)
          dst[c * plane + i] += sp[c * plane + i] * (gp[c * plane + i] - dot);
      }
    }
  });
}

// Attention energies E[n,i,j] = <q[n,:,i], k[n,:,j]> over flattened positions.
// q,k: (N,Cq,H,W) -> (N,1,H*W,H*W).
template <typename T>
Var<T> attn_energy(const Var<T>& q, const Var<T>& k) {
  const Shape& sq = q->value.shape();
  check(sq == k->value.shape(), "attn_energy: query/key shape mismatch");
  const std::int64_t P = static_cast<std::int64_t>(sq.h) * sq.w;
  Tensor<T> out(Shape(sq.n, 1, static_cast<int>(P), static_cast<int>(P)));
  for (int n = 0; n < sq.n; ++n) {
    detail::MapCM<T> qm(q->value.batch_ptr(n), sq.c, P);
    detail::MapCM<T> km(k->value.batch_ptr(n), sq.c, P);
    detail::MapM<T> em(out.batch_ptr(n), P, P);
    em.noalias() = qm.transpose() * km;
  }
  return make_node<T>(std::move(out), {q, k}, [q, k, P](Node<T>& self) {
    const Shape& sq = q->value.shape();
    for (int n = 0; n < sq.n; ++n) {
      detail::MapCM<T> gem(self.grad.batch_ptr(n), P, P);
      if (q->requires_grad) {
        detail::MapCM<T> km(k->value.batch_ptr(n), sq.c, P);
        detail::MapM<T> gq(q->ensure_grad().batch_ptr(n), sq.c, P);
        gq.noalias() += km * gem.transpose();
      }
      if (k->requires_grad) {
        detail::MapCM<T> qm(q->value.batch_ptr(n), sq.c, P);
        detail::MapM<T> gk(k->ensure_grad().batch_ptr(n), sq.c, P);
        gk.noalias() += qm * gem;
      }
    }
  });
}

// Out[n,c,i] = sum_j w[n,i,j] * v[n,c,j]; w: (N,1,P,P), v: (N,Cv,H,W).
template <typename T>
Var<T> attn_apply(const Var<T>& w, const Var<T>& v) {
  const Shape& sv = v->value.shape();
  const std::int64_t P = static_cast<std::int64_t>(sv.h) * sv.w;
  check(w->value.shape() == Shape(sv.n, 1, static_cast<int>(P), static_cast<int>(P)),
        "attn_apply: weight matrix does not match value positions");
  Tensor<T> out(sv);
  for (int n = 0; n < sv.n; ++n) {
    detail::MapCM<T> wm(w->value.batch_ptr(n), P, P);
    detail::MapCM<T> vm(v->value.batch_ptr(n), sv.c, P);
    detail::MapM<T> om(out.batch_ptr(n), sv.c, P);
    om.noalias() = vm * wm.transpose();
  }
  return make_node<T>(std::move(out), {w, v}, [w, v, P](Node<T>& self) {
    const Shape& sv = v->value.shape();
    for (int n = 0; n < sv.n; ++n) {
      detail::MapCM<T> gom(self.grad.batch_ptr(n), sv.c, P);
      if (v->requires_grad) {
        detail::MapCM<T> wm(w->value.batch_ptr(n), P, P);
        detail::MapM<T> gv(v->ensure_grad().batch_ptr(n), sv.c, P);
        gv.noalias() += gom * wm;
      }
      if (w->requires_grad) {
        detail::MapCM<T> vm(v->value.batch_ptr(n), sv.c, P);
        detail::MapM<T> gw(w->ensure_grad().batch_ptr(n), P, P);
        gw.noalias() += gom.transpose() * vm;
      }
    }
  });
}

// Per-pixel max over channels: (N,K,H,W) -> (N,1,H,W), argmax backward.
template <typename T>
Var<T> channel_max(const Var<T>& x) {
  const Shape& s = x->value.shape();
  const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
  Tensor<T> out(Shape(s.n, 1, s.h, s.w));
  auto arg = std::make_shared<std::vector<int>>(
      static_cast<std::size_t>(out.numel()));
  for (int n = 0; n < s.n; ++n)
    for (std::int64_t i = 0; i < plane; ++i) {
      const T* p = x->value.batch_ptr(n);
      int best = 0;
      for (int c = 1; c < s.c; ++c)
        if (p[c * plane + i] > p[best * plane + i]) best = c;
      out.batch_ptr(n)[i] = p[best * plane + i];
      (*arg)[static_cast<std::size_t>(n * plane + i)] = best;
    }
  return make_node<T>(std::move(out), {x}, [x, arg, plane](Node<T>& self) {
    if (!x->requires_grad) return;
    const Shape& s = x->value.shape();
    auto& g = x->ensure_grad();
    for (int n = 0; n < s.n; ++n)
      for (std::int64_t i = 0; i < plane; ++i) {
        int c = (*arg)[static_cast<std::size_t>(n * plane + i)];
        g.batch_ptr(n)[c * plane + i] += self.grad.batch_ptr(n)[i];
      }
  });
}

// Per-pixel probability of the labelled class: probs (N,K,H,W) -> (N,1,H,W).
template <typename T>
Var<T> gather_true(const Var<T>& probs, const Mask& mask) {
  const Shape& s = probs->value.shape();
  check(mask.n == s.n && mask.h == s.h && mask.w == s.w,
        "gather_true: mask size does not match probabilities");
  mask.check_labels(s.c);
  const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
  Tensor<T> out(Shape(s.n, 1, s.h, s.w));
  for (int n = 0; n < s.n; ++n)
    for (std::int64_t i = 0; i < plane; ++i) {
      int cls = mask.v[n * plane + i];
      out.batch_ptr(n)[i] = probs->value.batch_ptr(n)[cls * plane + i];
    }
  auto labels = std::make_shared<std::vector<std::int32_t>>(mask.v);
  return make_node<T>(std::move(out), {probs}, [probs, labels, plane](Node<T>& self) {
    if (!probs->requires_grad) return;
    const Shape& s = probs->value.shape();
    auto& g = probs->ensure_grad();
    for (int n = 0; n < s.n; ++n)
      for (std::int64_t i = 0; i < plane; ++i) {
        int cls = (*labels)[n * plane + i];
        g.batch_ptr(n)[cls * plane + i] += self.grad.batch_ptr(n)[i];
      }
  });
}

// mean(-log(max(p, 1e-12))) over every element.
template <typename T>
Var<T> nll_mean(const Var<T>& p) {
  const std::int64_t m = p->value.numel();
  const T floor_p = static_cast<T>(1e-12);
  double acc = 0;
  for (std::int64_t i = 0; i < m; ++i)
    acc -= std::log(static_cast<double>(std::max(p->value[i], floor_p)));
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / m));
  return make_node<T>(std::move(out), {p}, [p, m, floor_p](Node<T>& self) {
    if (!p->requires_grad) return;
    auto& g = p->ensure_grad();
    T go = self.grad[0];
    for (std::int64_t i = 0; i < m; ++i)
      if (p->value[i] > floor_p) g[i] -= go / (static_cast<T>(m) * p->value[i]);
  });
}

// mean over elements of max(z,0) - t*z + log1p(exp(-|z|)); t is 0 or 1.
template <typename T>
Var<T> bce_with_logits_mean(const Var<T>& z, T target) {
  check(target == T(0) || target == T(1), "bce_with_logits_mean: target must be 0 or 1");
  const std::int64_t m = z->value.numel();
  double acc = 0;
  for (std::int64_t i = 0; i < m; ++i) {
    double zv = z->value[i];
    acc += std::max(zv, 0.0) - target * zv + std::log1p(std::exp(-std::abs(zv)));
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / m));
  return make_node<T>(std::move(out), {z}, [z, m, target](Node<T>& self) {
    if (!z->requires_grad) return;
    auto& g = z->ensure_grad();
    T go = self.grad[0] / static_cast<T>(m);
    for (std::int64_t i = 0; i < m; ++i) {
      T s = T(1) / (T(1) + std::exp(-z->value[i]));
      g[i] += go * (s - target);
    }
  });
}

// mean(log(1 - sigmoid(z))) computed as mean(-softplus(z)).
template <typename T>
Var<T> log1m_sigmoid_mean(const Var<T>& z) {
  const std::int64_t m = z->value.numel();
  double acc = 0;
  for (std::int64_t i = 0; i < m; ++i) {
    double zv = z->value[i];
    acc -= std::max(zv, 0.0) + std::log1p(std::exp(-std::abs(zv)));
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / m));
  return make_node<T>(std::move(out), {z}, [z, m](Node<T>& self) {
    if (!z->requires_grad) return;
    auto& g = z->ensure_grad();
    T go = self.grad[0] / static_cast<T>(m);
    for (std::int64_t i = 0; i < m; ++i) {
      T s = T(1) / (T(1) + std::exp(-z->value[i]));
      g[i] -= go * s;
    }
  });
}

}  // namespace aml
