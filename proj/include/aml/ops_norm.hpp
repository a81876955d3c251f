#pragma once

// Batch normalization and spectral weight normalization.
//
// BatchNorm always normalizes with the statistics of the current batch
// (the pix2pix convention); there are no running averages, so a freshly
// built net computes the same function in train and eval mode.

#include <cmath>

#include "aml/autodiff.hpp"
#include "aml/mat.hpp"
#include "aml/random.hpp"

namespace aml {

// x: (N,C,H,W), gamma/beta: (1,C,1,1).
template <typename T>
Var<T> batchnorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                 T eps = static_cast<T>(1e-5)) {
  const Shape& s = x->value.shape();
  check(gamma->value.shape() == Shape(1, s.c, 1, 1) &&
            beta->value.shape() == Shape(1, s.c, 1, 1),
        "batchnorm: gamma/beta must be (1,C,1,1)");
  const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
  const std::int64_t m = static_cast<std::int64_t>(s.n) * plane;

  auto mean = std::make_shared<std::vector<T>>(s.c, T(0));
  auto invstd = std::make_shared<std::vector<T>>(s.c, T(0));
  for (int c = 0; c < s.c; ++c) {
    double acc = 0, acc2 = 0;
    for (int n = 0; n < s.n; ++n) {
      const T* p = x->value.batch_ptr(n) + c * plane;
      for (std::int64_t i = 0; i < plane; ++i) {
        acc += p[i];
        acc2 += static_cast<double>(p[i]) * p[i];
      }
    }
    double mu = acc / m;
    double var = acc2 / m - mu * mu;
    if (var < 0) var = 0;
    (*mean)[c] = static_cast<T>(mu);
    (*invstd)[c] = static_cast<T>(1.0 / std::sqrt(var + eps));
  }

  Tensor<T> out(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T mu = (*mean)[c], is = (*invstd)[c];
      const T g = gamma->value.at(0, c, 0, 0), b = beta->value.at(0, c, 0, 0);
      const T* p = x->value.batch_ptr(n) + c * plane;
      T* o = out.batch_ptr(n) + c * plane;
      for (std::int64_t i = 0; i < plane; ++i) o[i] = g * ((p[i] - mu) * is) + b;
    }

  return make_node<T>(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, mean, invstd, plane, m](Node<T>& self) {
        const Shape& s = x->value.shape();
        for (int c = 0; c < s.c; ++c) {
          const T mu = (*mean)[c], is = (*invstd)[c];
          const T g = gamma->value.at(0, c, 0, 0);
          double sum_dy = 0, sum_dyx = 0;
          for (int n = 0; n < s.n; ++n) {
            const T* gp = self.grad.batch_ptr(n) + c * plane;
            const T* xp = x->value.batch_ptr(n) + c * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
              sum_dy += gp[i];
              sum_dyx += static_cast<double>(gp[i]) * ((xp[i] - mu) * is);
            }
          }
          if (gamma->requires_grad)
            gamma->ensure_grad().at(0, c, 0, 0) += static_cast<T>(sum_dyx);
          if (beta->requires_grad)
            beta->ensure_grad().at(0, c, 0, 0) += static_cast<T>(sum_dy);
          if (x->requires_grad) {
            auto& gx = x->ensure_grad();
            const T mean_dy = static_cast<T>(sum_dy / m);
            const T mean_dyx = static_cast<T>(sum_dyx / m);
            for (int n = 0; n < s.n; ++n) {
              const T* gp = self.grad.batch_ptr(n) + c * plane;
              const T* xp = x->value.batch_ptr(n) + c * plane;
              T* dst = gx.batch_ptr(n) + c * plane;
              for (std::int64_t i = 0; i < plane; ++i) {
                T xhat = (xp[i] - mu) * is;
                dst[i] += g * is * (gp[i] - mean_dy - xhat * mean_dyx);
              }
            }
          }
        }
      });
}

// Power-iteration state for one weight matrix (rows x cols view).
template <typename T>
struct SnState {
  std::vector<T> u, v;

  void init(int rows, int cols, Rng& rng) {
    u.resize(static_cast<std::size_t>(rows));
    v.resize(static_cast<std::size_t>(cols));
    for (auto& e : u) e = static_cast<T>(rng.normal());
    for (auto& e : v) e = static_cast<T>(rng.normal());
    l2normalize(u);
    l2normalize(v);
  }

  static void l2normalize(std::vector<T>& a) {
    double n = 0;
    for (T e : a) n += static_cast<double>(e) * e;
    T inv = static_cast<T>(1.0 / (std::sqrt(n) + 1e-12));
    for (auto& e : a) e *= inv;
  }
};

namespace detail {

// One optional power iteration, then sigma = u^T W v (clamped away from 0).
template <typename T>
T sn_sigma(const Tensor<T>& w, int rows, int cols, SnState<T>& st, bool update) {
  check(w.numel() == static_cast<std::int64_t>(rows) * cols,
        "spectral_normalize: matrix view does not cover the weight");
  check(static_cast<int>(st.u.size()) == rows &&
            static_cast<int>(st.v.size()) == cols,
        "spectral_normalize: state size mismatch");
  MapCM<T> wm(w.data(), rows, cols);
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  Eigen::Map<Vec> um(st.u.data(), rows);
  Eigen::Map<Vec> vm(st.v.data(), cols);
  if (update) {
    vm.noalias() = wm.transpose() * um;
    SnState<T>::l2normalize(st.v);
    um.noalias() = wm * vm;
    SnState<T>::l2normalize(st.u);
  }
  T sigma = um.dot(wm * vm);
  if (sigma < static_cast<T>(1e-12)) sigma = static_cast<T>(1e-12);
  return sigma;
}

}  // namespace detail

template <typename T>
Tensor<T> spectral_normalize(const Tensor<T>& w, int rows, int cols,
                             SnState<T>& st, bool update, T* sigma_out = nullptr) {
  T sigma = detail::sn_sigma(w, rows, cols, st, update);
  if (sigma_out) *sigma_out = sigma;
  Tensor<T> out = w;
  T inv = T(1) / sigma;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= inv;
  return out;
}

// Autodiff wrapper. u and v are treated as constants of the iteration, so
// d(W/sigma) contributes G/sigma - (<G, W/sigma>/sigma) u v^T to dW.
template <typename T>
Var<T> sn_weight(const Var<T>& w, const std::shared_ptr<SnState<T>>& st,
                 bool update) {
  const Shape& s = w->value.shape();
  const int rows = s.n;
  const int cols = static_cast<int>(s.numel() / s.n);
  T sigma = detail::sn_sigma(w->value, rows, cols, *st, update);
  Tensor<T> out = w->value;
  T inv = T(1) / sigma;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= inv;
  auto u = std::make_shared<std::vector<T>>(st->u);
  auto v = std::make_shared<std::vector<T>>(st->v);
  return make_node<T>(std::move(out), {w}, [w, u, v, sigma, rows, cols](Node<T>& self) {
    if (!w->requires_grad) return;
    auto& gw = w->ensure_grad();
    double dot = 0;
    for (std::int64_t i = 0; i < self.grad.numel(); ++i)
      dot += static_cast<double>(self.grad[i]) * self.value[i];
    const T coef = static_cast<T>(dot / sigma);
    const T inv = T(1) / sigma;
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        std::int64_t i = static_cast<std::int64_t>(r) * cols + c;
        gw[i] += self.grad[i] * inv - coef * (*u)[r] * (*v)[c];
      }
  });
}

}  // namespace aml
