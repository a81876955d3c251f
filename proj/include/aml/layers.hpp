#pragma once

// Parameter-owning layers and the registries the optimizer, checkpointing
// and digests operate on.

#include <cmath>
#include <utility>

#include "aml/ops_conv.hpp"
#include "aml/ops_norm.hpp"
#include "aml/random.hpp"

namespace aml {

template <typename T>
struct ParamMap {
  std::vector<std::pair<std::string, Var<T>>> items;

  void add(const std::string& name, const Var<T>& v) {
    check(static_cast<bool>(v), "ParamMap: null parameter " + name);
    for (auto& [n, _] : items)
      check(n != name, "ParamMap: duplicate parameter name " + name);
    items.emplace_back(name, v);
  }
  std::vector<Var<T>> vars() const {
    std::vector<Var<T>> out;
    out.reserve(items.size());
    for (auto& [_, v] : items) out.push_back(v);
    return out;
  }
  void set_requires_grad(bool on) const {
    for (auto& [_, v] : items) v->requires_grad = on;
  }
  void zero_grad() const {
    for (auto& [_, v] : items) v->zero_grad();
  }
  std::size_t size() const { return items.size(); }
};

// Non-trainable persistent state (power-iteration vectors).
template <typename T>
struct BufferMap {
  std::vector<std::pair<std::string, std::vector<T>*>> items;

  void add(const std::string& name, std::vector<T>* data) {
    items.emplace_back(name, data);
  }
};

template <typename T>
struct Conv2dLayer {
  Var<T> w, b;
  int stride;

  // He-normal weights; bias zero.
  Conv2dLayer(const std::string& name, int in_c, int out_c, int k, int stride_,
              bool bias, Rng& rng)
      : stride(stride_) {
    Tensor<T> wt(Shape(out_c, in_c, k, k));
    double std = std::sqrt(2.0 / (static_cast<double>(in_c) * k * k));
    rng.fill_normal(wt, std);
    w = leaf(std::move(wt), true, name + ".w");
    if (bias) b = leaf(Tensor<T>(Shape(1, out_c, 1, 1), T(0)), true, name + ".b");
  }

  Var<T> operator()(const Var<T>& x) const {
    const Shape& s = x->value.shape();
    int k = w->value.shape().h;
    Pad p = stride == 1 ? Pad::same(k) : Pad::same_ceil(s.h, s.w, k, stride);
    return conv2d(x, w, b, stride, p);
  }

  void params(ParamMap<T>& pm) const {
    pm.add(w->name, w);
    if (b) pm.add(b->name, b);
  }
};

template <typename T>
struct BatchNormLayer {
  Var<T> gamma, beta;

  BatchNormLayer(const std::string& name, int c) {
    gamma = leaf(Tensor<T>(Shape(1, c, 1, 1), T(1)), true, name + ".gamma");
    beta = leaf(Tensor<T>(Shape(1, c, 1, 1), T(0)), true, name + ".beta");
  }

  Var<T> operator()(const Var<T>& x) const { return batchnorm(x, gamma, beta); }

  void params(ParamMap<T>& pm) const {
    pm.add(gamma->name, gamma);
    pm.add(beta->name, beta);
  }
};

// Conv whose weight is divided by its power-iteration top singular value.
// update=true advances the iteration (training forwards only).
template <typename T>
struct SpectralConv2dLayer {
  Var<T> w, b;
  std::shared_ptr<SnState<T>> sn;
  int stride;

  SpectralConv2dLayer(const std::string& name, int in_c, int out_c, int k,
                      int stride_, Rng& rng)
      : sn(std::make_shared<SnState<T>>()), stride(stride_) {
    Tensor<T> wt(Shape(out_c, in_c, k, k));
    double std = std::sqrt(2.0 / (static_cast<double>(in_c) * k * k));
    rng.fill_normal(wt, std);
    w = leaf(std::move(wt), true, name + ".w");
    b = leaf(Tensor<T>(Shape(1, out_c, 1, 1), T(0)), true, name + ".b");
    sn->init(out_c, in_c * k * k, rng);
    // Warm the power iteration so the unit-norm bound holds from the very
    // first forward; afterwards one iteration per training step tracks the
    // slowly moving weight.
    for (int i = 0; i < 30; ++i)
      detail::sn_sigma(w->value, out_c, in_c * k * k, *sn, true);
  }

  Var<T> operator()(const Var<T>& x, bool update_power) const {
    const Shape& s = x->value.shape();
    int k = w->value.shape().h;
    Pad p = stride == 1 ? Pad::same(k) : Pad::same_ceil(s.h, s.w, k, stride);
    return conv2d(x, sn_weight(w, sn, update_power), b, stride, p);
  }

  // Weight as the next forward would see it, without advancing the iteration.
  Tensor<T> normalized_weight() const {
    const Shape& s = w->value.shape();
    return spectral_normalize(w->value, s.n, static_cast<int>(s.numel() / s.n),
                              *sn, false);
  }

  void params(ParamMap<T>& pm) const {
    pm.add(w->name, w);
    pm.add(b->name, b);
  }
  void buffers(BufferMap<T>& bm) const {
    bm.add(w->name + ".sn_u", &sn->u);
    bm.add(w->name + ".sn_v", &sn->v);
  }
};

}  // namespace aml
