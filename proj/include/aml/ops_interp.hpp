#pragma once

// Bilinear resize, half-pixel centers (align_corners=false).
// Same-size resize is an exact copy; constants stay constant.

#include "aml/autodiff.hpp"

namespace aml {

namespace detail {

struct LerpAxis {
  std::vector<int> lo, hi;
  std::vector<double> w_hi;  // weight of hi sample, lo gets 1-w_hi
};

inline LerpAxis lerp_axis(int in, int out) {
  check(out > 0, "bilinear_resize: zero target dimension");
  LerpAxis a;
  a.lo.resize(out);
  a.hi.resize(out);
  a.w_hi.resize(out);
  double scale = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    double src = (i + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int lo = static_cast<int>(src);
    if (lo > in - 1) lo = in - 1;
    int hi = lo + 1 < in ? lo + 1 : in - 1;
    a.lo[i] = lo;
    a.hi[i] = hi;
    a.w_hi[i] = src - lo;
  }
  return a;
}

}  // namespace detail

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int out_h, int out_w) {
  const Shape& s = x.shape();
  if (out_h == s.h && out_w == s.w) return x;
  auto ay = detail::lerp_axis(s.h, out_h);
  auto ax = detail::lerp_axis(s.w, out_w);
  Tensor<T> out(Shape(s.n, s.c, out_h, out_w));
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int oy = 0; oy < out_h; ++oy) {
        T fy = static_cast<T>(ay.w_hi[oy]);
        for (int ox = 0; ox < out_w; ++ox) {
          T fx = static_cast<T>(ax.w_hi[ox]);
          T v00 = x.at(n, c, ay.lo[oy], ax.lo[ox]);
          T v01 = x.at(n, c, ay.lo[oy], ax.hi[ox]);
          T v10 = x.at(n, c, ay.hi[oy], ax.lo[ox]);
          T v11 = x.at(n, c, ay.hi[oy], ax.hi[ox]);
          T top = v00 + fx * (v01 - v00);
          T bot = v10 + fx * (v11 - v10);
          out.at(n, c, oy, ox) = top + fy * (bot - top);
        }
      }
  return out;
}

template <typename T>
Var<T> bilinear_resize(const Var<T>& x, int out_h, int out_w) {
  const Shape s = x->value.shape();
  Tensor<T> out = bilinear_resize(x->value, out_h, out_w);
  return make_node<T>(std::move(out), {x}, [x, s, out_h, out_w](Node<T>& self) {
    if (!x->requires_grad) return;
    auto& g = x->ensure_grad();
    if (out_h == s.h && out_w == s.w) {
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
      return;
    }
    auto ay = detail::lerp_axis(s.h, out_h);
    auto ax = detail::lerp_axis(s.w, out_w);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int oy = 0; oy < out_h; ++oy) {
          T fy = static_cast<T>(ay.w_hi[oy]);
          for (int ox = 0; ox < out_w; ++ox) {
            T fx = static_cast<T>(ax.w_hi[ox]);
            T go = self.grad.at(n, c, oy, ox);
            g.at(n, c, ay.lo[oy], ax.lo[ox]) += go * (T(1) - fy) * (T(1) - fx);
            g.at(n, c, ay.lo[oy], ax.hi[ox]) += go * (T(1) - fy) * fx;
            g.at(n, c, ay.hi[oy], ax.lo[ox]) += go * fy * (T(1) - fx);
            g.at(n, c, ay.hi[oy], ax.hi[ox]) += go * fy * fx;
          }
        }
  });
}

}  // namespace aml
