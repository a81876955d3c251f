#pragma once

// conv2d (im2col + GEMM), 1x1 fast path, 2x2 max-pooling.
// Padding is explicit per edge so stride-2 layers can round output
// dims up (ceil) the way the patch discriminator needs.

#include "aml/autodiff.hpp"
#include "aml/mat.hpp"

namespace aml {

struct Pad {
  int top = 0, bottom = 0, left = 0, right = 0;

  static Pad same(int kernel) {  // stride-1 'same'
    int p = (kernel - 1) / 2;
    return {p, kernel - 1 - p, p, kernel - 1 - p};
  }
  // Padding that makes a strided conv produce ceil(in/stride) outputs.
  static int ceil_total(int in, int kernel, int stride) {
    int out = (in + stride - 1) / stride;
    int need = (out - 1) * stride + kernel - in;
    return need > 0 ? need : 0;
  }
  static Pad same_ceil(int in_h, int in_w, int kernel, int stride) {
    int th = ceil_total(in_h, kernel, stride);
    int tw = ceil_total(in_w, kernel, stride);
    return {th / 2, th - th / 2, tw / 2, tw - tw / 2};
  }
};

inline int conv_out_dim(int in, int kernel, int stride, int pad_begin, int pad_end) {
  int span = in + pad_begin + pad_end - kernel;
  check(span >= 0, "conv2d: kernel larger than padded input");
  return span / stride + 1;
}

namespace detail {

// One batch element: (C,H,W) -> (C*kh*kw) x (OH*OW), zero-filled outside.
template <typename T>
void im2col(const T* x, int C, int H, int W, int kh, int kw, int stride,
            const Pad& p, int OH, int OW, T* col) {
  const std::int64_t patch = static_cast<std::int64_t>(OH) * OW;
  for (int c = 0; c < C; ++c) {
    const T* xc = x + static_cast<std::int64_t>(c) * H * W;
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        T* row = col + ((static_cast<std::int64_t>(c) * kh + ky) * kw + kx) * patch;
        for (int oy = 0; oy < OH; ++oy) {
          int iy = oy * stride - p.top + ky;
          T* dst = row + static_cast<std::int64_t>(oy) * OW;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + OW, T(0));
            continue;
          }
          const T* src = xc + static_cast<std::int64_t>(iy) * W;
          for (int ox = 0; ox < OW; ++ox) {
            int ix = ox * stride - p.left + kx;
            dst[ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
          }
        }
      }
  }
}

template <typename T>
void col2im_add(const T* col, int C, int H, int W, int kh, int kw, int stride,
                const Pad& p, int OH, int OW, T* gx) {
  const std::int64_t patch = static_cast<std::int64_t>(OH) * OW;
  for (int c = 0; c < C; ++c) {
    T* gxc = gx + static_cast<std::int64_t>(c) * H * W;
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        const T* row = col + ((static_cast<std::int64_t>(c) * kh + ky) * kw + kx) * patch;
        for (int oy = 0; oy < OH; ++oy) {
          int iy = oy * stride - p.top + ky;
          if (iy < 0 || iy >= H) continue;
          const T* src = row + static_cast<std::int64_t>(oy) * OW;
          T* dst = gxc + static_cast<std::int64_t>(iy) * W;
          for (int ox = 0; ox < OW; ++ox) {
            int ix = ox * stride - p.left + kx;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
  }
}

}  // namespace detail

// x: (N,Cin,H,W), w: (Cout,Cin,kh,kw), b: (1,Cout,1,1) or nullptr.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride,
              const Pad& pad) {
  const Shape& sx = x->value.shape();
  const Shape& sw = w->value.shape();
  check(sx.c == sw.c, "conv2d: input has " + std::to_string(sx.c) +
                          " channels, kernel expects " + std::to_string(sw.c));
  const int O = sw.n, C = sw.c, kh = sw.h, kw = sw.w;
  const int OH = conv_out_dim(sx.h, kh, stride, pad.top, pad.bottom);
  const int OW = conv_out_dim(sx.w, kw, stride, pad.left, pad.right);
  const std::int64_t K = static_cast<std::int64_t>(C) * kh * kw;
  const std::int64_t P = static_cast<std::int64_t>(OH) * OW;
  const bool pointwise = (kh == 1 && kw == 1 && stride == 1 && pad.top == 0 &&
                          pad.bottom == 0 && pad.left == 0 && pad.right == 0);

  Tensor<T> out(Shape(sx.n, O, OH, OW));
  detail::MapCM<T> wm(w->value.data(), O, K);
  std::vector<T> colbuf;
  if (!pointwise) colbuf.resize(static_cast<std::size_t>(K * P));
  for (int n = 0; n < sx.n; ++n) {
    const T* colp = x->value.batch_ptr(n);
    if (!pointwise) {
      detail::im2col(x->value.batch_ptr(n), C, sx.h, sx.w, kh, kw, stride, pad,
                     OH, OW, colbuf.data());
      colp = colbuf.data();
    }
    detail::MapCM<T> cm(colp, K, P);
    detail::MapM<T> om(out.batch_ptr(n), O, P);
    om.noalias() = wm * cm;
  }
  if (b) {
    check(b->value.shape() == Shape(1, O, 1, 1), "conv2d: bias must be (1,O,1,1)");
    for (int n = 0; n < sx.n; ++n)
      for (int o = 0; o < O; ++o) {
        T bv = b->value.at(0, o, 0, 0);
        T* op = out.batch_ptr(n) + o * P;
        for (std::int64_t i = 0; i < P; ++i) op[i] += bv;
      }
  }

  std::vector<Var<T>> parents = b ? std::vector<Var<T>>{x, w, b}
                                  : std::vector<Var<T>>{x, w};
  return make_node<T>(
      std::move(out), std::move(parents),
      [x, w, b, stride, pad, O, C, kh, kw, OH, OW, K, P, pointwise](Node<T>& self) {
        const Shape& sx = x->value.shape();
        detail::MapCM<T> wm(w->value.data(), O, K);
        std::vector<T> colbuf, gcolbuf;
        if (!pointwise) colbuf.resize(static_cast<std::size_t>(K * P));
        if (x->requires_grad && !pointwise)
          gcolbuf.resize(static_cast<std::size_t>(K * P));
        for (int n = 0; n < sx.n; ++n) {
          detail::MapCM<T> gom(self.grad.batch_ptr(n), O, P);
          if (x->requires_grad) {
            auto& gx = x->ensure_grad();
            if (pointwise) {
              detail::MapM<T> gxm(gx.batch_ptr(n), K, P);
              gxm.noalias() += wm.transpose() * gom;
            } else {
              detail::MapM<T> gcm(gcolbuf.data(), K, P);
              gcm.noalias() = wm.transpose() * gom;
              detail::col2im_add(gcolbuf.data(), C, sx.h, sx.w, kh, kw, stride,
                                 pad, OH, OW, gx.batch_ptr(n));
            }
          }
          if (w->requires_grad) {
            const T* colp = x->value.batch_ptr(n);
            if (!pointwise) {
              detail::im2col(x->value.batch_ptr(n), C, sx.h, sx.w, kh, kw,
                             stride, pad, OH, OW, colbuf.data());
              colp = colbuf.data();
            }
            detail::MapCM<T> cm(colp, K, P);
            detail::MapM<T> gwm(w->ensure_grad().data(), O, K);
            gwm.noalias() += gom * cm.transpose();
          }
          if (b && b->requires_grad) {
            auto& gb = b->ensure_grad();
            for (int o = 0; o < O; ++o) {
              const T* gp = self.grad.batch_ptr(n) + o * P;
              T acc = T(0);
              for (std::int64_t i = 0; i < P; ++i) acc += gp[i];
              gb.at(0, o, 0, 0) += acc;
            }
          }
        }
      });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride = 1) {
  return conv2d(x, w, b, stride, Pad::same(w->value.shape().h));
}

// 2x2 max-pool, stride 2; trailing odd row/column is dropped.
template <typename T>
Var<T> maxpool2(const Var<T>& x) {
  const Shape& s = x->value.shape();
  check(s.h >= 2 && s.w >= 2, "maxpool2: input smaller than window");
  const int OH = s.h / 2, OW = s.w / 2;
  Tensor<T> out(Shape(s.n, s.c, OH, OW));
  auto argmax = std::make_shared<std::vector<std::int64_t>>(
      static_cast<std::size_t>(out.numel()));
  std::int64_t oi = 0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox, ++oi) {
          std::int64_t base = x->value.index(n, c, oy * 2, ox * 2);
          std::int64_t best = base;
          T bv = x->value[base];
          const std::int64_t cand[3] = {base + 1, base + s.w, base + s.w + 1};
          for (std::int64_t idx : cand)
            if (x->value[idx] > bv) { bv = x->value[idx]; best = idx; }
          out[oi] = bv;
          (*argmax)[static_cast<std::size_t>(oi)] = best;
        }
  return make_node<T>(std::move(out), {x}, [x, argmax](Node<T>& self) {
    if (!x->requires_grad) return;
    auto& g = x->ensure_grad();
    for (std::int64_t i = 0; i < self.grad.numel(); ++i)
      g[(*argmax)[static_cast<std::size_t>(i)]] += self.grad[i];
  });
}

}  // namespace aml
