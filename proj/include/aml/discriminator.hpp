#pragma once

// Conditional patch discriminator: judges (image, segmentation) pairs with
// a grid of logits, one per 16x16 input region. Six conv layers: a 3x3
// stride-1 stem, four spectral-normalized 4x4 stride-2 layers (leaky ReLU
// 0.2), and a 1x1 head to a single logit channel. Feature maps after each
// strided layer are exported as taps for the encoder attention; leaked
// decoder difficulty maps are applied at the matching resolutions.

#include "aml/generator.hpp"

namespace aml {

struct DiscConfig {
  int img_channels = 3;
  int num_classes = 3;
  std::vector<int> widths = {64, 64, 128, 256, 512};  // stem + 4 strided

  void validate() const {
    check(widths.size() == 5, "discriminator needs 5 conv widths (stem + 4 strided)");
    for (int w : widths) check(w >= 1, "discriminator widths must be positive");
  }
};

template <typename T>
struct DiscTrace {
  Var<T> patch_logits;       // (N,1,ceil(H/16),ceil(W/16))
  std::vector<Var<T>> taps;  // after strided layers; taps[t] at factor 2^(t+1)
};

template <typename T>
class Discriminator {
 public:
  Discriminator(const DiscConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    stem_.emplace("d.l0", cfg.img_channels + cfg.num_classes, cfg.widths[0], 3,
                  1, true, rng);
    for (int t = 1; t <= 4; ++t)
      strided_.emplace_back("d.l" + std::to_string(t),
                            cfg.widths[static_cast<std::size_t>(t - 1)],
                            cfg.widths[static_cast<std::size_t>(t)], 4, 2, rng);
    head_.emplace("d.l5", cfg.widths[4], 1, 1, 1, true, rng);
  }

  // seg must hold per-class probabilities (softmaxed logits or one-hot).
  DiscTrace<T> forward(const Tensor<T>& img, const Var<T>& seg,
                       const std::vector<LeakedMap<T>>& leaked,
                       bool update_power) const {
    const Shape& is = img.shape();
    const Shape& ss = seg->value.shape();
    check(ss.c == cfg_.num_classes,
          "discriminator expects " + std::to_string(cfg_.num_classes) +
              " segmentation channels, got " + std::to_string(ss.c));
    check(ss.n == is.n && ss.h == is.h && ss.w == is.w,
          "segmentation " + ss.str() + " does not match image " + is.str());

    DiscTrace<T> trace;
    Var<T> x = leaky_relu(stem_->operator()(concat_c(constant(img), seg)));
    for (std::size_t t = 0; t < strided_.size(); ++t) {
      x = leaky_relu(strided_[t](x, update_power));
      int factor = 2 << t;
      for (const auto& lk : leaked)
        if (lk.factor == factor) {
          const Shape& xs = x->value.shape();
          Var<T> m = lk.map;
          if (m->value.shape().h != xs.h || m->value.shape().w != xs.w)
            m = bilinear_resize(m, xs.h, xs.w);
          x = apply_attention(x, m);
        }
      trace.taps.push_back(x);
    }
    trace.patch_logits = head_->operator()(x);
    return trace;
  }

  int tap_channels(int factor) const {
    for (int t = 1; t <= 4; ++t)
      if ((1 << t) == factor) return cfg_.widths[static_cast<std::size_t>(t)];
    fail("no discriminator tap at downsampling factor " + std::to_string(factor));
  }

  void params(ParamMap<T>& pm) const {
    stem_->params(pm);
    for (auto& l : strided_) l.params(pm);
    head_->params(pm);
  }
  void buffers(BufferMap<T>& bm) const {
    for (auto& l : strided_) l.buffers(bm);
  }
  const std::vector<SpectralConv2dLayer<T>>& strided_layers() const {
    return strided_;
  }

 private:
  DiscConfig cfg_;
  std::optional<Conv2dLayer<T>> stem_;
  std::vector<SpectralConv2dLayer<T>> strided_;
  std::optional<Conv2dLayer<T>> head_;
};

// Ground truth enters the discriminator as a one-hot simplex per pixel.
template <typename T>
Tensor<T> one_hot(const Mask& mask, int num_classes) {
  mask.check_labels(num_classes);
  Tensor<T> out(Shape(mask.n, num_classes, mask.h, mask.w), T(0));
  const std::int64_t plane = static_cast<std::int64_t>(mask.h) * mask.w;
  for (int n = 0; n < mask.n; ++n)
    for (std::int64_t i = 0; i < plane; ++i)
      out.batch_ptr(n)[mask.v[n * plane + i] * plane + i] = T(1);
  return out;
}

}  // namespace aml
