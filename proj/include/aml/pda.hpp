#pragma once

// Pixel-difficulty attention head at one decoder resolution. The head
// predicts the segmentation from the decoder feature; difficulty is
// 1 - p(true class) per pixel, resized back to the feature grid and used
// as a multiplicative residual. Training-time only; inference never
// evaluates these heads.

#include "aml/layers.hpp"
#include "aml/ops_interp.hpp"
#include "aml/ops_softmax.hpp"

namespace aml {

template <typename T>
struct PdaOutput {
  Var<T> attn;        // (N,1,h,w) in [0,1], feature-grid difficulty
  Var<T> probs_full;  // (N,K,H_in,W_in) softmax probabilities
  Var<T> aux_loss;    // scalar cross-entropy of probs_full vs mask
  Var<T> enhanced;    // feat * (1 + attn)
};

template <typename T>
class PdaHead {
 public:
  PdaHead(const std::string& name, int channels, int num_classes, Rng& rng)
      : reduce_(name + ".reduce", channels, channels / 2, 1, 1, false, rng),
        bn_(name + ".bn", channels / 2),
        classify_(name + ".classify", channels / 2, num_classes, 1, 1, true, rng) {
    check(channels % 2 == 0,
          "difficulty head needs even channels, got " + std::to_string(channels));
  }

  // Top-down difficulty: 1 - p(true class), from the ground-truth mask.
  PdaOutput<T> forward(const Var<T>& feat, const Mask& gt, int in_h, int in_w) const {
    const Shape& s = feat->value.shape();
    auto probs = probs_full(feat, in_h, in_w);
    auto p_true = gather_true(probs, gt);
    auto attn = clamp01(bilinear_resize(one_minus(p_true), s.h, s.w));
    PdaOutput<T> out;
    out.attn = attn;
    out.probs_full = probs;
    out.aux_loss = nll_mean(p_true);
    out.enhanced = apply_attention(feat, attn);
    return out;
  }

  // Bottom-up variant (ablation): difficulty = 1 - max class probability,
  // no ground truth involved.
  PdaOutput<T> forward_bottom_up(const Var<T>& feat, const Mask& gt, int in_h,
                                 int in_w) const {
    const Shape& s = feat->value.shape();
    auto probs = probs_full(feat, in_h, in_w);
    auto attn = clamp01(bilinear_resize(one_minus(channel_max(probs)), s.h, s.w));
    PdaOutput<T> out;
    out.attn = attn;
    out.probs_full = probs;
    out.aux_loss = nll_mean(gather_true(probs, gt));
    out.enhanced = apply_attention(feat, attn);
    return out;
  }

  Var<T> probs_full(const Var<T>& feat, int in_h, int in_w) const {
    auto logits = classify_(relu(bn_(reduce_(feat))));
    return softmax_c(bilinear_resize(logits, in_h, in_w));
  }

  void params(ParamMap<T>& pm) const {
    reduce_.params(pm);
    bn_.params(pm);
    classify_.params(pm);
  }

  Conv2dLayer<T>& classify_layer() { return classify_; }

 private:
  Conv2dLayer<T> reduce_;
  BatchNormLayer<T> bn_;
  Conv2dLayer<T> classify_;
};

// Cross-entropy on already-normalized probabilities.
template <typename T>
Var<T> pda_aux_loss(const Var<T>& probs_full, const Mask& gt) {
  return nll_mean(gather_true(probs_full, gt));
}

}  // namespace aml
