#pragma once

// Discriminator-to-generator leakage at one encoder site. The full module
// builds position self-attention over the discriminator feature map
// (1x1-projected Query/Key at C/8, Value at C/2), aggregates the Value with
// the attention weights, projects back to C and adds into the generator
// feature scaled by a learned alpha that starts at exactly 0.
//
// Alternative connections (the ablation rows): plain addition, channel
// concatenation + 1x1, a 1x1 conv residual, an SE-style channel gate,
// source-target attention (Query from the generator side), or nothing.

#include <optional>

#include "aml/layers.hpp"
#include "aml/ops_interp.hpp"
#include "aml/ops_softmax.hpp"

namespace aml {

enum class Connection { ata, add, concat, conv1x1, se_gate, sta, none };

inline const char* connection_name(Connection c) {
  switch (c) {
    case Connection::ata: return "ata";
    case Connection::add: return "add";
    case Connection::concat: return "concat";
    case Connection::conv1x1: return "conv1x1";
    case Connection::se_gate: return "se";
    case Connection::sta: return "sta";
    case Connection::none: return "none";
  }
  return "?";
}

inline Connection parse_connection(const std::string& s) {
  for (Connection c : {Connection::ata, Connection::add, Connection::concat,
                       Connection::conv1x1, Connection::se_gate,
                       Connection::sta, Connection::none})
    if (s == connection_name(c)) return c;
  fail("unknown connection mode '" + s + "'");
}

// Positions per attention site stay bounded: the weight matrix is
// (H*W) x (H*W) per batch element.
inline constexpr int kMaxAttentionPositions = 4096;

template <typename T>
struct AtaOutput {
  Var<T> fused;
  Tensor<T> attention;  // (N,1,P,P) copy, only when requested
};

template <typename T>
class AtaModule {
 public:
  // channels: generator feature channels C at this site; disc_channels: the
  // tapped discriminator map's channel count (adapted by 1x1 when different).
  AtaModule(const std::string& name, int channels, int disc_channels,
            Connection mode, Rng& rng)
      : channels_(channels), mode_(mode) {
    if (disc_channels != channels && mode != Connection::none)
      adapt_.emplace(name + ".adapt", disc_channels, channels, 1, 1, true, rng);
    switch (mode) {
      case Connection::ata:
      case Connection::sta: {
        check(channels % 8 == 0, "attention site needs channels divisible by 8, got " +
                                     std::to_string(channels));
        wq_.emplace(name + ".wq", channels, channels / 8, 1, 1, false, rng);
        wk_.emplace(name + ".wk", channels, channels / 8, 1, 1, false, rng);
        wv_.emplace(name + ".wv", channels, channels / 2, 1, 1, false, rng);
        wo_.emplace(name + ".wo", channels / 2, channels, 1, 1, false, rng);
        alpha_ = leaf(Tensor<T>::scalar(T(0)), true, name + ".alpha");
        break;
      }
      case Connection::concat:
        fuse_.emplace(name + ".fuse", 2 * channels, channels, 1, 1, true, rng);
        break;
      case Connection::conv1x1:
        fuse_.emplace(name + ".fuse", channels, channels, 1, 1, true, rng);
        break;
      case Connection::se_gate: {
        int hidden = std::max(1, channels / 8);
        se1_.emplace(name + ".se1", channels, hidden, 1, 1, true, rng);
        se2_.emplace(name + ".se2", hidden, channels, 1, 1, true, rng);
        break;
      }
      case Connection::add:
      case Connection::none:
        break;
    }
  }

  Connection mode() const { return mode_; }
  const Var<T>& alpha() const { return alpha_; }

  // Attention weights from the discriminator map alone (Query/Key path).
  Var<T> attention_weights(const Var<T>& d_feat) const {
    Var<T> d = adapted(d_feat);
    return softmax_rows(attn_energy(wq_->operator()(d), wk_->operator()(d)));
  }

  AtaOutput<T> forward(const Var<T>& d_feat_raw, const Var<T>& g_feat,
                       bool want_attention = false) const {
    const Shape& gs = g_feat->value.shape();
    check(gs.c == channels_, "attention site expects " + std::to_string(channels_) +
                                 " generator channels, got " + std::to_string(gs.c));
    if (mode_ == Connection::none) return {g_feat, {}};

    // Align the tapped map to the generator grid (strided convs can be
    // off by one row/column).
    Var<T> d = d_feat_raw;
    if (d->value.shape().h != gs.h || d->value.shape().w != gs.w)
      d = bilinear_resize(d, gs.h, gs.w);
    check(d->value.shape().n == gs.n, "attention site: batch size mismatch");
    d = adapted(d);

    switch (mode_) {
      case Connection::add:
        return {add(g_feat, d), {}};
      case Connection::concat:
        return {fuse_->operator()(concat_c(g_feat, d)), {}};
      case Connection::conv1x1:
        return {add(g_feat, fuse_->operator()(d)), {}};
      case Connection::se_gate: {
        auto gate = sigmoid(se2_->operator()(relu(se1_->operator()(global_avg_pool(d)))));
        return {mul_channel_gate(g_feat, gate), {}};
      }
      case Connection::ata:
      case Connection::sta: {
        check(static_cast<std::int64_t>(gs.h) * gs.w <= kMaxAttentionPositions,
              "attention site " + std::to_string(gs.h) + "x" + std::to_string(gs.w) +
                  " exceeds the " + std::to_string(kMaxAttentionPositions) +
                  "-position cap");
        Var<T> query_src = mode_ == Connection::ata ? d : g_feat;
        auto wmat = softmax_rows(
            attn_energy(wq_->operator()(query_src), wk_->operator()(d)));
        auto ctx = wo_->operator()(attn_apply(wmat, wv_->operator()(d)));
        AtaOutput<T> out;
        out.fused = add(scale(ctx, alpha_), g_feat);
        if (want_attention) out.attention = wmat->value;
        return out;
      }
      case Connection::none:
        break;
    }
    return {g_feat, {}};
  }

  void params(ParamMap<T>& pm) const {
    if (adapt_) adapt_->params(pm);
    if (wq_) {
      wq_->params(pm);
      wk_->params(pm);
      wv_->params(pm);
      wo_->params(pm);
      pm.add(alpha_->name, alpha_);
    }
    if (fuse_) fuse_->params(pm);
    if (se1_) {
      se1_->params(pm);
      se2_->params(pm);
    }
  }

 private:
  Var<T> adapted(const Var<T>& d) const {
    return adapt_ ? adapt_->operator()(d) : d;
  }

  int channels_;
  Connection mode_;
  std::optional<Conv2dLayer<T>> adapt_, wq_, wk_, wv_, wo_, fuse_, se1_, se2_;
  Var<T> alpha_;
};

}  // namespace aml
