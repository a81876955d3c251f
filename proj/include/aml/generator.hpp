#pragma once

// U-Net generator. Encoder stages halve resolution (stage s runs at 1/2^s),
// decoder mirrors them with skip concatenation. In the second training pass
// the encoder fuses tapped discriminator features at the configured sites
// (after each stage's second conv, before pooling) and the decoder applies
// difficulty attention at the configured stages. The first pass and
// inference share the exact same parameters and skip all attention.

#include <map>

#include "aml/ata.hpp"
#include "aml/pda.hpp"

namespace aml {

struct GenConfig {
  int depth = 4;
  int base_channels = 64;  // doubles per stage
  int in_channels = 3;
  int num_classes = 3;
  std::vector<int> ata_sites = {1, 2, 3};   // encoder stages (1/2^s grid)
  std::vector<int> pda_stages = {3, 2, 1};  // decoder stages, exactly 3

  int stage_channels(int s) const { return base_channels << s; }

  void validate() const {
    check(depth >= 2, "generator depth must be >= 2");
    check(base_channels % 8 == 0, "base_channels must be divisible by 8");
    check(pda_stages.size() == 3, "exactly 3 difficulty-attention stages required");
    for (int s : ata_sites)
      check(s >= 1 && s < depth,
            "encoder attention site " + std::to_string(s) + " out of range");
    for (int s : pda_stages)
      check(s >= 1 && s < depth,
            "decoder attention stage " + std::to_string(s) + " out of range");
  }
};

enum class GenMode { first_pass, second_pass, inference };

// A decoder attention map leaked to the discriminator, tagged with its
// downsampling factor relative to the input.
template <typename T>
struct LeakedMap {
  int factor;
  Var<T> map;  // (N,1,h,w)
};

template <typename T>
struct GeneratorTrace {
  Var<T> logits;
  std::vector<Var<T>> decoder_feats;  // visit order: deepest stage first
  std::vector<PdaOutput<T>> pda;      // aligned with cfg.pda_stages
  std::vector<int> pda_factors;       // 2^stage per entry
  std::vector<std::pair<int, Tensor<T>>> attention;  // (site, weight matrix)

  std::vector<LeakedMap<T>> leaks(bool detached) const {
    std::vector<LeakedMap<T>> out;
    for (std::size_t i = 0; i < pda.size(); ++i)
      out.push_back({pda_factors[i],
                     detached ? detach(pda[i].attn) : pda[i].attn});
    return out;
  }
};

template <typename T>
struct GenForwardOpts {
  bool use_ata = false;
  bool use_pda = false;
  bool bottom_up_pda = false;
  const std::vector<Var<T>>* ata_inputs = nullptr;  // aligned with ata_sites
  const Mask* gt = nullptr;
  bool want_attention = false;
};

template <typename T>
class Generator {
 public:
  // ata_in_channels: channel count of the discriminator tap feeding each
  // configured site (empty when the system runs without encoder attention).
  Generator(const GenConfig& cfg, const std::vector<int>& ata_in_channels,
            Rng& rng, Connection conn = Connection::ata, bool with_pda = true)
      : cfg_(cfg), connection_(conn) {
    cfg.validate();
    int in_c = cfg.in_channels;
    for (int s = 0; s < cfg.depth; ++s) {
      int c = cfg.stage_channels(s);
      enc_.push_back(Block("g.enc" + std::to_string(s), in_c, c, rng));
      in_c = c;
    }
    int cb = cfg.base_channels << cfg.depth;
    mid_.emplace(Block("g.mid", in_c, cb, rng));
    for (int s = cfg.depth - 1; s >= 0; --s) {
      int above = s == cfg.depth - 1 ? cb : cfg.stage_channels(s + 1);
      int c = cfg.stage_channels(s);
      up_.emplace(s, UpBlock("g.dec" + std::to_string(s), above, c, rng));
    }
    head_.emplace("g.head", cfg.base_channels, cfg.num_classes, 1, 1, true, rng);

    if (!ata_in_channels.empty()) {
      check(ata_in_channels.size() == cfg.ata_sites.size(),
            "one tap channel count per encoder attention site required");
      for (std::size_t i = 0; i < cfg.ata_sites.size(); ++i) {
        int s = cfg.ata_sites[i];
        ata_.emplace(s, AtaModule<T>("g.ata" + std::to_string(s),
                                     cfg.stage_channels(s), ata_in_channels[i],
                                     connection_, rng));
      }
    }
    if (with_pda)
      for (int s : cfg.pda_stages)
        pda_.emplace(s, PdaHead<T>("g.pda" + std::to_string(s),
                                   cfg.stage_channels(s), cfg.num_classes, rng));
  }

  GeneratorTrace<T> forward(const Tensor<T>& img, GenMode mode,
                            const GenForwardOpts<T>& opts = {}) const {
    const Shape& is = img.shape();
    check(is.c == cfg_.in_channels,
          "generator expects " + std::to_string(cfg_.in_channels) +
              " input channels, got " + std::to_string(is.c));
    const bool attend = mode == GenMode::second_pass;
    if (attend && opts.use_ata)
      check(opts.ata_inputs && opts.ata_inputs->size() == cfg_.ata_sites.size(),
            "second pass needs one discriminator feature per attention site");
    if (attend && opts.use_pda)
      check(opts.gt != nullptr, "second pass needs the ground-truth mask");

    GeneratorTrace<T> trace;
    Var<T> x = constant(img);
    std::vector<Var<T>> skips(static_cast<std::size_t>(cfg_.depth));
    for (int s = 0; s < cfg_.depth; ++s) {
      x = enc_[static_cast<std::size_t>(s)](x);
      if (attend && opts.use_ata) {
        auto it = ata_.find(s);
        if (it != ata_.end()) {
          std::size_t idx = site_index(s);
          auto out = it->second.forward((*opts.ata_inputs)[idx], x,
                                        opts.want_attention);
          x = out.fused;
          if (opts.want_attention)
            trace.attention.emplace_back(s, std::move(out.attention));
        }
      }
      skips[static_cast<std::size_t>(s)] = x;
      x = maxpool2(x);
    }
    x = (*mid_)(x);
    for (int s = cfg_.depth - 1; s >= 0; --s) {
      const Var<T>& skip = skips[static_cast<std::size_t>(s)];
      x = up_.at(s)(x, skip);
      if (attend && opts.use_pda && pda_.count(s)) {
        const PdaHead<T>& head = pda_.at(s);
        PdaOutput<T> out = opts.bottom_up_pda
                               ? head.forward_bottom_up(x, *opts.gt, is.h, is.w)
                               : head.forward(x, *opts.gt, is.h, is.w);
        x = out.enhanced;
        trace.pda.push_back(std::move(out));
        trace.pda_factors.push_back(1 << s);
      }
      trace.decoder_feats.push_back(x);
    }
    trace.logits = (*head_)(x);
    return trace;
  }

  void params(ParamMap<T>& pm) const {
    for (auto& b : enc_) b.params(pm);
    mid_->params(pm);
    for (auto& [_, u] : up_) u.params(pm);
    head_->params(pm);
  }
  void ata_params(ParamMap<T>& pm) const {
    for (auto& [_, m] : ata_) m.params(pm);
  }
  void pda_params(ParamMap<T>& pm) const {
    for (auto& [_, h] : pda_) h.params(pm);
  }

  const GenConfig& config() const { return cfg_; }
  AtaModule<T>& ata_at(int site) { return ata_.at(site); }
  PdaHead<T>& pda_at(int stage) { return pda_.at(stage); }
  bool has_ata() const { return !ata_.empty(); }

 private:
  struct Block {
    Conv2dLayer<T> c1, c2;
    BatchNormLayer<T> b1, b2;
    Block(const std::string& n, int in_c, int out_c, Rng& rng)
        : c1(n + ".c1", in_c, out_c, 3, 1, false, rng),
          c2(n + ".c2", out_c, out_c, 3, 1, false, rng),
          b1(n + ".b1", out_c),
          b2(n + ".b2", out_c) {}
    Var<T> operator()(const Var<T>& x) const {
      return relu(b2(c2(relu(b1(c1(x))))));
    }
    void params(ParamMap<T>& pm) const {
      c1.params(pm);
      b1.params(pm);
      c2.params(pm);
      b2.params(pm);
    }
  };

  struct UpBlock {
    Conv2dLayer<T> up;
    BatchNormLayer<T> ub;
    Block block;
    UpBlock(const std::string& n, int above_c, int out_c, Rng& rng)
        : up(n + ".up", above_c, out_c, 3, 1, false, rng),
          ub(n + ".ub", out_c),
          block(n, 2 * out_c, out_c, rng) {}
    Var<T> operator()(const Var<T>& below, const Var<T>& skip) const {
      const Shape& ss = skip->value.shape();
      auto u = relu(ub(up(bilinear_resize(below, ss.h, ss.w))));
      return block(concat_c(skip, u));
    }
    void params(ParamMap<T>& pm) const {
      up.params(pm);
      ub.params(pm);
      block.params(pm);
    }
  };

  std::size_t site_index(int s) const {
    for (std::size_t i = 0; i < cfg_.ata_sites.size(); ++i)
      if (cfg_.ata_sites[i] == s) return i;
    fail("no attention site " + std::to_string(s));
  }

  GenConfig cfg_;
  Connection connection_ = Connection::ata;
  std::vector<Block> enc_;
  std::optional<Block> mid_;
  std::map<int, UpBlock> up_;
  std::optional<Conv2dLayer<T>> head_;
  std::map<int, AtaModule<T>> ata_;
  std::map<int, PdaHead<T>> pda_;
};

// Cross-entropy over softmaxed logits with integer targets.
template <typename T>
Var<T> ce_loss(const Var<T>& logits, const Mask& gt) {
  return nll_mean(gather_true(softmax_c(logits), gt));
}

}  // namespace aml
