#pragma once

// The two-pass mutual-leakage system. A generator step runs the generator
// once without attention, feeds that segmentation to the discriminator to
// obtain feature taps, reruns the generator with encoder attention over
// those taps and decoder difficulty attention, then scores the second
// output adversarially. A discriminator step trains the discriminator on
// (image, one-hot truth) vs (image, detached generated segmentation), with
// detached difficulty maps leaked into both calls. The two steps freeze
// each other's parameters, which is what makes the min-max well-defined.

#include <array>

#include "aml/batch.hpp"
#include "aml/discriminator.hpp"

namespace aml {

enum class SystemMode { aml, ata_only, pda_only, baseline_unet, pix2pix };

inline const char* system_mode_name(SystemMode m) {
  switch (m) {
    case SystemMode::aml: return "aml";
    case SystemMode::ata_only: return "ata_only";
    case SystemMode::pda_only: return "pda_only";
    case SystemMode::baseline_unet: return "baseline_unet";
    case SystemMode::pix2pix: return "pix2pix";
  }
  return "?";
}

inline SystemMode parse_system_mode(const std::string& s) {
  for (SystemMode m : {SystemMode::aml, SystemMode::ata_only, SystemMode::pda_only,
                       SystemMode::baseline_unet, SystemMode::pix2pix})
    if (s == system_mode_name(m)) return m;
  fail("unknown mode '" + s + "'");
}

struct AmlConfig {
  double lambda_adv = 0.01;
  SystemMode mode = SystemMode::aml;
  Connection connection = Connection::ata;
  bool bottom_up_pda = false;     // difficulty from max-confidence instead of truth
  bool saturating_g_loss = false; // literal log(1 - D) objective

  bool uses_ata() const {
    return mode == SystemMode::aml || mode == SystemMode::ata_only;
  }
  bool uses_pda() const {
    return mode == SystemMode::aml || mode == SystemMode::pda_only;
  }
  bool adversarial() const { return mode != SystemMode::baseline_unet; }

  void validate() const {
    check(lambda_adv >= 0, "lambda_adv must be >= 0");
  }
};

struct LossBundle {
  double l_ce = 0, l_pda1 = 0, l_pda2 = 0, l_pda3 = 0, l_adv_g = 0, total = 0;
  double l_disc = 0;

  // Fixed accumulation order; every total in the system is this expression.
  static double compose(double ce, double p1, double p2, double p3,
                        double lambda, double adv) {
    return ce + p1 + p2 + p3 + lambda * adv;
  }
};

template <typename T>
struct GenStepResult {
  LossBundle bundle;
  Var<T> total;  // graph root for backward
  GeneratorTrace<T> trace;
};

template <typename T>
struct DiscStepResult {
  double l_disc = 0;
  Var<T> loss;
};

template <typename T>
Var<T> adversarial_g_loss(const Var<T>& patch_logits, bool saturating) {
  return saturating ? log1m_sigmoid_mean(patch_logits)
                    : bce_with_logits_mean(patch_logits, T(1));
}

template <typename T>
class AmlSystem {
 public:
  // Generator and discriminator draw from independent seed streams, so a
  // standalone generator seeded with `seed` matches the system's generator
  // initialization regardless of mode.
  AmlSystem(const GenConfig& gcfg_in, const DiscConfig& dcfg, AmlConfig acfg,
            std::uint64_t seed)
      : cfg_(acfg) {
    cfg_.validate();
    GenConfig gcfg = gcfg_in;
    Rng drng(seed ^ 0x9e3779b97f4a7c15ull);
    Rng grng(seed);
    disc_.emplace(dcfg, drng);
    std::vector<int> tap_channels;
    if (cfg_.uses_ata())
      for (int s : gcfg.ata_sites)
        tap_channels.push_back(disc_->tap_channels(1 << s));
    else
      gcfg.ata_sites.clear();
    gen_.emplace(gcfg, tap_channels, grng, cfg_.connection, cfg_.uses_pda());
    build_param_maps();
  }

  const AmlConfig& config() const { return cfg_; }
  Generator<T>& generator() { return *gen_; }
  Discriminator<T>& discriminator() { return *disc_; }
  const ParamMap<T>& gen_params() const { return gen_pm_; }
  const ParamMap<T>& disc_params() const { return disc_pm_; }

  void buffers(BufferMap<T>& bm) const { disc_->buffers(bm); }

  // Build the generator-side loss graph. Discriminator parameters are
  // frozen for the whole step; gradients reach G, encoder-attention and
  // difficulty-head parameters only.
  GenStepResult<T> generator_step(const SegBatch<T>& batch) {
    gen_pm_.set_requires_grad(true);
    disc_pm_.set_requires_grad(false);
    gen_pm_.zero_grad();

    GeneratorTrace<T> trace = second_pass(batch, /*training=*/true);
    Var<T> l_ce = ce_loss(trace.logits, batch.masks);
    Var<T> total = l_ce;
    std::array<double, 3> pda_vals{0, 0, 0};
    for (std::size_t i = 0; i < trace.pda.size() && i < 3; ++i) {
      total = add(total, trace.pda[i].aux_loss);
      pda_vals[i] = static_cast<double>(trace.pda[i].aux_loss->value.item());
    }
    double adv_val = 0;
    if (cfg_.adversarial()) {
      auto leaks = trace.leaks(/*detached=*/false);
      DiscTrace<T> d2 = disc_->forward(batch.images, softmax_c(trace.logits),
                                       leaks, /*update_power=*/true);
      Var<T> l_adv = adversarial_g_loss(d2.patch_logits, cfg_.saturating_g_loss);
      adv_val = static_cast<double>(l_adv->value.item());
      total = add(total, mul_const(l_adv, static_cast<T>(cfg_.lambda_adv)));
    }

    GenStepResult<T> res;
    res.bundle.l_ce = static_cast<double>(l_ce->value.item());
    res.bundle.l_pda1 = pda_vals[0];
    res.bundle.l_pda2 = pda_vals[1];
    res.bundle.l_pda3 = pda_vals[2];
    res.bundle.l_adv_g = adv_val;
    res.bundle.total = LossBundle::compose(res.bundle.l_ce, pda_vals[0],
                                           pda_vals[1], pda_vals[2],
                                           cfg_.lambda_adv, adv_val);
    res.total = total;
    res.trace = std::move(trace);
    return res;
  }

  // Discriminator loss graph: real pairs toward 1, generated toward 0.
  // Generator-side parameters are frozen; generated inputs are detached.
  DiscStepResult<T> discriminator_step(const SegBatch<T>& batch) {
    check(cfg_.adversarial(), "plain segmentation mode has no discriminator step");
    gen_pm_.set_requires_grad(false);
    disc_pm_.set_requires_grad(true);
    disc_pm_.zero_grad();

    GeneratorTrace<T> trace = second_pass(batch, /*training=*/true);
    Var<T> fake_seg = detach(softmax_c(trace.logits));
    auto leaks = trace.leaks(/*detached=*/true);
    Tensor<T> truth = one_hot<T>(batch.masks, batch.num_classes);
    DiscTrace<T> real = disc_->forward(batch.images, constant(std::move(truth)),
                                       leaks, /*update_power=*/true);
    DiscTrace<T> fake =
        disc_->forward(batch.images, fake_seg, leaks, /*update_power=*/true);
    Var<T> loss = add(bce_with_logits_mean(real.patch_logits, T(1)),
                      bce_with_logits_mean(fake.patch_logits, T(0)));
    DiscStepResult<T> res;
    res.l_disc = static_cast<double>(loss->value.item());
    res.loss = loss;
    return res;
  }

  // Inference forward: no attention, no discriminator.
  Tensor<T> infer(const Tensor<T>& img) {
    return gen_->forward(img, GenMode::inference).logits->value;
  }

  // Full leakage forward without touching gradients; for inspection of the
  // attention matrices and difficulty maps.
  GeneratorTrace<T> trace_forward(const SegBatch<T>& batch) {
    return second_pass(batch, /*training=*/false, /*want_attention=*/true);
  }

 private:
  // The generator pass whose output is segmented/scored. Runs the full
  // two-pass leakage in attention modes, a single plain pass otherwise.
  GeneratorTrace<T> second_pass(const SegBatch<T>& batch, bool training,
                                bool want_attention = false) {
    GenForwardOpts<T> opts;
    opts.use_ata = cfg_.uses_ata();
    opts.use_pda = cfg_.uses_pda();
    opts.bottom_up_pda = cfg_.bottom_up_pda;
    opts.want_attention = want_attention;
    opts.gt = &batch.masks;
    if (!opts.use_ata && !opts.use_pda)
      return gen_->forward(batch.images, GenMode::first_pass);

    std::vector<Var<T>> ata_inputs;
    if (opts.use_ata) {
      GeneratorTrace<T> first = gen_->forward(batch.images, GenMode::first_pass);
      DiscTrace<T> d1 = disc_->forward(batch.images, softmax_c(first.logits), {},
                                       /*update_power=*/training);
      for (int s : gen_->config().ata_sites)
        ata_inputs.push_back(d1.taps[static_cast<std::size_t>(s - 1)]);
      opts.ata_inputs = &ata_inputs;
    }
    return gen_->forward(batch.images, GenMode::second_pass, opts);
  }

  void build_param_maps() {
    gen_->params(gen_pm_);
    gen_->ata_params(gen_pm_);
    gen_->pda_params(gen_pm_);
    disc_->params(disc_pm_);
  }

  AmlConfig cfg_;
  std::optional<Generator<T>> gen_;
  std::optional<Discriminator<T>> disc_;
  ParamMap<T> gen_pm_, disc_pm_;
};

}  // namespace aml
