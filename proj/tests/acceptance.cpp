// Acceptance gate: one line per criterion, [PASS] or [FAIL], exit code 0
// only when every criterion holds. Each check re-derives its expectation
// from first principles (closed forms, finite differences, an SVD oracle,
// byte comparisons) rather than trusting the unit suites.

#include <Eigen/SVD>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "aml/config.hpp"
#include "aml/digest.hpp"
#include "aml/gradcheck.hpp"
#include "aml/trainer.hpp"

using namespace aml;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

Var<double> find_in(const ParamMap<double>& pm, const std::string& suffix) {
  for (auto& [n, v] : pm.items)
    if (n.size() >= suffix.size() &&
        n.compare(n.size() - suffix.size(), suffix.size(), suffix) == 0)
      return v;
  fail("no parameter ending in " + suffix);
}

GenConfig small_gen_cfg() {
  GenConfig cfg;
  cfg.depth = 4;
  cfg.base_channels = 8;
  cfg.num_classes = 3;
  return cfg;
}

DiscConfig small_disc_cfg() {
  DiscConfig cfg;
  cfg.widths = {8, 8, 16, 16, 16};
  return cfg;
}

SegBatch<double> random_batch(int n, int h, int w, int k, std::uint64_t seed) {
  Rng rng(seed);
  SegBatch<double> b;
  b.images = Tensor<double>(Shape(n, 3, h, w));
  rng.fill_uniform(b.images, 0.0, 1.0);
  b.masks = Mask(n, h, w, 0);
  for (std::int64_t i = 0; i < b.masks.numel(); ++i)
    b.masks.v[i] = static_cast<std::int32_t>(rng.uniform_int(k));
  b.num_classes = k;
  b.validate();
  return b;
}

double top_singular(const Tensor<double>& w) {
  const Shape& s = w.shape();
  Eigen::MatrixXd m(s.n, s.numel() / s.n);
  for (int r = 0; r < s.n; ++r)
    for (std::int64_t c = 0; c < s.numel() / s.n; ++c)
      m(r, c) = w[r * (s.numel() / s.n) + c];
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

// Zero a difficulty head's trainables (batchnorm scale back to 1) so its
// logits collapse to the classification bias.
void rig_bias_only(PdaHead<double>& head, ParamMap<double>& pm) {
  head.params(pm);
  for (auto& [n, v] : pm.items) v->value.fill(0.0);
  for (auto& [n, v] : pm.items)
    if (n.find(".bn.gamma") != std::string::npos) v->value.fill(1.0);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::runtime_error(what);
}

// ---------------------------------------------------------------------------
// criterion bodies; each returns a one-phrase success detail or throws
// ---------------------------------------------------------------------------

std::string check_rows_stochastic() {
  Rng rng(101);
  AtaModule<double> m("site", 8, 8, Connection::ata, rng);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Tensor<double> dt(Shape(1, 8, 4, 4));
    rng.fill_normal(dt, 3.0);
    auto w = m.attention_weights(constant(dt));
    const Shape& s = w->value.shape();
    for (int r = 0; r < s.h; ++r) {
      double sum = 0.0;
      for (int c = 0; c < s.w; ++c) sum += w->value.at(0, 0, r, c);
      worst = std::max(worst, std::abs(sum - 1.0));
    }
  }
  require(worst <= 1e-5, "row sum deviates by " + fmt(worst));
  return "100 random inputs, max |row sum - 1| = " + fmt(worst);
}

std::string check_fresh_fusion_identity() {
  Rng rng(102);
  AtaModule<double> m("site", 8, 8, Connection::ata, rng);
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    Tensor<double> dt(Shape(2, 8, 3, 3)), gt(Shape(2, 8, 3, 3));
    rng.fill_normal(dt, 1.0);
    rng.fill_normal(gt, 1.0);
    auto out = m.forward(constant(dt), constant(gt));
    for (std::int64_t i = 0; i < gt.numel(); ++i)
      worst = std::max(worst, std::abs(out.fused->value[i] - gt[i]));
  }
  require(worst == 0.0, "fresh fusion shifts features by " + fmt(worst));
  return "fused == generator features, max abs diff = 0 exactly";
}

std::string check_difficulty_extremes() {
  Rng rng(103);
  // uniform logits over 3 classes: every pixel is 2/3 difficult
  {
    PdaHead<double> head("p", 8, 3, rng);
    ParamMap<double> pm;
    rig_bias_only(head, pm);
    Tensor<double> ft(Shape(1, 8, 4, 4));
    rng.fill_normal(ft, 1.0);
    auto out = head.forward(constant(ft), Mask(1, 8, 8, 0), 8, 8);
    for (std::int64_t i = 0; i < out.attn->value.numel(); ++i)
      require(std::abs(out.attn->value[i] - 2.0 / 3.0) <= 1e-6,
              "uniform-logit difficulty " + fmt(out.attn->value[i]) +
                  " != 2/3");
  }
  // a head confident in the true class: nothing is difficult
  {
    PdaHead<double> head("p", 8, 3, rng);
    ParamMap<double> pm;
    rig_bias_only(head, pm);
    find_in(pm, ".classify.b")->value.at(0, 2, 0, 0) = 20.0;
    Tensor<double> ft(Shape(1, 8, 4, 4));
    rng.fill_normal(ft, 1.0);
    auto out = head.forward(constant(ft), Mask(1, 8, 8, 2), 8, 8);
    for (std::int64_t i = 0; i < out.attn->value.numel(); ++i)
      require(out.attn->value[i] <= 1e-6,
              "confident-correct difficulty " + fmt(out.attn->value[i]) +
                  " != 0");
  }
  return "uniform 3-class head -> 2/3 everywhere; confident-correct head -> 0";
}

std::string check_residual_apply() {
  Rng rng(104);
  Tensor<double> ft(Shape(2, 4, 5, 5));
  rng.fill_normal(ft, 1.0);
  auto feat = constant(ft);
  auto zeros = constant(Tensor<double>(Shape(2, 1, 5, 5), 0.0));
  auto ones = constant(Tensor<double>(Shape(2, 1, 5, 5), 1.0));
  auto id = apply_attention(feat, zeros);
  for (std::int64_t i = 0; i < ft.numel(); ++i)
    require(id->value[i] == ft[i], "zero attention is not a bitwise no-op");
  auto dbl = apply_attention(feat, ones);
  double worst = 0.0;
  for (std::int64_t i = 0; i < ft.numel(); ++i)
    worst = std::max(worst, std::abs(dbl->value[i] - 2.0 * ft[i]));
  require(worst <= 1e-6, "unit attention misses 2x by " + fmt(worst));
  return "zero map is a bitwise no-op; unit map doubles features (err " +
         fmt(worst) + ")";
}

std::string check_gradients() {
  double worst = 0.0;
  {  // encoder attention: all projections, blend scale, both inputs
    Rng rng(105);
    AtaModule<double> m("site", 8, 8, Connection::ata, rng);
    ParamMap<double> pm;
    m.params(pm);
    find_in(pm, ".alpha")->value.fill(0.5);  // zero would mute the branch
    Tensor<double> dt(Shape(1, 8, 2, 2)), gt(Shape(1, 8, 2, 2)),
        rt(Shape(1, 8, 2, 2));
    rng.fill_normal(dt, 1.0);
    rng.fill_normal(gt, 1.0);
    rng.fill_normal(rt, 1.0);
    auto d = leaf(dt, true, "d"), g = leaf(gt, true, "g");
    auto r = constant(rt);
    auto fn = [&] { return sum(mul(m.forward(d, g).fused, r)); };
    std::vector<Var<double>> checked = pm.vars();
    checked.push_back(d);
    checked.push_back(g);
    auto rep = gradient_check<double>(fn, checked);
    require(rep.ok(1e-3), "encoder attention: " + describe(rep));
    worst = std::max(worst, rep.max_rel_err);
  }
  {  // difficulty head through upsample/softmax/gather/downsample
    Rng rng(106);
    PdaHead<double> head("p", 4, 3, rng);
    ParamMap<double> pm;
    head.params(pm);
    Tensor<double> ft(Shape(1, 4, 3, 3)), rt(Shape(1, 4, 3, 3));
    rng.fill_normal(ft, 1.0);
    rng.fill_normal(rt, 1.0);
    auto feat = leaf(ft, true, "feat");
    auto r = constant(rt);
    Mask gt(1, 6, 6, 1);
    for (int i = 0; i < 18; ++i) gt.v[i] = 2;
    auto fn = [&] {
      auto out = head.forward(feat, gt, 6, 6);
      return add(out.aux_loss, sum(mul(out.enhanced, r)));
    };
    std::vector<Var<double>> checked = pm.vars();
    checked.push_back(feat);
    auto rep = gradient_check<double>(fn, checked);
    require(rep.ok(1e-3), "difficulty head: " + describe(rep));
    worst = std::max(worst, rep.max_rel_err);
  }
  {  // one spectral-normalized discriminator block (frozen power iteration)
    Rng rng(107);
    SpectralConv2dLayer<double> layer("blk", 2, 2, 4, 2, rng);
    Tensor<double> xt(Shape(1, 2, 4, 4)), rt(Shape(1, 2, 2, 2));
    rng.fill_normal(xt, 1.0);
    rng.fill_normal(rt, 1.0);
    auto x = leaf(xt, true, "x");
    auto r = constant(rt);
    auto fn = [&] { return sum(mul(leaky_relu(layer(x, false)), r)); };
    std::vector<Var<double>> checked = {layer.w, layer.b, x};
    auto rep = gradient_check<double>(fn, checked);
    require(rep.ok(1e-3), "discriminator block: " + describe(rep));
    worst = std::max(worst, rep.max_rel_err);
  }
  return "attention / difficulty head / discriminator block, max rel err = " +
         fmt(worst);
}

std::string check_spectral_bound() {
  Rng rng(108);
  Discriminator<double> d(small_disc_cfg(), rng);
  auto batch = random_batch(2, 32, 32, 3, 9);
  Var<double> seg = constant(one_hot<double>(batch.masks, 3));
  // each training-mode forward advances the power iteration; the bound must
  // survive all of them
  for (int i = 0; i < 20; ++i)
    d.forward(batch.images, seg, {}, /*update_power=*/true);
  double worst = 0.0;
  for (const auto& layer : d.strided_layers())
    worst = std::max(worst, top_singular(layer.normalized_weight()));
  require(worst <= 1.0 + 1e-2,
          "top singular value " + fmt(worst) + " exceeds 1 + 1e-2");
  return "after 20 training-mode forwards, max kernel sigma = " + fmt(worst);
}

std::string check_patch_geometry() {
  Rng rng(109);
  Discriminator<double> d(small_disc_cfg(), rng);
  auto probe = [&](int hw) {
    auto batch = random_batch(1, hw, hw, 3, 10 + hw);
    Var<double> seg = constant(one_hot<double>(batch.masks, 3));
    return d.forward(batch.images, seg, {}, false).patch_logits->value.shape();
  };
  Shape big = probe(320);
  require(big == Shape(1, 1, 20, 20),
          "320x320 gave " + big.str() + " instead of (1,1,20,20)");
  Shape small = probe(64);
  require(small == Shape(1, 1, 4, 4),
          "64x64 gave " + small.str() + " instead of (1,1,4,4)");
  return "320x320 -> 20x20 logits, 64x64 -> 4x4";
}

std::string check_weight_sharing() {
  AmlSystem<double> sys(small_gen_cfg(), small_disc_cfg(), AmlConfig{}, 110);
  auto batch = random_batch(2, 32, 32, 3, 11);

  // the pass machinery reads one parameter storage, not a copy
  ParamMap<double> again;
  sys.generator().params(again);
  sys.generator().ata_params(again);
  sys.generator().pda_params(again);
  require(again.size() == sys.gen_params().size(),
          "re-enumeration changed the parameter count");
  for (std::size_t i = 0; i < again.size(); ++i)
    require(again.items[i].second.get() == sys.gen_params().items[i].second.get(),
            "parameter " + again.items[i].first + " is duplicated storage");

  auto run_both = [&] {
    Tensor<double> a =
        sys.generator().forward(batch.images, GenMode::first_pass).logits->value;
    Tensor<double> b =
        sys.generator().forward(batch.images, GenMode::second_pass).logits->value;
    return std::make_pair(std::move(a), std::move(b));
  };
  auto before = run_both();
  for (std::int64_t i = 0; i < before.first.numel(); ++i)
    require(before.first[i] == before.second[i],
            "passes disagree before any update");

  Adam<double> gen_opt(sys.gen_params());
  auto res = sys.generator_step(batch);
  backward(res.total);
  gen_opt.step();

  auto after = run_both();
  double moved = 0.0;
  for (std::int64_t i = 0; i < after.first.numel(); ++i) {
    require(after.first[i] == after.second[i],
            "one optimizer step desynchronized the two passes");
    moved = std::max(moved, std::abs(after.first[i] - before.first[i]));
  }
  require(moved > 0.0, "the optimizer step changed neither pass");
  return "one storage, both passes bitwise equal before and after a step";
}

std::string check_loss_composition() {
  auto batch = random_batch(2, 32, 32, 3, 12);
  {  // total is exactly ce + difficulty terms + 0.01 * adversarial
    AmlConfig acfg;  // lambda_adv defaults to 0.01
    AmlSystem<double> sys(small_gen_cfg(), small_disc_cfg(), acfg, 113);
    auto res = sys.generator_step(batch);
    const LossBundle& b = res.bundle;
    double recomposed =
        b.l_ce + b.l_pda1 + b.l_pda2 + b.l_pda3 + 0.01 * b.l_adv_g;
    require(b.total == recomposed, "published total drifts from the sum");
    require(res.total->value.item() == b.total,
            "graph total drifts from the published total");
    require(b.l_ce > 0 && b.l_pda1 > 0 && b.l_adv_g > 0,
            "a loss term is unexpectedly zero");
  }
  {  // adversarial weight 0: generator gradients ignore the discriminator
    AmlConfig acfg;
    acfg.lambda_adv = 0.0;
    AmlSystem<double> a(small_gen_cfg(), small_disc_cfg(), acfg, 114);
    AmlSystem<double> b(small_gen_cfg(), small_disc_cfg(), acfg, 114);
    for (auto& [n, v] : b.disc_params().items)
      for (std::int64_t i = 0; i < v->value.numel(); ++i) v->value[i] += 0.01;
    auto ra = a.generator_step(batch);
    backward(ra.total);
    auto rb = b.generator_step(batch);
    backward(rb.total);
    require(ra.bundle.total == ra.bundle.l_ce + ra.bundle.l_pda1 +
                                   ra.bundle.l_pda2 + ra.bundle.l_pda3,
            "weight-0 total still contains an adversarial share");
    for (std::size_t p = 0; p < a.gen_params().items.size(); ++p) {
      const auto& [name, va] = a.gen_params().items[p];
      const auto& vb = b.gen_params().items[p].second;
      if (name.find(".alpha") != std::string::npos)
        continue;  // blend scales read leaked features by design
      for (std::int64_t i = 0; i < va->grad.numel(); ++i)
        require(va->grad[i] == vb->grad[i],
                "gradient of " + name + " follows discriminator weights");
    }
  }
  return "total == ce + difficulty + 0.01*adv exactly; weight 0 isolates the "
         "generator (blend scales excepted)";
}

std::string check_minmax_separation() {
  auto batch = random_batch(2, 32, 32, 3, 13);
  {  // generator update leaves the discriminator untouched
    AmlSystem<double> sys(small_gen_cfg(), small_disc_cfg(), AmlConfig{}, 115);
    std::uint64_t disc_before = param_digest(sys.disc_params());
    Adam<double> gen_opt(sys.gen_params());
    auto res = sys.generator_step(batch);
    backward(res.total);
    gen_opt.step();
    require(param_digest(sys.disc_params()) == disc_before,
            "a generator step moved discriminator weights");
  }
  {  // discriminator update leaves every generator-side family untouched
    AmlSystem<double> sys(small_gen_cfg(), small_disc_cfg(), AmlConfig{}, 116);
    ParamMap<double> unet, attn, diff;
    sys.generator().params(unet);
    sys.generator().ata_params(attn);
    sys.generator().pda_params(diff);
    std::uint64_t u0 = param_digest(unet), a0 = param_digest(attn),
                  d0 = param_digest(diff);
    Adam<double> disc_opt(sys.disc_params());
    auto res = sys.discriminator_step(batch);
    backward(res.loss);
    disc_opt.step();
    require(param_digest(unet) == u0, "a discriminator step moved the unet");
    require(param_digest(attn) == a0,
            "a discriminator step moved the encoder attention");
    require(param_digest(diff) == d0,
            "a discriminator step moved the difficulty heads");
  }
  return "each step leaves the other side's digests bit-identical";
}

std::string check_desk_convergence() {
  fs::path cfg_dir = fs::path(AML_SOURCE_DIR) / "configs";
  SynthSpec spec = parse_synth_file((cfg_dir / "synth_desk.conf").string());
  Dataset<double> ds = synth_generate<double>(spec);
  require(ds.size() == 80, "bundled dataset is not 80 images");
  std::vector<int> tr_idx, va_idx;
  for (int i = 0; i < 64; ++i) tr_idx.push_back(i);
  for (int i = 64; i < 80; ++i) va_idx.push_back(i);
  Dataset<double> train_ds = subset(ds, tr_idx);
  Dataset<double> val_ds = subset(ds, va_idx);

  auto t0 = Clock::now();
  std::ostringstream info;
  for (const char* name : {"train_baseline.conf", "train_aml.conf"}) {
    RunConfig rc = parse_config_file((cfg_dir / name).string());
    AmlSystem<double> sys(rc.gen_config(), rc.disc_config(), rc.aml_config(),
                          rc.train.seed);
    AdamConfig ac{rc.train.lr, rc.train.beta1, rc.train.beta2, rc.train.eps};
    Adam<double> gen_opt(sys.gen_params(), ac);
    Adam<double> disc_opt(sys.disc_params(), ac);
    Adam<double>* dp = sys.config().adversarial() ? &disc_opt : nullptr;
    TrainResult res =
        train_system(sys, gen_opt, dp, train_ds, val_ds, rc.train, {});
    require(res.best_val_miou >= 0.85,
            rc.mode + " stalled at val mIoU " + fmt(res.best_val_miou) +
                " after " + std::to_string(res.epochs.size()) + " epochs");
    if (!info.str().empty()) info << " vs ";
    info << rc.mode << " " << fmt(res.best_val_miou) << " @ epoch "
         << res.best_epoch;
  }
  double elapsed = seconds_since(t0);
  require(elapsed <= 20.0 * 60.0,
          "training took " + fmt(elapsed) + "s, over the 20-minute budget");
  return info.str() + ", both >= 0.85 in " + fmt(elapsed) + "s";
}

std::string check_ablation_grid() {
  fs::path root = fs::temp_directory_path() / "aml_acceptance_ablate";
  fs::remove_all(root);
  fs::create_directories(root);

  std::ofstream spec(root / "synth.conf");
  spec << "synth.image_size = 16\nsynth.num_images = 8\n"
          "synth.distractors = 1\nsynth.seed = 7\n";
  spec.close();

  auto run = [&](const std::string& args) {
    std::string cmd = std::string(AML_TOOL_PATH) + " " + args +
                      " > /dev/null 2>&1";
    require(std::system(cmd.c_str()) == 0, "tool failed: " + args);
  };
  run("synth --spec " + (root / "synth.conf").string() + " --out " +
      (root / "data").string());

  std::string sweep_cmd =
      "ablate --set data.dir=" + (root / "data").string() +
      " --set data.val_count=2 --set gen.depth=2 --set gen.base_channels=8"
      " --set gen.ata_sites=1 --set gen.pda_stages=1,1,1"
      " --set disc.widths=8,8,16,16,16 --set train.epochs=1"
      " --set train.batch_size=4 --set train.seed=3 --set out.dir=" +
      (root / "grid").string();
  run(sweep_cmd);
  fs::rename(root / "grid" / "ablate.csv", root / "grid" / "first.csv");
  run(sweep_cmd);

  auto slurp = [&](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    require(in.good(), "missing " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  std::string g1 = slurp(root / "grid" / "first.csv");
  std::string g2 = slurp(root / "grid" / "ablate.csv");
  require(g1 == g2, "two identical sweeps produced different bytes");

  std::set<std::pair<std::string, double>> seen;
  std::istringstream in(g1);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("connection,", 0) == 0)
      continue;
    std::istringstream cells(line);
    std::string conn, lambda, epoch, miou;
    std::getline(cells, conn, ',');
    std::getline(cells, lambda, ',');
    std::getline(cells, epoch, ',');
    std::getline(cells, miou, ',');
    require(std::isfinite(std::stod(miou)), "non-finite mIoU in " + line);
    seen.insert({conn, std::stod(lambda)});
  }
  require(seen.size() == 16, "expected 16 grid rows, found " +
                                 std::to_string(seen.size()));
  for (const std::string& conn : {"add", "concat", "conv1x1", "ata"})
    for (double lam : {0.0, 0.01, 0.1, 1.0})
      require(seen.count({conn, lam}) == 1,
              "missing grid cell " + conn + " / " + fmt(lam));
  fs::remove_all(root);
  return "4 fusion modes x 4 adversarial weights, complete and "
         "byte-deterministic";
}

std::string check_cross_validation() {
  auto folds = make_folds(22, 5, 17);
  std::set<int> seen;
  std::size_t total = 0;
  for (const auto& f : folds) {
    require(f.size() == 4 || f.size() == 5, "fold sizes drift");
    total += f.size();
    for (int i : f) require(seen.insert(i).second, "folds overlap");
  }
  require(total == 22 && *seen.rbegin() == 21, "folds are not exhaustive");

  SynthSpec spec;
  spec.image_size = 16;
  spec.num_images = 10;
  spec.distractors = 1;
  spec.seed = 21;
  Dataset<double> ds = synth_generate<double>(spec);
  RunConfig rc;
  rc.mode = "baseline_unet";
  rc.depth = 2;
  rc.base_channels = 8;
  rc.ata_sites = {1};
  rc.pda_stages = {1, 1, 1};
  rc.disc_widths = {8, 8, 16, 16, 16};
  rc.train.epochs = 1;
  rc.train.batch_size = 4;
  rc.train.folds = 5;
  rc.train.repeats = 3;
  rc.train.seed = 23;
  CvResult a = run_cross_validation(ds, rc);
  CvResult b = run_cross_validation(ds, rc);
  require(a.rows.size() == 15, "expected 15 rows, got " +
                                   std::to_string(a.rows.size()));
  for (std::size_t i = 0; i < 15; ++i) {
    require(a.rows[i].fold == static_cast<int>(i % 5) &&
                a.rows[i].repeat == static_cast<int>(i / 5),
            "row order is not repeat-major");
    require(a.rows[i].best_val_miou == b.rows[i].best_val_miou &&
                a.rows[i].best_epoch == b.rows[i].best_epoch,
            "rerun diverged at row " + std::to_string(i));
  }
  require(a.mean == b.mean && a.stddev == b.stddev, "aggregates diverged");
  return "5 folds x 3 repeats -> 15 rows, disjoint, exhaustive, rerun-stable";
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<std::string()> body;
  };
  const std::vector<Criterion> criteria = {
      {"attention rows sum to one", check_rows_stochastic},
      {"fresh attention passes features through", check_fresh_fusion_identity},
      {"difficulty map analytic extremes", check_difficulty_extremes},
      {"residual attention identities", check_residual_apply},
      {"gradients match finite differences", check_gradients},
      {"spectral norm stays bounded", check_spectral_bound},
      {"patch grid is input over sixteen", check_patch_geometry},
      {"both generator passes share weights", check_weight_sharing},
      {"loss composition and weight-zero isolation", check_loss_composition},
      {"min-max updates stay separated", check_minmax_separation},
      {"desk-scale convergence", check_desk_convergence},
      {"ablation grid is complete and deterministic", check_ablation_grid},
      {"cross-validation protocol", check_cross_validation},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    auto t0 = Clock::now();
    std::string detail;
    bool ok = true;
    try {
      detail = criteria[i].body();
    } catch (const std::exception& e) {
      ok = false;
      detail = e.what();
    }
    std::printf("[%s] %02zu %s — %s (%.1fs)\n", ok ? "PASS" : "FAIL", i + 1,
                criteria[i].name, detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
