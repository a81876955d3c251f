#pragma once

// Training loop, validation-driven model selection, and the k-fold
// cross-validation protocol. One step is one discriminator update followed
// by one generator update on the same batch; plain segmentation modes skip
// the discriminator update. Batch order is drawn from its own seed stream
// so reseeding the initialization never changes the data order.

#include <cmath>
#include <functional>

#include "aml/checkpoint.hpp"
#include "aml/config.hpp"
#include "aml/metrics.hpp"

namespace aml {

using LogSink = std::function<void(const std::string&)>;

namespace detail {

inline std::string loss_num(double v) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(6) << v;
  return ss.str();
}

inline void emit(const LogSink& log, const std::string& line) {
  if (log) log(line);
}

}  // namespace detail

inline std::string format_loss_line(std::int64_t step, const LossBundle& b) {
  using detail::loss_num;
  return "step " + std::to_string(step) + " l_ce " + loss_num(b.l_ce) +
         " l_pda1 " + loss_num(b.l_pda1) + " l_pda2 " + loss_num(b.l_pda2) +
         " l_pda3 " + loss_num(b.l_pda3) + " l_adv_g " + loss_num(b.l_adv_g) +
         " l_disc " + loss_num(b.l_disc) + " total " + loss_num(b.total);
}

template <typename T>
ConfusionMatrix evaluate_confusion(AmlSystem<T>& system, const Dataset<T>& ds,
                                   int batch_size) {
  ConfusionMatrix cm(ds.num_classes);
  for (std::size_t start = 0; start < ds.size();
       start += static_cast<std::size_t>(batch_size)) {
    std::vector<int> idx;
    for (std::size_t i = start;
         i < std::min(ds.size(), start + static_cast<std::size_t>(batch_size)); ++i)
      idx.push_back(static_cast<int>(i));
    SegBatch<T> b = gather_batch(ds, idx);
    cm.accumulate(argmax_mask(system.infer(b.images)), b.masks);
  }
  return cm;
}

struct EpochRecord {
  int epoch = 0;
  double val_miou = 0.0;
};

struct TrainResult {
  double best_val_miou = -1.0;
  int best_epoch = -1;
  std::int64_t steps = 0;
  std::vector<EpochRecord> epochs;
};

// Trains in place. The best-validation weights (max mIoU, earliest epoch on
// ties) are restored into the system before returning, so a subsequent save
// captures the selected model, not the last epoch.
template <typename T>
TrainResult train_system(AmlSystem<T>& system, Adam<T>& gen_opt,
                         Adam<T>* disc_opt, const Dataset<T>& train_ds,
                         const Dataset<T>& val_ds, const TrainConfig& tc,
                         const LogSink& log = {}, bool restore_best = true) {
  tc.validate();
  check(train_ds.size() > 0, "training dataset is empty");
  const bool adversarial = system.config().adversarial();
  check(!adversarial || disc_opt != nullptr,
        "adversarial training needs a discriminator optimizer");

  Rng order_rng(tc.seed ^ 0xc2b2ae3d27d4eb4full);
  std::vector<int> order(train_ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  TrainResult res;
  CheckpointBlobs<T> best;
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    order_rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(tc.batch_size)) {
      std::vector<int> idx(
          order.begin() + static_cast<std::ptrdiff_t>(start),
          order.begin() +
              static_cast<std::ptrdiff_t>(std::min(
                  order.size(), start + static_cast<std::size_t>(tc.batch_size))));
      SegBatch<T> batch = gather_batch(train_ds, idx);
      double l_disc = 0.0;
      if (adversarial) {
        auto d = system.discriminator_step(batch);
        backward(d.loss);
        disc_opt->step();
        l_disc = d.l_disc;
      }
      auto g = system.generator_step(batch);
      backward(g.total);
      gen_opt.step();
      ++res.steps;
      LossBundle b = g.bundle;
      b.l_disc = l_disc;
      detail::emit(log, format_loss_line(res.steps, b));
    }

    double miou = val_ds.size() > 0
                      ? evaluate_confusion(system, val_ds, tc.batch_size).mean_iou()
                      : 0.0;
    res.epochs.push_back({epoch, miou});
    detail::emit(log, "epoch " + std::to_string(epoch) + " val_miou " +
                          detail::loss_num(miou));
    if (miou > res.best_val_miou) {
      res.best_val_miou = miou;
      res.best_epoch = epoch;
      best = collect_blobs(system, static_cast<Adam<T>*>(nullptr),
                           static_cast<Adam<T>*>(nullptr));
    }
    if (tc.target_miou > 0 && miou >= tc.target_miou) {
      detail::emit(log, "early stop: reached target mIoU at epoch " +
                            std::to_string(epoch));
      break;
    }
  }
  if (restore_best && res.best_epoch >= 0)
    restore_blobs(best, system, static_cast<Adam<T>*>(nullptr),
                  static_cast<Adam<T>*>(nullptr));
  return res;
}

// Contiguous chunks of a seeded shuffle: disjoint, exhaustive, sizes within
// one of each other.
inline std::vector<std::vector<int>> make_folds(std::size_t n, int folds,
                                                std::uint64_t seed) {
  check(folds >= 2, "folds must be >= 2");
  check(n >= static_cast<std::size_t>(folds),
        "cross-validation would produce an empty fold: " + std::to_string(n) +
            " items across " + std::to_string(folds) + " folds");
  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<int>> out(static_cast<std::size_t>(folds));
  std::size_t base = n / static_cast<std::size_t>(folds);
  std::size_t extra = n % static_cast<std::size_t>(folds);
  std::size_t pos = 0;
  for (int f = 0; f < folds; ++f) {
    std::size_t len = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
    out[static_cast<std::size_t>(f)] =
        std::vector<int>(order.begin() + static_cast<std::ptrdiff_t>(pos),
                         order.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return out;
}

struct CvRow {
  int fold = 0;
  int repeat = 0;
  double best_val_miou = 0.0;
  int best_epoch = 0;
};

struct CvResult {
  std::vector<CvRow> rows;
  double mean = 0.0;
  double stddev = 0.0;  // population
};

template <typename T>
Dataset<T> subset(const Dataset<T>& ds, const std::vector<int>& idx) {
  Dataset<T> out;
  out.num_classes = ds.num_classes;
  for (int i : idx) {
    check(i >= 0 && static_cast<std::size_t>(i) < ds.size(),
          "subset index out of range");
    out.push(ds.images[static_cast<std::size_t>(i)],
             ds.masks[static_cast<std::size_t>(i)]);
  }
  return out;
}

// Fold partition is fixed by the seed; each repeat reseeds only the model
// initialization. folds x repeats rows, aggregated as mean +- population std.
template <typename T>
CvResult run_cross_validation(const Dataset<T>& ds, const RunConfig& rc,
                              const LogSink& log = {}) {
  rc.validate();
  const TrainConfig& tc = rc.train;
  auto folds = make_folds(ds.size(), tc.folds, tc.seed);

  CvResult res;
  for (int rep = 0; rep < tc.repeats; ++rep) {
    std::uint64_t init_seed =
        tc.seed + 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(rep);
    for (int f = 0; f < tc.folds; ++f) {
      std::vector<int> train_idx;
      for (int g = 0; g < tc.folds; ++g)
        if (g != f)
          train_idx.insert(train_idx.end(), folds[static_cast<std::size_t>(g)].begin(),
                           folds[static_cast<std::size_t>(g)].end());
      Dataset<T> train_ds = subset(ds, train_idx);
      Dataset<T> val_ds = subset(ds, folds[static_cast<std::size_t>(f)]);

      AmlSystem<T> system(rc.gen_config(), rc.disc_config(), rc.aml_config(),
                          init_seed);
      AdamConfig ac{tc.lr, tc.beta1, tc.beta2, tc.eps};
      Adam<T> gen_opt(system.gen_params(), ac);
      Adam<T> disc_opt(system.disc_params(), ac);
      detail::emit(log, "fold " + std::to_string(f) + " repeat " +
                            std::to_string(rep) + " begin");
      TrainResult tr = train_system(system, gen_opt, &disc_opt, train_ds, val_ds,
                                    tc, log, /*restore_best=*/false);
      res.rows.push_back({f, rep, tr.best_val_miou, tr.best_epoch});
      detail::emit(log, "fold " + std::to_string(f) + " repeat " +
                            std::to_string(rep) + " best_val_miou " +
                            detail::loss_num(tr.best_val_miou));
    }
  }

  double sum = 0;
  for (const auto& r : res.rows) sum += r.best_val_miou;
  res.mean = sum / static_cast<double>(res.rows.size());
  double var = 0;
  for (const auto& r : res.rows) {
    double d = r.best_val_miou - res.mean;
    var += d * d;
  }
  res.stddev = std::sqrt(var / static_cast<double>(res.rows.size()));
  return res;
}

}  // namespace aml
