// amlseg: synthesize data, train, evaluate, ablate, and export attention
// visualizations for the adversarial mutual-leakage segmentation system.
//
// Every artifact directory receives the canonical config text and every
// CSV/log embeds the config digest, so runs are attributable and byte-for-
// byte reproducible given the same config and seed. The output root can be
// moved with the AML_OUT_ROOT environment variable.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "aml/checkpoint.hpp"
#include "aml/config.hpp"
#include "aml/trainer.hpp"
#include "aml/visualize.hpp"

namespace fs = std::filesystem;
using namespace aml;
using T = double;

namespace {

std::string fmt6(double v) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(6) << v;
  return ss.str();
}

std::string fmt_short(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

fs::path resolve_out_dir(const std::string& configured) {
  const char* root = std::getenv("AML_OUT_ROOT");
  fs::path p = root ? fs::path(root) / configured : fs::path(configured);
  fs::create_directories(p);
  return p;
}

RunConfig load_run_config(const std::string& config_file,
                          const std::vector<std::string>& overrides) {
  RunConfig rc = config_file.empty() ? RunConfig{} : parse_config_file(config_file);
  apply_config_overrides(rc, overrides);
  rc.validate();
  return rc;
}

Dataset<T> load_configured_dataset(const RunConfig& rc) {
  check(!rc.data_dir.empty(),
        "data.dir must point at a dataset directory (images/ + masks/)");
  Dataset<T> ds = load_image_mask_dir<T>(rc.data_dir + "/images",
                                         rc.data_dir + "/masks",
                                         Palette::gray_levels(rc.num_classes));
  check(ds.size() > 0, "dataset at " + rc.data_dir + " is empty");
  if (rc.resize > 0) ds = resize_dataset(ds, rc.resize, rc.resize);
  if (rc.tile > 0) ds = tile_dataset(ds, rc.tile);
  return ds;
}

void split_train_val(const Dataset<T>& ds, int val_count, Dataset<T>& train_ds,
                     Dataset<T>& val_ds) {
  check(static_cast<std::size_t>(val_count) < ds.size(),
        "data.val_count leaves no training items");
  std::vector<int> train_idx, val_idx;
  int n = static_cast<int>(ds.size());
  for (int i = 0; i < n - val_count; ++i) train_idx.push_back(i);
  for (int i = n - val_count; i < n; ++i) val_idx.push_back(i);
  train_ds = subset(ds, train_idx);
  val_ds = subset(ds, val_idx);
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  check(static_cast<bool>(out), "cannot write " + path.string());
  out << text;
}

// Per-class metric table: IoU mean/std across images (population std over
// images where the class is present), precision/recall pooled over pixels.
std::string metrics_csv(const std::vector<ConfusionMatrix>& per_image,
                        const ConfusionMatrix& pooled, std::uint64_t digest) {
  std::ostringstream out;
  out << "# config_digest " << digest << "\n";
  out << "class,iou_mean,iou_std,precision,recall\n";
  for (int c = 0; c < pooled.num_classes(); ++c) {
    std::vector<double> ious;
    for (const auto& cm : per_image)
      if (cm.present(c)) ious.push_back(cm.iou(c));
    double mean = 0, sd = 0;
    if (!ious.empty()) {
      for (double v : ious) mean += v;
      mean /= static_cast<double>(ious.size());
      for (double v : ious) sd += (v - mean) * (v - mean);
      sd = std::sqrt(sd / static_cast<double>(ious.size()));
    }
    auto opt = [&](const std::optional<double>& v) {
      return v ? fmt6(*v) : std::string("na");
    };
    out << c << "," << fmt6(mean) << "," << fmt6(sd) << ","
        << opt(pooled.precision(c)) << "," << opt(pooled.recall(c)) << "\n";
  }
  return out.str();
}

std::string summary_csv(double miou, double pixel_acc, std::uint64_t digest) {
  std::ostringstream out;
  out << "# config_digest " << digest << "\n";
  out << "miou,pixel_accuracy\n";
  out << fmt6(miou) << "," << fmt6(pixel_acc) << "\n";
  return out.str();
}

struct EvalArtifacts {
  ConfusionMatrix pooled{1};
  std::vector<ConfusionMatrix> per_image;
};

EvalArtifacts evaluate_dataset(AmlSystem<T>& system, const Dataset<T>& ds,
                               int batch_size, std::vector<Mask>* preds) {
  EvalArtifacts ev;
  ev.pooled = ConfusionMatrix(ds.num_classes);
  for (std::size_t start = 0; start < ds.size();
       start += static_cast<std::size_t>(batch_size)) {
    std::vector<int> idx;
    for (std::size_t i = start;
         i < std::min(ds.size(), start + static_cast<std::size_t>(batch_size)); ++i)
      idx.push_back(static_cast<int>(i));
    SegBatch<T> b = gather_batch(ds, idx);
    Mask pred = argmax_mask(system.infer(b.images));
    ev.pooled.accumulate(pred, b.masks);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      ConfusionMatrix cm(ds.num_classes);
      Mask p1(1, pred.h, pred.w, 0);
      Mask g1(1, pred.h, pred.w, 0);
      std::int64_t off = static_cast<std::int64_t>(k) * pred.h * pred.w;
      std::copy(pred.v.begin() + off, pred.v.begin() + off + pred.h * pred.w,
                p1.v.begin());
      std::copy(b.masks.v.begin() + off,
                b.masks.v.begin() + off + pred.h * pred.w, g1.v.begin());
      cm.accumulate(p1, g1);
      ev.per_image.push_back(cm);
      if (preds) preds->push_back(std::move(p1));
    }
  }
  return ev;
}

int cmd_synth(const std::string& spec_file, const std::string& out_dir) {
  SynthSpec spec = spec_file.empty() ? SynthSpec{} : parse_synth_file(spec_file);
  Dataset<T> ds = synth_generate<T>(spec);
  fs::path out = resolve_out_dir(out_dir);
  save_dataset(ds, out.string(), Palette::gray_levels(ds.num_classes));

  Fnv1a h;
  std::ostringstream text;
  text << "synth.image_size = " << spec.image_size << "\n"
       << "synth.num_images = " << spec.num_images << "\n"
       << "synth.min_cells = " << spec.min_cells << "\n"
       << "synth.max_cells = " << spec.max_cells << "\n"
       << "synth.distractors = " << spec.distractors << "\n"
       << "synth.nucleus_frac = " << fmt_short(spec.nucleus_frac) << "\n"
       << "synth.noise = " << fmt_short(spec.noise) << "\n"
       << "synth.seed = " << spec.seed << "\n";
  std::string t = text.str();
  h.update(t.data(), t.size());
  write_text_file(out / "synth.conf", "# config_digest " + std::to_string(h.value()) +
                                          "\n" + t);
  std::cout << "wrote " << ds.size() << " images to " << out.string() << "\n";
  return 0;
}

int cmd_train(const std::string& config_file,
              const std::vector<std::string>& overrides, bool cross_validate) {
  RunConfig rc = load_run_config(config_file, overrides);
  std::uint64_t digest = config_digest(rc);
  fs::path out = resolve_out_dir(rc.out_dir);
  write_text_file(out / "run.conf",
                  "# config_digest " + std::to_string(digest) + "\n" +
                      config_text(rc));
  Dataset<T> ds = load_configured_dataset(rc);

  if (cross_validate) {
    std::ofstream log(out / "cv_loss.log");
    log << "# config_digest " << digest << "\n";
    CvResult cv = run_cross_validation(ds, rc,
                                       [&](const std::string& l) { log << l << "\n"; });
    std::ostringstream csv;
    csv << "# config_digest " << digest << "\n";
    csv << "fold,repeat,best_epoch,best_val_miou\n";
    for (const auto& r : cv.rows)
      csv << r.fold << "," << r.repeat << "," << r.best_epoch << ","
          << fmt6(r.best_val_miou) << "\n";
    write_text_file(out / "cv.csv", csv.str());
    write_text_file(out / "cv_summary.txt",
                    "# config_digest " + std::to_string(digest) + "\nmiou_mean " +
                        fmt6(cv.mean) + "\nmiou_std " + fmt6(cv.stddev) + "\n");
    std::cout << "cross-validation miou " << fmt6(cv.mean) << " +- "
              << fmt6(cv.stddev) << " over " << cv.rows.size() << " rows\n";
    return 0;
  }

  Dataset<T> train_ds, val_ds;
  split_train_val(ds, rc.val_count, train_ds, val_ds);

  AmlSystem<T> system(rc.gen_config(), rc.disc_config(), rc.aml_config(),
                      rc.train.seed);
  AdamConfig ac{rc.train.lr, rc.train.beta1, rc.train.beta2, rc.train.eps};
  Adam<T> gen_opt(system.gen_params(), ac);
  Adam<T> disc_opt(system.disc_params(), ac);

  std::ofstream log(out / "loss.log");
  log << "# config_digest " << digest << "\n";
  TrainResult res =
      train_system(system, gen_opt, &disc_opt, train_ds, val_ds, rc.train,
                   [&](const std::string& l) { log << l << "\n"; });

  CheckpointMeta meta;
  meta.config_digest = digest;
  meta.epoch = res.best_epoch;
  meta.best_val_miou = res.best_val_miou;
  save_checkpoint((out / "model.ckpt").string(), system, &gen_opt, &disc_opt, meta);

  EvalArtifacts ev = evaluate_dataset(system, val_ds, rc.train.batch_size, nullptr);
  write_text_file(out / "metrics.csv", metrics_csv(ev.per_image, ev.pooled, digest));
  write_text_file(out / "summary.csv",
                  summary_csv(res.best_val_miou, ev.pooled.pixel_accuracy(), digest));
  std::cout << "best_val_miou " << fmt6(res.best_val_miou) << " at epoch "
            << res.best_epoch << "; artifacts in " << out.string() << "\n";
  return 0;
}

int cmd_eval(const std::string& config_file,
             const std::vector<std::string>& overrides,
             const std::string& checkpoint, const std::string& data_dir,
             const std::string& out_dir) {
  RunConfig rc = load_run_config(config_file, overrides);
  // The digest identifies the training run; --data only redirects which
  // images get scored, so it is applied after the digest is fixed.
  std::uint64_t digest = config_digest(rc);
  if (!data_dir.empty()) rc.data_dir = data_dir;
  Dataset<T> ds = load_configured_dataset(rc);

  AmlSystem<T> system(rc.gen_config(), rc.disc_config(), rc.aml_config(),
                      rc.train.seed);
  load_checkpoint(checkpoint, system, static_cast<Adam<T>*>(nullptr),
                  static_cast<Adam<T>*>(nullptr), digest);

  fs::path out = resolve_out_dir(out_dir.empty() ? rc.out_dir : out_dir);
  std::vector<Mask> preds;
  EvalArtifacts ev = evaluate_dataset(system, ds, rc.train.batch_size, &preds);
  write_text_file(out / "metrics.csv", metrics_csv(ev.per_image, ev.pooled, digest));
  write_text_file(out / "summary.csv",
                  summary_csv(ev.pooled.mean_iou(), ev.pooled.pixel_accuracy(),
                              digest));
  fs::create_directories(out / "pred");
  Palette palette = Palette::gray_levels(rc.num_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    std::ostringstream name;
    name << std::setw(4) << std::setfill('0') << i << ".png";
    write_png((out / "pred" / name.str()).string(),
              mask_to_image(preds[i], palette));
  }
  std::cout << "miou " << fmt6(ev.pooled.mean_iou()) << " over " << ds.size()
            << " images; artifacts in " << out.string() << "\n";
  return 0;
}

int cmd_ablate(const std::string& config_file,
               const std::vector<std::string>& overrides,
               const std::string& sweep_file) {
  RunConfig rc = load_run_config(config_file, overrides);
  SweepSpec sweep = sweep_file.empty() ? SweepSpec{} : parse_sweep_file(sweep_file);
  sweep.validate();
  std::uint64_t digest = config_digest(rc);
  fs::path out = resolve_out_dir(rc.out_dir);
  Dataset<T> ds = load_configured_dataset(rc);
  Dataset<T> train_ds, val_ds;
  split_train_val(ds, rc.val_count, train_ds, val_ds);

  std::ostringstream csv;
  csv << "# config_digest " << digest << "\n";
  csv << "connection,lambda_adv,best_epoch,val_miou\n";
  for (const auto& conn : sweep.connections)
    for (double lambda : sweep.lambdas) {
      RunConfig cell = rc;
      cell.mode = "aml";
      cell.connection = conn;
      cell.lambda_adv = lambda;
      AmlSystem<T> system(cell.gen_config(), cell.disc_config(),
                          cell.aml_config(), cell.train.seed);
      AdamConfig ac{cell.train.lr, cell.train.beta1, cell.train.beta2,
                    cell.train.eps};
      Adam<T> gen_opt(system.gen_params(), ac);
      Adam<T> disc_opt(system.disc_params(), ac);
      TrainResult res = train_system(system, gen_opt, &disc_opt, train_ds,
                                     val_ds, cell.train, {});
      csv << conn << "," << fmt_short(lambda) << "," << res.best_epoch << ","
          << fmt6(res.best_val_miou) << "\n";
      std::cout << "ablate " << conn << " lambda " << fmt_short(lambda)
                << " -> miou " << fmt6(res.best_val_miou) << "\n";
    }
  write_text_file(out / "ablate.csv", csv.str());
  std::cout << "ablation grid written to " << (out / "ablate.csv").string()
            << "\n";
  return 0;
}

int cmd_visualize(const std::string& config_file,
                  const std::vector<std::string>& overrides,
                  const std::string& checkpoint, const std::string& data_dir,
                  int index, int row, int col, const std::string& out_dir) {
  RunConfig rc = load_run_config(config_file, overrides);
  if (!data_dir.empty()) rc.data_dir = data_dir;
  std::uint64_t digest = config_digest(rc);
  Dataset<T> ds = load_configured_dataset(rc);
  check(index >= 0 && static_cast<std::size_t>(index) < ds.size(),
        "image index " + std::to_string(index) + " outside the dataset");

  AmlSystem<T> system(rc.gen_config(), rc.disc_config(), rc.aml_config(),
                      rc.train.seed);
  if (!checkpoint.empty())
    load_checkpoint(checkpoint, system, static_cast<Adam<T>*>(nullptr),
                    static_cast<Adam<T>*>(nullptr), digest);

  fs::path out = resolve_out_dir(out_dir.empty() ? rc.out_dir : out_dir);
  SegBatch<T> batch = gather_batch(ds, {index});
  const Shape& s = batch.images.shape();
  GeneratorTrace<T> trace = system.trace_forward(batch);

  write_png((out / "input.png").string(),
            tensor_to_image(ds.images[static_cast<std::size_t>(index)]));
  Palette palette = Palette::gray_levels(rc.num_classes);
  write_png((out / "gt.png").string(),
            mask_to_image(ds.masks[static_cast<std::size_t>(index)], palette));
  write_png((out / "pred.png").string(),
            mask_to_image(argmax_mask(trace.logits->value), palette));

  int files = 3;
  for (const auto& h : attention_heatmaps(trace, s.h, s.w, row, col)) {
    write_heatmap_png((out / ("attention_site" + std::to_string(h.site) + ".png"))
                          .string(),
                      h.map, s.h, s.w);
    ++files;
  }
  for (const auto& h : difficulty_heatmaps(trace)) {
    write_heatmap_png(
        (out / ("difficulty_factor" + std::to_string(h.site) + ".png")).string(),
        h.map, s.h, s.w);
    ++files;
  }
  write_text_file(out / "visualize.txt",
                  "# config_digest " + std::to_string(digest) + "\nindex " +
                      std::to_string(index) + "\nreference_pixel " +
                      std::to_string(row) + " " + std::to_string(col) + "\n");
  std::cout << files << " images written to " << out.string() << "\n";
  return 0;
}

int cmd_print_config(const std::string& config_file,
                     const std::vector<std::string>& overrides) {
  RunConfig rc = config_file.empty() ? RunConfig{} : parse_config_file(config_file);
  apply_config_overrides(rc, overrides);
  std::cout << "# config_digest " << config_digest(rc) << "\n" << config_text(rc);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adversarial mutual-leakage segmentation toolkit"};
  app.require_subcommand(1);

  std::string config_file, spec_file, sweep_file, checkpoint, data_dir, out_dir;
  std::vector<std::string> overrides;
  bool cross_validate = false;
  int index = 0, row = 0, col = 0;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--spec", spec_file, "synth spec file (defaults built in)");
  synth->add_option("--out", out_dir, "output dataset directory")->required();

  auto* train = app.add_subcommand("train", "train a model from a config");
  train->add_option("--config", config_file, "run config file");
  train->add_option("--set", overrides, "key=value config overrides");
  train->add_flag("--cv", cross_validate, "run the cross-validation protocol");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval->add_option("--config", config_file, "run config file")->required();
  eval->add_option("--set", overrides, "key=value config overrides");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--data", data_dir, "dataset directory (overrides data.dir)");
  eval->add_option("--out", out_dir, "artifact directory (defaults to out.dir)");

  auto* ablate = app.add_subcommand("ablate", "run the connection/lambda grid");
  ablate->add_option("--config", config_file, "run config file");
  ablate->add_option("--set", overrides, "key=value config overrides");
  ablate->add_option("--sweep", sweep_file, "sweep file (defaults built in)");

  auto* viz = app.add_subcommand("visualize", "export attention heatmaps");
  viz->add_option("--config", config_file, "run config file");
  viz->add_option("--set", overrides, "key=value config overrides");
  viz->add_option("--checkpoint", checkpoint, "checkpoint file (optional)");
  viz->add_option("--data", data_dir, "dataset directory (overrides data.dir)");
  viz->add_option("--index", index, "dataset item to visualize");
  viz->add_option("--row", row, "reference pixel row");
  viz->add_option("--col", col, "reference pixel column");
  viz->add_option("--out", out_dir, "artifact directory (defaults to out.dir)");

  auto* pc = app.add_subcommand("print-config", "print the effective config");
  pc->add_option("--config", config_file, "run config file");
  pc->add_option("--set", overrides, "key=value config overrides");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(spec_file, out_dir);
    if (train->parsed()) return cmd_train(config_file, overrides, cross_validate);
    if (eval->parsed())
      return cmd_eval(config_file, overrides, checkpoint, data_dir, out_dir);
    if (ablate->parsed()) return cmd_ablate(config_file, overrides, sweep_file);
    if (viz->parsed())
      return cmd_visualize(config_file, overrides, checkpoint, data_dir, index,
                           row, col, out_dir);
    if (pc->parsed()) return cmd_print_config(config_file, overrides);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
