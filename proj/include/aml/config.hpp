#pragma once

// Run configuration: plain `key = value` text (one per line, '#' comments),
// dotted keys grouped by subsystem, strict unknown-key errors. The
// canonical text rendering doubles as the digest input, so two configs
// digest equal exactly when every effective value matches.

#include <fstream>
#include <iomanip>
#include <sstream>

#include "aml/aml_net.hpp"
#include "aml/data.hpp"
#include "aml/digest.hpp"

namespace aml {

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.9;  // published recipe; not the usual 0.999
  double eps = 1e-8;
  int epochs = 30;
  int batch_size = 4;
  int folds = 5;
  int repeats = 3;
  std::uint64_t seed = 1;
  double target_miou = 0.0;  // > 0 enables early stop on validation mIoU

  void validate() const {
    check(lr > 0 && beta1 > 0 && beta2 > 0 && eps > 0,
          "training rates must be positive");
    check(beta1 < 1 && beta2 < 1, "momentum decays must be < 1");
    check(epochs >= 1, "epochs must be >= 1");
    check(batch_size >= 1, "batch_size must be >= 1");
    check(folds >= 2, "folds must be >= 2");
    check(repeats >= 1, "repeats must be >= 1");
  }
};

struct RunConfig {
  TrainConfig train;
  // system
  std::string mode = "aml";
  std::string connection = "ata";
  double lambda_adv = 0.01;
  bool bottom_up_pda = false;
  bool saturating_g_loss = false;
  // generator
  int depth = 4;
  int base_channels = 64;
  int num_classes = 3;
  std::vector<int> ata_sites = {1, 2, 3};
  std::vector<int> pda_stages = {3, 2, 1};
  // discriminator
  std::vector<int> disc_widths = {64, 64, 128, 256, 512};
  // data
  std::string data_dir;
  int resize = 0;     // square resize when > 0
  int tile = 0;       // tile size when > 0
  int val_count = 16; // trailing items held out for validation
  // output
  std::string out_dir = "runs/default";

  GenConfig gen_config() const {
    GenConfig g;
    g.depth = depth;
    g.base_channels = base_channels;
    g.num_classes = num_classes;
    g.ata_sites = ata_sites;
    g.pda_stages = pda_stages;
    return g;
  }
  DiscConfig disc_config() const {
    DiscConfig d;
    d.num_classes = num_classes;
    d.widths = disc_widths;
    return d;
  }
  AmlConfig aml_config() const {
    AmlConfig a;
    a.mode = parse_system_mode(mode);
    a.connection = parse_connection(connection);
    a.lambda_adv = lambda_adv;
    a.bottom_up_pda = bottom_up_pda;
    a.saturating_g_loss = saturating_g_loss;
    return a;
  }

  void validate() const {
    train.validate();
    gen_config().validate();
    disc_config().validate();
    aml_config().validate();
    check(val_count >= 0, "data.val_count must be >= 0");
    check(resize >= 0 && tile >= 0, "data.resize/data.tile must be >= 0");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline int conf_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    int out = std::stoi(v, &pos);
    check(pos == v.size(), "");
    return out;
  } catch (...) {
    fail("config key '" + key + "': expected integer, got '" + v + "'");
  }
}

inline double conf_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double out = std::stod(v, &pos);
    check(pos == v.size(), "");
    return out;
  } catch (...) {
    fail("config key '" + key + "': expected number, got '" + v + "'");
  }
}

inline bool conf_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail("config key '" + key + "': expected true/false, got '" + v + "'");
}

inline std::uint64_t conf_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    std::uint64_t out = std::stoull(v, &pos);
    check(pos == v.size(), "");
    return out;
  } catch (...) {
    fail("config key '" + key + "': expected unsigned integer, got '" + v + "'");
  }
}

inline std::vector<int> conf_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (!part.empty()) out.push_back(conf_int(key, part));
  }
  check(!out.empty(), "config key '" + key + "': expected a comma-separated list");
  return out;
}

inline std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (int x : v) out += (out.empty() ? "" : ",") + std::to_string(x);
  return out;
}

template <typename F>
void parse_kv_text(std::istream& in, const std::string& what, F&& apply) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    check(eq != std::string::npos, what + " line " + std::to_string(lineno) +
                                       ": expected 'key = value', got '" + line + "'");
    apply(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

inline std::string format_double(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

}  // namespace detail

inline void apply_config_value(RunConfig& cfg, const std::string& key,
                               const std::string& value) {
  using namespace detail;
  if (key == "train.lr") cfg.train.lr = conf_double(key, value);
  else if (key == "train.beta1") cfg.train.beta1 = conf_double(key, value);
  else if (key == "train.beta2") cfg.train.beta2 = conf_double(key, value);
  else if (key == "train.eps") cfg.train.eps = conf_double(key, value);
  else if (key == "train.epochs") cfg.train.epochs = conf_int(key, value);
  else if (key == "train.batch_size") cfg.train.batch_size = conf_int(key, value);
  else if (key == "train.folds") cfg.train.folds = conf_int(key, value);
  else if (key == "train.repeats") cfg.train.repeats = conf_int(key, value);
  else if (key == "train.seed") cfg.train.seed = conf_u64(key, value);
  else if (key == "train.target_miou") cfg.train.target_miou = conf_double(key, value);
  else if (key == "system.mode") cfg.mode = value;
  else if (key == "system.connection") cfg.connection = value;
  else if (key == "system.lambda_adv") cfg.lambda_adv = conf_double(key, value);
  else if (key == "system.bottom_up_pda") cfg.bottom_up_pda = conf_bool(key, value);
  else if (key == "system.saturating_g_loss") cfg.saturating_g_loss = conf_bool(key, value);
  else if (key == "gen.depth") cfg.depth = conf_int(key, value);
  else if (key == "gen.base_channels") cfg.base_channels = conf_int(key, value);
  else if (key == "gen.num_classes") cfg.num_classes = conf_int(key, value);
  else if (key == "gen.ata_sites") cfg.ata_sites = conf_int_list(key, value);
  else if (key == "gen.pda_stages") cfg.pda_stages = conf_int_list(key, value);
  else if (key == "disc.widths") cfg.disc_widths = conf_int_list(key, value);
  else if (key == "data.dir") cfg.data_dir = value;
  else if (key == "data.resize") cfg.resize = conf_int(key, value);
  else if (key == "data.tile") cfg.tile = conf_int(key, value);
  else if (key == "data.val_count") cfg.val_count = conf_int(key, value);
  else if (key == "out.dir") cfg.out_dir = value;
  else fail("unknown config key '" + key + "'");
}

inline RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  check(static_cast<bool>(in), "cannot open config file " + path);
  RunConfig cfg;
  detail::parse_kv_text(in, path, [&](const std::string& k, const std::string& v) {
    apply_config_value(cfg, k, v);
  });
  return cfg;
}

// `key=value` strings, e.g. from command-line overrides.
inline void apply_config_overrides(RunConfig& cfg,
                                   const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    std::size_t eq = o.find('=');
    check(eq != std::string::npos, "override '" + o + "' is not key=value");
    apply_config_value(cfg, detail::trim(o.substr(0, eq)),
                       detail::trim(o.substr(eq + 1)));
  }
}

inline std::string config_text(const RunConfig& cfg) {
  using detail::format_double;
  using detail::join_ints;
  std::ostringstream out;
  out << "train.lr = " << format_double(cfg.train.lr) << "\n"
      << "train.beta1 = " << format_double(cfg.train.beta1) << "\n"
      << "train.beta2 = " << format_double(cfg.train.beta2) << "\n"
      << "train.eps = " << format_double(cfg.train.eps) << "\n"
      << "train.epochs = " << cfg.train.epochs << "\n"
      << "train.batch_size = " << cfg.train.batch_size << "\n"
      << "train.folds = " << cfg.train.folds << "\n"
      << "train.repeats = " << cfg.train.repeats << "\n"
      << "train.seed = " << cfg.train.seed << "\n"
      << "train.target_miou = " << format_double(cfg.train.target_miou) << "\n"
      << "system.mode = " << cfg.mode << "\n"
      << "system.connection = " << cfg.connection << "\n"
      << "system.lambda_adv = " << format_double(cfg.lambda_adv) << "\n"
      << "system.bottom_up_pda = " << (cfg.bottom_up_pda ? "true" : "false") << "\n"
      << "system.saturating_g_loss = " << (cfg.saturating_g_loss ? "true" : "false")
      << "\n"
      << "gen.depth = " << cfg.depth << "\n"
      << "gen.base_channels = " << cfg.base_channels << "\n"
      << "gen.num_classes = " << cfg.num_classes << "\n"
      << "gen.ata_sites = " << join_ints(cfg.ata_sites) << "\n"
      << "gen.pda_stages = " << join_ints(cfg.pda_stages) << "\n"
      << "disc.widths = " << join_ints(cfg.disc_widths) << "\n"
      << "data.dir = " << cfg.data_dir << "\n"
      << "data.resize = " << cfg.resize << "\n"
      << "data.tile = " << cfg.tile << "\n"
      << "data.val_count = " << cfg.val_count << "\n"
      << "out.dir = " << cfg.out_dir << "\n";
  return out.str();
}

inline std::uint64_t config_digest(const RunConfig& cfg) {
  Fnv1a h;
  std::string text = config_text(cfg);
  h.update(text.data(), text.size());
  return h.value();
}

inline void apply_synth_value(SynthSpec& spec, const std::string& key,
                              const std::string& value) {
  using namespace detail;
  if (key == "synth.image_size") spec.image_size = conf_int(key, value);
  else if (key == "synth.num_images") spec.num_images = conf_int(key, value);
  else if (key == "synth.min_cells") spec.min_cells = conf_int(key, value);
  else if (key == "synth.max_cells") spec.max_cells = conf_int(key, value);
  else if (key == "synth.distractors") spec.distractors = conf_int(key, value);
  else if (key == "synth.nucleus_frac") spec.nucleus_frac = conf_double(key, value);
  else if (key == "synth.noise") spec.noise = conf_double(key, value);
  else if (key == "synth.seed") spec.seed = conf_u64(key, value);
  else fail("unknown config key '" + key + "'");
}

inline SynthSpec parse_synth_file(const std::string& path) {
  std::ifstream in(path);
  check(static_cast<bool>(in), "cannot open synth spec file " + path);
  SynthSpec spec;
  detail::parse_kv_text(in, path, [&](const std::string& k, const std::string& v) {
    apply_synth_value(spec, k, v);
  });
  return spec;
}

// Ablation grid: every listed connection crossed with every adversarial
// weight.
struct SweepSpec {
  std::vector<std::string> connections = {"add", "concat", "conv1x1", "ata"};
  std::vector<double> lambdas = {0.0, 0.01, 0.1, 1.0};

  void validate() const {
    check(!connections.empty() && !lambdas.empty(),
          "sweep needs at least one connection and one lambda");
    for (const auto& c : connections) parse_connection(c);
    for (double l : lambdas) check(l >= 0, "sweep lambdas must be >= 0");
  }
};

inline void apply_sweep_value(SweepSpec& spec, const std::string& key,
                              const std::string& value) {
  using namespace detail;
  if (key == "sweep.connections") {
    spec.connections.clear();
    std::stringstream ss(value);
    std::string part;
    while (std::getline(ss, part, ','))
      if (!trim(part).empty()) spec.connections.push_back(trim(part));
  } else if (key == "sweep.lambdas") {
    spec.lambdas.clear();
    std::stringstream ss(value);
    std::string part;
    while (std::getline(ss, part, ','))
      if (!trim(part).empty()) spec.lambdas.push_back(conf_double(key, trim(part)));
  } else {
    fail("unknown config key '" + key + "'");
  }
}

inline SweepSpec parse_sweep_file(const std::string& path) {
  std::ifstream in(path);
  check(static_cast<bool>(in), "cannot open sweep file " + path);
  SweepSpec spec;
  detail::parse_kv_text(in, path, [&](const std::string& k, const std::string& v) {
    apply_sweep_value(spec, k, v);
  });
  spec.validate();
  return spec;
}

}  // namespace aml
