#pragma once

// Versioned binary checkpoints: every parameter, every persistent buffer
// (power-iteration vectors), optimizer moments and step counters, plus the
// digest of the run configuration that produced them. Loading into a model
// built from a different configuration is refused up front instead of
// silently misassigning weights.

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include "aml/aml_net.hpp"
#include "aml/optim.hpp"

namespace aml {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace detail {

constexpr char kCkptMagic[8] = {'A', 'M', 'L', 'C', 'K', 'P', 'T', '\x01'};

inline void write_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename V>
void write_pod(std::ostream& out, V v) {
  write_bytes(out, &v, sizeof(V));
}

inline void write_blob(std::ostream& out, const std::string& name,
                       const double* data, std::uint64_t count) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  write_bytes(out, name.data(), name.size());
  write_pod<std::uint64_t>(out, count);
  write_bytes(out, data, count * sizeof(double));
}

inline void read_bytes(std::istream& in, void* p, std::size_t n,
                       const std::string& what) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  check(static_cast<bool>(in), "checkpoint truncated while reading " + what);
}

template <typename V>
V read_pod(std::istream& in, const std::string& what) {
  V v;
  read_bytes(in, &v, sizeof(V), what);
  return v;
}

}  // namespace detail

struct CheckpointMeta {
  std::uint64_t config_digest = 0;
  std::int64_t epoch = 0;
  double best_val_miou = 0.0;
  std::int64_t gen_opt_steps = 0;
  std::int64_t disc_opt_steps = 0;
};

template <typename T>
class CheckpointBlobs {
 public:
  void add(const std::string& name, const Tensor<T>& t) {
    add_raw(name, t.data(), static_cast<std::uint64_t>(t.numel()));
  }
  void add(const std::string& name, const std::vector<T>& v) {
    add_raw(name, v.data(), static_cast<std::uint64_t>(v.size()));
  }
  void add_raw(const std::string& name, const T* data, std::uint64_t count) {
    check(!blobs_.count(name), "checkpoint: duplicate blob name " + name);
    std::vector<double> d(count);
    for (std::uint64_t i = 0; i < count; ++i) d[i] = static_cast<double>(data[i]);
    blobs_.emplace(name, std::move(d));
  }

  void restore(const std::string& name, T* data, std::uint64_t count) const {
    auto it = blobs_.find(name);
    check(it != blobs_.end(), "checkpoint is missing blob " + name);
    check(it->second.size() == count,
          "checkpoint blob " + name + " holds " +
              std::to_string(it->second.size()) + " values, model expects " +
              std::to_string(count));
    for (std::uint64_t i = 0; i < count; ++i)
      data[i] = static_cast<T>(it->second[i]);
    consumed_.insert(name);
  }
  void restore(const std::string& name, Tensor<T>& t) const {
    restore(name, t.data(), static_cast<std::uint64_t>(t.numel()));
  }
  void restore(const std::string& name, std::vector<T>& v) const {
    restore(name, v.data(), static_cast<std::uint64_t>(v.size()));
  }

  void check_fully_consumed() const {
    for (auto& [name, _] : blobs_)
      check(consumed_.count(name) > 0,
            "checkpoint blob " + name + " has no destination in this model");
  }

  void write(std::ostream& out) const {
    detail::write_pod<std::uint64_t>(out, blobs_.size());
    for (auto& [name, data] : blobs_)
      detail::write_blob(out, name, data.data(),
                         static_cast<std::uint64_t>(data.size()));
  }
  void read(std::istream& in) {
    auto n = detail::read_pod<std::uint64_t>(in, "blob count");
    for (std::uint64_t i = 0; i < n; ++i) {
      auto len = detail::read_pod<std::uint32_t>(in, "blob name length");
      std::string name(len, '\0');
      detail::read_bytes(in, name.data(), len, "blob name");
      auto count = detail::read_pod<std::uint64_t>(in, "blob size of " + name);
      std::vector<double> data(count);
      detail::read_bytes(in, data.data(), count * sizeof(double),
                         "blob data of " + name);
      check(!blobs_.count(name), "checkpoint: duplicate blob name " + name);
      blobs_.emplace(name, std::move(data));
    }
  }

 private:
  std::map<std::string, std::vector<double>> blobs_;
  mutable std::set<std::string> consumed_;
};

template <typename T>
CheckpointBlobs<T> collect_blobs(AmlSystem<T>& system, Adam<T>* gen_opt,
                                 Adam<T>* disc_opt) {
  CheckpointBlobs<T> blobs;
  for (auto& [name, v] : system.gen_params().items)
    blobs.add("param/" + name, v->value);
  for (auto& [name, v] : system.disc_params().items)
    blobs.add("param/" + name, v->value);
  BufferMap<T> bm;
  system.buffers(bm);
  for (auto& [name, vec] : bm.items) blobs.add("buf/" + name, *vec);
  auto add_opt = [&](Adam<T>* opt, const std::string& tag) {
    if (!opt) return;
    const auto& items = opt->params().items;
    for (std::size_t i = 0; i < items.size(); ++i) {
      blobs.add(tag + "_m/" + items[i].first, opt->moment1()[i]);
      blobs.add(tag + "_v/" + items[i].first, opt->moment2()[i]);
    }
  };
  add_opt(gen_opt, "adam_g");
  add_opt(disc_opt, "adam_d");
  return blobs;
}

template <typename T>
void restore_blobs(const CheckpointBlobs<T>& blobs, AmlSystem<T>& system,
                   Adam<T>* gen_opt, Adam<T>* disc_opt) {
  for (auto& [name, v] : system.gen_params().items)
    blobs.restore("param/" + name, v->value);
  for (auto& [name, v] : system.disc_params().items)
    blobs.restore("param/" + name, v->value);
  BufferMap<T> bm;
  system.buffers(bm);
  for (auto& [name, vec] : bm.items) blobs.restore("buf/" + name, *vec);
  auto load_opt = [&](Adam<T>* opt, const std::string& tag) {
    if (!opt) return;
    const auto& items = opt->params().items;
    for (std::size_t i = 0; i < items.size(); ++i) {
      blobs.restore(tag + "_m/" + items[i].first, opt->moment1()[i]);
      blobs.restore(tag + "_v/" + items[i].first, opt->moment2()[i]);
    }
  };
  load_opt(gen_opt, "adam_g");
  load_opt(disc_opt, "adam_d");
}

template <typename T>
void save_checkpoint(const std::string& path, AmlSystem<T>& system,
                     Adam<T>* gen_opt, Adam<T>* disc_opt,
                     const CheckpointMeta& meta) {
  std::ofstream out(path, std::ios::binary);
  check(static_cast<bool>(out), "cannot open checkpoint file for writing: " + path);
  detail::write_bytes(out, detail::kCkptMagic, sizeof(detail::kCkptMagic));
  detail::write_pod<std::uint64_t>(out, meta.config_digest);
  detail::write_pod<std::int64_t>(out, meta.epoch);
  detail::write_pod<double>(out, meta.best_val_miou);
  detail::write_pod<std::int64_t>(out, gen_opt ? gen_opt->steps() : 0);
  detail::write_pod<std::int64_t>(out, disc_opt ? disc_opt->steps() : 0);
  collect_blobs(system, gen_opt, disc_opt).write(out);
  check(static_cast<bool>(out), "failed while writing checkpoint " + path);
}

// Restores parameters, buffers, and (when optimizers are passed) moments.
// `expected_digest` must match the digest stored at save time.
template <typename T>
CheckpointMeta load_checkpoint(const std::string& path, AmlSystem<T>& system,
                               Adam<T>* gen_opt, Adam<T>* disc_opt,
                               std::uint64_t expected_digest) {
  std::ifstream in(path, std::ios::binary);
  check(static_cast<bool>(in), "cannot open checkpoint file: " + path);
  char magic[8];
  detail::read_bytes(in, magic, sizeof(magic), "magic");
  check(std::memcmp(magic, detail::kCkptMagic, sizeof(magic)) == 0,
        path + " is not a checkpoint file (bad magic)");

  CheckpointMeta meta;
  meta.config_digest = detail::read_pod<std::uint64_t>(in, "config digest");
  check(meta.config_digest == expected_digest,
        "checkpoint config digest mismatch: " + path + " was saved with digest " +
            std::to_string(meta.config_digest) +
            " but the current configuration digests to " +
            std::to_string(expected_digest) +
            "; refusing to load weights into a differently configured model");
  meta.epoch = detail::read_pod<std::int64_t>(in, "epoch");
  meta.best_val_miou = detail::read_pod<double>(in, "best validation mIoU");
  meta.gen_opt_steps = detail::read_pod<std::int64_t>(in, "generator opt steps");
  meta.disc_opt_steps = detail::read_pod<std::int64_t>(in, "discriminator opt steps");

  CheckpointBlobs<T> blobs;
  blobs.read(in);
  restore_blobs(blobs, system, gen_opt, disc_opt);
  if (gen_opt) gen_opt->set_steps(meta.gen_opt_steps);
  if (disc_opt) disc_opt->set_steps(meta.disc_opt_steps);
  if (gen_opt && disc_opt) blobs.check_fully_consumed();
  return meta;
}

}  // namespace aml
