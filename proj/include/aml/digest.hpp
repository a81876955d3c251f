#pragma once

// FNV-1a 64-bit digests for parameter state and config provenance.

#include <cstdint>
#include <cstring>
#include <iomanip>
#include <sstream>

#include "aml/layers.hpp"

namespace aml {

struct Fnv1a {
  std::uint64_t h = 0xcbf29ce484222325ull;

  void update(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ull;
    }
  }
  void update(const std::string& s) { update(s.data(), s.size()); }
  template <typename T>
  void update_values(const T* v, std::size_t count) {
    update(v, count * sizeof(T));
  }
  std::uint64_t value() const { return h; }

  std::string hex() const {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
  }
};

template <typename T>
std::uint64_t param_digest(const ParamMap<T>& pm) {
  Fnv1a f;
  for (const auto& [name, v] : pm.items) {
    f.update(name);
    f.update_values(v->value.data(), static_cast<std::size_t>(v->value.numel()));
  }
  return f.value();
}

inline std::string digest_hex(std::uint64_t d) {
  Fnv1a f;
  f.h = d;
  return f.hex();
}

}  // namespace aml
