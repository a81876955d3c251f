#pragma once

// Dense rank-4 tensor (batch, channel, height, width), row-major.
// All feature maps, kernels and scalar losses live in this one container;
// scalars use shape (1,1,1,1) and conv kernels use (out, in, kh, kw).

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace aml {

struct Shape {
  int n = 1, c = 1, h = 1, w = 1;

  Shape() = default;
  Shape(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_) {}

  std::int64_t numel() const {
    return static_cast<std::int64_t>(n) * c * h * w;
  }
  std::int64_t plane() const { return static_cast<std::int64_t>(h) * w; }

  bool operator==(const Shape& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
  }
};

[[noreturn]] inline void fail(const std::string& msg) {
  throw std::invalid_argument(msg);
}

inline void check(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

template <typename T>
class Tensor {
 public:
  Tensor() : shape_(0, 0, 0, 0) {}
  explicit Tensor(Shape s, T init = T(0))
      : shape_(s), data_(static_cast<std::size_t>(s.numel()), init) {
    check(s.n >= 1 && s.c >= 1 && s.h >= 1 && s.w >= 1,
          "tensor dimensions must all be >= 1, got " + s.str());
  }
  Tensor(Shape s, std::vector<T> data) : shape_(s), data_(std::move(data)) {
    check(static_cast<std::int64_t>(data_.size()) == s.numel(),
          "tensor data size does not match shape " + s.str());
  }

  static Tensor scalar(T v) { return Tensor(Shape(1, 1, 1, 1), {v}); }

  const Shape& shape() const { return shape_; }
  std::int64_t numel() const { return shape_.numel(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const {
    return data_[static_cast<std::size_t>(i)];
  }

  std::int64_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::int64_t>(n) * shape_.c + c) * shape_.h + y) *
               shape_.w + x;
  }
  T& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  const T& at(int n, int c, int y, int x) const {
    return data_[index(n, c, y, x)];
  }

  // Pointer to the (c,h,w) block of batch element n.
  T* batch_ptr(int n) {
    return data_.data() + static_cast<std::int64_t>(n) * shape_.c * shape_.plane();
  }
  const T* batch_ptr(int n) const {
    return data_.data() + static_cast<std::int64_t>(n) * shape_.c * shape_.plane();
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  T item() const {
    check(numel() == 1, "item() on non-scalar tensor " + shape_.str());
    return data_[0];
  }

  // Index of the first non-finite element, or -1 when all are finite.
  std::int64_t first_nonfinite() const {
    for (std::int64_t i = 0; i < numel(); ++i)
      if (!std::isfinite(static_cast<double>(data_[static_cast<std::size_t>(i)])))
        return i;
    return -1;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::int64_t i = 0; i < numel(); ++i)
      out[i] = static_cast<U>(data_[static_cast<std::size_t>(i)]);
    return out;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
void assert_finite(const Tensor<T>& t, const std::string& what) {
  std::int64_t i = t.first_nonfinite();
  if (i >= 0)
    fail(what + ": non-finite value at flat index " + std::to_string(i));
}

// Integer label mask, shape (n, h, w).
struct Mask {
  int n = 0, h = 0, w = 0;
  std::vector<std::int32_t> v;

  Mask() = default;
  Mask(int n_, int h_, int w_, std::int32_t init = 0)
      : n(n_), h(h_), w(w_),
        v(static_cast<std::size_t>(n_) * h_ * w_, init) {}

  std::int64_t numel() const { return static_cast<std::int64_t>(n) * h * w; }
  std::int32_t& at(int b, int y, int x) {
    return v[(static_cast<std::size_t>(b) * h + y) * w + x];
  }
  std::int32_t at(int b, int y, int x) const {
    return v[(static_cast<std::size_t>(b) * h + y) * w + x];
  }

  void check_labels(int num_classes) const {
    for (int b = 0; b < n; ++b)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          std::int32_t l = at(b, y, x);
          if (l < 0 || l >= num_classes)
            fail("mask label " + std::to_string(l) + " out of range [0," +
                 std::to_string(num_classes) + ") at (batch " +
                 std::to_string(b) + ", row " + std::to_string(y) +
                 ", col " + std::to_string(x) + ")");
        }
  }

  bool operator==(const Mask& o) const {
    return n == o.n && h == o.h && w == o.w && v == o.v;
  }
};

}  // namespace aml
