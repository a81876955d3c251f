#pragma once

// Per-class IoU / precision / recall from an integer confusion matrix.

#include <optional>

#include "aml/tensor.hpp"

namespace aml {

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes)
      : k_(num_classes),
        counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
    check(num_classes >= 1, "confusion matrix needs at least one class");
  }

  void accumulate(const Mask& pred, const Mask& gt) {
    check(pred.n == gt.n && pred.h == gt.h && pred.w == gt.w,
          "prediction/ground-truth size mismatch");
    pred.check_labels(k_);
    gt.check_labels(k_);
    for (std::size_t i = 0; i < gt.v.size(); ++i)
      ++counts_[static_cast<std::size_t>(gt.v[i]) * k_ + pred.v[i]];
  }

  void merge(const ConfusionMatrix& o) {
    check(o.k_ == k_, "cannot merge confusion matrices of different sizes");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
  }

  std::int64_t count(int gt, int pred) const {
    return counts_[static_cast<std::size_t>(gt) * k_ + pred];
  }
  std::int64_t total() const {
    std::int64_t s = 0;
    for (auto c : counts_) s += c;
    return s;
  }
  int num_classes() const { return k_; }

  std::int64_t tp(int c) const { return count(c, c); }
  std::int64_t fp(int c) const {
    std::int64_t s = 0;
    for (int g = 0; g < k_; ++g)
      if (g != c) s += count(g, c);
    return s;
  }
  std::int64_t fn(int c) const {
    std::int64_t s = 0;
    for (int p = 0; p < k_; ++p)
      if (p != c) s += count(c, p);
    return s;
  }

  // Absent classes (no pixels in truth or prediction) are excluded from the
  // mean rather than scored.
  bool present(int c) const { return tp(c) + fp(c) + fn(c) > 0; }

  double iou(int c) const {
    std::int64_t denom = tp(c) + fp(c) + fn(c);
    if (denom == 0) return 1.0;
    return static_cast<double>(tp(c)) / static_cast<double>(denom);
  }
  std::optional<double> precision(int c) const {
    std::int64_t denom = tp(c) + fp(c);
    if (denom == 0) return std::nullopt;
    return static_cast<double>(tp(c)) / static_cast<double>(denom);
  }
  std::optional<double> recall(int c) const {
    std::int64_t denom = tp(c) + fn(c);
    if (denom == 0) return std::nullopt;
    return static_cast<double>(tp(c)) / static_cast<double>(denom);
  }

  double mean_iou() const {
    double acc = 0;
    int n = 0;
    for (int c = 0; c < k_; ++c)
      if (present(c)) {
        acc += iou(c);
        ++n;
      }
    return n ? acc / n : 1.0;
  }

  double pixel_accuracy() const {
    std::int64_t diag = 0;
    for (int c = 0; c < k_; ++c) diag += tp(c);
    std::int64_t all = total();
    return all ? static_cast<double>(diag) / static_cast<double>(all) : 1.0;
  }

 private:
  int k_;
  std::vector<std::int64_t> counts_;
};

// Highest-scoring class per pixel; ties go to the lowest class index.
template <typename T>
Mask argmax_mask(const Tensor<T>& logits) {
  const Shape& s = logits.shape();
  Mask m(s.n, s.h, s.w);
  const std::int64_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    const T* p = logits.batch_ptr(n);
    for (std::int64_t i = 0; i < plane; ++i) {
      int best = 0;
      for (int c = 1; c < s.c; ++c)
        if (p[c * plane + i] > p[best * plane + i]) best = c;
      m.v[static_cast<std::size_t>(n * plane + i)] =
          static_cast<std::int32_t>(best);
    }
  }
  return m;
}

}  // namespace aml
