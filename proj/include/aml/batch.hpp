#pragma once

#include "aml/tensor.hpp"

namespace aml {

// One training/eval batch: images in [0,1], integer class masks.
template <typename T>
struct SegBatch {
  Tensor<T> images;  // (n, c, h, w)
  Mask masks;        // (n, h, w)
  int num_classes = 0;

  void validate() const {
    const Shape& s = images.shape();
    check(masks.n == s.n && masks.h == s.h && masks.w == s.w,
          "batch masks do not match images " + s.str());
    masks.check_labels(num_classes);
    for (std::int64_t i = 0; i < images.numel(); ++i)
      check(images[i] >= T(0) && images[i] <= T(1),
            "batch image values must lie in [0,1], offending flat index " +
                std::to_string(i));
  }
};

}  // namespace aml
