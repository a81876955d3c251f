#pragma once

// Attention inspection: renders one grayscale heatmap per encoder attention
// site for a chosen reference pixel (its attention row over all positions)
// and one grayscale difficulty map per decoder head. Rows are renormalized
// to span [0,1] for display; raw values are available on the trace.

#include "aml/aml_net.hpp"
#include "aml/image_io.hpp"

namespace aml {

template <typename T>
struct Heatmap {
  int site = 0;          // encoder site or decoder stage
  Tensor<T> map;         // (1,1,h,w) in [0,1]
};

// Extracts the attention row of the reference pixel at each site and
// reshapes it to that site's grid. (row, col) are full-resolution
// coordinates; each site sees them at 1/2^site scale.
template <typename T>
std::vector<Heatmap<T>> attention_heatmaps(const GeneratorTrace<T>& trace,
                                           int img_h, int img_w, int row,
                                           int col) {
  check(row >= 0 && row < img_h && col >= 0 && col < img_w,
        "reference pixel (" + std::to_string(row) + ", " + std::to_string(col) +
            ") outside the " + std::to_string(img_h) + "x" +
            std::to_string(img_w) + " image");
  std::vector<Heatmap<T>> out;
  for (const auto& [site, w] : trace.attention) {
    const Shape& s = w.shape();  // (n,1,P,P)
    int sh = img_h, sw = img_w;
    for (int i = 0; i < site; ++i) {
      sh = (sh + 1) / 2;
      sw = (sw + 1) / 2;
    }
    check(static_cast<std::int64_t>(sh) * sw == s.h,
          "attention matrix size does not match site grid");
    int ry = std::min(row >> site, sh - 1);
    int rx = std::min(col >> site, sw - 1);
    int r = ry * sw + rx;
    Tensor<T> m(Shape(1, 1, sh, sw));
    T hi = T(0);
    for (int p = 0; p < s.w; ++p) {
      T v = w.at(0, 0, r, p);
      m[p] = v;
      hi = std::max(hi, v);
    }
    if (hi > T(0))
      for (std::int64_t i = 0; i < m.numel(); ++i) m[i] = m[i] / hi;
    out.push_back({site, std::move(m)});
  }
  return out;
}

// Difficulty maps are already in [0,1]; one per decoder head, tagged with
// the head's downsampling factor.
template <typename T>
std::vector<Heatmap<T>> difficulty_heatmaps(const GeneratorTrace<T>& trace) {
  std::vector<Heatmap<T>> out;
  for (std::size_t i = 0; i < trace.pda.size(); ++i) {
    const Tensor<T>& a = trace.pda[i].attn->value;
    const Shape& s = a.shape();
    Tensor<T> m(Shape(1, 1, s.h, s.w));
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) m.at(0, 0, y, x) = a.at(0, 0, y, x);
    out.push_back({trace.pda_factors[i], std::move(m)});
  }
  return out;
}

// Upsamples to the full image grid (nearest, to keep the cell structure
// visible) and writes an 8-bit grayscale PNG.
template <typename T>
void write_heatmap_png(const std::string& path, const Tensor<T>& map, int img_h,
                       int img_w) {
  const Shape& s = map.shape();
  PngImage img;
  img.width = img_w;
  img.height = img_h;
  img.channels = 1;
  img.data.resize(static_cast<std::size_t>(img_w) * img_h);
  for (int y = 0; y < img_h; ++y) {
    int sy = std::min(s.h - 1, y * s.h / img_h);
    for (int x = 0; x < img_w; ++x) {
      int sx = std::min(s.w - 1, x * s.w / img_w);
      double v = static_cast<double>(map.at(0, 0, sy, sx));
      v = std::min(1.0, std::max(0.0, v));
      img.data[static_cast<std::size_t>(y) * img_w + x] =
          static_cast<std::uint8_t>(v * 255.0 + 0.5);
    }
  }
  write_png(path, img);
}

}  // namespace aml
