#pragma once

// Dataset plumbing: a deterministic synthetic cell-image generator, paired
// image/mask directory loading with a color palette, bilinear/nearest
// resizing, non-overlapping tiling with exact reassembly, and batching.

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "aml/batch.hpp"
#include "aml/image_io.hpp"
#include "aml/ops_interp.hpp"
#include "aml/random.hpp"

namespace aml {

template <typename T>
struct Dataset {
  std::vector<Tensor<T>> images;  // each (1,3,H,W), values in [0,1]
  std::vector<Mask> masks;        // each n=1
  int num_classes = 0;

  std::size_t size() const { return images.size(); }

  void push(Tensor<T> img, Mask mask) {
    const Shape& s = img.shape();
    check(mask.n == 1 && s.n == 1 && mask.h == s.h && mask.w == s.w,
          "dataset item mask does not match image " + s.str());
    mask.check_labels(num_classes);
    images.push_back(std::move(img));
    masks.push_back(std::move(mask));
  }
};

// Mask color encoding. class_of does exact matching; -1 means unknown.
struct Palette {
  std::vector<std::array<std::uint8_t, 3>> colors;

  static Palette gray_levels(int k) {
    check(k >= 1, "palette needs at least one class");
    Palette p;
    for (int c = 0; c < k; ++c) {
      std::uint8_t level =
          k == 1 ? 0 : static_cast<std::uint8_t>(255 * c / (k - 1));
      p.colors.push_back({level, level, level});
    }
    return p;
  }

  int classes() const { return static_cast<int>(colors.size()); }

  int class_of(std::uint8_t r, std::uint8_t g, std::uint8_t b) const {
    for (std::size_t c = 0; c < colors.size(); ++c)
      if (colors[c][0] == r && colors[c][1] == g && colors[c][2] == b)
        return static_cast<int>(c);
    return -1;
  }
};

inline PngImage mask_to_image(const Mask& mask, const Palette& palette) {
  check(mask.n == 1, "mask_to_image expects a single mask");
  mask.check_labels(palette.classes());
  PngImage img;
  img.width = mask.w;
  img.height = mask.h;
  img.channels = 3;
  img.data.resize(static_cast<std::size_t>(mask.w) * mask.h * 3);
  for (int y = 0; y < mask.h; ++y)
    for (int x = 0; x < mask.w; ++x) {
      const auto& c = palette.colors[static_cast<std::size_t>(mask.at(0, y, x))];
      for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = c[static_cast<std::size_t>(ch)];
    }
  return img;
}

inline Mask image_to_mask(const PngImage& img, const Palette& palette,
                          const std::string& what) {
  Mask mask(1, img.height, img.width, 0);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      int cls = palette.class_of(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
      if (cls < 0)
        fail("unknown mask color (" + std::to_string(img.at(y, x, 0)) + "," +
             std::to_string(img.at(y, x, 1)) + "," +
             std::to_string(img.at(y, x, 2)) + ") at (row " + std::to_string(y) +
             ", col " + std::to_string(x) + ") in " + what);
      mask.at(0, y, x) = cls;
    }
  return mask;
}

// Synthetic three-class cell images: elliptic cells (cytoplasm with a
// strictly contained nucleus) on a bright background, plus distractor
// blobs that share the cytoplasm's color statistics but are labeled
// background. Geometry is rasterized in integer arithmetic, so a seed
// reproduces the dataset bit for bit.
struct SynthSpec {
  int image_size = 64;
  int num_images = 80;
  int min_cells = 1;
  int max_cells = 3;
  int distractors = 3;
  double nucleus_frac = 0.5;  // nucleus radius as a fraction of the cell's
  double noise = 0.03;
  std::uint64_t seed = 1;

  void validate() const {
    check(image_size >= 16, "synthetic images must be at least 16x16");
    check(num_images >= 1, "need at least one synthetic image");
    check(min_cells >= 1 && max_cells >= min_cells, "bad cell count range");
    check(distractors >= 0, "distractor count must be >= 0");
    check(nucleus_frac > 0.0 && nucleus_frac < 1.0,
          "nucleus must be strictly smaller than its cytoplasm ellipse "
          "(nucleus_frac in (0,1), got " +
              std::to_string(nucleus_frac) + ")");
    check(noise >= 0.0 && noise <= 0.2, "noise amplitude out of range [0,0.2]");
  }
};

namespace detail {

// Integer ellipse membership: (x-cx)^2 ry^2 + (y-cy)^2 rx^2 <= rx^2 ry^2.
inline bool in_ellipse(int x, int y, int cx, int cy, int rx, int ry) {
  std::int64_t dx = x - cx, dy = y - cy;
  std::int64_t rx2 = static_cast<std::int64_t>(rx) * rx;
  std::int64_t ry2 = static_cast<std::int64_t>(ry) * ry;
  return dx * dx * ry2 + dy * dy * rx2 <= rx2 * ry2;
}

template <typename T>
void paint_ellipse(Tensor<T>& img, Mask& mask, int cx, int cy, int rx, int ry,
                   const std::array<double, 3>& color, int label) {
  const Shape& s = img.shape();
  for (int y = std::max(0, cy - ry); y <= std::min(s.h - 1, cy + ry); ++y)
    for (int x = std::max(0, cx - rx); x <= std::min(s.w - 1, cx + rx); ++x)
      if (in_ellipse(x, y, cx, cy, rx, ry)) {
        for (int c = 0; c < 3; ++c)
          img.at(0, c, y, x) = static_cast<T>(color[static_cast<std::size_t>(c)]);
        if (label >= 0) mask.at(0, y, x) = label;
      }
}

}  // namespace detail

template <typename T>
Dataset<T> synth_generate(const SynthSpec& spec) {
  spec.validate();
  const int S = spec.image_size;
  const std::array<double, 3> bg = {0.88, 0.87, 0.82};
  const std::array<double, 3> cyto = {0.55, 0.65, 0.80};
  const std::array<double, 3> nucleus = {0.30, 0.22, 0.45};

  Rng rng(spec.seed);
  Dataset<T> ds;
  ds.num_classes = 3;
  for (int i = 0; i < spec.num_images; ++i) {
    Tensor<T> img(Shape(1, 3, S, S));
    Mask mask(1, S, S, 0);
    for (int c = 0; c < 3; ++c)
      for (std::int64_t p = 0; p < static_cast<std::int64_t>(S) * S; ++p)
        img.data()[c * S * S + p] = static_cast<T>(bg[static_cast<std::size_t>(c)]);

    auto jittered = [&](const std::array<double, 3>& base) {
      std::array<double, 3> out;
      for (int c = 0; c < 3; ++c)
        out[static_cast<std::size_t>(c)] =
            base[static_cast<std::size_t>(c)] + rng.uniform(-0.05, 0.05);
      return out;
    };
    auto place = [&](int rmin, int rmax) {
      int rx = rmin + static_cast<int>(rng.uniform_int(rmax - rmin + 1));
      int ry = rmin + static_cast<int>(rng.uniform_int(rmax - rmin + 1));
      int cx = rx + static_cast<int>(rng.uniform_int(std::max<std::int64_t>(1, S - 2 * rx)));
      int cy = ry + static_cast<int>(rng.uniform_int(std::max<std::int64_t>(1, S - 2 * ry)));
      return std::array<int, 4>{cx, cy, rx, ry};
    };

    // distractors first, then cells; later paint wins, so cell labels are
    // exactly consistent with the rendered geometry
    for (int b = 0; b < spec.distractors; ++b) {
      auto [cx, cy, rx, ry] = place(std::max(2, S / 16), std::max(3, S / 10));
      detail::paint_ellipse(img, mask, cx, cy, rx, ry, jittered(cyto), 0);
    }
    int cells = spec.min_cells +
                static_cast<int>(rng.uniform_int(spec.max_cells - spec.min_cells + 1));
    for (int b = 0; b < cells; ++b) {
      auto [cx, cy, rx, ry] = place(std::max(3, S / 8), std::max(4, S / 5));
      detail::paint_ellipse(img, mask, cx, cy, rx, ry, jittered(cyto), 1);
      int nrx = std::max(1, static_cast<int>(rx * spec.nucleus_frac));
      int nry = std::max(1, static_cast<int>(ry * spec.nucleus_frac));
      check(nrx < rx && nry < ry,
            "degenerate cell geometry: nucleus does not fit inside cytoplasm");
      detail::paint_ellipse(img, mask, cx, cy, nrx, nry, jittered(nucleus), 2);
    }

    for (std::int64_t p = 0; p < img.numel(); ++p) {
      double v = static_cast<double>(img[p]) + rng.uniform(-spec.noise, spec.noise);
      img[p] = static_cast<T>(std::min(1.0, std::max(0.0, v)));
    }
    ds.push(std::move(img), std::move(mask));
  }
  return ds;
}

// Loads image/mask pairs matched by file stem, ordered lexicographically.
template <typename T>
Dataset<T> load_image_mask_dir(const std::string& images_dir,
                               const std::string& masks_dir,
                               const Palette& palette) {
  namespace fs = std::filesystem;
  check(fs::is_directory(images_dir), "not a directory: " + images_dir);
  check(fs::is_directory(masks_dir), "not a directory: " + masks_dir);

  std::vector<std::string> stems;
  for (const auto& e : fs::directory_iterator(images_dir))
    if (e.is_regular_file() && e.path().extension() == ".png")
      stems.push_back(e.path().stem().string());
  std::sort(stems.begin(), stems.end());

  std::vector<std::string> missing;
  for (const auto& s : stems)
    if (!fs::exists(fs::path(masks_dir) / (s + ".png"))) missing.push_back(s);
  for (const auto& e : fs::directory_iterator(masks_dir))
    if (e.is_regular_file() && e.path().extension() == ".png" &&
        !fs::exists(fs::path(images_dir) / e.path().filename()))
      missing.push_back(e.path().stem().string());
  if (!missing.empty()) {
    std::sort(missing.begin(), missing.end());
    std::string list;
    for (const auto& s : missing) list += (list.empty() ? "" : ", ") + s;
    fail("unpaired image/mask stems: " + list);
  }

  Dataset<T> ds;
  ds.num_classes = palette.classes();
  for (const auto& s : stems) {
    PngImage img = read_png((fs::path(images_dir) / (s + ".png")).string());
    PngImage mimg = read_png((fs::path(masks_dir) / (s + ".png")).string());
    ds.push(image_to_tensor<T>(img), image_to_mask(mimg, palette, s + ".png"));
  }
  return ds;
}

template <typename T>
void save_dataset(const Dataset<T>& ds, const std::string& dir,
                  const Palette& palette) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "masks");
  std::ofstream manifest(fs::path(dir) / "manifest.txt");
  check(static_cast<bool>(manifest), "cannot write manifest in " + dir);
  manifest << "num_classes " << ds.num_classes << "\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::ostringstream name;
    name << std::setw(4) << std::setfill('0') << i << ".png";
    write_png((fs::path(dir) / "images" / name.str()).string(),
              tensor_to_image(ds.images[i]));
    write_png((fs::path(dir) / "masks" / name.str()).string(),
              mask_to_image(ds.masks[i], palette));
    manifest << "images/" << name.str() << " masks/" << name.str() << "\n";
  }
}

inline Mask nearest_resize_mask(const Mask& mask, int out_h, int out_w) {
  check(out_h >= 1 && out_w >= 1, "mask resize target must be positive");
  Mask out(mask.n, out_h, out_w, 0);
  for (int n = 0; n < mask.n; ++n)
    for (int y = 0; y < out_h; ++y) {
      int sy = std::min(mask.h - 1,
                        static_cast<int>((y + 0.5) * mask.h / out_h));
      for (int x = 0; x < out_w; ++x) {
        int sx = std::min(mask.w - 1,
                          static_cast<int>((x + 0.5) * mask.w / out_w));
        out.at(n, y, x) = mask.at(n, sy, sx);
      }
    }
  return out;
}

// Images bilinear, masks nearest-neighbor (labels must stay integral).
template <typename T>
Dataset<T> resize_dataset(const Dataset<T>& ds, int out_h, int out_w) {
  Dataset<T> out;
  out.num_classes = ds.num_classes;
  for (std::size_t i = 0; i < ds.size(); ++i)
    out.push(bilinear_resize(ds.images[i], out_h, out_w),
             nearest_resize_mask(ds.masks[i], out_h, out_w));
  return out;
}

// Splits every item into non-overlapping tile x tile squares, row-major.
template <typename T>
Dataset<T> tile_dataset(const Dataset<T>& ds, int tile) {
  check(tile >= 1, "tile size must be positive");
  Dataset<T> out;
  out.num_classes = ds.num_classes;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Shape& s = ds.images[i].shape();
    check(s.h % tile == 0 && s.w % tile == 0,
          "image " + std::to_string(i) + " size " + s.str() +
              " is not divisible into " + std::to_string(tile) + "x" +
              std::to_string(tile) + " tiles");
    for (int ty = 0; ty < s.h / tile; ++ty)
      for (int tx = 0; tx < s.w / tile; ++tx) {
        Tensor<T> timg(Shape(1, s.c, tile, tile));
        Mask tmask(1, tile, tile, 0);
        for (int c = 0; c < s.c; ++c)
          for (int y = 0; y < tile; ++y)
            for (int x = 0; x < tile; ++x)
              timg.at(0, c, y, x) = ds.images[i].at(0, c, ty * tile + y, tx * tile + x);
        for (int y = 0; y < tile; ++y)
          for (int x = 0; x < tile; ++x)
            tmask.at(0, y, x) = ds.masks[i].at(0, ty * tile + y, tx * tile + x);
        out.push(std::move(timg), std::move(tmask));
      }
  }
  return out;
}

// Inverse of tile_dataset for one source image given its tile grid.
template <typename T>
Tensor<T> reassemble_tiles(const std::vector<Tensor<T>>& tiles, int rows, int cols) {
  check(!tiles.empty() && static_cast<int>(tiles.size()) == rows * cols,
        "tile count does not match the requested grid");
  const Shape& ts = tiles[0].shape();
  Tensor<T> out(Shape(1, ts.c, rows * ts.h, cols * ts.w));
  for (int ty = 0; ty < rows; ++ty)
    for (int tx = 0; tx < cols; ++tx) {
      const Tensor<T>& t = tiles[static_cast<std::size_t>(ty * cols + tx)];
      check(t.shape() == ts, "tiles must all share one shape");
      for (int c = 0; c < ts.c; ++c)
        for (int y = 0; y < ts.h; ++y)
          for (int x = 0; x < ts.w; ++x)
            out.at(0, c, ty * ts.h + y, tx * ts.w + x) = t.at(0, c, y, x);
    }
  return out;
}

inline Mask reassemble_tile_masks(const std::vector<Mask>& tiles, int rows, int cols) {
  check(!tiles.empty() && static_cast<int>(tiles.size()) == rows * cols,
        "tile count does not match the requested grid");
  const int th = tiles[0].h, tw = tiles[0].w;
  Mask out(1, rows * th, cols * tw, 0);
  for (int ty = 0; ty < rows; ++ty)
    for (int tx = 0; tx < cols; ++tx) {
      const Mask& t = tiles[static_cast<std::size_t>(ty * cols + tx)];
      check(t.h == th && t.w == tw && t.n == 1, "tiles must all share one shape");
      for (int y = 0; y < th; ++y)
        for (int x = 0; x < tw; ++x) out.at(0, ty * th + y, tx * tw + x) = t.at(0, y, x);
    }
  return out;
}

// Stacks the given items (all one resolution) into a batch.
template <typename T>
SegBatch<T> gather_batch(const Dataset<T>& ds, const std::vector<int>& idx) {
  check(!idx.empty(), "cannot build an empty batch");
  const Shape& s0 = ds.images[static_cast<std::size_t>(idx[0])].shape();
  SegBatch<T> b;
  b.num_classes = ds.num_classes;
  b.images = Tensor<T>(Shape(static_cast<int>(idx.size()), s0.c, s0.h, s0.w));
  b.masks = Mask(static_cast<int>(idx.size()), s0.h, s0.w, 0);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const Tensor<T>& img = ds.images[static_cast<std::size_t>(idx[i])];
    const Mask& m = ds.masks[static_cast<std::size_t>(idx[i])];
    check(img.shape() == s0, "batch items must share one resolution");
    std::copy(img.data(), img.data() + img.numel(), b.images.batch_ptr(static_cast<int>(i)));
    std::copy(m.v.begin(), m.v.end(),
              b.masks.v.begin() + static_cast<std::int64_t>(i) * s0.h * s0.w);
  }
  return b;
}

}  // namespace aml
