#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "aml/data.hpp"

namespace fs = std::filesystem;
using namespace aml;

namespace {

std::string temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("aml_data_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

SynthSpec small_spec() {
  SynthSpec spec;
  spec.image_size = 32;
  spec.num_images = 5;
  spec.seed = 7;
  return spec;
}

void expect_datasets_bitwise_equal(const Dataset<double>& a,
                                   const Dataset<double>& b) {
  ASSERT_EQ(a.size(), b.size());
  ASSERT_EQ(a.num_classes, b.num_classes);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a.images[i].shape(), b.images[i].shape());
    for (std::int64_t p = 0; p < a.images[i].numel(); ++p)
      ASSERT_EQ(a.images[i][p], b.images[i][p]) << "image " << i << " flat " << p;
    ASSERT_EQ(a.masks[i].v, b.masks[i].v) << "mask " << i;
  }
}

std::vector<std::int64_t> class_counts(const Dataset<double>& ds) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(ds.num_classes), 0);
  for (const auto& m : ds.masks)
    for (int v : m.v) ++counts[static_cast<std::size_t>(v)];
  return counts;
}

}  // namespace

TEST(Synth, SameSeedIsBitwiseReproducible) {
  SynthSpec spec = small_spec();
  Dataset<double> a = synth_generate<double>(spec);
  Dataset<double> b = synth_generate<double>(spec);
  ASSERT_EQ(a.size(), 5u);
  expect_datasets_bitwise_equal(a, b);

  spec.seed = 8;
  Dataset<double> c = synth_generate<double>(spec);
  bool any_diff = false;
  for (std::int64_t p = 0; p < a.images[0].numel() && !any_diff; ++p)
    any_diff = a.images[0][p] != c.images[0][p];
  EXPECT_TRUE(any_diff);
}

TEST(Synth, NucleusPixelsAreSurroundedByCell) {
  SynthSpec spec;
  spec.image_size = 48;
  spec.num_images = 6;
  spec.seed = 3;
  Dataset<double> ds = synth_generate<double>(spec);
  std::int64_t nucleus_pixels = 0;
  for (const auto& m : ds.masks)
    for (int y = 0; y < m.h; ++y)
      for (int x = 0; x < m.w; ++x) {
        if (m.at(0, y, x) != 2) continue;
        ++nucleus_pixels;
        // a nucleus pixel never touches background: the nucleus ellipse is
        // strictly inside its cytoplasm, and later paint is cell paint
        const int dy[] = {-1, 1, 0, 0}, dx[] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          int ny = y + dy[k], nx = x + dx[k];
          if (ny < 0 || ny >= m.h || nx < 0 || nx >= m.w) continue;
          int lbl = m.at(0, ny, nx);
          ASSERT_TRUE(lbl == 1 || lbl == 2)
              << "background at (" << ny << "," << nx << ") borders a nucleus";
        }
      }
  EXPECT_GT(nucleus_pixels, 0);
}

TEST(Synth, ClassSharesMatchTheConfiguredGeometry) {
  SynthSpec spec;
  spec.image_size = 64;
  spec.num_images = 16;
  spec.seed = 11;
  Dataset<double> ds = synth_generate<double>(spec);
  auto counts = class_counts(ds);
  double total = 16.0 * 64 * 64;
  double bg = counts[0] / total, cyto = counts[1] / total, nuc = counts[2] / total;
  EXPECT_GT(bg, 0.4);
  EXPECT_GT(cyto, 0.02);
  EXPECT_GT(nuc, 0.005);
  EXPECT_LT(nuc, cyto);
  EXPECT_NEAR(bg + cyto + nuc, 1.0, 1e-12);
}

TEST(Synth, DegenerateNucleusFractionIsRejected) {
  SynthSpec spec = small_spec();
  spec.nucleus_frac = 1.2;
  try {
    synth_generate<double>(spec);
    FAIL() << "expected a validation error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("nucleus"), std::string::npos);
  }
  spec.nucleus_frac = 0.0;
  EXPECT_THROW(synth_generate<double>(spec), std::invalid_argument);
}

TEST(Palette, GrayLevelsMapAHandMadeMask) {
  Palette p = Palette::gray_levels(3);
  ASSERT_EQ(p.classes(), 3);
  EXPECT_EQ(p.colors[0][0], 0);
  EXPECT_EQ(p.colors[1][0], 127);
  EXPECT_EQ(p.colors[2][0], 255);

  const int grid[4][4] = {{0, 1, 2, 0}, {1, 1, 2, 2}, {2, 2, 1, 0}, {0, 0, 0, 1}};
  PngImage img;
  img.width = img.height = 4;
  img.channels = 3;
  img.data.resize(4 * 4 * 3);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = p.colors[static_cast<std::size_t>(grid[y][x])][0];

  Mask m = image_to_mask(img, p, "hand-made");
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) EXPECT_EQ(m.at(0, y, x), grid[y][x]);

  PngImage back = mask_to_image(m, p);
  EXPECT_EQ(back.data, img.data);
}

TEST(Palette, UnknownColorNamesThePixel) {
  Palette p = Palette::gray_levels(2);
  PngImage img;
  img.width = 4;
  img.height = 3;
  img.channels = 3;
  img.data.assign(4 * 3 * 3, 0);
  img.at(1, 2, 0) = 12;
  img.at(1, 2, 1) = 34;
  img.at(1, 2, 2) = 56;
  try {
    image_to_mask(img, p, "weird.png");
    FAIL() << "expected an unknown-color error";
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("(12,34,56)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(row 1, col 2)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("weird.png"), std::string::npos) << msg;
  }
}

TEST(PngIo, RgbRoundTripPreservesBytes) {
  std::string dir = temp_dir("png_rgb");
  PngImage img;
  img.width = 7;
  img.height = 5;
  img.channels = 3;
  img.data.resize(7 * 5 * 3);
  Rng rng(21);
  for (auto& b : img.data) b = static_cast<std::uint8_t>(rng.uniform_int(256));

  std::string path = dir + "/x.png";
  write_png(path, img);
  PngImage back = read_png(path);
  EXPECT_EQ(back.width, 7);
  EXPECT_EQ(back.height, 5);
  EXPECT_EQ(back.channels, 3);
  EXPECT_EQ(back.data, img.data);
}

TEST(PngIo, GrayscaleWritesReadBackAsRgb) {
  std::string dir = temp_dir("png_gray");
  PngImage img;
  img.width = 3;
  img.height = 2;
  img.channels = 1;
  img.data = {0, 60, 120, 180, 240, 255};
  std::string path = dir + "/g.png";
  write_png(path, img);
  PngImage back = read_png(path);
  ASSERT_EQ(back.channels, 3);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 3; ++x) {
      std::uint8_t v = img.at(y, x, 0);
      EXPECT_EQ(back.at(y, x, 0), v);
      EXPECT_EQ(back.at(y, x, 1), v);
      EXPECT_EQ(back.at(y, x, 2), v);
    }
}

TEST(PngIo, TensorQuantizationIsIdempotent) {
  Tensor<double> t(Shape(1, 3, 6, 5));
  Rng rng(4);
  rng.fill_uniform(t, 0.0, 1.0);
  Tensor<double> t2 = image_to_tensor<double>(tensor_to_image(t));
  for (std::int64_t p = 0; p < t.numel(); ++p)
    EXPECT_NEAR(t2[p], t[p], 0.5 / 255.0 + 1e-12);
  Tensor<double> t3 = image_to_tensor<double>(tensor_to_image(t2));
  for (std::int64_t p = 0; p < t.numel(); ++p) ASSERT_EQ(t3[p], t2[p]);
}

TEST(DatasetIo, SaveThenLoadRoundTrips) {
  std::string dir = temp_dir("roundtrip");
  Dataset<double> ds = synth_generate<double>(small_spec());
  Palette p = Palette::gray_levels(3);
  save_dataset(ds, dir, p);

  EXPECT_TRUE(fs::exists(fs::path(dir) / "manifest.txt"));
  EXPECT_TRUE(fs::exists(fs::path(dir) / "images" / "0000.png"));
  EXPECT_TRUE(fs::exists(fs::path(dir) / "masks" / "0004.png"));

  Dataset<double> loaded =
      load_image_mask_dir<double>(dir + "/images", dir + "/masks", p);
  ASSERT_EQ(loaded.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    ASSERT_EQ(loaded.masks[i].v, ds.masks[i].v) << "mask " << i;
    for (std::int64_t q = 0; q < ds.images[i].numel(); ++q)
      ASSERT_NEAR(loaded.images[i][q], ds.images[i][q], 0.5 / 255.0 + 1e-12);
  }

  // once quantized to 8 bits the loop is exact
  std::string dir2 = temp_dir("roundtrip2");
  save_dataset(loaded, dir2, p);
  Dataset<double> again =
      load_image_mask_dir<double>(dir2 + "/images", dir2 + "/masks", p);
  expect_datasets_bitwise_equal(again, loaded);
}

TEST(DatasetIo, ManifestListsEveryPair) {
  std::string dir = temp_dir("manifest");
  Dataset<double> ds = synth_generate<double>(small_spec());
  save_dataset(ds, dir, Palette::gray_levels(3));
  std::ifstream in(fs::path(dir) / "manifest.txt");
  std::string line;
  ASSERT_TRUE(std::getline(in, line));
  EXPECT_EQ(line, "num_classes 3");
  int pairs = 0;
  while (std::getline(in, line)) {
    EXPECT_NE(line.find("images/"), std::string::npos);
    EXPECT_NE(line.find("masks/"), std::string::npos);
    ++pairs;
  }
  EXPECT_EQ(pairs, 5);
}

TEST(DatasetIo, UnpairedStemsAreListedSorted) {
  std::string dir = temp_dir("unpaired");
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "masks");
  PngImage px;
  px.width = px.height = 1;
  px.channels = 3;
  px.data = {0, 0, 0};
  write_png(dir + "/images/a.png", px);
  write_png(dir + "/images/b.png", px);
  write_png(dir + "/masks/b.png", px);
  write_png(dir + "/masks/c.png", px);
  try {
    load_image_mask_dir<double>(dir + "/images", dir + "/masks",
                                Palette::gray_levels(3));
    FAIL() << "expected an unpaired-stem error";
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("unpaired image/mask stems: a, c"), std::string::npos) << msg;
  }
}

TEST(DatasetIo, EmptyDirectoriesGiveAnEmptyDataset) {
  std::string dir = temp_dir("empty");
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "masks");
  Dataset<double> ds = load_image_mask_dir<double>(dir + "/images", dir + "/masks",
                                                   Palette::gray_levels(3));
  EXPECT_EQ(ds.size(), 0u);
  EXPECT_EQ(ds.num_classes, 3);
}

TEST(Resize, ConstantImageStaysConstant) {
  Dataset<double> ds;
  ds.num_classes = 1;
  ds.push(Tensor<double>(Shape(1, 3, 20, 24), 0.37), Mask(1, 20, 24, 0));
  Dataset<double> out = resize_dataset(ds, 32, 17);
  ASSERT_EQ(out.images[0].shape(), Shape(1, 3, 32, 17));
  for (std::int64_t p = 0; p < out.images[0].numel(); ++p)
    ASSERT_NEAR(out.images[0][p], 0.37, 1e-12);
  for (int v : out.masks[0].v) ASSERT_EQ(v, 0);
}

TEST(Resize, MaskLabelsStayInRange) {
  SynthSpec spec = small_spec();
  Dataset<double> ds = synth_generate<double>(spec);
  Dataset<double> out = resize_dataset(ds, 37, 53);
  for (const auto& m : out.masks)
    for (int v : m.v) {
      ASSERT_GE(v, 0);
      ASSERT_LT(v, 3);
    }
}

TEST(Resize, UpDownRoundTripKeepsClassHistogram) {
  SynthSpec spec;
  spec.image_size = 300;
  spec.num_images = 6;
  spec.seed = 5;
  Dataset<double> ds = synth_generate<double>(spec);
  Dataset<double> back = resize_dataset(resize_dataset(ds, 320, 320), 300, 300);
  auto before = class_counts(ds);
  auto after = class_counts(back);
  for (int c = 0; c < 3; ++c) {
    ASSERT_GT(before[static_cast<std::size_t>(c)], 0);
    double rel = std::abs(static_cast<double>(after[static_cast<std::size_t>(c)]) -
                          static_cast<double>(before[static_cast<std::size_t>(c)])) /
                 static_cast<double>(before[static_cast<std::size_t>(c)]);
    EXPECT_LE(rel, 0.05) << "class " << c;
  }
}

TEST(Tiling, SplitsRowMajorAndReassemblesBitwise) {
  SynthSpec spec;
  spec.image_size = 64;
  spec.num_images = 2;
  spec.seed = 9;
  Dataset<double> ds = synth_generate<double>(spec);
  Dataset<double> tiles = tile_dataset(ds, 16);
  ASSERT_EQ(tiles.size(), 2u * 16u);

  // tile 1 of image 0 is the (row 0, col 1) block
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      ASSERT_EQ(tiles.images[1].at(0, 0, y, x), ds.images[0].at(0, 0, y, 16 + x));
      ASSERT_EQ(tiles.masks[1].at(0, y, x), ds.masks[0].at(0, y, 16 + x));
    }

  std::vector<Tensor<double>> img_tiles(tiles.images.begin(),
                                        tiles.images.begin() + 16);
  std::vector<Mask> mask_tiles(tiles.masks.begin(), tiles.masks.begin() + 16);
  Tensor<double> whole = reassemble_tiles(img_tiles, 4, 4);
  Mask whole_mask = reassemble_tile_masks(mask_tiles, 4, 4);
  ASSERT_EQ(whole.shape(), ds.images[0].shape());
  for (std::int64_t p = 0; p < whole.numel(); ++p)
    ASSERT_EQ(whole[p], ds.images[0][p]);
  ASSERT_EQ(whole_mask.v, ds.masks[0].v);
}

TEST(Tiling, FullSizeTileIsIdentity) {
  Dataset<double> ds = synth_generate<double>(small_spec());
  Dataset<double> tiles = tile_dataset(ds, 32);
  ASSERT_EQ(tiles.size(), ds.size());
  expect_datasets_bitwise_equal(tiles, ds);
}

TEST(Tiling, IndivisibleSizeIsRejected) {
  Dataset<double> ds;
  ds.num_classes = 1;
  ds.push(Tensor<double>(Shape(1, 3, 30, 30), 0.5), Mask(1, 30, 30, 0));
  try {
    tile_dataset(ds, 16);
    FAIL() << "expected a divisibility error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("not divisible"), std::string::npos);
  }
}

TEST(Batching, GatherStacksSelectedItems) {
  Dataset<double> ds = synth_generate<double>(small_spec());
  SegBatch<double> b = gather_batch(ds, {3, 1});
  ASSERT_EQ(b.images.shape(), Shape(2, 3, 32, 32));
  ASSERT_EQ(b.masks.n, 2);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      ASSERT_EQ(b.images.at(0, 1, y, x), ds.images[3].at(0, 1, y, x));
      ASSERT_EQ(b.images.at(1, 2, y, x), ds.images[1].at(0, 2, y, x));
      ASSERT_EQ(b.masks.at(0, y, x), ds.masks[3].at(0, y, x));
      ASSERT_EQ(b.masks.at(1, y, x), ds.masks[1].at(0, y, x));
    }
  b.validate();
  EXPECT_THROW(gather_batch(ds, {}), std::invalid_argument);
}
