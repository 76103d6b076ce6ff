#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "infocluster/dataset.hpp"
#include "infocluster/preprocess.hpp"
#include "test_util.hpp"

using namespace infocluster;

namespace {

ImageRecord tiny(int h, int w, float fill, int label) {
  ImageRecord rec;
  rec.id = "t";
  rec.pixels = Image(h, w, fill);
  rec.seg = SegmentationMap(h, w, label, {kBuildingClass});
  return rec;
}

}  // namespace

TEST(Mask, SinglePixelExample) {
  auto rec = tiny(2, 2, 0.9f, kSkyClass);
  rec.seg->at(0, 0) = kBuildingClass;
  for (int c = 0; c < 3; ++c) rec.pixels.at(0, 0, c) = 0.5f;
  const auto out = mask(rec);
  EXPECT_EQ(out.stage, Stage::M);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(out.pixels.at(0, 0, c), 0.5f);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x)
      if (y || x)
        for (int c = 0; c < 3; ++c) EXPECT_EQ(out.pixels.at(y, x, c), 0.0f);
  EXPECT_EQ(out.seg, rec.seg);
}

TEST(Mask, AllBuildingIsIdentity) {
  std::mt19937_64 rng(2);
  const auto rec = testutil::random_record(rng, 6, 9, 1.0);
  EXPECT_EQ(mask(rec).pixels, rec.pixels);
}

TEST(Mask, NoBuildingPixelsRaises) {
  try {
    mask(tiny(3, 3, 0.5f, kSkyClass));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoBuildingPixels);
  }
}

TEST(Mask, MissingSegmentationRaises) {
  ImageRecord rec;
  rec.pixels = Image(2, 2);
  try {
    mask(rec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingSegmentation);
  }
}

TEST(Mask, CarriesTruth) {
  const auto recs = generate_synthetic({3, {{"color_system", 3}}, {16, 32}, 1});
  for (const auto& r : recs) EXPECT_EQ(mask(r).truth, r.truth);
}

TEST(Interpolate, TwoPointMean) {
  auto rec = tiny(1, 4, 0.9f, kSkyClass);
  rec.seg->at(0, 0) = rec.seg->at(0, 2) = kBuildingClass;
  rec.pixels.at(0, 0, 0) = 0.2f;
  rec.pixels.at(0, 2, 0) = 0.4f;
  const auto out = interpolate(rec);
  EXPECT_EQ(out.stage, Stage::I);
  EXPECT_NEAR(out.pixels.at(0, 1, 0), 0.3f, 1e-7);
  EXPECT_NEAR(out.pixels.at(0, 3, 0), 0.3f, 1e-7);
  EXPECT_EQ(out.pixels.at(0, 0, 0), 0.2f);
  EXPECT_EQ(out.pixels.at(0, 2, 0), 0.4f);
}

TEST(Interpolate, AllBuildingIsIdentity) {
  std::mt19937_64 rng(3);
  const auto rec = testutil::random_record(rng, 5, 5, 1.0);
  EXPECT_EQ(interpolate(rec).pixels, rec.pixels);
}

TEST(Interpolate, NoBuildingPixelsRaises) {
  EXPECT_THROW(interpolate(tiny(3, 3, 0.5f, kRoadClass)), Error);
}

TEST(PreprocessProperties, RandomRecords) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const int h = 1 + static_cast<int>(rng() % 12), w = 1 + static_cast<int>(rng() % 12);
    auto rec = testutil::random_record(rng, h, w, 0.3);
    rec.seg->labels[rng() % rec.seg->labels.size()] = kBuildingClass;
    const auto m = mask(rec);
    EXPECT_EQ(mask(m).pixels, m.pixels);
    const auto in = interpolate(rec);
    const auto mean = building_mean(rec);
    for (size_t i = 0; i < rec.pixels.pixel_count(); ++i)
      for (int c = 0; c < 3; ++c) {
        const float v = in.pixels.data()[i * 3 + c];
        if (rec.seg->is_building(i))
          EXPECT_EQ(v, rec.pixels.data()[i * 3 + c]);
        else
          EXPECT_NEAR(v, mean[c], 1e-6);
      }
    EXPECT_TRUE(m.pixels.finite_in_unit_range());
    EXPECT_TRUE(in.pixels.finite_in_unit_range());
  }
}

TEST(Resize, OwnSizeIsIdentity) {
  std::mt19937_64 rng(5);
  const auto rec = testutil::random_record(rng, 7, 11, 0.5);
  EXPECT_EQ(resize_bilinear(rec.pixels, rec.pixels.size()), rec.pixels);
}

TEST(Resize, ConstantStaysConstant) {
  const Image img(5, 9, 0.37f);
  const auto out = resize_bilinear(img, {13, 4});
  EXPECT_EQ(out.size(), (Size2{13, 4}));
  for (float v : out.data()) EXPECT_NEAR(v, 0.37f, 1e-6);
}

TEST(Resize, CheckerboardToOnePixel) {
  Image img(2, 2);
  for (int c = 0; c < 3; ++c) img.at(0, 1, c) = img.at(1, 0, c) = 1.0f;
  const auto out = resize_bilinear(img, {1, 1});
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(out.at(0, 0, c), 0.5f, 1e-7);
}

TEST(Resize, UpsamplingStaysInRange) {
  std::mt19937_64 rng(6);
  const auto rec = testutil::random_record(rng, 3, 5, 0.5);
  EXPECT_TRUE(resize_bilinear(rec.pixels, {32, 64}).finite_in_unit_range());
}

TEST(Resize, UniformKeepsLabelsInSync) {
  std::mt19937_64 rng(7);
  const auto rec = testutil::random_record(rng, 8, 8, 0.5);
  const auto out = resize_uniform(rec, {16, 16});
  EXPECT_EQ(out.seg->height, 16);
  EXPECT_EQ(out.seg->width, 16);
  // Nearest-neighbour doubling repeats every label in a 2×2 block.
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) EXPECT_EQ(out.seg->at(y, x), rec.seg->at(y / 2, x / 2));
}

TEST(FactorizeEven, Examples) {
  EXPECT_EQ(factorize_even(8), (GridSpec{2, 4, 8, 0}));
  EXPECT_EQ(factorize_even(1), (GridSpec{1, 1, 1, 0}));
  EXPECT_EQ(factorize_even(7), (GridSpec{2, 4, 7, 1}));
}

TEST(FactorizeEven, SweepInvariants) {
  for (int n = 1; n <= 1000000; ++n) {
    const auto g = factorize_even(n);
    ASSERT_GE(g.width, 1);
    ASSERT_GE(g.height, 1);
    ASSERT_GE(g.cells(), n);
    ASSERT_EQ(g.pad_cells, g.cells() - n);
    const double ratio = static_cast<double>(g.height) / g.width;
    ASSERT_GE(ratio, 1.0) << n;
    ASSERT_LE(ratio, 4.0) << n;
  }
}

TEST(FactorizeEven, RejectsZero) { EXPECT_THROW(factorize_even(0), Error); }

TEST(RasterFairy, FullBlockIsCopiedUnchanged) {
  // 8 building pixels arranged as 4 rows × 2 columns: exactly the 2×4 grid.
  auto rec = tiny(6, 5, 0.1f, kSkyClass);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<float> u(0, 1);
  for (int y = 1; y < 5; ++y)
    for (int x = 2; x < 4; ++x) {
      rec.seg->at(y, x) = kBuildingClass;
      for (int c = 0; c < 3; ++c) rec.pixels.at(y, x, c) = u(rng);
    }
  const auto g = raster_fairy_grid(rec);
  EXPECT_EQ(g.grid, (GridSpec{2, 4, 8, 0}));
  EXPECT_NEAR(g.assignment.cost, 0.0, 1e-12);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 2; ++x)
      for (int c = 0; c < 3; ++c) EXPECT_EQ(g.image.at(y, x, c), rec.pixels.at(y + 1, x + 2, c));
}

TEST(RasterFairy, ConstantColorFillsEveryCell) {
  auto rec = tiny(5, 5, 0.0f, kSkyClass);
  const std::array<float, 3> color{0.25f, 0.5f, 0.75f};
  for (int i : {0, 3, 7, 12, 13, 21, 24}) {  // 7 points: one pad cell
    rec.seg->labels[i] = kBuildingClass;
    for (int c = 0; c < 3; ++c) rec.pixels.data()[i * 3 + c] = color[c];
  }
  const auto g = raster_fairy_grid(rec);
  EXPECT_EQ(g.grid.pad_cells, 1);
  for (size_t p = 0; p < g.image.pixel_count(); ++p)
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(g.image.data()[p * 3 + c], color[c], 1e-7);
  const auto out = raster_fairy(rec, {8, 16});
  EXPECT_EQ(out.stage, Stage::R);
  EXPECT_EQ(out.pixels.size(), (Size2{8, 16}));
  for (size_t p = 0; p < out.pixels.pixel_count(); ++p)
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(out.pixels.data()[p * 3 + c], color[c], 1e-6);
}

TEST(RasterFairy, EveryBuildingPixelLandsInADistinctCell) {
  std::mt19937_64 rng(9);
  const auto rec = testutil::random_record(rng, 12, 20, 0.4);
  const auto g = raster_fairy_grid(rec);
  std::vector<int> seen(g.grid.cells(), 0);
  for (int cell : g.assignment.mapping) seen.at(cell)++;
  int used = 0;
  for (int s : seen) {
    EXPECT_LE(s, 1);
    used += s;
  }
  EXPECT_EQ(used, g.grid.n_points);
  EXPECT_EQ(static_cast<size_t>(g.grid.n_points), rec.seg->building_count());
}

TEST(RasterFairy, NoBuildingPixelsRaises) {
  EXPECT_THROW(raster_fairy(tiny(4, 4, 0.5f, kSkyClass)), Error);
}

TEST(ApplyMode, DispatchesAndResizes) {
  const auto recs = generate_synthetic({2, {{"color_system", 2}}, {32, 64}, 3});
  for (auto mode : {PreprocessMode::Mask, PreprocessMode::Interp, PreprocessMode::RasterFairy}) {
    const auto out = apply_mode(recs[0], mode, {16, 32});
    EXPECT_EQ(out.pixels.size(), (Size2{16, 32}));
    EXPECT_NO_THROW(validate(out));
    // Pure functions: a second call is bit-identical.
    EXPECT_EQ(apply_mode(recs[0], mode, {16, 32}), out);
  }
  EXPECT_EQ(apply_mode(recs[0], PreprocessMode::Mask, {16, 32}).stage, Stage::M);
  EXPECT_EQ(apply_mode(recs[0], PreprocessMode::Interp, {16, 32}).stage, Stage::I);
  EXPECT_EQ(apply_mode(recs[0], PreprocessMode::RasterFairy, {16, 32}).stage, Stage::R);
}

TEST(ApplyMode, ModeNames) {
  EXPECT_EQ(parse_mode("mask"), PreprocessMode::Mask);
  EXPECT_EQ(parse_mode("interp"), PreprocessMode::Interp);
  EXPECT_EQ(parse_mode("rf"), PreprocessMode::RasterFairy);
  EXPECT_THROW(parse_mode("blur"), Error);
}
