#include <gtest/gtest.h>

#include <random>

#include "panodiff/refine.hpp"

using namespace panodiff;
using namespace panodiff::refine;

namespace {

Image random_image(int h, int w, int c, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  Image img(h, w, c);
  for (auto& v : img.values()) v = u(rng);
  return img;
}

}  // namespace

TEST(Upscale, ConstantIsFixedPoint) {
  for (auto kind : {Interpolation::kBilinear, Interpolation::kBicubic}) {
    const Image out = upscale(Image(4, 8, 3, 0.25f), {2, kind});
    EXPECT_EQ(out.height(), 8);
    EXPECT_EQ(out.width(), 16);
    for (float v : out.values()) EXPECT_NEAR(v, 0.25f, 1e-6f);
  }
}

TEST(Upscale, OutputShape) {
  const Image out = upscale(Image(256, 512, 3, 0.0f));
  EXPECT_EQ(out.height(), 512);
  EXPECT_EQ(out.width(), 1024);
  EXPECT_EQ(out.channels(), 3);
}

TEST(Upscale, SeamColumnUsesWrappedNeighbours) {
  // Bilinear with half-pixel centres: output column 0 sits at source x = -0.25,
  // i.e. 0.25 * in[W-1] + 0.75 * in[0]; output column 2W-1 mirrors it.
  Image in(1, 4, 1);
  in.at(0, 0) = 0.8f;
  in.at(0, 1) = -0.2f;
  in.at(0, 2) = 0.1f;
  in.at(0, 3) = -0.6f;
  const Image out = upscale(in);
  EXPECT_NEAR(out.at(0, 0), 0.25f * -0.6f + 0.75f * 0.8f, 1e-6f);
  EXPECT_NEAR(out.at(0, 7), 0.75f * -0.6f + 0.25f * 0.8f, 1e-6f);
  EXPECT_NEAR(out.at(0, 1), 0.75f * 0.8f + 0.25f * -0.2f, 1e-6f);
}

TEST(Upscale, BicubicSeamTapsWrap) {
  // Keys kernel (a = -0.5): source x = -0.25, taps -2, -1, 0, 1 sit at distances 1.75, 0.75, 0.25, 1.25.
  auto keys = [](double x) {
    x = std::abs(x);
    const double a = -0.5;
    if (x <= 1) return (a + 2) * x * x * x - (a + 3) * x * x + 1;
    if (x < 2) return a * x * x * x - 5 * a * x * x + 8 * a * x - 4 * a;
    return 0.0;
  };
  const Image in = random_image(1, 6, 1, 2);
  const Image out = upscale(in, {2, Interpolation::kBicubic});
  const double expected = keys(1.75) * in.at(0, 4) + keys(0.75) * in.at(0, 5) + keys(0.25) * in.at(0, 0) +
                          keys(1.25) * in.at(0, 1);
  EXPECT_NEAR(out.at(0, 0), std::clamp(expected, -1.0, 1.0), 1e-5);
}

TEST(Upscale, CommutesWithCircularShift) {
  for (auto kind : {Interpolation::kBilinear, Interpolation::kBicubic}) {
    const Image x = random_image(6, 12, 3, 9);
    for (int k : {1, 5, -3, 11}) {
      EXPECT_EQ(upscale(circular_shift(x, k), {2, kind}), circular_shift(upscale(x, {2, kind}), 2 * k));
    }
  }
}

TEST(Upscale, ClampsAndValidates) {
  const Image x = random_image(4, 8, 1, 4);
  const Image up = upscale(x, {2, Interpolation::kBicubic});
  for (float v : up.values()) {
    EXPECT_GE(v, -1.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_THROW(upscale(x, {3, Interpolation::kBilinear}), InvalidArgument);
}

TEST(Upscale, PanoramaDepthStaysNonNegative) {
  Panorama pano{random_image(4, 8, 3, 1), Image(4, 8, 1, 0.0f)};
  pano.depth.at(1, 1) = 5.0f;
  const Panorama up = upscale(pano, Interpolation::kBicubic);
  EXPECT_EQ(up.depth.height(), 8);
  for (float v : up.depth.values()) EXPECT_GE(v, 0.0f);
  for (float v : up.rgb.values()) EXPECT_LE(std::abs(v), 1.0f);
}
