#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <set>

#include "panodiff/image_io.hpp"
#include "panodiff/pano.hpp"

using namespace panodiff;

namespace {

Grid<int> numbered_grid(int h, int w, int c) {
  Grid<int> g(h, w, c);
  int next = 0;
  for (auto& v : g.values()) v = next++;
  return g;
}

std::set<int> visible_columns_in_row(const Mask& mask, int row) {
  std::set<int> cols;
  for (int c = 0; c < mask.width(); ++c) {
    if (mask.visible(row, c)) cols.insert(c);
  }
  return cols;
}

}  // namespace

TEST(CircularShift, IdentityAndFullTurn) {
  const auto x = numbered_grid(4, 8, 3);
  EXPECT_EQ(circular_shift(x, 0), x);
  EXPECT_EQ(circular_shift(x, 8), x);
  EXPECT_EQ(circular_shift(x, -16), x);
}

TEST(CircularShift, MatchesIndexArithmetic) {
  const auto x = numbered_grid(4, 8, 2);
  const auto y = circular_shift(x, 3);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 8; ++c) {
      for (int ch = 0; ch < 2; ++ch) EXPECT_EQ(y.at(r, c, ch), x.at(r, ((c - 3) % 8 + 8) % 8, ch));
    }
  }
}

TEST(CircularShift, GroupActionOnRandomOffsets) {
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> offset(-40, 40);
  const auto x = numbered_grid(4, 8, 3);
  for (int trial = 0; trial < 50; ++trial) {
    const int a = offset(rng);
    const int b = offset(rng);
    EXPECT_EQ(circular_shift(circular_shift(x, a), b), circular_shift(x, a + b));
    EXPECT_EQ(circular_shift(circular_shift(x, a), -a), x);
  }
}

TEST(DegreesToColumns, Examples) {
  EXPECT_EQ(degrees_to_columns(90, 1024), 256);
  EXPECT_EQ(degrees_to_columns(360, 512), 0);
  EXPECT_EQ(degrees_to_columns(45, 100), 13);  // 12.5 rounds half up
  EXPECT_EQ(degrees_to_columns(-90, 128), 96);
  EXPECT_THROW(degrees_to_columns(10, 0), InvalidArgument);
  EXPECT_THROW(degrees_to_columns(10, -4), InvalidArgument);
}

TEST(GenMask, FullViewIsAllVisible) {
  MaskSpec spec;
  spec.kind = MaskKind::kNfov;
  spec.fov_h_deg = 360;
  spec.fov_v_deg = 180;
  spec.yaw_deg = 17;
  EXPECT_DOUBLE_EQ(mask_coverage(gen_mask(spec, 64, 128)), 1.0);
}

TEST(GenMask, LayoutBands) {
  MaskSpec spec;
  spec.kind = MaskKind::kLayout;
  spec.ceiling_frac = 0.25;
  spec.floor_frac = 0.25;
  const Mask mask = gen_mask(spec, 64, 128);
  for (int r = 0; r < 64; ++r) {
    const bool expected = r <= 15 || r >= 48;
    for (int c = 0; c < 128; ++c) ASSERT_EQ(mask.visible(r, c), expected) << r << "," << c;
  }
  EXPECT_DOUBLE_EQ(mask_coverage(mask), 0.5);
}

TEST(GenMask, NfovWrapsTheSeam) {
  MaskSpec spec;
  spec.kind = MaskKind::kNfov;
  spec.fov_h_deg = 90;
  spec.fov_v_deg = 90;
  spec.yaw_deg = 0;
  spec.pitch_deg = 0;
  const Mask mask = gen_mask(spec, 64, 128);
  std::set<int> expected;
  for (int c = 112; c < 128; ++c) expected.insert(c);
  for (int c = 0; c < 16; ++c) expected.insert(c);
  for (int r = 16; r < 48; ++r) EXPECT_EQ(visible_columns_in_row(mask, r), expected);
  EXPECT_TRUE(visible_columns_in_row(mask, 0).empty());
  EXPECT_TRUE(visible_columns_in_row(mask, 63).empty());
}

TEST(GenMask, SeamCenteredViewIsShiftOfCentredView) {
  MaskSpec spec;
  spec.kind = MaskKind::kNfov;
  spec.fov_h_deg = 100;
  spec.fov_v_deg = 70;
  spec.pitch_deg = 10;
  spec.yaw_deg = 0;
  const Mask at_seam = gen_mask(spec, 64, 128);
  spec.yaw_deg = 180;
  const Mask centred = gen_mask(spec, 64, 128);
  EXPECT_EQ(at_seam, circular_shift(centred, -64));
}

TEST(GenMask, DeterministicAndBinaryForEveryKind) {
  for (auto kind : {MaskKind::kNfov, MaskKind::kCamera, MaskKind::kLayout, MaskKind::kBox}) {
    MaskSpec spec;
    spec.kind = kind;
    spec.seed = 99;
    const Mask a = gen_mask(spec, 32, 64);
    const Mask b = gen_mask(spec, 32, 64);
    EXPECT_EQ(a, b) << to_string(kind);
    for (auto v : a.grid().values()) EXPECT_TRUE(v == 0 || v == 1);
  }
}

TEST(GenMask, CameraViewsAndBoxes) {
  MaskSpec spec;
  spec.kind = MaskKind::kCamera;
  spec.views = 0;
  EXPECT_DOUBLE_EQ(mask_coverage(gen_mask(spec, 32, 64)), 0.0);
  spec.views = 3;
  spec.seed = 4;
  const double three = mask_coverage(gen_mask(spec, 32, 64));
  EXPECT_GT(three, 0.0);
  EXPECT_LT(three, 1.0);

  MaskSpec box;
  box.kind = MaskKind::kBox;
  box.seed = 5;
  const double coverage = mask_coverage(gen_mask(box, 32, 64));
  EXPECT_GT(coverage, 0.0);
  EXPECT_LT(coverage, 1.0);
}

TEST(GenMask, RejectsInvalidParameters) {
  MaskSpec spec;
  spec.kind = MaskKind::kLayout;
  spec.ceiling_frac = 0.7;
  spec.floor_frac = 0.6;
  EXPECT_THROW(gen_mask(spec, 32, 64), InvalidArgument);
  spec.kind = MaskKind::kNfov;
  spec.fov_h_deg = 0;
  EXPECT_THROW(gen_mask(spec, 32, 64), InvalidArgument);
  EXPECT_THROW(mask_kind_from_string("circle"), InvalidArgument);
}

TEST(GenMask, HalfVisible) {
  const Mask mask = half_visible_mask(8, 16);
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 16; ++c) EXPECT_EQ(mask.visible(r, c), c < 8);
  }
}

TEST(MaskCoverage, Examples) {
  EXPECT_DOUBLE_EQ(mask_coverage(Mask(2, 4, true)), 1.0);
  EXPECT_DOUBLE_EQ(mask_coverage(Mask(2, 4, false)), 0.0);
  Mask three(2, 4, false);
  three.set(0, 0, true);
  three.set(1, 2, true);
  three.set(1, 3, true);
  EXPECT_DOUBLE_EQ(mask_coverage(three), 0.375);
}

TEST(DownsampleMask, AllOnesAndSingleHole) {
  const Mask ones(16, 32, true);
  EXPECT_EQ(downsample_mask(ones, 4), Mask(4, 8, true));
  Mask hole = ones;
  hole.set(5, 9, false);
  const Mask low = downsample_mask(hole, 4);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 8; ++c) EXPECT_EQ(low.visible(r, c), !(r == 1 && c == 2));
  }
  EXPECT_EQ(downsample_mask(hole, 4, LatentMaskPolicy::kAnyVisible), Mask(4, 8, true));
}

TEST(DownsampleMask, MatchesBlockScanOracle) {
  std::mt19937 rng(3);
  std::bernoulli_distribution coin(0.8);
  for (int trial = 0; trial < 20; ++trial) {
    Mask mask(8, 16, false);
    for (int r = 0; r < 8; ++r) {
      for (int c = 0; c < 16; ++c) mask.set(r, c, coin(rng));
    }
    for (auto policy : {LatentMaskPolicy::kAllVisible, LatentMaskPolicy::kAnyVisible}) {
      const Mask low = downsample_mask(mask, 4, policy);
      ASSERT_EQ(low.height(), 2);
      ASSERT_EQ(low.width(), 4);
      for (int br = 0; br < 2; ++br) {
        for (int bc = 0; bc < 4; ++bc) {
          bool all = true, any = false;
          for (int r = br * 4; r < br * 4 + 4; ++r) {
            for (int c = bc * 4; c < bc * 4 + 4; ++c) {
              all = all && mask.visible(r, c);
              any = any || mask.visible(r, c);
            }
          }
          EXPECT_EQ(low.visible(br, bc), policy == LatentMaskPolicy::kAllVisible ? all : any);
        }
      }
    }
  }
}

TEST(DownsampleMask, RejectsNonDivisibleDims) {
  EXPECT_THROW(downsample_mask(Mask(6, 12, true), 4), InvalidArgument);
  EXPECT_THROW(downsample_mask(Mask(8, 16, true), 0), InvalidArgument);
}

TEST(Panorama, ValidateChecksContract) {
  Panorama ok{Image(8, 16, 3, 0.5f), Image(8, 16, 1, 2.0f)};
  EXPECT_NO_THROW(ok.validate(4));
  EXPECT_THROW(ok.validate(16), InvalidArgument);
  Panorama bad_aspect{Image(8, 8, 3), Image(8, 8, 1)};
  EXPECT_THROW(bad_aspect.validate(), InvalidArgument);
  Panorama bad_rgb = ok;
  bad_rgb.rgb.at(0, 0, 0) = 1.5f;
  EXPECT_THROW(bad_rgb.validate(), InvalidArgument);
  Panorama bad_depth = ok;
  bad_depth.depth.at(1, 1) = -0.1f;
  EXPECT_THROW(bad_depth.validate(), InvalidArgument);
}

TEST(MaskPng, RoundTripsAsZeroAnd255) {
  MaskSpec spec;
  spec.kind = MaskKind::kBox;
  spec.seed = 8;
  const Mask mask = gen_mask(spec, 16, 32);
  const auto path = std::filesystem::temp_directory_path() / "panodiff_mask_roundtrip.png";
  io::write_mask_png(path, mask);
  EXPECT_EQ(io::read_mask_png(path), mask);
  std::filesystem::remove(path);
}
