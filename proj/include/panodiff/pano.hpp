#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "panodiff/grid.hpp"

namespace panodiff {

// Equirectangular RGB-D frame. rgb is H x W x 3 in [-1, 1]; depth is H x W x 1 in meters.
// Columns are azimuth, rows are elevation (row 0 looks up).
struct Panorama {
  Image rgb;
  Image depth;

  int height() const { return rgb.height(); }
  int width() const { return rgb.width(); }

  // Throws InvalidArgument when the frame breaks the 2:1 aspect, the factor
  // divisibility, or the value ranges.
  void validate(int factor = 1) const;
};

// Per-pixel visibility, 1 = visible, 0 = missing.
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, bool visible = false)
      : grid_(height, width, 1, visible ? std::uint8_t{1} : std::uint8_t{0}) {}
  explicit Mask(Grid<std::uint8_t> grid);

  int height() const { return grid_.height(); }
  int width() const { return grid_.width(); }
  bool visible(int row, int col) const { return grid_.at(row, col) != 0; }
  void set(int row, int col, bool visible) { grid_.at(row, col) = visible ? 1 : 0; }

  const Grid<std::uint8_t>& grid() const { return grid_; }

  bool operator==(const Mask&) const = default;

 private:
  Grid<std::uint8_t> grid_;
};

enum class MaskKind { kNfov, kCamera, kLayout, kBox };

std::string to_string(MaskKind kind);
MaskKind mask_kind_from_string(const std::string& name);

struct MaskSpec {
  MaskKind kind = MaskKind::kNfov;
  std::uint64_t seed = 0;

  // nfov: a single view. Unset yaw is drawn uniformly from the seed; unset pitch is 0.
  double fov_h_deg = 90.0;
  double fov_v_deg = 90.0;
  std::optional<double> yaw_deg;
  std::optional<double> pitch_deg;

  // camera: `views` rectangles, square in degrees, fov ~ U[min, max], pitch ~ U[-range, range].
  int views = 4;
  double camera_fov_min_deg = 60.0;
  double camera_fov_max_deg = 100.0;
  double camera_pitch_range_deg = 30.0;

  // layout: visible ceiling band on top, floor band at the bottom.
  double ceiling_frac = 0.25;
  double floor_frac = 0.25;

  // box: fully visible minus k rectangles with sides as fractions of H and W.
  int boxes_min = 2;
  int boxes_max = 6;
  double box_size_min = 0.1;
  double box_size_max = 0.35;

  void validate() const;
};

// Rounds half up and reduces modulo `width`; throws InvalidArgument when width <= 0.
int degrees_to_columns(double angle_deg, int width);

// Output column j is input column (j - columns) mod W.
template <typename T>
Grid<T> circular_shift(const Grid<T>& input, long long columns) {
  const int width = input.width();
  if (width == 0) return input;
  const int shift = static_cast<int>(((columns % width) + width) % width);
  if (shift == 0) return input;
  Grid<T> out(input.height(), width, input.channels());
  const int channels = input.channels();
  for (int row = 0; row < input.height(); ++row) {
    for (int col = 0; col < width; ++col) {
      const int src = (col - shift + width) % width;
      for (int ch = 0; ch < channels; ++ch) out.at(row, col, ch) = input.at(row, src, ch);
    }
  }
  return out;
}

Panorama circular_shift(const Panorama& pano, long long columns);
Mask circular_shift(const Mask& mask, long long columns);

Mask gen_mask(const MaskSpec& spec, int height, int width);

// Left half visible, right half masked: the seam protocol used by the rotation ablation.
Mask half_visible_mask(int height, int width);

double mask_coverage(const Mask& mask);

enum class LatentMaskPolicy { kAllVisible, kAnyVisible };

// Reduces each factor x factor block to one cell.
Mask downsample_mask(const Mask& mask, int factor,
                     LatentMaskPolicy policy = LatentMaskPolicy::kAllVisible);

}  // namespace panodiff
