#include "panodiff/pano.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace panodiff {

namespace {

long long round_half_up(double value) { return static_cast<long long>(std::floor(value + 0.5)); }

// Marks rows [row0, row0 + rows) x columns [col0, col0 + cols) modulo W.
void paint_rect(Mask& mask, int row0, int rows, long long col0, int cols, bool visible) {
  const int height = mask.height();
  const int width = mask.width();
  const int row_end = std::min(height, row0 + rows);
  cols = std::min(cols, width);
  for (int row = std::max(0, row0); row < row_end; ++row) {
    for (int i = 0; i < cols; ++i) {
      const int col = static_cast<int>((((col0 + i) % width) + width) % width);
      mask.set(row, col, visible);
    }
  }
}

void paint_view(Mask& mask, double fov_h_deg, double fov_v_deg, double yaw_deg, double pitch_deg) {
  const int height = mask.height();
  const int width = mask.width();
  const int cols = fov_h_deg >= 360.0
                       ? width
                       : static_cast<int>(std::min<long long>(width, round_half_up(width * fov_h_deg / 360.0)));
  const int rows = fov_v_deg >= 180.0
                       ? height
                       : static_cast<int>(std::min<long long>(height, round_half_up(height * fov_v_deg / 180.0)));
  const int center_col = degrees_to_columns(yaw_deg, width);
  const long long col0 = cols == width ? 0 : center_col - cols / 2;
  const double center_row = height / 2.0 - pitch_deg / 180.0 * height;
  int row0 = static_cast<int>(round_half_up(center_row - rows / 2.0));
  row0 = std::clamp(row0, 0, height - rows);
  paint_rect(mask, row0, rows, col0, cols, true);
}

}  // namespace

void Panorama::validate(int factor) const {
  if (rgb.channels() != 3) throw InvalidArgument("Panorama: rgb must have 3 channels");
  if (depth.channels() != 1) throw InvalidArgument("Panorama: depth must have 1 channel");
  if (depth.height() != rgb.height() || depth.width() != rgb.width()) {
    throw InvalidArgument("Panorama: rgb and depth grids differ");
  }
  if (rgb.width() != 2 * rgb.height()) throw InvalidArgument("Panorama: width must equal 2 * height");
  if (factor > 0 && rgb.height() % factor != 0) {
    throw InvalidArgument("Panorama: height not divisible by " + std::to_string(factor));
  }
  for (float v : rgb.values()) {
    if (!(v >= -1.0f && v <= 1.0f)) throw InvalidArgument("Panorama: rgb value outside [-1, 1]");
  }
  for (float d : depth.values()) {
    if (!std::isfinite(d) || d < 0.0f) throw InvalidArgument("Panorama: depth must be finite and >= 0");
  }
}

Mask::Mask(Grid<std::uint8_t> grid) : grid_(std::move(grid)) {
  if (grid_.channels() != 1) throw InvalidArgument("Mask: grid must have one channel");
  for (auto& v : grid_.values()) v = v != 0 ? 1 : 0;
}

std::string to_string(MaskKind kind) {
  switch (kind) {
    case MaskKind::kNfov: return "nfov";
    case MaskKind::kCamera: return "camera";
    case MaskKind::kLayout: return "layout";
    case MaskKind::kBox: return "box";
  }
  return "unknown";
}

MaskKind mask_kind_from_string(const std::string& name) {
  if (name == "nfov") return MaskKind::kNfov;
  if (name == "camera") return MaskKind::kCamera;
  if (name == "layout") return MaskKind::kLayout;
  if (name == "box") return MaskKind::kBox;
  throw InvalidArgument("unknown mask kind '" + name + "'");
}

void MaskSpec::validate() const {
  switch (kind) {
    case MaskKind::kNfov:
      if (!(fov_h_deg > 0.0) || !(fov_v_deg > 0.0)) throw InvalidArgument("MaskSpec: fov must be > 0");
      break;
    case MaskKind::kCamera:
      if (views < 0) throw InvalidArgument("MaskSpec: views must be >= 0");
      if (!(camera_fov_min_deg > 0.0) || camera_fov_max_deg < camera_fov_min_deg) {
        throw InvalidArgument("MaskSpec: camera fov range must satisfy 0 < min <= max");
      }
      if (camera_pitch_range_deg < 0.0 || camera_pitch_range_deg > 90.0) {
        throw InvalidArgument("MaskSpec: camera pitch range must lie in [0, 90]");
      }
      break;
    case MaskKind::kLayout:
      if (ceiling_frac < 0.0 || floor_frac < 0.0 || ceiling_frac + floor_frac > 1.0) {
        throw InvalidArgument("MaskSpec: layout fractions must be >= 0 and sum to <= 1");
      }
      break;
    case MaskKind::kBox:
      if (boxes_min < 0 || boxes_max < boxes_min) throw InvalidArgument("MaskSpec: invalid box count range");
      if (!(box_size_min > 0.0) || box_size_max < box_size_min || box_size_max > 1.0) {
        throw InvalidArgument("MaskSpec: box sizes must satisfy 0 < min <= max <= 1");
      }
      break;
  }
}

int degrees_to_columns(double angle_deg, int width) {
  if (width <= 0) throw InvalidArgument("degrees_to_columns: width must be > 0");
  const long long cols = round_half_up(width * angle_deg / 360.0);
  return static_cast<int>(((cols % width) + width) % width);
}

Panorama circular_shift(const Panorama& pano, long long columns) {
  return Panorama{circular_shift(pano.rgb, columns), circular_shift(pano.depth, columns)};
}

Mask circular_shift(const Mask& mask, long long columns) {
  return Mask(circular_shift(mask.grid(), columns));
}

Mask gen_mask(const MaskSpec& spec, int height, int width) {
  spec.validate();
  if (height <= 0 || width <= 0) throw InvalidArgument("gen_mask: dimensions must be > 0");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  switch (spec.kind) {
    case MaskKind::kNfov: {
      Mask mask(height, width, false);
      const double yaw = spec.yaw_deg ? *spec.yaw_deg : 360.0 * unit(rng);
      paint_view(mask, spec.fov_h_deg, spec.fov_v_deg, yaw, spec.pitch_deg.value_or(0.0));
      return mask;
    }
    case MaskKind::kCamera: {
      Mask mask(height, width, false);
      for (int v = 0; v < spec.views; ++v) {
        const double fov = spec.camera_fov_min_deg + (spec.camera_fov_max_deg - spec.camera_fov_min_deg) * unit(rng);
        const double yaw = 360.0 * unit(rng);
        const double pitch = spec.camera_pitch_range_deg * (2.0 * unit(rng) - 1.0);
        paint_view(mask, fov, fov, yaw, pitch);
      }
      return mask;
    }
    case MaskKind::kLayout: {
      Mask mask(height, width, false);
      const int top = static_cast<int>(round_half_up(height * spec.ceiling_frac));
      const int bottom = static_cast<int>(round_half_up(height * spec.floor_frac));
      paint_rect(mask, 0, top, 0, width, true);
      paint_rect(mask, height - bottom, bottom, 0, width, true);
      return mask;
    }
    case MaskKind::kBox: {
      Mask mask(height, width, true);
      std::uniform_int_distribution<int> count_dist(spec.boxes_min, spec.boxes_max);
      const int count = count_dist(rng);
      for (int i = 0; i < count; ++i) {
        const double fh = spec.box_size_min + (spec.box_size_max - spec.box_size_min) * unit(rng);
        const double fw = spec.box_size_min + (spec.box_size_max - spec.box_size_min) * unit(rng);
        const int rows = std::max(1, static_cast<int>(round_half_up(fh * height)));
        const int cols = std::max(1, static_cast<int>(round_half_up(fw * width)));
        const int row0 = static_cast<int>(unit(rng) * (height - rows + 1));
        const long long col0 = static_cast<long long>(unit(rng) * width);
        paint_rect(mask, row0, rows, col0, cols, false);
      }
      return mask;
    }
  }
  throw InvalidArgument("gen_mask: unknown kind");
}

Mask half_visible_mask(int height, int width) {
  Mask mask(height, width, false);
  paint_rect(mask, 0, height, 0, width / 2, true);
  return mask;
}

double mask_coverage(const Mask& mask) {
  const auto values = mask.grid().values();
  if (values.empty()) return 0.0;
  std::size_t visible = 0;
  for (auto v : values) visible += v != 0;
  return static_cast<double>(visible) / static_cast<double>(values.size());
}

Mask downsample_mask(const Mask& mask, int factor, LatentMaskPolicy policy) {
  if (factor <= 0 || mask.height() % factor != 0 || mask.width() % factor != 0) {
    throw InvalidArgument("downsample_mask: mask dimensions not divisible by factor");
  }
  const int h = mask.height() / factor;
  const int w = mask.width() / factor;
  Mask out(h, w, false);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      int visible = 0;
      for (int dr = 0; dr < factor; ++dr) {
        for (int dc = 0; dc < factor; ++dc) visible += mask.visible(r * factor + dr, c * factor + dc);
      }
      const bool keep = policy == LatentMaskPolicy::kAllVisible ? visible == factor * factor : visible > 0;
      out.set(r, c, keep);
    }
  }
  return out;
}

}  // namespace panodiff
