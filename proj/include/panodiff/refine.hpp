#pragma once

#include <limits>

#include "panodiff/pano.hpp"

namespace panodiff::refine {

enum class Interpolation { kBilinear, kBicubic };

struct UpscaleConfig {
  int factor = 2;
  Interpolation kind = Interpolation::kBilinear;
  float min_value = -1.0f;
  float max_value = 1.0f;

  void validate() const;
};

// 2x upscaling with half-pixel centers. Horizontal taps wrap modulo W, vertical
// taps clamp at the poles, and results are clamped to [min_value, max_value].
// Stands in for a learned super-resolution stage.
Image upscale(const Image& image, const UpscaleConfig& config = {});

// RGB clamps to [-1, 1]; depth clamps to [0, inf).
Panorama upscale(const Panorama& pano, Interpolation kind = Interpolation::kBilinear);

}  // namespace panodiff::refine
