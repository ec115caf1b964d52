#include "panodiff/refine.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace panodiff::refine {

namespace {

struct Taps {
  std::array<int, 4> index{};
  std::array<float, 4> weight{};
  int count = 0;
};

float cubic_weight(float x) {
  constexpr float a = -0.5f;
  x = std::abs(x);
  if (x < 1.0f) return ((a + 2.0f) * x - (a + 3.0f)) * x * x + 1.0f;
  if (x < 2.0f) return ((a * x - 5.0f * a) * x + 8.0f * a) * x - 4.0f * a;
  return 0.0f;
}

// Taps for output position `out` along an axis of `size` input samples.
Taps make_taps(int out, int size, Interpolation kind, bool wrap) {
  const double src = (out + 0.5) / 2.0 - 0.5;
  const int base = static_cast<int>(std::floor(src));
  const auto frac = static_cast<float>(src - base);
  auto fix = [&](int i) { return wrap ? ((i % size) + size) % size : std::clamp(i, 0, size - 1); };
  Taps taps;
  if (kind == Interpolation::kBilinear) {
    taps.count = 2;
    taps.index = {fix(base), fix(base + 1), 0, 0};
    taps.weight = {1.0f - frac, frac, 0.0f, 0.0f};
  } else {
    taps.count = 4;
    for (int k = 0; k < 4; ++k) {
      taps.index[k] = fix(base - 1 + k);
      taps.weight[k] = cubic_weight(static_cast<float>(k - 1) - frac);
    }
  }
  return taps;
}

}  // namespace

void UpscaleConfig::validate() const {
  if (factor != 2) throw InvalidArgument("UpscaleConfig: factor must be 2");
  if (!(min_value <= max_value)) throw InvalidArgument("UpscaleConfig: min_value must be <= max_value");
}

Image upscale(const Image& image, const UpscaleConfig& config) {
  config.validate();
  const int h = image.height();
  const int w = image.width();
  const int c = image.channels();
  if (h == 0 || w == 0) return Image(2 * h, 2 * w, c);

  Image wide(h, 2 * w, c);
  for (int x = 0; x < 2 * w; ++x) {
    const Taps taps = make_taps(x, w, config.kind, true);
    for (int y = 0; y < h; ++y) {
      for (int ch = 0; ch < c; ++ch) {
        float acc = 0.0f;
        for (int k = 0; k < taps.count; ++k) acc += taps.weight[k] * image.at(y, taps.index[k], ch);
        wide.at(y, x, ch) = acc;
      }
    }
  }
  Image out(2 * h, 2 * w, c);
  for (int y = 0; y < 2 * h; ++y) {
    const Taps taps = make_taps(y, h, config.kind, false);
    for (int x = 0; x < 2 * w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        float acc = 0.0f;
        for (int k = 0; k < taps.count; ++k) acc += taps.weight[k] * wide.at(taps.index[k], x, ch);
        out.at(y, x, ch) = std::clamp(acc, config.min_value, config.max_value);
      }
    }
  }
  return out;
}

Panorama upscale(const Panorama& pano, Interpolation kind) {
  UpscaleConfig rgb_config{2, kind, -1.0f, 1.0f};
  UpscaleConfig depth_config{2, kind, 0.0f, std::numeric_limits<float>::max()};
  return Panorama{upscale(pano.rgb, rgb_config), upscale(pano.depth, depth_config)};
}

}  // namespace panodiff::refine
