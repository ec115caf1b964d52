#pragma once

#include <filesystem>

#include "panodiff/grid.hpp"
#include "panodiff/pano.hpp"

namespace panodiff::io {

// RGB: 8-bit PNG, stored value v maps to 2v/255 - 1.
void write_rgb_png(const std::filesystem::path& path, const Image& rgb);
Image read_rgb_png(const std::filesystem::path& path);

// Depth: 16-bit PNG in millimeters, clipped at 65.535 m.
void write_depth_png(const std::filesystem::path& path, const Image& depth);
Image read_depth_png(const std::filesystem::path& path);

// Mask: 8-bit single channel, 0 = masked, 255 = visible. Any nonzero reads as visible.
void write_mask_png(const std::filesystem::path& path, const Mask& mask);
Mask read_mask_png(const std::filesystem::path& path);

std::uint8_t rgb_to_byte(float value);
float byte_to_rgb(std::uint8_t value);
std::uint16_t depth_to_millimeters(float meters);

}  // namespace panodiff::io
