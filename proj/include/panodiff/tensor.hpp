#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <torch/torch.h>

#include "panodiff/pano.hpp"

namespace panodiff::tensor {

// HWC image to a float32 C x H x W tensor.
torch::Tensor from_image(const Image& image);
// N x C x H x W batch from same-shaped images.
torch::Tensor stack(std::span<const Image> images);
// C x H x W (or 1 x C x H x W) tensor back to an HWC image.
Image to_image(const torch::Tensor& t);
// 1 x H x W float tensor with 1 for visible pixels.
torch::Tensor from_mask(const Mask& mask);
Mask to_mask(const torch::Tensor& t);

// Circular shift along the last (width) axis; matches circular_shift on grids.
torch::Tensor roll_width(const torch::Tensor& t, std::int64_t columns);

torch::Generator make_generator(std::uint64_t seed);
torch::Tensor randn(at::IntArrayRef shape, torch::Generator& gen);

// Single-threaded, seeded torch state; every entry point calls this first.
void configure_runtime(std::uint64_t seed);

}  // namespace panodiff::tensor
