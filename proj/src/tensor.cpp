#include "panodiff/tensor.hpp"

#include <ATen/CPUGeneratorImpl.h>

namespace panodiff::tensor {

torch::Tensor from_image(const Image& image) {
  const auto h = image.height();
  const auto w = image.width();
  const auto c = image.channels();
  auto hwc = torch::from_blob(const_cast<float*>(image.values().data()), {h, w, c}, torch::kFloat32);
  return hwc.permute({2, 0, 1}).contiguous();
}

torch::Tensor stack(std::span<const Image> images) {
  if (images.empty()) throw InvalidArgument("tensor::stack: no images");
  std::vector<torch::Tensor> parts;
  parts.reserve(images.size());
  for (const auto& img : images) {
    if (!img.same_shape(images.front())) throw InvalidArgument("tensor::stack: images differ in shape");
    parts.push_back(from_image(img));
  }
  return torch::stack(parts);
}

Image to_image(const torch::Tensor& t) {
  auto x = t;
  if (x.dim() == 4) {
    if (x.size(0) != 1) throw InvalidArgument("tensor::to_image: batch of more than one");
    x = x.squeeze(0);
  }
  if (x.dim() != 3) throw InvalidArgument("tensor::to_image: expected C x H x W");
  x = x.detach().to(torch::kFloat32).permute({1, 2, 0}).contiguous();
  Image out(static_cast<int>(x.size(0)), static_cast<int>(x.size(1)), static_cast<int>(x.size(2)));
  std::memcpy(out.values().data(), x.data_ptr<float>(), out.size() * sizeof(float));
  return out;
}

torch::Tensor from_mask(const Mask& mask) {
  auto out = torch::empty({1, mask.height(), mask.width()}, torch::kFloat32);
  auto acc = out.accessor<float, 3>();
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) acc[0][r][c] = mask.visible(r, c) ? 1.0f : 0.0f;
  }
  return out;
}

Mask to_mask(const torch::Tensor& t) {
  auto x = t.detach().to(torch::kFloat32).reshape({t.size(-2), t.size(-1)});
  auto acc = x.accessor<float, 2>();
  Mask out(static_cast<int>(x.size(0)), static_cast<int>(x.size(1)));
  for (int r = 0; r < out.height(); ++r) {
    for (int c = 0; c < out.width(); ++c) out.set(r, c, acc[r][c] > 0.5f);
  }
  return out;
}

torch::Tensor roll_width(const torch::Tensor& t, std::int64_t columns) {
  const auto w = t.size(-1);
  const auto k = ((columns % w) + w) % w;
  if (k == 0) return t.clone();
  return torch::roll(t, {k}, {-1});
}

torch::Generator make_generator(std::uint64_t seed) {
  return at::make_generator<at::CPUGeneratorImpl>(seed);
}

torch::Tensor randn(at::IntArrayRef shape, torch::Generator& gen) {
  return torch::randn(shape, gen, torch::TensorOptions().dtype(torch::kFloat32));
}

void configure_runtime(std::uint64_t seed) {
  torch::set_num_threads(1);
  torch::manual_seed(seed);
}

}  // namespace panodiff::tensor
