#include "panodiff/layers.hpp"

#include <algorithm>

namespace panodiff::nn {

namespace F = torch::nn::functional;

WrapConv2dImpl::WrapConv2dImpl(int in, int out, int kernel, int stride, Padding padding)
    : pad_(kernel / 2), padding_(padding) {
  conv_ = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel).stride(stride)));
}

torch::Tensor WrapConv2dImpl::forward(const torch::Tensor& x) {
  if (pad_ == 0) return conv_->forward(x);
  auto h = padding_ == Padding::kCircular
               ? F::pad(x, F::PadFuncOptions({pad_, pad_, 0, 0}).mode(torch::kCircular))
               : F::pad(x, F::PadFuncOptions({pad_, pad_, 0, 0}));
  h = F::pad(h, F::PadFuncOptions({0, 0, pad_, pad_}));
  return conv_->forward(h);
}

torch::nn::GroupNorm group_norm(int channels) {
  return torch::nn::GroupNorm(torch::nn::GroupNormOptions(std::min(8, channels), channels));
}

ResBlockImpl::ResBlockImpl(int in, int out, int time_dim, Padding padding) {
  norm1_ = register_module("norm1", group_norm(in));
  conv1_ = register_module("conv1", WrapConv2d(in, out, 3, 1, padding));
  norm2_ = register_module("norm2", group_norm(out));
  conv2_ = register_module("conv2", WrapConv2d(out, out, 3, 1, padding));
  if (in != out) skip_ = register_module("skip", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1)));
  if (time_dim > 0) time_proj_ = register_module("time_proj", torch::nn::Linear(time_dim, out));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& time) {
  auto h = conv1_->forward(torch::silu(norm1_->forward(x)));
  if (time_proj_ && time.defined()) h = h + time_proj_->forward(time).unsqueeze(-1).unsqueeze(-1);
  h = conv2_->forward(torch::silu(norm2_->forward(h)));
  return (skip_ ? skip_->forward(x) : x) + h;
}

torch::Tensor upsample2x(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kNearest));
}

}  // namespace panodiff::nn
