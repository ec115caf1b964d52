#pragma once

#include <torch/torch.h>

namespace panodiff::nn {

// Horizontal padding of every 3x3 convolution. Vertical padding is always zero.
enum class Padding { kCircular, kZero };

class WrapConv2dImpl : public torch::nn::Module {
 public:
  WrapConv2dImpl(int in, int out, int kernel = 3, int stride = 1, Padding padding = Padding::kCircular);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  int pad_;
  Padding padding_;
  torch::nn::Conv2d conv_{nullptr};
};
TORCH_MODULE(WrapConv2d);

torch::nn::GroupNorm group_norm(int channels);

// Pre-activation residual block; `time_dim` > 0 adds a projected time embedding.
class ResBlockImpl : public torch::nn::Module {
 public:
  ResBlockImpl(int in, int out, int time_dim = 0, Padding padding = Padding::kCircular);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& time = {});

 protected:
  FORWARD_HAS_DEFAULT_ARGS({1, torch::nn::AnyValue(torch::Tensor())})

 private:
  torch::nn::GroupNorm norm1_{nullptr}, norm2_{nullptr};
  WrapConv2d conv1_{nullptr}, conv2_{nullptr};
  torch::nn::Conv2d skip_{nullptr};
  torch::nn::Linear time_proj_{nullptr};
};
TORCH_MODULE(ResBlock);

torch::Tensor upsample2x(const torch::Tensor& x);

}  // namespace panodiff::nn
