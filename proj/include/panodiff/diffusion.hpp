#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "panodiff/autoencoder.hpp"
#include "panodiff/checkpoint.hpp"
#include "panodiff/layers.hpp"
#include "panodiff/synthdata.hpp"

namespace panodiff::diffusion {

// Linear beta schedule. Index t runs 1..T; alpha_bar(0) is 1.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  NoiseSchedule(int steps, double beta_start, double beta_end);

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta(int t) const;
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const;
  // beta_t (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t); zero at t = 1.
  double posterior_variance(int t) const;

 private:
  void check(int t, int lo) const;
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

NoiseSchedule make_schedule(int steps = 1000, double beta_start = 1e-4, double beta_end = 0.02);

// Strictly decreasing inference timesteps t_S > ... > t_1 = 1, evenly strided over 1..T.
struct StepMap {
  std::vector<int> steps;
  int next(std::size_t i) const { return i + 1 < steps.size() ? steps[i + 1] : 0; }
};

StepMap make_step_map(int train_steps, int inference_steps);

// sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.
torch::Tensor q_sample(const torch::Tensor& z0, int t, const torch::Tensor& eps, const NoiseSchedule& schedule);

// One reverse step from t to t - 1. `noise` is ignored at t = 1.
torch::Tensor ddpm_step(const torch::Tensor& z_t, const torch::Tensor& eps_hat, int t, const NoiseSchedule& schedule,
                        const torch::Tensor& noise);
// Strided reverse step from t to t_prev < t using the respaced beta
// 1 - abar_t / abar_{t_prev}; identical to the single-step form when t_prev = t - 1.
torch::Tensor ddpm_step(const torch::Tensor& z_t, const torch::Tensor& eps_hat, int t, int t_prev,
                        const NoiseSchedule& schedule, const torch::Tensor& noise);

struct UNetConfig {
  int in_channels = 4;
  int hidden1 = 32;
  int hidden2 = 64;
  // Zero horizontal padding is the default: a circular denoiser makes the seam
  // indistinguishable from any other column and per-step rotation has no effect.
  nn::Padding padding = nn::Padding::kZero;
};

void to_json(nlohmann::json& j, const UNetConfig& c);
void from_json(const nlohmann::json& j, UNetConfig& c);

torch::Tensor timestep_embedding(const torch::Tensor& t, int dim);

// Two-level U-Net over h x w latents (h, w divisible by 4) with sinusoidal time embedding.
// With circular padding it commutes with circular shifts by multiples of 4 columns.
class UNetImpl : public torch::nn::Module {
 public:
  explicit UNetImpl(const UNetConfig& config);
  torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& t);
  const UNetConfig& config() const { return config_; }

 private:
  UNetConfig config_;
  torch::nn::Sequential time_mlp_{nullptr};
  nn::WrapConv2d in_{nullptr}, down1_{nullptr}, down2_{nullptr}, up2_{nullptr}, up1_{nullptr};
  nn::ResBlock enc1_{nullptr}, enc2_{nullptr}, mid1_{nullptr}, mid2_{nullptr}, dec2_{nullptr}, dec1_{nullptr},
      dec0_{nullptr};
  torch::nn::Sequential out_{nullptr};
};
TORCH_MODULE(UNet);

// Per-channel affine map that brings encoder latents to zero mean and unit variance.
struct LatentNormalizer {
  torch::Tensor mean;  // [C]
  torch::Tensor std;   // [C]

  torch::Tensor normalize(const torch::Tensor& z) const;
  torch::Tensor denormalize(const torch::Tensor& z) const;
};

struct LdmConfig {
  UNetConfig unet;
  int schedule_steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  bool use_depth = true;  // false trains the 3-channel RGB-only twin
  int train_steps = 4000;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double ema_decay = 0.999;
  bool rotation_augment = true;
  // Probability that a sample's depth latent comes from a sparsified depth map.
  double depth_sparsity_prob = 0.0;
  double depth_sparsity_fraction = 0.5;
  int sparse_variants = 4;  // pre-encoded sparsified copies per training image
  int log_every = 50;
  std::uint64_t seed = 1;

  int latent_channels() const { return use_depth ? 4 : 3; }
  void validate() const;
};

void to_json(nlohmann::json& j, const LdmConfig& c);
void from_json(const nlohmann::json& j, LdmConfig& c);

using Denoiser = std::function<torch::Tensor(const torch::Tensor& z, int t)>;

struct LatentDiffusion {
  LdmConfig config;
  NoiseSchedule schedule;
  LatentNormalizer normalizer;
  UNet model{nullptr};  // raw weights, kept for resuming
  UNet ema{nullptr};    // weights used for sampling
  int step = 0;
  std::vector<std::pair<int, double>> loss_log;  // (step, mean loss over the window)
  // Adam moments by parameter order, for resuming.
  std::vector<std::pair<torch::Tensor, torch::Tensor>> adam_moments;
  std::vector<std::int64_t> adam_steps;

  Denoiser denoiser() const;
};

LatentDiffusion make_ldm(const LdmConfig& config);

// Encoder latents of every training image, channels rgb3 (+ depth1).
torch::Tensor encode_split(ae::AutoencoderBundle& bundle, const std::vector<Panorama>& panos, bool use_depth);

using LogFn = std::function<void(const nlohmann::json&)>;

// Trains until config.train_steps. Passing `resume` continues its step counter,
// weights and optimizer moments; batches are drawn from per-step seeds, so a
// resumed run sees the same stream as an uninterrupted one.
LatentDiffusion train_ldm(const synth::Dataset& data, ae::AutoencoderBundle& bundle, const LdmConfig& config,
                          std::optional<LatentDiffusion> resume = std::nullopt, const LogFn& log = {});

// Standard normal start, strided reverse steps; returns denormalized latents.
torch::Tensor sample_unconditional(const LatentDiffusion& ldm, const StepMap& steps, int n, int h, int w,
                                   std::uint64_t seed);

Checkpoint to_checkpoint(const LatentDiffusion& ldm);
void save_ldm(const LatentDiffusion& ldm, const std::filesystem::path& dir);
LatentDiffusion load_ldm(const std::filesystem::path& dir);

}  // namespace panodiff::diffusion
