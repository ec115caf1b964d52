#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "panodiff/autoencoder.hpp"
#include "panodiff/diffusion.hpp"
#include "panodiff/pano.hpp"

namespace panodiff::outpaint {

struct OutpaintRequest {
  std::string id = "request";
  Image rgb;  // H x W x 3 in [-1, 1]; masked pixels are ignored
  Mask mask;
  std::optional<Image> depth;       // meters
  std::optional<Mask> depth_mask;   // defaults to all-visible when depth is given
  int n_samples = 1;
  bool align = false;
  bool composite = false;
  std::uint64_t seed = 0;
  int steps = 200;

  void validate() const;
};

// Both tensors are 1 x C x h x w in the normalized latent space.
struct PreparedLatents {
  torch::Tensor z0_visible;
  torch::Tensor latent_mask;
};

// Replaces each masked pixel by reflecting its row across the nearest visible
// pixel (circularly); rows with nothing visible take the visible mean. Output
// depends only on visible pixels.
Image mirror_fill(const Image& image, const Mask& mask);

// RGB latent from the mirror-filled masked image; the depth channel is standard
// normal noise with an all-zero mask unless depth is supplied.
PreparedLatents prepare_latents(const OutpaintRequest& request, ae::AutoencoderBundle& bundle,
                                const diffusion::LatentNormalizer& normalizer, int channels,
                                torch::Generator& gen);

// m * q_sample(z0_visible, t_prev, eps_visible) + (1 - m) * ddpm_step(z_t, eps_theta(z_t, t), t, t_prev, noise).
// At t_prev = 0 the visible branch is z0_visible itself.
torch::Tensor outpaint_step(const torch::Tensor& z_t, int t, int t_prev, const torch::Tensor& z0_visible,
                            const torch::Tensor& latent_mask, const diffusion::Denoiser& denoiser,
                            const diffusion::NoiseSchedule& schedule, const torch::Tensor& eps_visible,
                            const torch::Tensor& noise);
torch::Tensor outpaint_step(const torch::Tensor& z_t, int t, int t_prev, const torch::Tensor& z0_visible,
                            const torch::Tensor& latent_mask, const diffusion::Denoiser& denoiser,
                            const diffusion::NoiseSchedule& schedule, torch::Generator& gen);

// Bookkeeping for the 90 degree per-step rotations.
class RotationLedger {
 public:
  explicit RotationLedger(int width = 0);

  int width() const { return width_; }
  int shift_per_step() const { return width_ / 4; }
  void record(int shift);
  const std::vector<int>& shifts() const { return shifts_; }
  int cumulative() const;  // sum of shifts mod width
  std::uint64_t checksum() const;

 private:
  int width_;
  std::vector<int> shifts_;
};

struct AlignedLatents {
  torch::Tensor z;
  torch::Tensor latent_mask;
  torch::Tensor z0_visible;
};

// Rolls all three tensors by width / 4 latent columns and records the shift.
AlignedLatents align_rotate(const torch::Tensor& z, const torch::Tensor& latent_mask, const torch::Tensor& z0_visible,
                            RotationLedger& ledger);

struct Models {
  ae::AutoencoderBundle bundle;
  diffusion::LatentDiffusion ldm;
};

struct OutpaintResult {
  std::vector<Panorama> samples;  // depth is empty for an RGB-only model
  std::vector<RotationLedger> ledgers;
  std::vector<std::uint64_t> sample_seeds;
};

OutpaintResult outpaint(const OutpaintRequest& request, Models& models);

// `{id}_sample{k}_rgb.png`, `{id}_sample{k}_depth.png` and `{id}_outpaint.json`.
nlohmann::json write_outputs(const std::filesystem::path& dir, const OutpaintRequest& request,
                             const OutpaintResult& result);

std::uint64_t sample_seed(std::uint64_t seed, int k);

}  // namespace panodiff::outpaint
