#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "panodiff/checkpoint.hpp"
#include "panodiff/layers.hpp"
#include "panodiff/synthdata.hpp"

namespace panodiff::ae {

inline constexpr int kFactor = 4;

enum class Modality { kRgb, kDepth };
std::string to_string(Modality modality);
Modality modality_from_string(const std::string& name);

struct AutoencoderConfig {
  Modality modality = Modality::kRgb;
  int hidden1 = 16;
  int hidden2 = 32;
  int codebook_size = 256;
  int epochs = 8;
  int batch_size = 8;
  double learning_rate = 2e-3;
  double commitment_weight = 0.25;
  double d_max = 10.0;  // depth normalization range in meters
  std::uint64_t seed = 1;

  int in_channels() const { return modality == Modality::kRgb ? 3 : 1; }
  int latent_channels() const { return in_channels(); }
  void validate() const;
};

void to_json(nlohmann::json& j, const AutoencoderConfig& c);
void from_json(const nlohmann::json& j, AutoencoderConfig& c);

// clip(d, 0, d_max) * 2 / d_max - 1, and its inverse on [-1, 1].
torch::Tensor depth_norm(const torch::Tensor& depth, double d_max);
torch::Tensor depth_denorm(const torch::Tensor& normalized, double d_max);
float depth_norm(float depth, double d_max);
float depth_denorm(float normalized, double d_max);

struct QuantizeResult {
  torch::Tensor quantized;  // straight-through: forward value is the codebook entry
  torch::Tensor indices;    // N x h x w, int64
  torch::Tensor codebook_loss;
  torch::Tensor commitment_loss;
};

class VqAutoencoderImpl : public torch::nn::Module {
 public:
  explicit VqAutoencoderImpl(const AutoencoderConfig& config);

  // N x C x H x W in [-1, 1] to the continuous N x c x H/4 x W/4 latent.
  torch::Tensor encode(const torch::Tensor& x);
  // Nearest codebook entry per latent cell; ties go to the lowest index.
  QuantizeResult quantize(const torch::Tensor& z);
  // Raw decoder output for an already quantized latent.
  torch::Tensor decode_quantized(const torch::Tensor& zq);
  // Quantizes, decodes, and clamps to [-1, 1].
  torch::Tensor decode(const torch::Tensor& z);

  torch::Tensor& codebook() { return codebook_; }
  const AutoencoderConfig& config() const { return config_; }

 private:
  AutoencoderConfig config_;
  torch::nn::Sequential encoder_{nullptr};
  nn::WrapConv2d dec_in_{nullptr}, dec_up1_{nullptr}, dec_up2_{nullptr};
  nn::ResBlock dec_res1_{nullptr}, dec_res2_{nullptr}, dec_res3_{nullptr};
  torch::nn::Sequential dec_out_{nullptr};
  torch::Tensor codebook_;
};
TORCH_MODULE(VqAutoencoder);

struct AutoencoderReport {
  std::vector<double> epoch_losses;  // mean L1 reconstruction loss per epoch
  double val_psnr = 0.0;             // quantized reconstruction, [-1, 1] scale
  double val_depth_mae = 0.0;        // meters; depth modality only
  int codes_used = 0;
};

struct TrainedAutoencoder {
  AutoencoderConfig config;
  VqAutoencoder model{nullptr};
  AutoencoderReport report;
};

using LogFn = std::function<void(const nlohmann::json&)>;

// L1 reconstruction + codebook + commitment_weight * commitment, Adam, fixed epochs.
// The codebook is seeded from encoder outputs on the first training batch.
TrainedAutoencoder train_autoencoder(const synth::Dataset& data, const AutoencoderConfig& config,
                                     const LogFn& log = {});

// Model inputs for one modality: rgb as-is, depth normalized by d_max.
torch::Tensor modality_batch(const std::vector<Panorama>& panos, const AutoencoderConfig& config);
AutoencoderReport evaluate_autoencoder(VqAutoencoder& model, const std::vector<Panorama>& panos);

Checkpoint to_checkpoint(const TrainedAutoencoder& trained);
void save_autoencoder(const TrainedAutoencoder& trained, const std::filesystem::path& dir);
TrainedAutoencoder load_autoencoder(const std::filesystem::path& dir);

// Frozen RGB and depth autoencoders used by the diffusion stages.
struct AutoencoderBundle {
  VqAutoencoder rgb{nullptr};
  VqAutoencoder depth{nullptr};

  double d_max() const { return depth->config().d_max; }
  torch::Tensor encode_rgb(const torch::Tensor& rgb);
  torch::Tensor encode_depth(const torch::Tensor& depth_meters);
  torch::Tensor decode_rgb(const torch::Tensor& z);
  torch::Tensor decode_depth(const torch::Tensor& z);  // meters
};

AutoencoderBundle load_bundle(const std::filesystem::path& rgb_dir, const std::filesystem::path& depth_dir);

}  // namespace panodiff::ae
