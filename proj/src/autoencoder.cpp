#include "panodiff/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "panodiff/error.hpp"
#include "panodiff/tensor.hpp"

namespace panodiff::ae {

using nlohmann::json;

std::string to_string(Modality modality) { return modality == Modality::kRgb ? "rgb" : "depth"; }

Modality modality_from_string(const std::string& name) {
  if (name == "rgb") return Modality::kRgb;
  if (name == "depth") return Modality::kDepth;
  throw InvalidArgument("unknown modality '" + name + "'");
}

void AutoencoderConfig::validate() const {
  if (hidden1 <= 0 || hidden2 <= 0) throw InvalidArgument("autoencoder widths must be positive");
  if (codebook_size <= 0) throw InvalidArgument("codebook_size must be positive");
  if (epochs < 0 || batch_size <= 0) throw InvalidArgument("epochs must be >= 0 and batch_size > 0");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
  if (!(d_max > 0.0)) throw InvalidArgument("d_max must be positive");
}

void to_json(json& j, const AutoencoderConfig& c) {
  j = json{{"modality", to_string(c.modality)},
           {"hidden1", c.hidden1},
           {"hidden2", c.hidden2},
           {"codebook_size", c.codebook_size},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"learning_rate", c.learning_rate},
           {"commitment_weight", c.commitment_weight},
           {"d_max", c.d_max},
           {"seed", c.seed}};
}

void from_json(const json& j, AutoencoderConfig& c) {
  AutoencoderConfig d;
  c.modality = modality_from_string(j.value("modality", to_string(d.modality)));
  c.hidden1 = j.value("hidden1", d.hidden1);
  c.hidden2 = j.value("hidden2", d.hidden2);
  c.codebook_size = j.value("codebook_size", d.codebook_size);
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.commitment_weight = j.value("commitment_weight", d.commitment_weight);
  c.d_max = j.value("d_max", d.d_max);
  c.seed = j.value("seed", d.seed);
}

torch::Tensor depth_norm(const torch::Tensor& depth, double d_max) {
  if (!(d_max > 0.0)) throw InvalidArgument("depth_norm: d_max must be positive");
  return depth.clamp(0.0, d_max) * (2.0 / d_max) - 1.0;
}

torch::Tensor depth_denorm(const torch::Tensor& normalized, double d_max) {
  if (!(d_max > 0.0)) throw InvalidArgument("depth_denorm: d_max must be positive");
  return (normalized + 1.0) * (d_max / 2.0);
}

float depth_norm(float depth, double d_max) {
  if (!(d_max > 0.0)) throw InvalidArgument("depth_norm: d_max must be positive");
  return static_cast<float>(std::clamp<double>(depth, 0.0, d_max) * 2.0 / d_max - 1.0);
}

float depth_denorm(float normalized, double d_max) {
  if (!(d_max > 0.0)) throw InvalidArgument("depth_denorm: d_max must be positive");
  return static_cast<float>((normalized + 1.0) * d_max / 2.0);
}

VqAutoencoderImpl::VqAutoencoderImpl(const AutoencoderConfig& config) : config_(config) {
  config_.validate();
  const int cin = config_.in_channels();
  const int zc = config_.latent_channels();
  const int c1 = config_.hidden1;
  const int c2 = config_.hidden2;
  encoder_ = register_module(
      "encoder", torch::nn::Sequential(nn::WrapConv2d(cin, c1), nn::ResBlock(c1, c1), nn::WrapConv2d(c1, c2, 3, 2),
                                       nn::ResBlock(c2, c2), nn::WrapConv2d(c2, c2, 3, 2), nn::ResBlock(c2, c2),
                                       nn::group_norm(c2), torch::nn::SiLU(), nn::WrapConv2d(c2, zc)));
  dec_in_ = register_module("dec_in", nn::WrapConv2d(zc, c2));
  dec_res1_ = register_module("dec_res1", nn::ResBlock(c2, c2));
  dec_up1_ = register_module("dec_up1", nn::WrapConv2d(c2, c2));
  dec_res2_ = register_module("dec_res2", nn::ResBlock(c2, c2));
  dec_up2_ = register_module("dec_up2", nn::WrapConv2d(c2, c1));
  dec_res3_ = register_module("dec_res3", nn::ResBlock(c1, c1));
  dec_out_ = register_module("dec_out",
                             torch::nn::Sequential(nn::group_norm(c1), torch::nn::SiLU(), nn::WrapConv2d(c1, cin)));
  codebook_ = register_parameter("codebook", torch::randn({config_.codebook_size, zc}) * 0.1);
}

torch::Tensor VqAutoencoderImpl::encode(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != config_.in_channels()) {
    throw InvalidArgument("encode: expected N x " + std::to_string(config_.in_channels()) + " x H x W input");
  }
  if (x.size(2) % kFactor != 0 || x.size(3) % kFactor != 0) {
    throw InvalidArgument("encode: spatial dims must be divisible by 4");
  }
  return encoder_->forward(x);
}

QuantizeResult VqAutoencoderImpl::quantize(const torch::Tensor& z) {
  const auto n = z.size(0), c = z.size(1), h = z.size(2), w = z.size(3);
  if (c != codebook_.size(1)) throw InvalidArgument("quantize: latent channels do not match the codebook");
  const auto flat = z.permute({0, 2, 3, 1}).reshape({-1, c});
  // Direct squared distances; argmin returns the first minimum, so ties go to the lowest index.
  const auto dist = (flat.detach().unsqueeze(1) - codebook_.detach().unsqueeze(0)).pow(2).sum(-1);
  const auto indices = dist.argmin(1);
  const auto q = codebook_.index_select(0, indices).view({n, h, w, c}).permute({0, 3, 1, 2});
  QuantizeResult out;
  out.indices = indices.view({n, h, w});
  out.codebook_loss = (q - z.detach()).pow(2).mean();
  out.commitment_loss = (z - q.detach()).pow(2).mean();
  out.quantized = z.requires_grad() ? z + (q - z).detach() : q;
  return out;
}

torch::Tensor VqAutoencoderImpl::decode_quantized(const torch::Tensor& zq) {
  if (zq.dim() != 4 || zq.size(1) != config_.latent_channels()) {
    throw InvalidArgument("decode: expected N x " + std::to_string(config_.latent_channels()) + " x h x w latent");
  }
  auto x = dec_res1_->forward(dec_in_->forward(zq));
  x = dec_res2_->forward(dec_up1_->forward(nn::upsample2x(x)));
  x = dec_res3_->forward(dec_up2_->forward(nn::upsample2x(x)));
  return dec_out_->forward(x);
}

torch::Tensor VqAutoencoderImpl::decode(const torch::Tensor& z) {
  return decode_quantized(quantize(z).quantized).clamp(-1.0, 1.0);
}

torch::Tensor modality_batch(const std::vector<Panorama>& panos, const AutoencoderConfig& config) {
  if (panos.empty()) throw InvalidArgument("modality_batch: no panoramas");
  std::vector<Image> images;
  images.reserve(panos.size());
  for (const auto& p : panos) images.push_back(config.modality == Modality::kRgb ? p.rgb : p.depth);
  auto x = tensor::stack(images);
  return config.modality == Modality::kRgb ? x : depth_norm(x, config.d_max);
}

namespace {

template <typename Fn>
torch::Tensor batched(const torch::Tensor& x, int batch, Fn&& fn) {
  std::vector<torch::Tensor> parts;
  for (std::int64_t i = 0; i < x.size(0); i += batch) parts.push_back(fn(x.slice(0, i, std::min<std::int64_t>(i + batch, x.size(0)))));
  return torch::cat(parts);
}

}  // namespace

AutoencoderReport evaluate_autoencoder(VqAutoencoder& model, const std::vector<Panorama>& panos) {
  torch::NoGradGuard no_grad;
  model->eval();
  const auto& config = model->config();
  const auto x = modality_batch(panos, config);
  AutoencoderReport report;
  std::vector<torch::Tensor> idx;
  const auto y = batched(x, 16, [&](const torch::Tensor& b) {
    auto z = model->encode(b);
    idx.push_back(model->quantize(z).indices.flatten());
    return model->decode(z);
  });
  const double mse = (y - x).pow(2).mean().item<double>();
  report.val_psnr = mse > 0.0 ? 10.0 * std::log10(4.0 / mse) : std::numeric_limits<double>::infinity();
  if (config.modality == Modality::kDepth) {
    report.val_depth_mae = (depth_denorm(y, config.d_max) - depth_denorm(x, config.d_max)).abs().mean().item<double>();
  }
  report.codes_used = static_cast<int>(std::get<0>(at::_unique(torch::cat(idx))).numel());
  return report;
}

TrainedAutoencoder train_autoencoder(const synth::Dataset& data, const AutoencoderConfig& config, const LogFn& log) {
  config.validate();
  std::vector<Panorama> train, val;
  for (std::size_t i = 0; i < data.panoramas.size(); ++i) {
    const auto split = data.manifest.items.at(i).split;
    if (split == synth::Split::kTrain) train.push_back(data.panoramas[i]);
    if (split == synth::Split::kVal) val.push_back(data.panoramas[i]);
  }
  if (train.empty()) throw InvalidArgument("train_autoencoder: empty training split");

  torch::manual_seed(config.seed);
  TrainedAutoencoder out{config, VqAutoencoder(config), {}};
  auto& model = out.model;
  const auto x = modality_batch(train, config);
  const auto n = x.size(0);
  {
    torch::NoGradGuard no_grad;
    const auto z = model->encode(x.slice(0, 0, std::min<std::int64_t>(64, n)));
    const auto flat = z.permute({0, 2, 3, 1}).reshape({-1, z.size(1)});
    auto gen = tensor::make_generator(config.seed);
    const auto pick = torch::randperm(flat.size(0), gen, torch::kLong);
    for (int k = 0; k < config.codebook_size; ++k) model->codebook()[k].copy_(flat[pick[k % flat.size(0)].item<std::int64_t>()]);
  }
  torch::optim::Adam opt(model->parameters(), torch::optim::AdamOptions(config.learning_rate));
  auto gen = tensor::make_generator(config.seed + 1);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    model->train();
    const auto perm = torch::randperm(n, gen, torch::kLong);
    double total = 0.0;
    for (std::int64_t i = 0; i < n; i += config.batch_size) {
      const auto idx = perm.slice(0, i, std::min<std::int64_t>(i + config.batch_size, n));
      const auto batch = x.index_select(0, idx);
      const auto q = model->quantize(model->encode(batch));
      const auto recon = (model->decode_quantized(q.quantized) - batch).abs().mean();
      const auto loss = recon + q.codebook_loss + config.commitment_weight * q.commitment_loss;
      opt.zero_grad();
      loss.backward();
      opt.step();
      total += recon.item<double>() * static_cast<double>(batch.size(0));
    }
    out.report.epoch_losses.push_back(total / static_cast<double>(n));
    if (log) log(json{{"stage", "vae-" + to_string(config.modality)}, {"epoch", epoch}, {"l1", out.report.epoch_losses.back()}});
  }
  model->eval();
  if (!val.empty()) {
    const auto report = evaluate_autoencoder(model, val);
    out.report.val_psnr = report.val_psnr;
    out.report.val_depth_mae = report.val_depth_mae;
    out.report.codes_used = report.codes_used;
  }
  return out;
}

Checkpoint to_checkpoint(const TrainedAutoencoder& trained) {
  Checkpoint ck;
  ck.kind = "vae-" + to_string(trained.config.modality);
  ck.config = trained.config;
  ck.seed = trained.config.seed;
  ck.extra = json{{"epoch_losses", trained.report.epoch_losses},
                  {"val_psnr", trained.report.val_psnr},
                  {"val_depth_mae", trained.report.val_depth_mae},
                  {"codes_used", trained.report.codes_used}};
  ck.tensors = module_state(*trained.model);
  return ck;
}

void save_autoencoder(const TrainedAutoencoder& trained, const std::filesystem::path& dir) {
  save_checkpoint(to_checkpoint(trained), dir);
}

TrainedAutoencoder load_autoencoder(const std::filesystem::path& dir) {
  const Checkpoint ck = load_checkpoint(dir);
  if (ck.kind != "vae-rgb" && ck.kind != "vae-depth") throw ParseError("not an autoencoder checkpoint: " + dir.string());
  TrainedAutoencoder out;
  out.config = ck.config.get<AutoencoderConfig>();
  out.model = VqAutoencoder(out.config);
  load_module_state(*out.model, ck.tensors);
  out.model->eval();
  out.report.epoch_losses = ck.extra.value("epoch_losses", std::vector<double>{});
  out.report.val_psnr = ck.extra.value("val_psnr", 0.0);
  out.report.val_depth_mae = ck.extra.value("val_depth_mae", 0.0);
  out.report.codes_used = ck.extra.value("codes_used", 0);
  return out;
}

torch::Tensor AutoencoderBundle::encode_rgb(const torch::Tensor& x) {
  torch::NoGradGuard no_grad;
  return batched(x, 16, [&](const torch::Tensor& b) { return rgb->encode(b); });
}

torch::Tensor AutoencoderBundle::encode_depth(const torch::Tensor& depth_meters) {
  torch::NoGradGuard no_grad;
  const auto x = depth_norm(depth_meters, d_max());
  return batched(x, 16, [&](const torch::Tensor& b) { return depth->encode(b); });
}

torch::Tensor AutoencoderBundle::decode_rgb(const torch::Tensor& z) {
  torch::NoGradGuard no_grad;
  return batched(z, 16, [&](const torch::Tensor& b) { return rgb->decode(b); });
}

torch::Tensor AutoencoderBundle::decode_depth(const torch::Tensor& z) {
  torch::NoGradGuard no_grad;
  return depth_denorm(batched(z, 16, [&](const torch::Tensor& b) { return depth->decode(b); }), d_max());
}

AutoencoderBundle load_bundle(const std::filesystem::path& rgb_dir, const std::filesystem::path& depth_dir) {
  if (!checkpoint_exists(rgb_dir)) throw InvalidState("missing stage vae-rgb: no checkpoint at " + rgb_dir.string());
  if (!checkpoint_exists(depth_dir)) throw InvalidState("missing stage vae-depth: no checkpoint at " + depth_dir.string());
  auto rgb = load_autoencoder(rgb_dir);
  auto depth = load_autoencoder(depth_dir);
  if (rgb.config.modality != Modality::kRgb || depth.config.modality != Modality::kDepth) {
    throw ParseError("autoencoder checkpoints have the wrong modality");
  }
  return AutoencoderBundle{rgb.model, depth.model};
}

}  // namespace panodiff::ae
