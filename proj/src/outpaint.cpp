#include "panodiff/outpaint.hpp"

#include <cmath>
#include <fstream>
#include <vector>

#include "panodiff/error.hpp"
#include "panodiff/image_io.hpp"
#include "panodiff/tensor.hpp"

namespace panodiff::outpaint {

using nlohmann::json;

void OutpaintRequest::validate() const {
  if (rgb.channels() != 3) throw InvalidArgument("outpaint: rgb must have 3 channels");
  if (rgb.height() % ae::kFactor != 0 || rgb.width() % ae::kFactor != 0) {
    throw InvalidArgument("outpaint: image dims must be divisible by 4");
  }
  if (mask.height() != rgb.height() || mask.width() != rgb.width()) throw InvalidArgument("outpaint: mask size differs from image");
  if (depth) {
    if (depth->channels() != 1 || depth->height() != rgb.height() || depth->width() != rgb.width()) {
      throw InvalidArgument("outpaint: depth must be H x W x 1 matching the image");
    }
  }
  if (depth_mask && (depth_mask->height() != rgb.height() || depth_mask->width() != rgb.width())) {
    throw InvalidArgument("outpaint: depth mask size differs from image");
  }
  if (depth_mask && !depth) throw InvalidArgument("outpaint: depth mask given without depth");
  if (n_samples < 1) throw InvalidArgument("outpaint: n_samples must be >= 1");
  if (steps < 1) throw InvalidArgument("outpaint: steps must be >= 1");
}

Image mirror_fill(const Image& image, const Mask& mask) {
  if (image.height() != mask.height() || image.width() != mask.width()) {
    throw InvalidArgument("mirror_fill: mask size does not match the image");
  }
  const int h = image.height(), w = image.width(), ch = image.channels();
  std::vector<double> mean(static_cast<std::size_t>(ch), 0.0);
  std::size_t visible = 0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!mask.visible(r, c)) continue;
      ++visible;
      for (int k = 0; k < ch; ++k) mean[static_cast<std::size_t>(k)] += image.at(r, c, k);
    }
  }
  for (auto& m : mean) m = visible > 0 ? m / static_cast<double>(visible) : 0.0;

  auto wrap = [w](int c) { return ((c % w) + w) % w; };
  Image out = image;
  for (int r = 0; r < h; ++r) {
    bool any = false;
    for (int c = 0; c < w && !any; ++c) any = mask.visible(r, c);
    for (int c = 0; c < w; ++c) {
      if (mask.visible(r, c)) continue;
      if (!any) {
        for (int k = 0; k < ch; ++k) out.at(r, c, k) = static_cast<float>(mean[static_cast<std::size_t>(k)]);
        continue;
      }
      int left = 1, right = 1;
      while (!mask.visible(r, wrap(c - left))) ++left;
      while (!mask.visible(r, wrap(c + right))) ++right;
      // Reflect across the nearer boundary; fall back to the boundary pixel
      // when the reflected one is itself masked.
      const int boundary = left <= right ? wrap(c - left) : wrap(c + right);
      const int reflected = left <= right ? wrap(boundary - (left - 1)) : wrap(boundary + (right - 1));
      const int src = mask.visible(r, reflected) ? reflected : boundary;
      for (int k = 0; k < ch; ++k) out.at(r, c, k) = image.at(r, src, k);
    }
  }
  return out;
}

PreparedLatents prepare_latents(const OutpaintRequest& request, ae::AutoencoderBundle& bundle,
                                const diffusion::LatentNormalizer& normalizer, int channels, torch::Generator& gen) {
  request.validate();
  if (channels != 3 && channels != 4) throw InvalidArgument("prepare_latents: channels must be 3 or 4");
  const int h = request.rgb.height() / ae::kFactor;
  const int w = request.rgb.width() / ae::kFactor;

  auto z = bundle.encode_rgb(tensor::from_image(mirror_fill(request.rgb, request.mask)).unsqueeze(0));
  const auto rgb_mask = tensor::from_mask(downsample_mask(request.mask, ae::kFactor)).unsqueeze(0).expand({1, 3, h, w});
  auto latent_mask = rgb_mask;
  if (channels == 4) {
    torch::Tensor zd, dm;
    if (request.depth) {
      const Mask dmask = request.depth_mask.value_or(Mask(request.rgb.height(), request.rgb.width(), true));
      zd = bundle.encode_depth(tensor::from_image(mirror_fill(*request.depth, dmask)).unsqueeze(0));
      dm = tensor::from_mask(downsample_mask(dmask, ae::kFactor)).unsqueeze(0);
    } else {
      zd = torch::zeros({1, 1, h, w});
      dm = torch::zeros({1, 1, h, w});
    }
    z = torch::cat({z, zd}, 1);
    latent_mask = torch::cat({rgb_mask, dm}, 1);
  }
  auto z0 = normalizer.normalize(z);
  if (channels == 4 && !request.depth) z0.select(1, 3).copy_(tensor::randn({1, h, w}, gen));
  return {z0.contiguous(), latent_mask.contiguous()};
}

torch::Tensor outpaint_step(const torch::Tensor& z_t, int t, int t_prev, const torch::Tensor& z0_visible,
                            const torch::Tensor& latent_mask, const diffusion::Denoiser& denoiser,
                            const diffusion::NoiseSchedule& schedule, const torch::Tensor& eps_visible,
                            const torch::Tensor& noise) {
  if (!z_t.sizes().equals(z0_visible.sizes()) || !z_t.sizes().equals(latent_mask.sizes())) {
    throw InvalidArgument("outpaint_step: shape mismatch");
  }
  const auto visible = t_prev == 0 ? z0_visible : diffusion::q_sample(z0_visible, t_prev, eps_visible, schedule);
  const auto invisible = diffusion::ddpm_step(z_t, denoiser(z_t, t), t, t_prev, schedule, noise);
  return latent_mask * visible + (1 - latent_mask) * invisible;
}

torch::Tensor outpaint_step(const torch::Tensor& z_t, int t, int t_prev, const torch::Tensor& z0_visible,
                            const torch::Tensor& latent_mask, const diffusion::Denoiser& denoiser,
                            const diffusion::NoiseSchedule& schedule, torch::Generator& gen) {
  const auto eps_visible = tensor::randn(z_t.sizes(), gen);
  const auto noise = tensor::randn(z_t.sizes(), gen);
  return outpaint_step(z_t, t, t_prev, z0_visible, latent_mask, denoiser, schedule, eps_visible, noise);
}

RotationLedger::RotationLedger(int width) : width_(width) {
  if (width < 0) throw InvalidArgument("RotationLedger: negative width");
}

void RotationLedger::record(int shift) { shifts_.push_back(shift); }

int RotationLedger::cumulative() const {
  if (width_ == 0) return 0;
  long long total = 0;
  for (int s : shifts_) total += s;
  return static_cast<int>(((total % width_) + width_) % width_);
}

std::uint64_t RotationLedger::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](std::int64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= static_cast<std::uint64_t>(v >> (8 * i)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  feed(width_);
  for (int s : shifts_) feed(s);
  feed(cumulative());
  return h;
}

AlignedLatents align_rotate(const torch::Tensor& z, const torch::Tensor& latent_mask, const torch::Tensor& z0_visible,
                            RotationLedger& ledger) {
  const auto w = z.size(-1);
  if (w % 4 != 0) throw InvalidArgument("align_rotate: latent width must be divisible by 4");
  if (ledger.width() != w) throw InvalidArgument("align_rotate: ledger width differs from latent width");
  const int shift = static_cast<int>(w / 4);
  ledger.record(shift);
  return {tensor::roll_width(z, shift), tensor::roll_width(latent_mask, shift), tensor::roll_width(z0_visible, shift)};
}

std::uint64_t sample_seed(std::uint64_t seed, int k) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(k + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

OutpaintResult outpaint(const OutpaintRequest& request, Models& models) {
  request.validate();
  if (!models.bundle.rgb || !models.ldm.ema) throw InvalidState("outpaint: models not loaded");
  torch::NoGradGuard no_grad;
  const auto& ldm = models.ldm;
  const int channels = ldm.config.latent_channels();
  if (channels == 4 && !models.bundle.depth) throw InvalidState("outpaint: depth autoencoder not loaded");
  const auto step_map = diffusion::make_step_map(ldm.schedule.steps(), request.steps);
  const auto denoiser = ldm.denoiser();

  OutpaintResult result;
  for (int k = 0; k < request.n_samples; ++k) {
    const std::uint64_t seed = sample_seed(request.seed, k);
    auto gen = tensor::make_generator(seed);
    const PreparedLatents prepared = prepare_latents(request, models.bundle, ldm.normalizer, channels, gen);
    auto z0_visible = prepared.z0_visible;
    auto latent_mask = prepared.latent_mask;
    auto z = tensor::randn(z0_visible.sizes(), gen);
    RotationLedger ledger(static_cast<int>(z.size(-1)));
    for (std::size_t i = 0; i < step_map.steps.size(); ++i) {
      if (request.align) {
        auto rotated = align_rotate(z, latent_mask, z0_visible, ledger);
        z = rotated.z;
        latent_mask = rotated.latent_mask;
        z0_visible = rotated.z0_visible;
      }
      z = outpaint_step(z, step_map.steps[i], step_map.next(i), z0_visible, latent_mask, denoiser, ldm.schedule, gen);
    }
    z = ldm.normalizer.denormalize(tensor::roll_width(z, -ledger.cumulative()));

    Panorama pano;
    pano.rgb = tensor::to_image(models.bundle.decode_rgb(z.slice(1, 0, 3)));
    if (channels == 4) pano.depth = tensor::to_image(models.bundle.decode_depth(z.slice(1, 3, 4)));
    if (request.composite) {
      for (int r = 0; r < pano.rgb.height(); ++r) {
        for (int c = 0; c < pano.rgb.width(); ++c) {
          if (request.mask.visible(r, c)) {
            for (int ch = 0; ch < 3; ++ch) pano.rgb.at(r, c, ch) = request.rgb.at(r, c, ch);
          }
          if (channels == 4 && request.depth && (!request.depth_mask || request.depth_mask->visible(r, c))) {
            pano.depth.at(r, c) = request.depth->at(r, c);
          }
        }
      }
    }
    result.samples.push_back(std::move(pano));
    result.ledgers.push_back(std::move(ledger));
    result.sample_seeds.push_back(seed);
  }
  return result;
}

json write_outputs(const std::filesystem::path& dir, const OutpaintRequest& request, const OutpaintResult& result) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string());
  json samples = json::array();
  for (std::size_t k = 0; k < result.samples.size(); ++k) {
    const std::string stem = request.id + "_sample" + std::to_string(k);
    io::write_rgb_png(dir / (stem + "_rgb.png"), result.samples[k].rgb);
    json entry{{"index", k},
               {"seed", result.sample_seeds[k]},
               {"rgb", stem + "_rgb.png"},
               {"cumulative_shift", result.ledgers[k].cumulative()},
               {"rotations", result.ledgers[k].shifts().size()},
               {"ledger_checksum", result.ledgers[k].checksum()}};
    if (!result.samples[k].depth.empty()) {
      io::write_depth_png(dir / (stem + "_depth.png"), result.samples[k].depth);
      entry["depth"] = stem + "_depth.png";
    }
    samples.push_back(entry);
  }
  json sidecar{{"id", request.id},
               {"seed", request.seed},
               {"align", request.align},
               {"composite", request.composite},
               {"steps", request.steps},
               {"n_samples", request.n_samples},
               {"depth_given", request.depth.has_value()},
               {"samples", samples}};
  std::ofstream out(dir / (request.id + "_outpaint.json"));
  if (!out) throw IoError("cannot write sidecar in " + dir.string());
  out << sidecar.dump(2) << "\n";
  return sidecar;
}

}  // namespace panodiff::outpaint
