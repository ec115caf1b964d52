#include "panodiff/diffusion.hpp"

#include <cmath>
#include <numeric>

#include "panodiff/error.hpp"
#include "panodiff/tensor.hpp"

namespace panodiff::diffusion {

using nlohmann::json;

NoiseSchedule::NoiseSchedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw InvalidArgument("schedule: need at least one step");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw InvalidArgument("schedule: need 0 < beta_start <= beta_end < 1");
  }
  betas_.resize(steps);
  alpha_bars_.resize(steps);
  double prod = 1.0;
  for (int i = 0; i < steps; ++i) {
    betas_[i] = steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / (steps - 1);
    prod *= 1.0 - betas_[i];
    alpha_bars_[i] = prod;
  }
}

void NoiseSchedule::check(int t, int lo) const {
  if (t < lo || t > steps()) {
    throw InvalidArgument("timestep " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                          std::to_string(steps()) + "]");
  }
}

double NoiseSchedule::beta(int t) const {
  check(t, 1);
  return betas_[t - 1];
}

double NoiseSchedule::alpha_bar(int t) const {
  check(t, 0);
  return t == 0 ? 1.0 : alpha_bars_[t - 1];
}

double NoiseSchedule::posterior_variance(int t) const {
  return beta(t) * (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t));
}

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
  return NoiseSchedule(steps, beta_start, beta_end);
}

StepMap make_step_map(int train_steps, int inference_steps) {
  if (inference_steps < 1 || inference_steps > train_steps) {
    throw InvalidArgument("step map: need 1 <= inference steps <= training steps");
  }
  StepMap map;
  if (inference_steps == 1) {
    map.steps = {train_steps};
    return map;
  }
  for (int k = inference_steps - 1; k >= 0; --k) {
    const double t = 1.0 + static_cast<double>(k) * (train_steps - 1) / (inference_steps - 1);
    map.steps.push_back(static_cast<int>(std::floor(t + 0.5)));
  }
  return map;
}

torch::Tensor q_sample(const torch::Tensor& z0, int t, const torch::Tensor& eps, const NoiseSchedule& schedule) {
  if (t < 1 || t > schedule.steps()) throw InvalidArgument("q_sample: timestep out of range");
  if (!z0.sizes().equals(eps.sizes())) throw InvalidArgument("q_sample: noise shape differs from z0");
  const double ab = schedule.alpha_bar(t);
  return std::sqrt(ab) * z0 + std::sqrt(1.0 - ab) * eps;
}

torch::Tensor ddpm_step(const torch::Tensor& z_t, const torch::Tensor& eps_hat, int t, const NoiseSchedule& schedule,
                        const torch::Tensor& noise) {
  return ddpm_step(z_t, eps_hat, t, t - 1, schedule, noise);
}

torch::Tensor ddpm_step(const torch::Tensor& z_t, const torch::Tensor& eps_hat, int t, int t_prev,
                        const NoiseSchedule& schedule, const torch::Tensor& noise) {
  if (t < 1 || t > schedule.steps()) throw InvalidArgument("ddpm_step: timestep out of range");
  if (t_prev < 0 || t_prev >= t) throw InvalidArgument("ddpm_step: need 0 <= t_prev < t");
  if (!z_t.sizes().equals(eps_hat.sizes())) throw InvalidArgument("ddpm_step: eps_hat shape differs from z_t");
  const double ab_t = schedule.alpha_bar(t);
  const double ab_prev = schedule.alpha_bar(t_prev);
  const double alpha = ab_t / ab_prev;
  const double beta = 1.0 - alpha;
  auto out = (z_t - (beta / std::sqrt(1.0 - ab_t)) * eps_hat) / std::sqrt(alpha);
  if (t_prev > 0) {
    if (!noise.defined() || !noise.sizes().equals(z_t.sizes())) throw InvalidArgument("ddpm_step: noise shape differs from z_t");
    out = out + std::sqrt(beta * (1.0 - ab_prev) / (1.0 - ab_t)) * noise;
  }
  return out;
}

void to_json(json& j, const UNetConfig& c) {
  j = json{{"in_channels", c.in_channels},
           {"hidden1", c.hidden1},
           {"hidden2", c.hidden2},
           {"padding", c.padding == nn::Padding::kCircular ? "circular" : "zero"}};
}

void from_json(const json& j, UNetConfig& c) {
  UNetConfig d;
  c.in_channels = j.value("in_channels", d.in_channels);
  c.hidden1 = j.value("hidden1", d.hidden1);
  c.hidden2 = j.value("hidden2", d.hidden2);
  const auto pad = j.value("padding", std::string("zero"));
  if (pad != "zero" && pad != "circular") throw InvalidArgument("unet padding must be 'zero' or 'circular'");
  c.padding = pad == "circular" ? nn::Padding::kCircular : nn::Padding::kZero;
}

torch::Tensor timestep_embedding(const torch::Tensor& t, int dim) {
  const int half = dim / 2;
  const auto freqs = torch::exp(-std::log(10000.0) * torch::arange(half, torch::kFloat32) / half);
  const auto args = t.to(torch::kFloat32).unsqueeze(1) * freqs.unsqueeze(0);
  return torch::cat({args.sin(), args.cos()}, 1);
}

UNetImpl::UNetImpl(const UNetConfig& config) : config_(config) {
  const int c = config.in_channels;
  const int c1 = config.hidden1;
  const int c2 = config.hidden2;
  const int td = 4 * c1;
  const auto p = config.padding;
  if (c <= 0 || c1 <= 0 || c2 <= 0 || c1 % 2 != 0) throw InvalidArgument("unet: invalid widths");
  time_mlp_ = register_module("time_mlp", torch::nn::Sequential(torch::nn::Linear(c1, td), torch::nn::SiLU(),
                                                                torch::nn::Linear(td, td)));
  in_ = register_module("in", nn::WrapConv2d(c, c1, 3, 1, p));
  enc1_ = register_module("enc1", nn::ResBlock(c1, c1, td, p));
  down1_ = register_module("down1", nn::WrapConv2d(c1, c1, 3, 2, p));
  enc2_ = register_module("enc2", nn::ResBlock(c1, c2, td, p));
  down2_ = register_module("down2", nn::WrapConv2d(c2, c2, 3, 2, p));
  mid1_ = register_module("mid1", nn::ResBlock(c2, c2, td, p));
  mid2_ = register_module("mid2", nn::ResBlock(c2, c2, td, p));
  up2_ = register_module("up2", nn::WrapConv2d(c2, c2, 3, 1, p));
  dec2_ = register_module("dec2", nn::ResBlock(2 * c2, c2, td, p));
  up1_ = register_module("up1", nn::WrapConv2d(c2, c1, 3, 1, p));
  dec1_ = register_module("dec1", nn::ResBlock(2 * c1, c1, td, p));
  dec0_ = register_module("dec0", nn::ResBlock(2 * c1, c1, td, p));
  out_ = register_module("out", torch::nn::Sequential(nn::group_norm(c1), torch::nn::SiLU(), nn::WrapConv2d(c1, c, 3, 1, p)));
}

torch::Tensor UNetImpl::forward(const torch::Tensor& z, const torch::Tensor& t) {
  if (z.dim() != 4 || z.size(1) != config_.in_channels) throw InvalidArgument("unet: wrong latent channel count");
  if (z.size(2) % 4 != 0 || z.size(3) % 4 != 0) throw InvalidArgument("unet: latent dims must be divisible by 4");
  const auto e = time_mlp_->forward(timestep_embedding(t, config_.hidden1));
  const auto h0 = in_->forward(z);
  const auto h1 = enc1_->forward(h0, e);
  const auto h2 = enc2_->forward(down1_->forward(h1), e);
  auto h = mid2_->forward(mid1_->forward(down2_->forward(h2), e), e);
  h = dec2_->forward(torch::cat({up2_->forward(nn::upsample2x(h)), h2}, 1), e);
  h = dec1_->forward(torch::cat({up1_->forward(nn::upsample2x(h)), h1}, 1), e);
  h = dec0_->forward(torch::cat({h, h0}, 1), e);
  return out_->forward(h);
}

torch::Tensor LatentNormalizer::normalize(const torch::Tensor& z) const {
  return (z - mean.view({1, -1, 1, 1})) / std.view({1, -1, 1, 1});
}

torch::Tensor LatentNormalizer::denormalize(const torch::Tensor& z) const {
  return z * std.view({1, -1, 1, 1}) + mean.view({1, -1, 1, 1});
}

void LdmConfig::validate() const {
  if (unet.in_channels != latent_channels()) throw InvalidArgument("ldm: unet channels must match use_depth");
  if (train_steps < 0 || batch_size <= 0) throw InvalidArgument("ldm: train_steps >= 0 and batch_size > 0 required");
  if (!(learning_rate > 0.0)) throw InvalidArgument("ldm: learning_rate must be positive");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw InvalidArgument("ldm: ema_decay must lie in [0, 1)");
  if (!(depth_sparsity_prob >= 0.0 && depth_sparsity_prob <= 1.0)) throw InvalidArgument("ldm: depth_sparsity_prob outside [0, 1]");
  if (!(depth_sparsity_fraction >= 0.0 && depth_sparsity_fraction <= 1.0)) {
    throw InvalidArgument("ldm: depth_sparsity_fraction outside [0, 1]");
  }
  if (depth_sparsity_prob > 0.0 && (!use_depth || sparse_variants < 1)) {
    throw InvalidArgument("ldm: depth sparsity needs use_depth and sparse_variants >= 1");
  }
  if (log_every <= 0) throw InvalidArgument("ldm: log_every must be positive");
  make_schedule(schedule_steps, beta_start, beta_end);
}

void to_json(json& j, const LdmConfig& c) {
  j = json{{"unet", c.unet},
           {"schedule_steps", c.schedule_steps},
           {"beta_start", c.beta_start},
           {"beta_end", c.beta_end},
           {"use_depth", c.use_depth},
           {"train_steps", c.train_steps},
           {"batch_size", c.batch_size},
           {"learning_rate", c.learning_rate},
           {"ema_decay", c.ema_decay},
           {"rotation_augment", c.rotation_augment},
           {"depth_sparsity_prob", c.depth_sparsity_prob},
           {"depth_sparsity_fraction", c.depth_sparsity_fraction},
           {"sparse_variants", c.sparse_variants},
           {"log_every", c.log_every},
           {"seed", c.seed}};
}

void from_json(const json& j, LdmConfig& c) {
  LdmConfig d;
  c.use_depth = j.value("use_depth", d.use_depth);
  c.unet = j.contains("unet") ? j.at("unet").get<UNetConfig>() : d.unet;
  if (!j.contains("unet") || !j.at("unet").contains("in_channels")) c.unet.in_channels = c.latent_channels();
  c.schedule_steps = j.value("schedule_steps", d.schedule_steps);
  c.beta_start = j.value("beta_start", d.beta_start);
  c.beta_end = j.value("beta_end", d.beta_end);
  c.train_steps = j.value("train_steps", d.train_steps);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.ema_decay = j.value("ema_decay", d.ema_decay);
  c.rotation_augment = j.value("rotation_augment", d.rotation_augment);
  c.depth_sparsity_prob = j.value("depth_sparsity_prob", d.depth_sparsity_prob);
  c.depth_sparsity_fraction = j.value("depth_sparsity_fraction", d.depth_sparsity_fraction);
  c.sparse_variants = j.value("sparse_variants", d.sparse_variants);
  c.log_every = j.value("log_every", d.log_every);
  c.seed = j.value("seed", d.seed);
}

Denoiser LatentDiffusion::denoiser() const {
  UNet net = ema;
  return [net](const torch::Tensor& z, int t) mutable {
    torch::NoGradGuard no_grad;
    return net->forward(z, torch::full({z.size(0)}, t, torch::kLong));
  };
}

LatentDiffusion make_ldm(const LdmConfig& config) {
  config.validate();
  torch::manual_seed(config.seed);
  LatentDiffusion ldm;
  ldm.config = config;
  ldm.schedule = make_schedule(config.schedule_steps, config.beta_start, config.beta_end);
  ldm.model = UNet(config.unet);
  ldm.ema = UNet(config.unet);
  load_module_state(*ldm.ema, module_state(*ldm.model));
  ldm.ema->eval();
  const int c = config.latent_channels();
  ldm.normalizer = {torch::zeros({c}), torch::ones({c})};
  return ldm;
}

torch::Tensor encode_split(ae::AutoencoderBundle& bundle, const std::vector<Panorama>& panos, bool use_depth) {
  std::vector<Image> rgb, depth;
  for (const auto& p : panos) {
    rgb.push_back(p.rgb);
    depth.push_back(p.depth);
  }
  auto z = bundle.encode_rgb(tensor::stack(rgb));
  if (use_depth) z = torch::cat({z, bundle.encode_depth(tensor::stack(depth))}, 1);
  return z;
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t step) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (step + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void* adam_key(const torch::Tensor& p) { return p.unsafeGetTensorImpl(); }

}  // namespace

LatentDiffusion train_ldm(const synth::Dataset& data, ae::AutoencoderBundle& bundle, const LdmConfig& config,
                          std::optional<LatentDiffusion> resume, const LogFn& log) {
  config.validate();
  if (!bundle.rgb || (config.use_depth && !bundle.depth)) throw InvalidState("train_ldm: autoencoders not loaded");
  std::vector<Panorama> train;
  for (std::size_t i = 0; i < data.panoramas.size(); ++i) {
    if (data.manifest.items.at(i).split == synth::Split::kTrain) train.push_back(data.panoramas[i]);
  }
  if (train.empty()) throw InvalidArgument("train_ldm: empty training split");

  const auto latents = encode_split(bundle, train, config.use_depth);
  const auto n = latents.size(0);
  const auto w = latents.size(3);
  // Depth latents of sparsified copies: [variant][n, 1, h, w].
  std::vector<torch::Tensor> sparse;
  if (config.depth_sparsity_prob > 0.0) {
    for (int v = 0; v < config.sparse_variants; ++v) {
      std::vector<Image> depths;
      for (std::int64_t i = 0; i < n; ++i) {
        depths.push_back(synth::sparsify_depth(train[i].depth, config.depth_sparsity_fraction,
                                               mix_seed(config.seed ^ 0x5eedULL, static_cast<std::uint64_t>(v * n + i))));
      }
      sparse.push_back(bundle.encode_depth(tensor::stack(depths)));
    }
  }

  LatentDiffusion ldm = resume ? std::move(*resume) : make_ldm(config);
  if (resume) {
    if (json(ldm.config).dump() != json(config).dump()) {
      // Only the step budget may change between a run and its resumption.
      LdmConfig a = ldm.config, b = config;
      a.train_steps = b.train_steps = 0;
      if (json(a).dump() != json(b).dump()) throw InvalidArgument("train_ldm: resume config differs from checkpoint");
      ldm.config.train_steps = config.train_steps;
    }
  } else {
    ldm.normalizer.mean = latents.mean({0, 2, 3});
    ldm.normalizer.std = latents.std({0, 2, 3}).clamp_min(1e-6);
  }
  const auto z_all = ldm.normalizer.normalize(latents);
  std::vector<torch::Tensor> sparse_norm;
  for (const auto& s : sparse) {
    sparse_norm.push_back((s - ldm.normalizer.mean[3]) / ldm.normalizer.std[3]);
  }

  auto params = ldm.model->parameters();
  torch::optim::Adam opt(params, torch::optim::AdamOptions(config.learning_rate));
  if (!ldm.adam_moments.empty()) {
    if (ldm.adam_moments.size() != params.size()) throw ParseError("train_ldm: optimizer state does not match model");
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto state = std::make_unique<torch::optim::AdamParamState>();
      state->step(ldm.adam_steps[i]);
      state->exp_avg(ldm.adam_moments[i].first.clone());
      state->exp_avg_sq(ldm.adam_moments[i].second.clone());
      opt.state()[adam_key(params[i])] = std::move(state);
    }
  }

  ldm.model->train();
  const auto& sched = ldm.schedule;
  const auto alpha_bars = [&] {
    std::vector<float> v(sched.steps());
    for (int t = 1; t <= sched.steps(); ++t) v[t - 1] = static_cast<float>(sched.alpha_bar(t));
    return torch::tensor(v);
  }();
  const int b = config.batch_size;
  double window = 0.0;
  int window_count = 0;
  while (ldm.step < config.train_steps) {
    auto gen = tensor::make_generator(mix_seed(config.seed, static_cast<std::uint64_t>(ldm.step)));
    const auto idx = torch::randint(n, {b}, gen, torch::kLong);
    auto z0 = z_all.index_select(0, idx);
    if (!sparse_norm.empty()) {
      const auto use = torch::rand({b}, gen) < config.depth_sparsity_prob;
      const auto variant = torch::randint(config.sparse_variants, {b}, gen, torch::kLong);
      for (int i = 0; i < b; ++i) {
        if (use[i].item<bool>()) {
          z0[i][3].copy_(sparse_norm[variant[i].item<std::int64_t>()][idx[i].item<std::int64_t>()][0]);
        }
      }
    }
    if (config.rotation_augment) {
      const auto shifts = torch::randint(w, {b}, gen, torch::kLong);
      std::vector<torch::Tensor> rolled;
      for (int i = 0; i < b; ++i) rolled.push_back(tensor::roll_width(z0[i], shifts[i].item<std::int64_t>()));
      z0 = torch::stack(rolled);
    }
    const auto t = torch::randint(1, sched.steps() + 1, {b}, gen, torch::kLong);
    const auto eps = torch::randn(z0.sizes(), gen);
    const auto ab = alpha_bars.index_select(0, t - 1).view({b, 1, 1, 1});
    const auto zt = ab.sqrt() * z0 + (1 - ab).sqrt() * eps;
    const auto loss = torch::mse_loss(ldm.model->forward(zt, t), eps);
    opt.zero_grad();
    loss.backward();
    opt.step();
    ++ldm.step;
    {
      torch::NoGradGuard no_grad;
      const double decay = std::min(config.ema_decay, (1.0 + ldm.step) / (10.0 + ldm.step));
      auto ema_params = ldm.ema->parameters();
      for (std::size_t i = 0; i < params.size(); ++i) ema_params[i].mul_(decay).add_(params[i], 1.0 - decay);
    }
    window += loss.item<double>();
    ++window_count;
    if (window_count == config.log_every || ldm.step == config.train_steps) {
      ldm.loss_log.emplace_back(ldm.step, window / window_count);
      if (log) log(json{{"stage", "ldm"}, {"step", ldm.step}, {"loss", window / window_count}});
      window = 0.0;
      window_count = 0;
    }
  }
  ldm.model->eval();
  ldm.ema->eval();

  ldm.adam_moments.clear();
  ldm.adam_steps.clear();
  for (const auto& p : params) {
    const auto it = opt.state().find(adam_key(p));
    if (it == opt.state().end()) break;
    const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
    ldm.adam_moments.emplace_back(s.exp_avg().clone(), s.exp_avg_sq().clone());
    ldm.adam_steps.push_back(s.step());
  }
  return ldm;
}

torch::Tensor sample_unconditional(const LatentDiffusion& ldm, const StepMap& steps, int n, int h, int w,
                                   std::uint64_t seed) {
  torch::NoGradGuard no_grad;
  auto gen = tensor::make_generator(seed);
  const auto denoise = ldm.denoiser();
  auto z = tensor::randn({n, ldm.config.latent_channels(), h, w}, gen);
  for (std::size_t i = 0; i < steps.steps.size(); ++i) {
    const int t = steps.steps[i];
    const int t_prev = steps.next(i);
    const auto noise = tensor::randn(z.sizes(), gen);
    z = ddpm_step(z, denoise(z, t), t, t_prev, ldm.schedule, noise);
  }
  return ldm.normalizer.denormalize(z);
}

Checkpoint to_checkpoint(const LatentDiffusion& ldm) {
  Checkpoint ck;
  ck.kind = "ldm";
  ck.config = ldm.config;
  ck.seed = ldm.config.seed;
  json losses = json::array();
  for (const auto& [s, l] : ldm.loss_log) losses.push_back({s, l});
  ck.extra = json{{"step", ldm.step}, {"loss_log", losses}, {"adam_steps", ldm.adam_steps}};
  for (auto& [k, v] : module_state(*ldm.model, "model.")) ck.tensors[k] = v;
  for (auto& [k, v] : module_state(*ldm.ema, "ema.")) ck.tensors[k] = v;
  ck.tensors["normalizer.mean"] = ldm.normalizer.mean;
  ck.tensors["normalizer.std"] = ldm.normalizer.std;
  for (std::size_t i = 0; i < ldm.adam_moments.size(); ++i) {
    ck.tensors["adam." + std::to_string(i) + ".exp_avg"] = ldm.adam_moments[i].first;
    ck.tensors["adam." + std::to_string(i) + ".exp_avg_sq"] = ldm.adam_moments[i].second;
  }
  return ck;
}

void save_ldm(const LatentDiffusion& ldm, const std::filesystem::path& dir) { save_checkpoint(to_checkpoint(ldm), dir); }

LatentDiffusion load_ldm(const std::filesystem::path& dir) {
  const Checkpoint ck = load_checkpoint(dir);
  if (ck.kind != "ldm") throw ParseError("not a diffusion checkpoint: " + dir.string());
  LatentDiffusion ldm = make_ldm(ck.config.get<LdmConfig>());
  load_module_state(*ldm.model, ck.tensors, "model.");
  load_module_state(*ldm.ema, ck.tensors, "ema.");
  ldm.model->eval();
  ldm.ema->eval();
  ldm.normalizer = {ck.tensors.at("normalizer.mean"), ck.tensors.at("normalizer.std")};
  ldm.step = ck.extra.value("step", 0);
  for (const auto& entry : ck.extra.value("loss_log", json::array())) {
    ldm.loss_log.emplace_back(entry.at(0).get<int>(), entry.at(1).get<double>());
  }
  ldm.adam_steps = ck.extra.value("adam_steps", std::vector<std::int64_t>{});
  for (std::size_t i = 0; i < ldm.adam_steps.size(); ++i) {
    const auto a = ck.tensors.find("adam." + std::to_string(i) + ".exp_avg");
    const auto b = ck.tensors.find("adam." + std::to_string(i) + ".exp_avg_sq");
    if (a == ck.tensors.end() || b == ck.tensors.end()) throw ParseError("checkpoint optimizer state incomplete");
    ldm.adam_moments.emplace_back(a->second, b->second);
  }
  return ldm;
}

}  // namespace panodiff::diffusion
