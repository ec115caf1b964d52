#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "panodiff/diffusion.hpp"
#include "panodiff/stats.hpp"
#include "panodiff/tensor.hpp"

using namespace panodiff;
using namespace panodiff::diffusion;

namespace {

double max_abs(const torch::Tensor& a, const torch::Tensor& b) { return (a - b).abs().max().item<double>(); }

ae::AutoencoderBundle tiny_bundle() {
  ae::AutoencoderConfig rgb;
  rgb.hidden1 = 8;
  rgb.hidden2 = 8;
  rgb.codebook_size = 16;
  ae::AutoencoderConfig depth = rgb;
  depth.modality = ae::Modality::kDepth;
  torch::manual_seed(4);
  ae::AutoencoderBundle b{ae::VqAutoencoder(rgb), ae::VqAutoencoder(depth)};
  b.rgb->eval();
  b.depth->eval();
  return b;
}

LdmConfig tiny_ldm(int steps) {
  LdmConfig c;
  c.unet.hidden1 = 8;
  c.unet.hidden2 = 8;
  c.train_steps = steps;
  c.batch_size = 4;
  c.log_every = 5;
  c.seed = 9;
  return c;
}

synth::Dataset tiny_data(int n) {
  const auto manifest = synth::make_manifest(n, 16, 2, {1.0, 0.0, 0.0});
  return {manifest, synth::render_manifest(manifest)};
}

}  // namespace

TEST(Schedule, Basics) {
  const auto s = make_schedule();
  EXPECT_EQ(s.steps(), 1000);
  EXPECT_DOUBLE_EQ(s.alpha_bar(0), 1.0);
  EXPECT_DOUBLE_EQ(s.alpha_bar(1), 1.0 - s.beta(1));
  EXPECT_DOUBLE_EQ(s.beta(1), 1e-4);
  EXPECT_NEAR(s.beta(1000), 0.02, 1e-15);
  for (int t = 2; t <= 1000; ++t) {
    ASSERT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
    const double var = s.posterior_variance(t);
    ASSERT_GT(var, 0.0);
    ASSERT_LE(var, s.beta(t));
  }
  EXPECT_EQ(s.posterior_variance(1), 0.0);
  EXPECT_THROW(s.beta(0), InvalidArgument);
  EXPECT_THROW(s.alpha_bar(1001), InvalidArgument);
}

TEST(Schedule, AlphaBarMatchesLogSum) {
  const auto s = make_schedule(1000, 1e-4, 0.02);
  for (int t : {1, 10, 500, 1000}) {
    double log_sum = 0.0;
    for (int i = 1; i <= t; ++i) log_sum += std::log1p(-(1e-4 + (0.02 - 1e-4) * (i - 1) / 999.0));
    EXPECT_NEAR(s.alpha_bar(t) / std::exp(log_sum), 1.0, 1e-10) << t;
  }
}

TEST(Schedule, RejectsInvalidRanges) {
  EXPECT_THROW(make_schedule(0, 1e-4, 0.02), InvalidArgument);
  EXPECT_THROW(make_schedule(10, 0.0, 0.02), InvalidArgument);
  EXPECT_THROW(make_schedule(10, 0.03, 0.02), InvalidArgument);
  EXPECT_THROW(make_schedule(10, 1e-4, 1.0), InvalidArgument);
}

TEST(StepMap, StridedSubsequence) {
  const auto m = make_step_map(1000, 200);
  ASSERT_EQ(m.steps.size(), 200u);
  EXPECT_EQ(m.steps.front(), 1000);
  EXPECT_EQ(m.steps.back(), 1);
  for (std::size_t i = 1; i < m.steps.size(); ++i) EXPECT_LT(m.steps[i], m.steps[i - 1]);
  EXPECT_EQ(m.next(199), 0);
  EXPECT_EQ(make_step_map(10, 10).steps, (std::vector<int>{10, 9, 8, 7, 6, 5, 4, 3, 2, 1}));
  EXPECT_THROW(make_step_map(10, 11), InvalidArgument);
}

TEST(QSample, ClosedFormCases) {
  const auto s = make_schedule();
  const auto z0 = torch::randn({1, 4, 4, 8});
  EXPECT_LE(max_abs(q_sample(z0, 500, torch::zeros_like(z0), s), std::sqrt(s.alpha_bar(500)) * z0), 1e-6);
  EXPECT_LE(max_abs(q_sample(z0, 1, torch::randn_like(z0), s), z0), 0.05);
  EXPECT_THROW(q_sample(z0, 0, z0, s), InvalidArgument);
  EXPECT_THROW(q_sample(z0, 1001, z0, s), InvalidArgument);
  EXPECT_THROW(q_sample(z0, 5, torch::zeros({1}), s), InvalidArgument);
}

TEST(QSample, MonteCarloMoments) {
  const auto s = make_schedule();
  auto gen = tensor::make_generator(5);
  const int n = 10000;
  const double z0 = 1.7;
  for (int t : {10, 300, 900}) {
    const auto eps = tensor::randn({n}, gen).to(torch::kFloat64);
    const auto zt = q_sample(torch::full({n}, z0, torch::kFloat64), t, eps, s);
    const double mean = zt.mean().item<double>();
    const double var = zt.var().item<double>();
    const double expected_var = 1.0 - s.alpha_bar(t);
    EXPECT_NEAR(mean, std::sqrt(s.alpha_bar(t)) * z0, 3.0 * std::sqrt(expected_var / n)) << t;
    EXPECT_NEAR(var, expected_var, 3.0 * expected_var * std::sqrt(2.0 / (n - 1))) << t;
  }
}

TEST(DdpmStep, FinalStepIgnoresNoiseAndShapeKept) {
  const auto s = make_schedule();
  const auto z = torch::randn({1, 4, 16, 32});
  const auto e = torch::randn({1, 4, 16, 32});
  const auto a = ddpm_step(z, e, 1, s, torch::randn({1, 4, 16, 32}));
  const auto b = ddpm_step(z, e, 1, s, torch::zeros({1, 4, 16, 32}));
  EXPECT_TRUE(torch::equal(a, b));
  EXPECT_EQ(a.sizes(), z.sizes());
  EXPECT_THROW(ddpm_step(z, e, 0, s, e), InvalidArgument);
  EXPECT_THROW(ddpm_step(z, e, 5, 5, s, e), InvalidArgument);
}

TEST(DdpmStep, TrueNoiseGivesPosteriorMean) {
  // With eps_hat equal to the true eps, the noiseless step lands on the posterior mean
  // sqrt(abar_{t-1}) beta_t / (1 - abar_t) z0 + sqrt(alpha_t) (1 - abar_{t-1}) / (1 - abar_t) z_t.
  const auto s = make_schedule();
  const double z0 = 0.8, eps = -1.3;
  for (int t : {2, 50, 700, 1000}) {
    const double ab = s.alpha_bar(t), abp = s.alpha_bar(t - 1), beta = s.beta(t);
    const double zt = std::sqrt(ab) * z0 + std::sqrt(1 - ab) * eps;
    const double expected = std::sqrt(abp) * beta / (1 - ab) * z0 + std::sqrt(1 - beta) * (1 - abp) / (1 - ab) * zt;
    const auto out = ddpm_step(torch::full({1}, zt, torch::kFloat64), torch::full({1}, eps, torch::kFloat64), t, s,
                               torch::zeros({1}, torch::kFloat64));
    EXPECT_NEAR(out.item<double>(), expected, 1e-9) << t;
  }
}

TEST(DdpmStep, StridedFormReducesToSingleStep) {
  const auto s = make_schedule();
  const auto z = torch::randn({2, 4, 4, 8}, torch::kFloat64);
  const auto e = torch::randn({2, 4, 4, 8}, torch::kFloat64);
  const auto n = torch::randn({2, 4, 4, 8}, torch::kFloat64);
  EXPECT_LE(max_abs(ddpm_step(z, e, 321, s, n), ddpm_step(z, e, 321, 320, s, n)), 1e-12);
}

TEST(ForwardProcess, IteratedChainMatchesClosedForm) {
  const auto s = make_schedule();
  const int n = 2000;
  auto gen = tensor::make_generator(17);
  const double z0 = 0.9;
  for (int t : {10, 500}) {
    auto z = torch::full({n}, z0, torch::kFloat64);
    for (int i = 1; i <= t; ++i) z = std::sqrt(s.alpha(i)) * z + std::sqrt(s.beta(i)) * tensor::randn({n}, gen).to(torch::kFloat64);
    const auto closed = q_sample(torch::full({n}, z0, torch::kFloat64), t, tensor::randn({n}, gen).to(torch::kFloat64), s);
    std::vector<double> a(z.data_ptr<double>(), z.data_ptr<double>() + n);
    std::vector<double> b(closed.data_ptr<double>(), closed.data_ptr<double>() + n);
    EXPECT_GT(stats::ks_two_sample(a, b).p_value, 0.01) << t;
  }
}

TEST(UNet, ShapeAndCircularEquivariance) {
  torch::manual_seed(3);
  UNetConfig c;
  c.hidden1 = 16;
  c.hidden2 = 16;
  c.padding = nn::Padding::kCircular;
  UNet net(c);
  net->eval();
  torch::NoGradGuard ng;
  const auto z = torch::randn({2, 4, 16, 32});
  const auto t = torch::tensor({10, 700}, torch::kLong);
  const auto out = net->forward(z, t);
  EXPECT_EQ(out.sizes(), z.sizes());
  for (int k : {4, 8, 20}) EXPECT_LE(max_abs(net->forward(tensor::roll_width(z, k), t), tensor::roll_width(out, k)), 1e-4) << k;

  c.padding = nn::Padding::kZero;
  UNet zero(c);
  zero->eval();
  const auto zout = zero->forward(z, t);
  EXPECT_GT(max_abs(zero->forward(tensor::roll_width(z, 8), t), tensor::roll_width(zout, 8)), 1e-3);
  EXPECT_THROW(net->forward(torch::randn({1, 3, 16, 32}), t.slice(0, 0, 1)), InvalidArgument);
}

TEST(TrainLdm, LossDropsOnSinglePanoramaWithoutAugmentation) {
  tensor::configure_runtime(0);
  auto data = tiny_data(1);
  auto bundle = tiny_bundle();
  auto config = tiny_ldm(300);
  config.unet.hidden1 = 16;
  config.unet.hidden2 = 16;
  config.rotation_augment = false;
  config.log_every = 30;
  const auto ldm = train_ldm(data, bundle, config);
  ASSERT_EQ(ldm.loss_log.size(), 10u);
  EXPECT_LT(ldm.loss_log.back().second, 0.5 * ldm.loss_log.front().second);
}

TEST(TrainLdm, ResumeContinuesTheSameRun) {
  tensor::configure_runtime(0);
  auto data = tiny_data(6);
  auto bundle = tiny_bundle();
  auto config = tiny_ldm(10);
  config.depth_sparsity_prob = 0.5;
  config.sparse_variants = 2;
  const auto straight = train_ldm(data, bundle, config);
  EXPECT_EQ(straight.step, 10);

  auto half = config;
  half.train_steps = 5;
  const auto first = train_ldm(data, bundle, half);
  const auto dir = std::filesystem::temp_directory_path() / "panodiff_ldm_resume";
  std::filesystem::remove_all(dir);
  save_ldm(first, dir);
  auto loaded = load_ldm(dir);
  EXPECT_EQ(loaded.step, 5);
  const auto resumed = train_ldm(data, bundle, config, std::move(loaded));
  EXPECT_EQ(resumed.step, 10);
  const auto a = module_state(*straight.ema);
  const auto b = module_state(*resumed.ema);
  for (const auto& [name, value] : a) EXPECT_LE(max_abs(value, b.at(name)), 1e-5) << name;
  std::filesystem::remove_all(dir);
}

TEST(TrainLdm, RejectsMissingAutoencoders) {
  auto data = tiny_data(2);
  ae::AutoencoderBundle empty;
  EXPECT_THROW(train_ldm(data, empty, tiny_ldm(1)), InvalidState);
}

TEST(SampleUnconditional, ShapeAndDeterminism) {
  tensor::configure_runtime(0);
  auto ldm = make_ldm(tiny_ldm(0));
  const auto steps = make_step_map(1000, 20);
  const auto a = sample_unconditional(ldm, steps, 2, 16, 32, 42);
  const auto b = sample_unconditional(ldm, steps, 2, 16, 32, 42);
  EXPECT_EQ(a.sizes(), (std::vector<std::int64_t>{2, 4, 16, 32}));
  EXPECT_TRUE(torch::equal(a, b));
  EXPECT_FALSE(torch::equal(a, sample_unconditional(ldm, steps, 2, 16, 32, 43)));
}
