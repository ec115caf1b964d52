#include <gtest/gtest.h>

#include <filesystem>

#include "panodiff/autoencoder.hpp"
#include "panodiff/tensor.hpp"

using namespace panodiff;
using namespace panodiff::ae;

namespace {

AutoencoderConfig small(Modality m) {
  AutoencoderConfig c;
  c.modality = m;
  c.hidden1 = 8;
  c.hidden2 = 16;
  c.codebook_size = 32;
  c.seed = 3;
  return c;
}

double max_abs(const torch::Tensor& a, const torch::Tensor& b) { return (a - b).abs().max().item<double>(); }

}  // namespace

TEST(Autoencoder, EncodeShapeAndFiniteOnZeros) {
  torch::manual_seed(0);
  VqAutoencoder model(AutoencoderConfig{});
  model->eval();
  torch::NoGradGuard ng;
  const auto z = model->encode(torch::randn({1, 3, 64, 128}));
  EXPECT_EQ(z.sizes(), (std::vector<std::int64_t>{1, 3, 16, 32}));
  EXPECT_TRUE(torch::isfinite(model->encode(torch::zeros({1, 3, 64, 128}))).all().item<bool>());

  VqAutoencoder depth(AutoencoderConfig{Modality::kDepth});
  depth->eval();
  const auto out = depth->decode(torch::randn({1, 1, 16, 32}));
  EXPECT_EQ(out.sizes(), (std::vector<std::int64_t>{1, 1, 64, 128}));
}

TEST(Autoencoder, RejectsWrongChannelsAndSizes) {
  VqAutoencoder model(small(Modality::kRgb));
  torch::NoGradGuard ng;
  EXPECT_THROW(model->encode(torch::zeros({1, 1, 16, 32})), InvalidArgument);
  EXPECT_THROW(model->encode(torch::zeros({1, 3, 18, 36})), InvalidArgument);
  EXPECT_THROW(model->decode(torch::zeros({1, 1, 4, 8})), InvalidArgument);
}

TEST(Autoencoder, EncodeAndDecodeCommuteWithCircularShift) {
  torch::manual_seed(1);
  VqAutoencoder model(small(Modality::kRgb));
  model->eval();
  torch::NoGradGuard ng;
  const auto x = torch::rand({2, 3, 32, 64}) * 2 - 1;
  const auto z = model->encode(x);
  for (int k : {1, 3, 7}) {
    EXPECT_LE(max_abs(model->encode(tensor::roll_width(x, 4 * k)), tensor::roll_width(z, k)), 1e-5) << k;
    EXPECT_LE(max_abs(model->decode(tensor::roll_width(z, k)), tensor::roll_width(model->decode(z), 4 * k)), 1e-5) << k;
  }
}

TEST(Quantize, FixedPointTiesAndNearest) {
  VqAutoencoder model(small(Modality::kRgb));
  torch::NoGradGuard ng;
  auto& cb = model->codebook();
  const auto entry = cb[5].clone();
  const auto z = entry.view({1, 3, 1, 1}).expand({2, 3, 4, 8}).contiguous();
  const auto q = model->quantize(z);
  EXPECT_TRUE((q.indices == 5).all().item<bool>());
  EXPECT_EQ(q.codebook_loss.item<double>(), 0.0);
  EXPECT_EQ(q.commitment_loss.item<double>(), 0.0);

  cb.fill_(100.0f);
  cb[0].fill_(0.0f);
  cb[1].fill_(1.0f);
  const auto near = model->quantize(torch::full({1, 3, 1, 1}, 0.4f));
  EXPECT_EQ(near.indices.item<std::int64_t>(), 0);
  EXPECT_EQ(max_abs(near.quantized, torch::zeros({1, 3, 1, 1})), 0.0);
  const auto tie = model->quantize(torch::full({1, 3, 1, 1}, 0.5f));
  EXPECT_EQ(tie.indices.item<std::int64_t>(), 0);
}

TEST(Quantize, Idempotent) {
  torch::manual_seed(2);
  VqAutoencoder model(small(Modality::kDepth));
  torch::NoGradGuard ng;
  const auto q1 = model->quantize(torch::randn({2, 1, 4, 8})).quantized;
  const auto q2 = model->quantize(q1).quantized;
  EXPECT_EQ(max_abs(q1, q2), 0.0);
}

TEST(DepthNorm, EndpointsAndInverse) {
  EXPECT_FLOAT_EQ(depth_norm(0.0f, 10.0), -1.0f);
  EXPECT_FLOAT_EQ(depth_norm(10.0f, 10.0), 1.0f);
  EXPECT_FLOAT_EQ(depth_norm(12.0f, 10.0), 1.0f);
  EXPECT_NEAR(depth_denorm(depth_norm(3.7f, 10.0), 10.0), 3.7f, 1e-6f);
  const auto t = torch::tensor({0.0f, 2.5f, 9.9f});
  EXPECT_LE(max_abs(depth_denorm(depth_norm(t, 10.0), 10.0), t), 1e-6);
  EXPECT_THROW(depth_norm(1.0f, 0.0), InvalidArgument);
  EXPECT_THROW(depth_norm(t, -1.0), InvalidArgument);
}

TEST(Autoencoder, TrainingLowersLossAndCheckpointRoundTrips) {
  tensor::configure_runtime(0);
  const auto manifest = synth::make_manifest(50, 16, 11, {1.0, 0.0, 0.0});
  synth::Dataset data{manifest, synth::render_manifest(manifest)};
  auto config = small(Modality::kRgb);
  config.epochs = 4;
  auto trained = train_autoencoder(data, config);
  ASSERT_EQ(trained.report.epoch_losses.size(), 4u);
  EXPECT_LT(trained.report.epoch_losses.back(), trained.report.epoch_losses.front());

  const auto dir = std::filesystem::temp_directory_path() / "panodiff_ae_ckpt";
  std::filesystem::remove_all(dir);
  save_autoencoder(trained, dir);
  auto loaded = load_autoencoder(dir);
  torch::NoGradGuard ng;
  const auto x = modality_batch({data.panoramas[0], data.panoramas[1]}, config);
  EXPECT_TRUE(torch::equal(trained.model->encode(x), loaded.model->encode(x)));
  EXPECT_EQ(loaded.report.epoch_losses, trained.report.epoch_losses);
  std::filesystem::remove_all(dir);
}

TEST(Autoencoder, EmptyTrainingSplitRejected) {
  const auto manifest = synth::make_manifest(4, 8, 1, {0.0, 0.5, 0.5});
  synth::Dataset data{manifest, synth::render_manifest(manifest)};
  EXPECT_THROW(train_autoencoder(data, small(Modality::kDepth)), InvalidArgument);
}

TEST(Bundle, MissingCheckpointIsInvalidState) {
  const auto dir = std::filesystem::temp_directory_path() / "panodiff_no_such_ckpt";
  EXPECT_THROW(load_bundle(dir / "a", dir / "b"), InvalidState);
}
