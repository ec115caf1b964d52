#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "panodiff/pano.hpp"

namespace panodiff::metrics {

// RGB in [-1, 1] to the 8-bit value scale used by the PNG writer (still stored as float).
Image to_byte_scale(const Image& rgb);

// Left-right consistency error: per image, the mean absolute difference between the
// first and last pixel columns over all rows and channels; averaged over images.
// Images are expected on the 0..255 scale.
double lrce(std::span<const Image> images);
double lrce(const Image& image);

// PSNR in dB for values spanning `peak_to_peak` (2 for [-1, 1] images). Optional
// mask restricts the comparison to visible pixels.
double psnr(const Image& a, const Image& b, double peak_to_peak = 2.0);
double psnr(const Image& a, const Image& b, const Mask& mask, double peak_to_peak = 2.0);

struct DepthReport {
  double rmse = 0.0;
  double mae = 0.0;
  double absrel = 0.0;
  double delta125 = 0.0;
  std::size_t valid_pixels = 0;
  // Valid pixels whose ground truth is <= 0; excluded from absrel and delta125.
  std::size_t excluded_nonpositive = 0;
};

DepthReport depth_metrics(const Image& pred, const Image& gt, const Mask& valid);

struct ExtractorConfig {
  int feature_dim = 64;
  std::uint64_t seed = 20240601;
};

struct FeatureSet {
  Eigen::MatrixXd features;  // one row per image
  std::string extractor_id;
  std::uint64_t seed = 0;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
};

// Fixed random convolutional features: the image is area-resampled to 32 x 64, passed
// through three seeded 3x3 conv + ReLU + 2x2 average-pool stages (24, 48, 64 channels,
// wrap-padded horizontally), and the channel means of every stage plus a 2 x 4 grid of
// last-stage region means are projected to `feature_dim` by a seeded Gaussian matrix.
// Stands in for Inception features; absolute values are only comparable between sets
// extracted with the same id.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(ExtractorConfig config = {});

  const std::string& id() const { return id_; }
  const ExtractorConfig& config() const { return config_; }

  Eigen::VectorXd extract(const Image& rgb) const;
  FeatureSet extract(std::span<const Image> images) const;

 private:
  struct ConvLayer {
    int in = 0;
    int out = 0;
    std::vector<float> weights;  // [out][in][3][3]
    std::vector<float> bias;
  };

  ExtractorConfig config_;
  std::string id_;
  std::vector<ConvLayer> layers_;
  Eigen::MatrixXd projection_;
};

// Frechet distance between Gaussian fits of two feature sets. `shrinkage` in [0, 1]
// blends each covariance toward a scaled identity; without it both sets need at
// least dim + 1 rows.
double frechet_distance(const FeatureSet& a, const FeatureSet& b, double shrinkage = 0.0);

struct DensityCoverage {
  double density = 0.0;
  double coverage = 0.0;
};

// k-NN manifold density and coverage of `fake` relative to `real`.
DensityCoverage density_coverage(const FeatureSet& real, const FeatureSet& fake, int k);

}  // namespace panodiff::metrics
