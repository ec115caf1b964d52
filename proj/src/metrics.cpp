#include "panodiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "panodiff/image_io.hpp"

namespace panodiff::metrics {

namespace {

constexpr int kBaseHeight = 32;
constexpr int kBaseWidth = 64;
constexpr std::array<int, 3> kChannels = {24, 48, 64};

// Planar C x H x W activations.
struct Planes {
  int c = 0, h = 0, w = 0;
  std::vector<float> v;
  float& at(int ch, int y, int x) { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
  float at(int ch, int y, int x) const { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
};

Planes resample_to_base(const Image& rgb) {
  Planes out{3, kBaseHeight, kBaseWidth, std::vector<float>(3 * kBaseHeight * kBaseWidth)};
  const int h = rgb.height();
  const int w = rgb.width();
  if (h % kBaseHeight == 0 && w % kBaseWidth == 0) {
    const int fy = h / kBaseHeight;
    const int fx = w / kBaseWidth;
    const float norm = 1.0f / static_cast<float>(fy * fx);
    for (int ch = 0; ch < 3; ++ch) {
      for (int y = 0; y < kBaseHeight; ++y) {
        for (int x = 0; x < kBaseWidth; ++x) {
          float acc = 0.0f;
          for (int dy = 0; dy < fy; ++dy) {
            for (int dx = 0; dx < fx; ++dx) acc += rgb.at(y * fy + dy, x * fx + dx, ch);
          }
          out.at(ch, y, x) = acc * norm;
        }
      }
    }
    return out;
  }
  // Bilinear fallback, horizontally periodic.
  for (int y = 0; y < kBaseHeight; ++y) {
    const double sy = std::clamp((y + 0.5) * h / kBaseHeight - 0.5, 0.0, h - 1.0);
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, h - 1);
    const auto fy = static_cast<float>(sy - y0);
    for (int x = 0; x < kBaseWidth; ++x) {
      const double sx = (x + 0.5) * w / kBaseWidth - 0.5;
      const int x0f = static_cast<int>(std::floor(sx));
      const auto fx = static_cast<float>(sx - x0f);
      const int x0 = ((x0f % w) + w) % w;
      const int x1 = (x0 + 1) % w;
      for (int ch = 0; ch < 3; ++ch) {
        const float top = (1 - fx) * rgb.at(y0, x0, ch) + fx * rgb.at(y0, x1, ch);
        const float bot = (1 - fx) * rgb.at(y1, x0, ch) + fx * rgb.at(y1, x1, ch);
        out.at(ch, y, x) = (1 - fy) * top + fy * bot;
      }
    }
  }
  return out;
}

Planes conv_relu_pool(const Planes& in, int out_channels, const std::vector<float>& weights,
                      const std::vector<float>& bias) {
  Planes act{out_channels, in.h, in.w, std::vector<float>(static_cast<std::size_t>(out_channels) * in.h * in.w)};
  for (int o = 0; o < out_channels; ++o) {
    for (int y = 0; y < in.h; ++y) {
      for (int x = 0; x < in.w; ++x) {
        float acc = bias[o];
        for (int i = 0; i < in.c; ++i) {
          const float* k = &weights[((static_cast<std::size_t>(o) * in.c + i) * 3) * 3];
          for (int dy = -1; dy <= 1; ++dy) {
            const int yy = y + dy;
            if (yy < 0 || yy >= in.h) continue;
            for (int dx = -1; dx <= 1; ++dx) {
              const int xx = (x + dx + in.w) % in.w;
              acc += k[(dy + 1) * 3 + (dx + 1)] * in.at(i, yy, xx);
            }
          }
        }
        act.at(o, y, x) = std::max(acc, 0.0f);
      }
    }
  }
  Planes pooled{out_channels, in.h / 2, in.w / 2,
                std::vector<float>(static_cast<std::size_t>(out_channels) * (in.h / 2) * (in.w / 2))};
  for (int o = 0; o < out_channels; ++o) {
    for (int y = 0; y < pooled.h; ++y) {
      for (int x = 0; x < pooled.w; ++x) {
        pooled.at(o, y, x) = 0.25f * (act.at(o, 2 * y, 2 * x) + act.at(o, 2 * y, 2 * x + 1) +
                                      act.at(o, 2 * y + 1, 2 * x) + act.at(o, 2 * y + 1, 2 * x + 1));
      }
    }
  }
  return pooled;
}

double channel_mean(const Planes& p, int ch, int y0, int y1, int x0, int x1) {
  double acc = 0.0;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) acc += p.at(ch, y, x);
  }
  return acc / static_cast<double>((y1 - y0) * (x1 - x0));
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& mean) {
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  return (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success) throw NumericalError("frechet_distance: eigendecomposition failed");
  const Eigen::VectorXd roots = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return solver.eigenvectors() * roots.asDiagonal() * solver.eigenvectors().transpose();
}

// Tr((A B)^{1/2}) via the symmetric form Tr((A^{1/2} B A^{1/2})^{1/2}).
double trace_sqrt_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::MatrixXd root = psd_sqrt(a);
  Eigen::MatrixXd inner = root * b * root;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(inner, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("frechet_distance: eigendecomposition failed");
  return solver.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
}

double row_distance(const Eigen::MatrixXd& a, Eigen::Index i, const Eigen::MatrixXd& b, Eigen::Index j) {
  return (a.row(i) - b.row(j)).norm();
}

}  // namespace

Image to_byte_scale(const Image& rgb) {
  Image out(rgb.height(), rgb.width(), rgb.channels());
  for (std::size_t i = 0; i < rgb.size(); ++i) out.values()[i] = io::rgb_to_byte(rgb.values()[i]);
  return out;
}

double lrce(const Image& image) {
  const int h = image.height();
  const int w = image.width();
  const int c = image.channels();
  if (h == 0 || w == 0 || c == 0) throw InvalidArgument("lrce: empty image");
  double acc = 0.0;
  for (int r = 0; r < h; ++r) {
    for (int ch = 0; ch < c; ++ch) acc += std::abs(static_cast<double>(image.at(r, 0, ch)) - image.at(r, w - 1, ch));
  }
  return acc / static_cast<double>(h * c);
}

double lrce(std::span<const Image> images) {
  if (images.empty()) throw InvalidArgument("lrce: empty image set");
  double acc = 0.0;
  for (const auto& image : images) acc += lrce(image);
  return acc / static_cast<double>(images.size());
}

double psnr(const Image& a, const Image& b, double peak_to_peak) {
  return psnr(a, b, Mask(a.height(), a.width(), true), peak_to_peak);
}

double psnr(const Image& a, const Image& b, const Mask& mask, double peak_to_peak) {
  if (!a.same_shape(b) || mask.height() != a.height() || mask.width() != a.width()) {
    throw InvalidArgument("psnr: shape mismatch");
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (int r = 0; r < a.height(); ++r) {
    for (int c = 0; c < a.width(); ++c) {
      if (!mask.visible(r, c)) continue;
      for (int ch = 0; ch < a.channels(); ++ch) {
        const double d = static_cast<double>(a.at(r, c, ch)) - b.at(r, c, ch);
        sum += d * d;
        ++count;
      }
    }
  }
  if (count == 0) throw InvalidArgument("psnr: no visible pixels");
  const double mse = sum / static_cast<double>(count);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak_to_peak * peak_to_peak / mse);
}

DepthReport depth_metrics(const Image& pred, const Image& gt, const Mask& valid) {
  if (!pred.same_shape(gt) || pred.channels() != 1 || valid.height() != gt.height() || valid.width() != gt.width()) {
    throw InvalidArgument("depth_metrics: shape mismatch");
  }
  DepthReport report;
  double sq = 0.0, abs_sum = 0.0, rel = 0.0;
  std::size_t ratio_count = 0, within = 0;
  for (int r = 0; r < gt.height(); ++r) {
    for (int c = 0; c < gt.width(); ++c) {
      if (!valid.visible(r, c)) continue;
      const double p = pred.at(r, c);
      const double g = gt.at(r, c);
      const double d = p - g;
      sq += d * d;
      abs_sum += std::abs(d);
      ++report.valid_pixels;
      if (g <= 0.0) {
        ++report.excluded_nonpositive;
        continue;
      }
      rel += std::abs(d) / g;
      ++ratio_count;
      const double ratio = p > 0.0 ? std::max(p / g, g / p) : std::numeric_limits<double>::infinity();
      within += ratio < 1.25;
    }
  }
  if (report.valid_pixels == 0) throw InvalidArgument("depth_metrics: empty valid set");
  const auto n = static_cast<double>(report.valid_pixels);
  report.rmse = std::sqrt(sq / n);
  report.mae = abs_sum / n;
  if (ratio_count > 0) {
    report.absrel = rel / static_cast<double>(ratio_count);
    report.delta125 = static_cast<double>(within) / static_cast<double>(ratio_count);
  } else {
    report.absrel = std::numeric_limits<double>::quiet_NaN();
    report.delta125 = std::numeric_limits<double>::quiet_NaN();
  }
  return report;
}

FeatureExtractor::FeatureExtractor(ExtractorConfig config) : config_(config) {
  if (config_.feature_dim <= 0) throw InvalidArgument("FeatureExtractor: feature_dim must be > 0");
  id_ = "randconv-v1-d" + std::to_string(config_.feature_dim) + "-s" + std::to_string(config_.seed);
  std::mt19937_64 rng(config_.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  int in = 3;
  for (int out : kChannels) {
    ConvLayer layer{in, out, std::vector<float>(static_cast<std::size_t>(out) * in * 9), std::vector<float>(out)};
    const double scale = std::sqrt(2.0 / (9.0 * in));
    for (auto& w : layer.weights) w = static_cast<float>(scale * normal(rng));
    for (auto& b : layer.bias) b = static_cast<float>(0.1 * normal(rng));
    layers_.push_back(std::move(layer));
    in = out;
  }
  const int raw = kChannels[0] + kChannels[1] + kChannels[2] * (1 + 8);
  projection_.resize(raw, config_.feature_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(raw));
  for (Eigen::Index i = 0; i < projection_.size(); ++i) projection_.data()[i] = scale * normal(rng);
}

Eigen::VectorXd FeatureExtractor::extract(const Image& rgb) const {
  if (rgb.channels() != 3 || rgb.height() == 0 || rgb.width() == 0) {
    throw InvalidArgument("FeatureExtractor: expected a non-empty 3-channel image");
  }
  Planes x = resample_to_base(rgb);
  Eigen::RowVectorXd raw(projection_.rows());
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    x = conv_relu_pool(x, layers_[l].out, layers_[l].weights, layers_[l].bias);
    for (int ch = 0; ch < x.c; ++ch) raw[k++] = channel_mean(x, ch, 0, x.h, 0, x.w);
  }
  // 2 x 4 region means of the last stage.
  for (int ch = 0; ch < x.c; ++ch) {
    for (int gy = 0; gy < 2; ++gy) {
      for (int gx = 0; gx < 4; ++gx) {
        raw[k++] = channel_mean(x, ch, gy * x.h / 2, (gy + 1) * x.h / 2, gx * x.w / 4, (gx + 1) * x.w / 4);
      }
    }
  }
  return (raw * projection_).transpose();
}

FeatureSet FeatureExtractor::extract(std::span<const Image> images) const {
  FeatureSet set{Eigen::MatrixXd(static_cast<Eigen::Index>(images.size()), config_.feature_dim), id_, config_.seed};
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (i > 0 && !images[i].same_shape(images[0])) throw InvalidArgument("FeatureExtractor: inconsistent image sizes");
    set.features.row(static_cast<Eigen::Index>(i)) = extract(images[i]).transpose();
  }
  return set;
}

double frechet_distance(const FeatureSet& a, const FeatureSet& b, double shrinkage) {
  if (a.extractor_id != b.extractor_id) {
    throw InvalidArgument("frechet_distance: extractor mismatch (" + a.extractor_id + " vs " + b.extractor_id + ")");
  }
  if (a.dim() != b.dim() || a.dim() == 0) throw InvalidArgument("frechet_distance: feature dimensions differ");
  if (!(shrinkage >= 0.0 && shrinkage <= 1.0)) throw InvalidArgument("frechet_distance: shrinkage must lie in [0, 1]");
  if (a.size() < 2 || b.size() < 2) throw NumericalError("frechet_distance: need at least two samples per set");
  if (shrinkage == 0.0 && (a.size() < a.dim() + 1 || b.size() < b.dim() + 1)) {
    throw NumericalError("frechet_distance: degenerate covariance (need n >= d + 1 or shrinkage)");
  }
  if (!a.features.allFinite() || !b.features.allFinite()) throw NumericalError("frechet_distance: non-finite features");

  const Eigen::RowVectorXd mu_a = a.features.colwise().mean();
  const Eigen::RowVectorXd mu_b = b.features.colwise().mean();
  Eigen::MatrixXd cov_a = covariance(a.features, mu_a);
  Eigen::MatrixXd cov_b = covariance(b.features, mu_b);
  if (shrinkage > 0.0) {
    const auto d = static_cast<double>(a.dim());
    const auto eye = Eigen::MatrixXd::Identity(a.dim(), a.dim());
    cov_a = (1.0 - shrinkage) * cov_a + shrinkage * (cov_a.trace() / d) * eye;
    cov_b = (1.0 - shrinkage) * cov_b + shrinkage * (cov_b.trace() / d) * eye;
  }
  // Average both symmetric orderings so d(a, b) == d(b, a) bit for bit.
  const double cross = 0.5 * (trace_sqrt_product(cov_a, cov_b) + trace_sqrt_product(cov_b, cov_a));
  const double value = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * cross;
  return std::max(value, 0.0);
}

DensityCoverage density_coverage(const FeatureSet& real, const FeatureSet& fake, int k) {
  const Eigen::Index n = real.size();
  const Eigen::Index m = fake.size();
  if (k < 1 || k >= n) throw InvalidArgument("density_coverage: need 1 <= k < n_real");
  if (m == 0) throw InvalidArgument("density_coverage: empty fake set");
  if (real.dim() != fake.dim()) throw InvalidArgument("density_coverage: feature dimensions differ");

  // Radius of each real point: distance to its k-th nearest other real point.
  std::vector<double> radii(static_cast<std::size_t>(n));
  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    dist.clear();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) dist.push_back(row_distance(real.features, i, real.features, j));
    }
    std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
    radii[static_cast<std::size_t>(i)] = dist[static_cast<std::size_t>(k - 1)];
  }

  std::size_t inside = 0;
  std::vector<char> covered(static_cast<std::size_t>(n), 0);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (row_distance(fake.features, j, real.features, i) <= radii[static_cast<std::size_t>(i)]) {
        ++inside;
        covered[static_cast<std::size_t>(i)] = 1;
      }
    }
  }
  DensityCoverage out;
  out.density = static_cast<double>(inside) / (static_cast<double>(k) * static_cast<double>(m));
  out.coverage = static_cast<double>(std::count(covered.begin(), covered.end(), 1)) / static_cast<double>(n);
  return out;
}

}  // namespace panodiff::metrics
