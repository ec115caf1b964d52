#include "panodiff/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/imgcodecs.hpp>

namespace panodiff::io {

namespace {

const std::vector<int> kPngParams = {cv::IMWRITE_PNG_COMPRESSION, 6};

void write_mat(const std::filesystem::path& path, const cv::Mat& mat) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), mat, kPngParams);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write " + path.string());
}

cv::Mat read_mat(const std::filesystem::path& path, int expected_depth, int expected_channels) {
  if (!std::filesystem::exists(path)) throw NotFound("missing file " + path.string());
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) throw ParseError("cannot decode " + path.string());
  if (mat.depth() != expected_depth || mat.channels() != expected_channels) {
    throw ParseError("unexpected pixel format in " + path.string());
  }
  return mat;
}

}  // namespace

std::uint8_t rgb_to_byte(float value) {
  const double scaled = std::floor((static_cast<double>(value) + 1.0) * 127.5 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

float byte_to_rgb(std::uint8_t value) { return static_cast<float>(2.0 * value / 255.0 - 1.0); }

std::uint16_t depth_to_millimeters(float meters) {
  const double mm = std::floor(static_cast<double>(meters) * 1000.0 + 0.5);
  return static_cast<std::uint16_t>(std::clamp(mm, 0.0, 65535.0));
}

void write_rgb_png(const std::filesystem::path& path, const Image& rgb) {
  if (rgb.channels() != 3) throw InvalidArgument("write_rgb_png: expected 3 channels");
  cv::Mat mat(rgb.height(), rgb.width(), CV_8UC3);
  for (int r = 0; r < rgb.height(); ++r) {
    auto* row = mat.ptr<cv::Vec3b>(r);
    for (int c = 0; c < rgb.width(); ++c) {
      // OpenCV stores BGR.
      for (int ch = 0; ch < 3; ++ch) row[c][2 - ch] = rgb_to_byte(rgb.at(r, c, ch));
    }
  }
  write_mat(path, mat);
}

Image read_rgb_png(const std::filesystem::path& path) {
  const cv::Mat mat = read_mat(path, CV_8U, 3);
  Image rgb(mat.rows, mat.cols, 3);
  for (int r = 0; r < mat.rows; ++r) {
    const auto* row = mat.ptr<cv::Vec3b>(r);
    for (int c = 0; c < mat.cols; ++c) {
      for (int ch = 0; ch < 3; ++ch) rgb.at(r, c, ch) = byte_to_rgb(row[c][2 - ch]);
    }
  }
  return rgb;
}

void write_depth_png(const std::filesystem::path& path, const Image& depth) {
  if (depth.channels() != 1) throw InvalidArgument("write_depth_png: expected 1 channel");
  cv::Mat mat(depth.height(), depth.width(), CV_16UC1);
  for (int r = 0; r < depth.height(); ++r) {
    auto* row = mat.ptr<std::uint16_t>(r);
    for (int c = 0; c < depth.width(); ++c) row[c] = depth_to_millimeters(depth.at(r, c));
  }
  write_mat(path, mat);
}

Image read_depth_png(const std::filesystem::path& path) {
  const cv::Mat mat = read_mat(path, CV_16U, 1);
  Image depth(mat.rows, mat.cols, 1);
  for (int r = 0; r < mat.rows; ++r) {
    const auto* row = mat.ptr<std::uint16_t>(r);
    for (int c = 0; c < mat.cols; ++c) depth.at(r, c) = static_cast<float>(row[c] / 1000.0);
  }
  return depth;
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
  cv::Mat mat(mask.height(), mask.width(), CV_8UC1);
  for (int r = 0; r < mask.height(); ++r) {
    auto* row = mat.ptr<std::uint8_t>(r);
    for (int c = 0; c < mask.width(); ++c) row[c] = mask.visible(r, c) ? 255 : 0;
  }
  write_mat(path, mat);
}

Mask read_mask_png(const std::filesystem::path& path) {
  const cv::Mat mat = read_mat(path, CV_8U, 1);
  Mask mask(mat.rows, mat.cols, false);
  for (int r = 0; r < mat.rows; ++r) {
    const auto* row = mat.ptr<std::uint8_t>(r);
    for (int c = 0; c < mat.cols; ++c) mask.set(r, c, row[c] != 0);
  }
  return mask;
}

}  // namespace panodiff::io
