#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "panodiff/error.hpp"

namespace panodiff {

// Dense row-major H x W x C grid with channels interleaved (HWC).
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, int channels, T fill = T{})
      : height_(height), width_(width), channels_(channels) {
    if (height < 0 || width < 0 || channels < 0) {
      throw InvalidArgument("Grid: negative dimension");
    }
    values_.assign(static_cast<std::size_t>(height) * width * channels, fill);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::size_t index(int row, int col, int ch = 0) const {
    return (static_cast<std::size_t>(row) * width_ + col) * channels_ + ch;
  }
  T& at(int row, int col, int ch = 0) { return values_[index(row, col, ch)]; }
  const T& at(int row, int col, int ch = 0) const { return values_[index(row, col, ch)]; }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }

  bool same_shape(const Grid& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  bool operator==(const Grid&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<T> values_;
};

using Image = Grid<float>;

}  // namespace panodiff
