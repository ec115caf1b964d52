#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "panodiff/pano.hpp"

namespace panodiff::synth {

using Color = Eigen::Vector3f;  // linear intensity in [0, 1]

struct FurnitureBox {
  Eigen::Vector3d min_corner;
  Eigen::Vector3d size;
  Color color;

  Eigen::Vector3d max_corner() const { return min_corner + size; }
};

// Axis-aligned room spanning [0, size.x] x [0, size.y] x [0, size.z] (z up).
struct RoomSpec {
  Eigen::Vector3d size{4.0, 4.0, 3.0};
  Eigen::Vector3d camera{2.0, 2.0, 1.5};
  // Camera heading in radians; increasing yaw by 2*pi*k/W rolls the panorama by k columns.
  double yaw = 0.0;
  std::vector<FurnitureBox> furniture;
  // Walls at x = 0, x = size.x, y = 0, y = size.y.
  std::array<Color, 4> wall_colors{Color(0.8f, 0.8f, 0.8f), Color(0.8f, 0.8f, 0.8f),
                                   Color(0.8f, 0.8f, 0.8f), Color(0.8f, 0.8f, 0.8f)};
  Color floor_color{0.5f, 0.4f, 0.3f};
  Color ceiling_color{0.95f, 0.95f, 0.95f};
  std::uint64_t seed = 0;

  void validate() const;
};

struct RayHit {
  double distance = 0.0;
  Color color = Color::Zero();
};

// Distance and surface color of the first surface hit from the camera along `direction`.
RayHit cast_ray(const RoomSpec& spec, const Eigen::Vector3d& direction);

// Unit ray for pixel (row, col) of an H x 2H equirectangular grid.
Eigen::Vector3d pixel_direction(int row, int col, int height, int width, double yaw);

// Shading applied to every hit: color / (1 + 0.1 * depth).
double shading(double depth);

Panorama render_room(const RoomSpec& spec, int height);

// A furnished room with palette colors and a random camera pose, fully determined by `seed`.
RoomSpec random_room(std::uint64_t seed);

// Zeroes exactly round(fraction * H * W) uniformly chosen entries.
Image sparsify_depth(const Image& depth, double fraction, std::uint64_t seed);

enum class Split { kTrain, kVal, kTest };
std::string to_string(Split split);
Split split_from_string(const std::string& name);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DatasetItem {
  std::string id;
  Split split = Split::kTrain;
  std::uint64_t seed = 0;
};

struct DatasetManifest {
  int version = 1;
  int height = 64;
  int width = 128;
  std::uint64_t base_seed = 0;
  SplitRatios ratios;
  std::vector<DatasetItem> items;

  std::vector<DatasetItem> items_in(Split split) const;
};

// Assigns `count` items to splits. Counts are round-half-up of count * ratio for
// train and val, with the remainder going to test.
DatasetManifest make_manifest(int count, int height, std::uint64_t base_seed, SplitRatios ratios = {});

std::filesystem::path rgb_path(const std::filesystem::path& root, const DatasetItem& item);
std::filesystem::path depth_path(const std::filesystem::path& root, const DatasetItem& item);

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& root);
DatasetManifest load_manifest(const std::filesystem::path& root);

void save_item(const std::filesystem::path& root, const DatasetItem& item, const Panorama& pano);
Panorama load_item(const std::filesystem::path& root, const DatasetItem& item);

// Writes `{split}/{id}_rgb.png`, `{split}/{id}_depth.png` and `manifest.json`.
void save_dataset(const DatasetManifest& manifest, const std::vector<Panorama>& panoramas,
                  const std::filesystem::path& root);

struct Dataset {
  DatasetManifest manifest;
  std::vector<Panorama> panoramas;  // parallel to manifest.items
};

Dataset load_dataset(const std::filesystem::path& root);

// Renders every manifest item from random_room(item.seed).
std::vector<Panorama> render_manifest(const DatasetManifest& manifest);

}  // namespace panodiff::synth
