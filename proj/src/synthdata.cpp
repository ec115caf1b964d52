#include "panodiff/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "panodiff/image_io.hpp"

namespace panodiff::synth {

namespace {

constexpr double kEps = 1e-12;

const std::array<Color, 8> kWallPalette = {
    Color(0.85f, 0.83f, 0.78f), Color(0.70f, 0.70f, 0.72f), Color(0.82f, 0.72f, 0.55f),
    Color(0.55f, 0.65f, 0.50f), Color(0.55f, 0.65f, 0.80f), Color(0.75f, 0.45f, 0.35f),
    Color(0.80f, 0.65f, 0.30f), Color(0.60f, 0.55f, 0.70f)};
const std::array<Color, 4> kFloorPalette = {Color(0.60f, 0.45f, 0.30f), Color(0.35f, 0.25f, 0.18f),
                                            Color(0.50f, 0.50f, 0.50f), Color(0.30f, 0.35f, 0.50f)};
const std::array<Color, 2> kCeilingPalette = {Color(0.95f, 0.95f, 0.95f), Color(0.92f, 0.90f, 0.85f)};
const std::array<Color, 8> kFurniturePalette = {
    Color(0.70f, 0.20f, 0.20f), Color(0.15f, 0.20f, 0.40f), Color(0.20f, 0.50f, 0.30f),
    Color(0.12f, 0.12f, 0.12f), Color(0.90f, 0.90f, 0.90f), Color(0.55f, 0.38f, 0.22f),
    Color(0.85f, 0.75f, 0.20f), Color(0.20f, 0.55f, 0.55f)};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

bool inside_box(const Eigen::Vector3d& p, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
  return (p.array() > lo.array()).all() && (p.array() < hi.array()).all();
}

long long round_half_up(double v) { return static_cast<long long>(std::floor(v + 0.5)); }

}  // namespace

void RoomSpec::validate() const {
  if (!(size.array() > 0.0).all()) throw InvalidArgument("RoomSpec: room dimensions must be > 0");
  if (!inside_box(camera, Eigen::Vector3d::Zero(), size)) {
    throw InvalidArgument("RoomSpec: camera must lie strictly inside the room");
  }
  for (const auto& box : furniture) {
    if (!(box.size.array() > 0.0).all()) throw InvalidArgument("RoomSpec: furniture size must be > 0");
    if ((box.min_corner.array() < 0.0).any() || (box.max_corner().array() > size.array() + 1e-9).any()) {
      throw InvalidArgument("RoomSpec: furniture must lie inside the room");
    }
    if (inside_box(camera, box.min_corner, box.max_corner())) {
      throw InvalidArgument("RoomSpec: camera is inside a furniture box");
    }
  }
}

RayHit cast_ray(const RoomSpec& spec, const Eigen::Vector3d& direction) {
  const Eigen::Vector3d& o = spec.camera;
  RayHit hit;
  hit.distance = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    const double d = direction[axis];
    if (std::abs(d) < kEps) continue;
    const bool high = d > 0.0;
    const double t = ((high ? spec.size[axis] : 0.0) - o[axis]) / d;
    if (t < hit.distance) {
      hit.distance = t;
      if (axis == 2) {
        hit.color = high ? spec.ceiling_color : spec.floor_color;
      } else {
        hit.color = spec.wall_colors[axis * 2 + (high ? 1 : 0)];
      }
    }
  }
  for (const auto& box : spec.furniture) {
    double t_near = -std::numeric_limits<double>::infinity();
    double t_far = std::numeric_limits<double>::infinity();
    const Eigen::Vector3d hi = box.max_corner();
    bool miss = false;
    for (int axis = 0; axis < 3 && !miss; ++axis) {
      const double d = direction[axis];
      if (std::abs(d) < kEps) {
        if (o[axis] <= box.min_corner[axis] || o[axis] >= hi[axis]) miss = true;
        continue;
      }
      double t0 = (box.min_corner[axis] - o[axis]) / d;
      double t1 = (hi[axis] - o[axis]) / d;
      if (t0 > t1) std::swap(t0, t1);
      t_near = std::max(t_near, t0);
      t_far = std::min(t_far, t1);
      if (t_near > t_far) miss = true;
    }
    if (!miss && t_near > 0.0 && t_near < hit.distance) {
      hit.distance = t_near;
      hit.color = box.color;
    }
  }
  return hit;
}

Eigen::Vector3d pixel_direction(int row, int col, int height, int width, double yaw) {
  constexpr double pi = std::numbers::pi;
  const double theta = 2.0 * pi * ((col + 0.5) / width - 0.5) - yaw;
  const double phi = pi / 2.0 - pi * (row + 0.5) / height;
  return {std::cos(phi) * std::cos(theta), std::cos(phi) * std::sin(theta), std::sin(phi)};
}

double shading(double depth) { return 1.0 / (1.0 + 0.1 * depth); }

Panorama render_room(const RoomSpec& spec, int height) {
  spec.validate();
  if (height <= 0) throw InvalidArgument("render_room: height must be > 0");
  const int width = 2 * height;
  Panorama pano{Image(height, width, 3), Image(height, width, 1)};
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const RayHit hit = cast_ray(spec, pixel_direction(r, c, height, width, spec.yaw));
      const double shade = shading(hit.distance);
      for (int ch = 0; ch < 3; ++ch) {
        const double v = std::clamp(hit.color[ch] * shade, 0.0, 1.0);
        pano.rgb.at(r, c, ch) = static_cast<float>(2.0 * v - 1.0);
      }
      pano.depth.at(r, c) = static_cast<float>(hit.distance);
    }
  }
  return pano;
}

RoomSpec random_room(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  auto pick = [&](const auto& palette) {
    return palette[static_cast<std::size_t>(unit(rng) * palette.size()) % palette.size()];
  };

  RoomSpec spec;
  spec.seed = seed;
  spec.size = {uniform(3.0, 7.0), uniform(3.0, 7.0), uniform(2.5, 3.2)};
  spec.camera = {uniform(0.35, 0.65) * spec.size.x(), uniform(0.35, 0.65) * spec.size.y(), uniform(1.3, 1.7)};
  spec.yaw = uniform(0.0, 2.0 * std::numbers::pi);

  const Color base_wall = pick(kWallPalette);
  for (auto& wall : spec.wall_colors) wall = unit(rng) < 0.35 ? pick(kWallPalette) : base_wall;
  spec.floor_color = pick(kFloorPalette);
  spec.ceiling_color = pick(kCeilingPalette);

  const int count = 1 + static_cast<int>(unit(rng) * 4.0);
  for (int i = 0; i < count; ++i) {
    for (int attempt = 0; attempt < 20; ++attempt) {
      FurnitureBox box;
      box.size = {uniform(0.5, std::min(2.0, 0.5 * spec.size.x())), uniform(0.5, std::min(1.5, 0.5 * spec.size.y())),
                  uniform(0.4, std::min(2.0, spec.size.z() - 0.3))};
      box.min_corner = {uniform(0.0, spec.size.x() - box.size.x()), uniform(0.0, spec.size.y() - box.size.y()), 0.0};
      // Push against the nearest wall half of the time.
      if (unit(rng) < 0.5) {
        if (box.min_corner.x() < spec.size.x() - box.max_corner().x()) {
          box.min_corner.x() = 0.0;
        } else {
          box.min_corner.x() = spec.size.x() - box.size.x();
        }
      }
      box.color = pick(kFurniturePalette);
      const Eigen::Vector3d margin(0.4, 0.4, 0.0);
      const Eigen::Vector3d lo = box.min_corner - margin;
      const Eigen::Vector3d hi = box.max_corner() + margin;
      const bool clear = spec.camera.x() <= lo.x() || spec.camera.x() >= hi.x() || spec.camera.y() <= lo.y() ||
                         spec.camera.y() >= hi.y();
      if (clear) {
        spec.furniture.push_back(box);
        break;
      }
    }
  }
  return spec;
}

Image sparsify_depth(const Image& depth, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw InvalidArgument("sparsify_depth: fraction must lie in [0, 1]");
  Image out = depth;
  const std::size_t n = out.size();
  const auto zeros = static_cast<std::size_t>(round_half_up(fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first `zeros` slots become a uniform subset.
  for (std::size_t i = 0; i < zeros; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(order[i], order[pick(rng)]);
    out.values()[order[i]] = 0.0f;
  }
  return out;
}

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "unknown";
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw ParseError("unknown split '" + name + "'");
}

std::vector<DatasetItem> DatasetManifest::items_in(Split split) const {
  std::vector<DatasetItem> out;
  for (const auto& item : items) {
    if (item.split == split) out.push_back(item);
  }
  return out;
}

DatasetManifest make_manifest(int count, int height, std::uint64_t base_seed, SplitRatios ratios) {
  if (count <= 0) throw InvalidArgument("make_manifest: item count must be > 0");
  if (height <= 0) throw InvalidArgument("make_manifest: height must be > 0");
  if (ratios.train < 0.0 || ratios.val < 0.0 || ratios.test < 0.0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw InvalidArgument("make_manifest: split ratios must be >= 0 and sum to 1");
  }
  const auto n_train = static_cast<int>(round_half_up(count * ratios.train));
  const auto n_val = static_cast<int>(std::min<long long>(count - n_train, round_half_up(count * ratios.val)));

  std::vector<int> order(static_cast<std::size_t>(count));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(splitmix64(base_seed ^ 0x5157ull));
  std::shuffle(order.begin(), order.end(), rng);

  DatasetManifest manifest;
  manifest.height = height;
  manifest.width = 2 * height;
  manifest.base_seed = base_seed;
  manifest.ratios = ratios;
  manifest.items.resize(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "room_%05d", i);
    manifest.items[i].id = id;
    manifest.items[i].seed = splitmix64(base_seed + static_cast<std::uint64_t>(i));
  }
  for (int rank = 0; rank < count; ++rank) {
    auto& item = manifest.items[static_cast<std::size_t>(order[rank])];
    item.split = rank < n_train ? Split::kTrain : rank < n_train + n_val ? Split::kVal : Split::kTest;
  }
  return manifest;
}

std::filesystem::path rgb_path(const std::filesystem::path& root, const DatasetItem& item) {
  return root / to_string(item.split) / (item.id + "_rgb.png");
}

std::filesystem::path depth_path(const std::filesystem::path& root, const DatasetItem& item) {
  return root / to_string(item.split) / (item.id + "_depth.png");
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& root) {
  nlohmann::ordered_json j;
  j["version"] = manifest.version;
  j["height"] = manifest.height;
  j["width"] = manifest.width;
  j["base_seed"] = manifest.base_seed;
  j["depth_units"] = "millimeters";
  j["ratios"] = {{"train", manifest.ratios.train}, {"val", manifest.ratios.val}, {"test", manifest.ratios.test}};
  auto& items = j["items"] = nlohmann::ordered_json::array();
  for (const auto& item : manifest.items) {
    items.push_back({{"id", item.id}, {"split", to_string(item.split)}, {"seed", item.seed}});
  }
  std::filesystem::create_directories(root);
  std::ofstream out(root / "manifest.json");
  if (!out) throw IoError("cannot write " + (root / "manifest.json").string());
  out << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const std::filesystem::path& root) {
  const auto path = root / "manifest.json";
  if (!std::filesystem::exists(path)) throw NotFound("missing dataset manifest " + path.string());
  std::ifstream in(path);
  DatasetManifest manifest;
  try {
    const auto j = nlohmann::json::parse(in);
    manifest.version = j.at("version").get<int>();
    manifest.height = j.at("height").get<int>();
    manifest.width = j.at("width").get<int>();
    manifest.base_seed = j.at("base_seed").get<std::uint64_t>();
    const auto& ratios = j.at("ratios");
    manifest.ratios = {ratios.at("train").get<double>(), ratios.at("val").get<double>(),
                       ratios.at("test").get<double>()};
    for (const auto& entry : j.at("items")) {
      manifest.items.push_back({entry.at("id").get<std::string>(),
                                split_from_string(entry.at("split").get<std::string>()),
                                entry.at("seed").get<std::uint64_t>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("corrupt manifest " + path.string() + ": " + e.what());
  }
  std::set<std::string> ids;
  for (const auto& item : manifest.items) {
    if (!ids.insert(item.id).second) throw ParseError("duplicate item id " + item.id + " in manifest");
  }
  if (manifest.width != 2 * manifest.height) throw ParseError("manifest image size is not 2:1");
  return manifest;
}

void save_item(const std::filesystem::path& root, const DatasetItem& item, const Panorama& pano) {
  io::write_rgb_png(rgb_path(root, item), pano.rgb);
  io::write_depth_png(depth_path(root, item), pano.depth);
}

Panorama load_item(const std::filesystem::path& root, const DatasetItem& item) {
  Panorama pano{io::read_rgb_png(rgb_path(root, item)), io::read_depth_png(depth_path(root, item))};
  return pano;
}

void save_dataset(const DatasetManifest& manifest, const std::vector<Panorama>& panoramas,
                  const std::filesystem::path& root) {
  if (panoramas.size() != manifest.items.size()) {
    throw InvalidArgument("save_dataset: panorama count does not match manifest");
  }
  for (std::size_t i = 0; i < panoramas.size(); ++i) save_item(root, manifest.items[i], panoramas[i]);
  save_manifest(manifest, root);
}

Dataset load_dataset(const std::filesystem::path& root) {
  Dataset dataset{load_manifest(root), {}};
  dataset.panoramas.reserve(dataset.manifest.items.size());
  for (const auto& item : dataset.manifest.items) dataset.panoramas.push_back(load_item(root, item));
  return dataset;
}

std::vector<Panorama> render_manifest(const DatasetManifest& manifest) {
  std::vector<Panorama> out;
  out.reserve(manifest.items.size());
  for (const auto& item : manifest.items) out.push_back(render_room(random_room(item.seed), manifest.height));
  return out;
}

}  // namespace panodiff::synth
