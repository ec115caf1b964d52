#include "panodiff/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "panodiff/error.hpp"

namespace panodiff {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> optional_from(const nlohmann::json& j, const char* key, std::optional<double> fallback) {
  if (!j.contains(key)) return fallback;
  if (j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

RunConfig::RunConfig() {
  vae_rgb.modality = ae::Modality::kRgb;
  vae_depth.modality = ae::Modality::kDepth;
}

void RunConfig::validate() const {
  if (height <= 0 || height % 4 != 0) throw InvalidArgument("config: height must be a positive multiple of 4");
  if (dataset_size <= 0) throw InvalidArgument("config: dataset_size must be positive");
  if (inference_steps < 1 || inference_steps > ldm.schedule_steps) {
    throw InvalidArgument("config: inference_steps must be in [1, ldm.schedule_steps]");
  }
  if (density_k < 1) throw InvalidArgument("config: density_k must be >= 1");
  if (ablation_requests < 5) throw InvalidArgument("config: ablation_requests must be >= 5");
  if (vae_rgb.modality != ae::Modality::kRgb || vae_depth.modality != ae::Modality::kDepth) {
    throw InvalidArgument("config: vae_rgb and vae_depth modalities are fixed");
  }
  vae_rgb.validate();
  vae_depth.validate();
  ldm.validate();
  mask.validate();
}

RunConfig RunConfig::resolved() const {
  RunConfig c = *this;
  c.vae_rgb.seed = derive_seed(seed, "vae-rgb");
  c.vae_depth.seed = derive_seed(seed, "vae-depth");
  c.ldm.seed = derive_seed(seed, "ldm");
  c.mask.seed = derive_seed(seed, "mask");
  return c;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : tag) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return splitmix64(seed ^ h);
}

void to_json(nlohmann::json& j, const MaskSpec& m) {
  j = {{"kind", to_string(m.kind)},
       {"fov_h_deg", m.fov_h_deg},
       {"fov_v_deg", m.fov_v_deg},
       {"yaw_deg", optional_json(m.yaw_deg)},
       {"pitch_deg", optional_json(m.pitch_deg)},
       {"views", m.views},
       {"camera_fov_min_deg", m.camera_fov_min_deg},
       {"camera_fov_max_deg", m.camera_fov_max_deg},
       {"camera_pitch_range_deg", m.camera_pitch_range_deg},
       {"ceiling_frac", m.ceiling_frac},
       {"floor_frac", m.floor_frac},
       {"boxes_min", m.boxes_min},
       {"boxes_max", m.boxes_max},
       {"box_size_min", m.box_size_min},
       {"box_size_max", m.box_size_max}};
}

void from_json(const nlohmann::json& j, MaskSpec& m) {
  const MaskSpec d;
  m.kind = mask_kind_from_string(j.value("kind", to_string(d.kind)));
  m.seed = d.seed;
  m.fov_h_deg = j.value("fov_h_deg", d.fov_h_deg);
  m.fov_v_deg = j.value("fov_v_deg", d.fov_v_deg);
  m.yaw_deg = optional_from(j, "yaw_deg", d.yaw_deg);
  m.pitch_deg = optional_from(j, "pitch_deg", d.pitch_deg);
  m.views = j.value("views", d.views);
  m.camera_fov_min_deg = j.value("camera_fov_min_deg", d.camera_fov_min_deg);
  m.camera_fov_max_deg = j.value("camera_fov_max_deg", d.camera_fov_max_deg);
  m.camera_pitch_range_deg = j.value("camera_pitch_range_deg", d.camera_pitch_range_deg);
  m.ceiling_frac = j.value("ceiling_frac", d.ceiling_frac);
  m.floor_frac = j.value("floor_frac", d.floor_frac);
  m.boxes_min = j.value("boxes_min", d.boxes_min);
  m.boxes_max = j.value("boxes_max", d.boxes_max);
  m.box_size_min = j.value("box_size_min", d.box_size_min);
  m.box_size_max = j.value("box_size_max", d.box_size_max);
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"height", c.height},
       {"dataset_size", c.dataset_size},
       {"seed", c.seed},
       {"ratios", {{"train", c.ratios.train}, {"val", c.ratios.val}, {"test", c.ratios.test}}},
       {"vae_rgb", c.vae_rgb},
       {"vae_depth", c.vae_depth},
       {"ldm", c.ldm},
       {"inference_steps", c.inference_steps},
       {"mask", c.mask},
       {"extractor", {{"feature_dim", c.extractor.feature_dim}, {"seed", c.extractor.seed}}},
       {"density_k", c.density_k},
       {"ablation_requests", c.ablation_requests},
       {"workdir", c.workdir.string()}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  if (!j.is_object()) throw ParseError("config: expected a JSON object");
  static const std::set<std::string> known = {
      "height", "dataset_size", "seed", "ratios", "vae_rgb", "vae_depth", "ldm", "inference_steps",
      "mask", "extractor", "density_k", "ablation_requests", "workdir"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ParseError("config: unknown key '" + key + "'");
  }
  try {
    const RunConfig d;
    c.height = j.value("height", d.height);
    c.dataset_size = j.value("dataset_size", d.dataset_size);
    c.seed = j.value("seed", d.seed);
    if (j.contains("ratios")) {
      const auto& r = j.at("ratios");
      c.ratios.train = r.value("train", d.ratios.train);
      c.ratios.val = r.value("val", d.ratios.val);
      c.ratios.test = r.value("test", d.ratios.test);
    }
    // Modalities are fixed by the field name.
    nlohmann::json rgb = j.value("vae_rgb", nlohmann::json(d.vae_rgb));
    nlohmann::json depth = j.value("vae_depth", nlohmann::json(d.vae_depth));
    rgb["modality"] = "rgb";
    depth["modality"] = "depth";
    c.vae_rgb = rgb.get<ae::AutoencoderConfig>();
    c.vae_depth = depth.get<ae::AutoencoderConfig>();
    c.ldm = j.value("ldm", nlohmann::json(d.ldm)).get<diffusion::LdmConfig>();
    c.inference_steps = j.value("inference_steps", d.inference_steps);
    c.mask = j.value("mask", nlohmann::json(d.mask)).get<MaskSpec>();
    if (j.contains("extractor")) {
      const auto& e = j.at("extractor");
      c.extractor.feature_dim = e.value("feature_dim", d.extractor.feature_dim);
      c.extractor.seed = e.value("seed", d.extractor.seed);
    }
    c.density_k = j.value("density_k", d.density_k);
    c.ablation_requests = j.value("ablation_requests", d.ablation_requests);
    c.workdir = j.value("workdir", d.workdir.string());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
}

nlohmann::json read_config_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("config file not found: " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw InvalidArgument("override must look like key.path=value: " + assignment);
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  nlohmann::json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw InvalidArgument("override has an empty key segment: " + assignment);
    if (!node->is_object()) *node = nlohmann::json::object();
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

void apply_seed_env(RunConfig& config) {
  const char* env = std::getenv("PANODIFF_SEED");
  if (env == nullptr || *env == '\0') return;
  try {
    std::size_t used = 0;
    const unsigned long long value = std::stoull(env, &used);
    if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
    config.seed = value;
  } catch (const std::exception&) {
    throw InvalidArgument(std::string("PANODIFF_SEED is not an unsigned integer: ") + env);
  }
}

namespace layout {

std::filesystem::path data_dir(const RunConfig& c) { return c.workdir / "data"; }
std::filesystem::path checkpoint_dir(const RunConfig& c, const std::string& name) {
  return c.workdir / "checkpoints" / name;
}
std::filesystem::path log_path(const RunConfig& c, const std::string& name) {
  return c.workdir / "logs" / (name + ".jsonl");
}
std::filesystem::path outputs_dir(const RunConfig& c) { return c.workdir / "outputs"; }

}  // namespace layout

}  // namespace panodiff
