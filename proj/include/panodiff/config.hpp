#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "panodiff/autoencoder.hpp"
#include "panodiff/diffusion.hpp"
#include "panodiff/metrics.hpp"
#include "panodiff/pano.hpp"
#include "panodiff/synthdata.hpp"

namespace panodiff {

// Everything a command needs. Component seeds are derived from `seed`, so one
// number (or PANODIFF_SEED) pins a whole run.
struct RunConfig {
  int height = 64;  // width is always 2 * height
  int dataset_size = 700;
  std::uint64_t seed = 7;
  synth::SplitRatios ratios;
  ae::AutoencoderConfig vae_rgb;
  ae::AutoencoderConfig vae_depth;
  diffusion::LdmConfig ldm;
  int inference_steps = 200;
  MaskSpec mask;  // default outpainting mask when no mask file is given
  metrics::ExtractorConfig extractor;
  int density_k = 5;
  int ablation_requests = 30;
  std::filesystem::path workdir = "panodiff_work";

  RunConfig();

  int width() const { return 2 * height; }
  void validate() const;
  // Copy with the component seeds rewritten from `seed`.
  RunConfig resolved() const;
};

void to_json(nlohmann::json& j, const MaskSpec& m);
void from_json(const nlohmann::json& j, MaskSpec& m);
void to_json(nlohmann::json& j, const RunConfig& c);
// Missing keys keep their defaults; unknown top-level keys are a ParseError.
void from_json(const nlohmann::json& j, RunConfig& c);

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

// Reads a JSON config file; missing file is NotFound, bad JSON is ParseError.
nlohmann::json read_config_json(const std::filesystem::path& path);

// Sets a dotted key ("ldm.train_steps") to a value parsed as JSON, or kept as a
// string when it does not parse.
void apply_override(nlohmann::json& j, const std::string& assignment);

// PANODIFF_SEED, when set, replaces the global seed.
void apply_seed_env(RunConfig& config);

namespace layout {
std::filesystem::path data_dir(const RunConfig& c);
std::filesystem::path checkpoint_dir(const RunConfig& c, const std::string& name);
std::filesystem::path log_path(const RunConfig& c, const std::string& name);
std::filesystem::path outputs_dir(const RunConfig& c);
}  // namespace layout

}  // namespace panodiff
