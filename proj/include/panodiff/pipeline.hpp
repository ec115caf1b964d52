#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "panodiff/config.hpp"
#include "panodiff/metrics.hpp"
#include "panodiff/outpaint.hpp"
#include "panodiff/synthdata.hpp"

// Orchestration behind the CLI commands. Artifacts live under config.workdir:
//   data/                 manifest.json and {train,val,test}/{id}_{rgb,depth}.png
//   checkpoints/{name}/   vae-rgb, vae-depth, ldm and any named LDM twins
//   logs/{name}.jsonl     one JSON object per training log event
//   outputs/              outpainting results
namespace panodiff::pipeline {

// Renders config.dataset_size rooms into layout::data_dir.
synth::DatasetManifest gen_data(const RunConfig& config);

enum class Stage { kVaeRgb, kVaeDepth, kLdm };
std::string to_string(Stage stage);
Stage stage_from_string(const std::string& name);

struct TrainOptions {
  std::string name;  // checkpoint name; defaults to the stage name
  bool resume = false;
  std::optional<int> steps;  // overrides ldm.train_steps
};

// Returns a summary. The LDM stage needs both autoencoders and throws
// InvalidState naming the first missing one.
nlohmann::json train(const RunConfig& config, Stage stage, const TrainOptions& options = {});

outpaint::Models load_models(const RunConfig& config, const std::string& ldm_name = "ldm");

struct OutpaintInputs {
  std::filesystem::path rgb;
  std::optional<std::filesystem::path> mask_file;  // wins over config.mask
  std::optional<std::filesystem::path> depth;
  std::optional<std::filesystem::path> out_dir;    // defaults to outputs/{id}
  int samples = 1;
  bool align = false;
  bool composite = false;
  std::optional<std::uint64_t> seed;
  std::string ldm_name = "ldm";
};

nlohmann::json run_outpaint(const RunConfig& config, outpaint::Models& models, const OutpaintInputs& inputs);

// Flat directory of `{stem}_rgb.png` (+ optional `{stem}_depth.png`), or a dataset
// root, in which case its test split is used.
struct ImageSet {
  std::vector<std::string> ids;
  std::vector<Image> rgb;
  std::vector<std::optional<Image>> depth;
};
ImageSet read_image_set(const std::filesystem::path& dir);

// Optional precomputed reference features stored next to the reference images.
inline constexpr const char* kReferenceFeaturesFile = "reference_features.json";
void write_feature_set(const std::filesystem::path& path, const metrics::FeatureSet& features);
metrics::FeatureSet read_feature_set(const std::filesystem::path& path);

// Frechet distance, density/coverage, LRCE and, when both sides carry depth,
// depth metrics paired by id (`{id}_sample{k}` pairs with reference `{id}`).
nlohmann::json evaluate(const RunConfig& config, const std::filesystem::path& results,
                        const std::filesystem::path& reference);
nlohmann::json evaluate_sets(const RunConfig& config, const ImageSet& results, const ImageSet& reference,
                             const std::optional<metrics::FeatureSet>& reference_features = std::nullopt);

// Half-visible requests (left half visible) over `panos`, one sample each.
struct HeldOutRun {
  std::vector<Panorama> samples;
  std::vector<double> lrce;  // per sample, 0..255 scale
};
HeldOutRun outpaint_held_out(outpaint::Models& models, const std::vector<Panorama>& panos, int count,
                             std::uint64_t seed, int steps, bool align);

// Paired LRCE with alignment off vs on. n < 5 is rejected; n < 20 adds a warning.
nlohmann::json ablate_rotation(const RunConfig& config, outpaint::Models& models, const synth::Dataset& data,
                               int n, std::uint64_t seed);

}  // namespace panodiff::pipeline
