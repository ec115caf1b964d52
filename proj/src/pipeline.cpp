#include "panodiff/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <regex>

#include "panodiff/checkpoint.hpp"
#include "panodiff/error.hpp"
#include "panodiff/image_io.hpp"
#include "panodiff/stats.hpp"

namespace panodiff::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Appends one JSON object per line; truncates unless resuming.
class JsonlLog {
 public:
  JsonlLog(const fs::path& path, bool append) {
    fs::create_directories(path.parent_path());
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw IoError("cannot open log " + path.string());
  }
  void operator()(const json& entry) { out_ << entry.dump() << "\n" << std::flush; }

 private:
  std::ofstream out_;
};

std::vector<Panorama> split_panoramas(const synth::Dataset& data, synth::Split split) {
  std::vector<Panorama> out;
  for (std::size_t i = 0; i < data.manifest.items.size(); ++i) {
    if (data.manifest.items[i].split == split) out.push_back(data.panoramas[i]);
  }
  return out;
}

void require_stage(const RunConfig& config, const std::string& needed, const std::string& by) {
  if (!checkpoint_exists(layout::checkpoint_dir(config, needed))) {
    throw InvalidState("stage " + by + " requires stage " + needed + ": no checkpoint at " +
                       layout::checkpoint_dir(config, needed).string() + " (run `panodiff train --stage " + needed +
                       "` first)");
  }
}

std::string strip_suffix(const std::string& s, const std::string& suffix) {
  if (s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0) {
    return s.substr(0, s.size() - suffix.size());
  }
  return s;
}

// `{id}_sample{k}` refers to reference `{id}`.
std::string reference_id(const std::string& id) {
  static const std::regex sample_suffix("^(.*)_sample[0-9]+$");
  std::smatch m;
  if (std::regex_match(id, m, sample_suffix)) return m[1];
  return id;
}

std::vector<Image> byte_scale(const std::vector<Image>& rgb) {
  std::vector<Image> out;
  out.reserve(rgb.size());
  for (const auto& im : rgb) out.push_back(metrics::to_byte_scale(im));
  return out;
}

}  // namespace

synth::DatasetManifest gen_data(const RunConfig& config) {
  config.validate();
  const auto manifest = synth::make_manifest(config.dataset_size, config.height, config.seed, config.ratios);
  const auto panoramas = synth::render_manifest(manifest);
  synth::save_dataset(manifest, panoramas, layout::data_dir(config));
  return manifest;
}

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::kVaeRgb: return "vae-rgb";
    case Stage::kVaeDepth: return "vae-depth";
    case Stage::kLdm: return "ldm";
  }
  return "unknown";
}

Stage stage_from_string(const std::string& name) {
  if (name == "vae-rgb") return Stage::kVaeRgb;
  if (name == "vae-depth") return Stage::kVaeDepth;
  if (name == "ldm") return Stage::kLdm;
  throw InvalidArgument("unknown stage '" + name + "' (expected vae-rgb, vae-depth or ldm)");
}

json train(const RunConfig& raw_config, Stage stage, const TrainOptions& options) {
  const RunConfig config = raw_config.resolved();
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  auto seconds = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count(); };
  const std::string name = options.name.empty() ? to_string(stage) : options.name;
  const fs::path dir = layout::checkpoint_dir(config, name);

  if (stage != Stage::kLdm) {
    if (options.resume) throw InvalidArgument("--resume is only supported for the ldm stage");
    if (options.steps) throw InvalidArgument("--steps is only supported for the ldm stage");
    const auto data = synth::load_dataset(layout::data_dir(config));
    JsonlLog log(layout::log_path(config, name), false);
    const auto& ae_config = stage == Stage::kVaeRgb ? config.vae_rgb : config.vae_depth;
    const auto trained = ae::train_autoencoder(data, ae_config, [&](const json& e) { log(e); });
    ae::save_autoencoder(trained, dir);
    json summary{{"stage", to_string(stage)},
                 {"checkpoint", dir.string()},
                 {"epoch_losses", trained.report.epoch_losses},
                 {"val_psnr", trained.report.val_psnr},
                 {"codes_used", trained.report.codes_used},
                 {"seconds", seconds()}};
    if (stage == Stage::kVaeDepth) summary["val_depth_mae"] = trained.report.val_depth_mae;
    log(json{{"stage", to_string(stage)}, {"summary", summary}});
    return summary;
  }

  require_stage(config, "vae-rgb", "ldm");
  require_stage(config, "vae-depth", "ldm");
  auto ldm_config = config.ldm;
  if (options.steps) ldm_config.train_steps = *options.steps;

  std::optional<diffusion::LatentDiffusion> previous;
  if (options.resume) {
    if (!checkpoint_exists(dir)) throw InvalidState("nothing to resume: no ldm checkpoint at " + dir.string());
    previous = diffusion::load_ldm(dir);
    // A resumed run keeps its stored config except for the step budget.
    const int steps = ldm_config.train_steps;
    ldm_config = previous->config;
    ldm_config.train_steps = steps;
  }
  const auto data = synth::load_dataset(layout::data_dir(config));
  auto bundle = ae::load_bundle(layout::checkpoint_dir(config, "vae-rgb"), layout::checkpoint_dir(config, "vae-depth"));
  JsonlLog log(layout::log_path(config, name), options.resume);
  const int start = previous ? previous->step : 0;
  auto ldm = diffusion::train_ldm(data, bundle, ldm_config, std::move(previous), [&](const json& e) { log(e); });
  diffusion::save_ldm(ldm, dir);
  json summary{{"stage", "ldm"},
               {"name", name},
               {"checkpoint", dir.string()},
               {"start_step", start},
               {"step", ldm.step},
               {"channels", ldm.config.latent_channels()},
               {"final_loss", ldm.loss_log.empty() ? json(nullptr) : json(ldm.loss_log.back().second)},
               {"seconds", seconds()}};
  log(json{{"stage", "ldm"}, {"summary", summary}});
  return summary;
}

outpaint::Models load_models(const RunConfig& config, const std::string& ldm_name) {
  require_stage(config, "vae-rgb", "outpaint");
  require_stage(config, "vae-depth", "outpaint");
  require_stage(config, ldm_name, "outpaint");
  return outpaint::Models{
      ae::load_bundle(layout::checkpoint_dir(config, "vae-rgb"), layout::checkpoint_dir(config, "vae-depth")),
      diffusion::load_ldm(layout::checkpoint_dir(config, ldm_name))};
}

json run_outpaint(const RunConfig& raw_config, outpaint::Models& models, const OutpaintInputs& inputs) {
  const RunConfig config = raw_config.resolved();
  config.validate();
  const int h = config.height;
  const int w = config.width();

  outpaint::OutpaintRequest request;
  request.id = strip_suffix(inputs.rgb.stem().string(), "_rgb");
  request.rgb = io::read_rgb_png(inputs.rgb);
  if (request.rgb.height() != h || request.rgb.width() != w) {
    throw InvalidArgument("outpaint: input is " + std::to_string(request.rgb.height()) + "x" +
                          std::to_string(request.rgb.width()) + ", config expects " + std::to_string(h) + "x" +
                          std::to_string(w));
  }
  request.mask = inputs.mask_file ? io::read_mask_png(*inputs.mask_file) : gen_mask(config.mask, h, w);
  if (request.mask.height() != h || request.mask.width() != w) {
    throw InvalidArgument("outpaint: mask size does not match the input image");
  }
  if (inputs.depth) {
    request.depth = io::read_depth_png(*inputs.depth);
    if (request.depth->height() != h || request.depth->width() != w) {
      throw InvalidArgument("outpaint: depth size does not match the input image");
    }
    request.depth_mask = request.mask;
  }
  request.n_samples = inputs.samples;
  request.align = inputs.align;
  request.composite = inputs.composite;
  request.seed = inputs.seed.value_or(derive_seed(config.seed, "outpaint"));
  request.steps = config.inference_steps;
  request.validate();

  const fs::path dir = inputs.out_dir.value_or(layout::outputs_dir(config) / request.id);
  const auto result = outpaint::outpaint(request, models);
  json sidecar = outpaint::write_outputs(dir, request, result);
  io::write_mask_png(dir / (request.id + "_mask.png"), request.mask);
  sidecar["mask"] = request.id + "_mask.png";
  sidecar["mask_source"] = inputs.mask_file ? "file" : "spec";
  sidecar["ldm"] = inputs.ldm_name;
  std::ofstream out(dir / (request.id + "_outpaint.json"));
  if (!out) throw IoError("cannot write sidecar in " + dir.string());
  out << sidecar.dump(2) << "\n";
  sidecar["output_dir"] = dir.string();
  return sidecar;
}

ImageSet read_image_set(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw NotFound("not a directory: " + dir.string());
  ImageSet set;
  if (fs::exists(dir / "manifest.json")) {
    const auto manifest = synth::load_manifest(dir);
    for (const auto& item : manifest.items_in(synth::Split::kTest)) {
      set.ids.push_back(item.id);
      set.rgb.push_back(io::read_rgb_png(synth::rgb_path(dir, item)));
      set.depth.emplace_back(io::read_depth_png(synth::depth_path(dir, item)));
    }
  } else {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      const auto name = entry.path().filename().string();
      if (entry.is_regular_file() && name.size() > 8 && name.ends_with("_rgb.png")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
      const std::string id = strip_suffix(path.filename().string(), "_rgb.png");
      set.ids.push_back(id);
      set.rgb.push_back(io::read_rgb_png(path));
      const fs::path depth = dir / (id + "_depth.png");
      if (fs::exists(depth)) {
        set.depth.emplace_back(io::read_depth_png(depth));
      } else {
        set.depth.emplace_back(std::nullopt);
      }
    }
  }
  if (set.rgb.empty()) throw InvalidArgument("no *_rgb.png images in " + dir.string());
  return set;
}

void write_feature_set(const fs::path& path, const metrics::FeatureSet& features) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < features.size(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(features.dim()));
    for (Eigen::Index c = 0; c < features.dim(); ++c) row[static_cast<std::size_t>(c)] = features.features(r, c);
    rows.push_back(row);
  }
  json j{{"extractor_id", features.extractor_id}, {"seed", features.seed}, {"dim", features.dim()}, {"rows", rows}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump() << "\n";
}

metrics::FeatureSet read_feature_set(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("feature file not found: " + path.string());
  try {
    const json j = json::parse(in);
    metrics::FeatureSet set;
    set.extractor_id = j.at("extractor_id").get<std::string>();
    set.seed = j.at("seed").get<std::uint64_t>();
    const auto dim = j.at("dim").get<Eigen::Index>();
    const auto& rows = j.at("rows");
    set.features.resize(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != static_cast<std::size_t>(dim)) throw ParseError("feature row has the wrong length");
      for (Eigen::Index c = 0; c < dim; ++c) set.features(static_cast<Eigen::Index>(r), c) = rows[r][c].get<double>();
    }
    return set;
  } catch (const json::exception& e) {
    throw ParseError("feature file " + path.string() + ": " + e.what());
  }
}

json evaluate_sets(const RunConfig& config, const ImageSet& results, const ImageSet& reference,
                   const std::optional<metrics::FeatureSet>& reference_features) {
  const metrics::FeatureExtractor extractor(config.extractor);
  if (reference_features && reference_features->extractor_id != extractor.id()) {
    throw InvalidArgument("evaluate: extractor mismatch: reference features use " + reference_features->extractor_id +
                          ", configured extractor is " + extractor.id());
  }
  const auto fake = extractor.extract(results.rgb);
  const auto real = reference_features ? *reference_features : extractor.extract(reference.rgb);

  // Without enough rows for a full-rank covariance, blend toward the identity.
  const Eigen::Index min_rows = std::min(fake.size(), real.size());
  const double shrinkage = min_rows > fake.dim() ? 0.0 : 0.1;

  json report{{"results_count", results.rgb.size()},
              {"reference_count", real.size()},
              {"extractor", {{"id", extractor.id()}, {"feature_dim", fake.dim()}, {"seed", fake.seed}}},
              {"frechet", metrics::frechet_distance(real, fake, shrinkage)},
              {"frechet_shrinkage", shrinkage}};

  const int k = std::min<int>(config.density_k, static_cast<int>(real.size()) - 1);
  if (k >= 1) {
    const auto dc = metrics::density_coverage(real, fake, k);
    report["density"] = dc.density;
    report["coverage"] = dc.coverage;
    report["density_k"] = k;
  }
  report["lrce"] = {{"results", metrics::lrce(byte_scale(results.rgb))},
                    {"reference", metrics::lrce(byte_scale(reference.rgb))}};

  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < reference.ids.size(); ++i) {
    if (reference.depth[i]) by_id.emplace(reference.ids[i], i);
  }
  double rmse = 0.0, mae = 0.0, absrel = 0.0, delta = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < results.ids.size(); ++i) {
    if (!results.depth[i]) continue;
    const auto it = by_id.find(reference_id(results.ids[i]));
    if (it == by_id.end()) continue;
    const Image& gt = *reference.depth[it->second];
    const Image& pred = *results.depth[i];
    const auto m = metrics::depth_metrics(pred, gt, Mask(gt.height(), gt.width(), true));
    rmse += m.rmse;
    mae += m.mae;
    absrel += m.absrel;
    delta += m.delta125;
    ++pairs;
  }
  report["depth_available"] = pairs > 0;
  if (pairs > 0) {
    const double n = static_cast<double>(pairs);
    report["depth"] = {{"pairs", pairs}, {"rmse", rmse / n}, {"mae", mae / n}, {"absrel", absrel / n},
                       {"delta125", delta / n}};
  }
  return report;
}

json evaluate(const RunConfig& config, const fs::path& results, const fs::path& reference) {
  const auto result_set = read_image_set(results);
  const auto reference_set = read_image_set(reference);
  std::optional<metrics::FeatureSet> cached;
  if (fs::exists(reference / kReferenceFeaturesFile)) cached = read_feature_set(reference / kReferenceFeaturesFile);
  return evaluate_sets(config, result_set, reference_set, cached);
}

HeldOutRun outpaint_held_out(outpaint::Models& models, const std::vector<Panorama>& panos, int count,
                             std::uint64_t seed, int steps, bool align) {
  if (panos.empty()) throw InvalidArgument("held-out outpainting needs at least one panorama");
  HeldOutRun run;
  for (int i = 0; i < count; ++i) {
    const Panorama& pano = panos[static_cast<std::size_t>(i) % panos.size()];
    outpaint::OutpaintRequest request;
    request.id = "heldout" + std::to_string(i);
    request.rgb = pano.rgb;
    request.mask = half_visible_mask(pano.height(), pano.width());
    request.align = align;
    request.seed = outpaint::sample_seed(seed, i);
    request.steps = steps;
    auto result = outpaint::outpaint(request, models);
    run.lrce.push_back(metrics::lrce(metrics::to_byte_scale(result.samples.front().rgb)));
    run.samples.push_back(std::move(result.samples.front()));
  }
  return run;
}

json ablate_rotation(const RunConfig& config, outpaint::Models& models, const synth::Dataset& data, int n,
                     std::uint64_t seed) {
  if (n < 5) throw InvalidArgument("ablate-rotation needs at least 5 requests, got " + std::to_string(n));
  json warnings = json::array();
  if (n < 20) warnings.push_back("fewer than 20 requests; the paired test has little power");
  const auto test = split_panoramas(data, synth::Split::kTest);
  if (test.empty()) throw InvalidState("ablate-rotation: the dataset has no test split");
  if (static_cast<std::size_t>(n) > test.size()) warnings.push_back("requests reuse test panoramas with new seeds");

  const auto off = outpaint_held_out(models, test, n, seed, config.inference_steps, false);
  const auto on = outpaint_held_out(models, test, n, seed, config.inference_steps, true);
  const auto test_result = stats::paired_t_test_less(on.lrce, off.lrce);
  const double mean_off = stats::mean(off.lrce);
  const double mean_on = stats::mean(on.lrce);
  const double ratio = mean_off > 0.0 ? mean_on / mean_off : 1.0;
  return json{{"requests", n},
              {"seed", seed},
              {"steps", config.inference_steps},
              {"mean_lrce_off", mean_off},
              {"mean_lrce_on", mean_on},
              {"ratio_on_off", ratio},
              {"relative_reduction", 1.0 - ratio},
              {"t_statistic", test_result.t_statistic},
              {"p_value", test_result.p_value},
              {"degrees_of_freedom", test_result.degrees_of_freedom},
              {"lrce_off", off.lrce},
              {"lrce_on", on.lrce},
              {"warnings", warnings}};
}

}  // namespace panodiff::pipeline
