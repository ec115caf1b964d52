#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "panodiff/config.hpp"
#include "panodiff/error.hpp"
#include "panodiff/pipeline.hpp"
#include "panodiff/tensor.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace panodiff;

namespace {

constexpr int kExitInvalidArgument = 2;
constexpr int kExitInvalidState = 3;
constexpr int kExitIo = 4;

struct CommonArgs {
  std::string config_path;
  std::string workdir;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON run config");
  cmd->add_option("--workdir", args.workdir, "Artifact root (overrides the config)");
  cmd->add_option("--set", args.overrides, "Config override key.path=value (repeatable)");
}

RunConfig load_config(const CommonArgs& args) {
  json j = args.config_path.empty() ? json::object() : read_config_json(args.config_path);
  for (const auto& o : args.overrides) apply_override(j, o);
  RunConfig config = j.get<RunConfig>();
  if (!args.workdir.empty()) config.workdir = args.workdir;
  apply_seed_env(config);
  config.validate();
  return config;
}

bool parse_switch(const std::string& value, const char* flag) {
  if (value == "on" || value == "true" || value == "1") return true;
  if (value == "off" || value == "false" || value == "0") return false;
  throw InvalidArgument(std::string(flag) + " expects on or off, got '" + value + "'");
}

void emit(const json& report, const std::string& out_path) {
  if (!out_path.empty()) {
    if (fs::path(out_path).has_parent_path()) fs::create_directories(fs::path(out_path).parent_path());
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot write " + out_path);
    out << report.dump(2) << "\n";
  }
  std::cout << report.dump(2) << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bi-modal RGB-D latent diffusion for 360 panorama outpainting"};
  app.require_subcommand(1);

  CommonArgs gen_args;
  std::optional<int> gen_count;
  auto* gen = app.add_subcommand("gen-data", "Render the synthetic room dataset");
  add_common(gen, gen_args);
  gen->add_option("--count", gen_count, "Number of rooms (overrides dataset_size)");

  CommonArgs train_args;
  std::string stage;
  pipeline::TrainOptions train_options;
  std::optional<int> train_steps;
  auto* train = app.add_subcommand("train", "Train one stage: vae-rgb, vae-depth or ldm");
  add_common(train, train_args);
  train->add_option("--stage", stage, "vae-rgb | vae-depth | ldm")->required();
  train->add_option("--name", train_options.name, "Checkpoint name (default: the stage name)");
  train->add_flag("--resume", train_options.resume, "Continue an existing ldm checkpoint");
  train->add_option("--steps", train_steps, "Total ldm steps (overrides ldm.train_steps)");

  CommonArgs out_args;
  pipeline::OutpaintInputs inputs;
  std::string input_rgb, mask_file, depth_file, out_dir, align = "off", composite = "off";
  std::optional<std::uint64_t> out_seed;
  auto* outp = app.add_subcommand("outpaint", "Complete a masked panorama");
  add_common(outp, out_args);
  outp->add_option("--input", input_rgb, "RGB panorama PNG")->required();
  outp->add_option("--mask", mask_file, "Mask PNG (255 = visible); overrides the config mask spec");
  outp->add_option("--depth", depth_file, "Optional depth PNG (millimeters)");
  outp->add_option("--samples", inputs.samples, "Number of samples");
  outp->add_option("--align", align, "Two-end alignment: on | off");
  outp->add_option("--composite", composite, "Paste visible input pixels back: on | off");
  outp->add_option("--seed", out_seed, "Sampling seed");
  outp->add_option("--out", out_dir, "Output directory (default: outputs/{id})");
  outp->add_option("--ldm", inputs.ldm_name, "LDM checkpoint name");

  CommonArgs eval_args;
  std::string results_dir, reference_dir, eval_out;
  bool write_reference_features = false;
  auto* eval = app.add_subcommand("evaluate", "Score results against a reference set");
  add_common(eval, eval_args);
  eval->add_option("--results", results_dir, "Directory of *_rgb.png results")->required();
  eval->add_option("--reference", reference_dir, "Reference directory or dataset root")->required();
  eval->add_option("--out", eval_out, "Also write the report here");
  eval->add_flag("--write-reference-features", write_reference_features,
                 "Cache reference features in the reference directory");

  CommonArgs abl_args;
  std::optional<int> abl_n;
  std::optional<std::uint64_t> abl_seed;
  std::string abl_out, abl_ldm = "ldm";
  auto* abl = app.add_subcommand("ablate-rotation", "Paired LRCE with alignment off vs on");
  add_common(abl, abl_args);
  abl->add_option("--n", abl_n, "Number of half-visible requests (default: ablation_requests)");
  abl->add_option("--seed", abl_seed, "Request seed");
  abl->add_option("--ldm", abl_ldm, "LDM checkpoint name");
  abl->add_option("--out", abl_out, "Also write the report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalidArgument;
  }

  try {
    if (*gen) {
      RunConfig config = load_config(gen_args);
      if (gen_count) config.dataset_size = *gen_count;
      const auto manifest = pipeline::gen_data(config);
      json counts{{"train", manifest.items_in(synth::Split::kTrain).size()},
                  {"val", manifest.items_in(synth::Split::kVal).size()},
                  {"test", manifest.items_in(synth::Split::kTest).size()}};
      emit(json{{"data_dir", layout::data_dir(config).string()}, {"items", manifest.items.size()}, {"splits", counts}},
           "");
    } else if (*train) {
      const RunConfig config = load_config(train_args);
      tensor::configure_runtime(config.seed);
      train_options.steps = train_steps;
      emit(pipeline::train(config, pipeline::stage_from_string(stage), train_options), "");
    } else if (*outp) {
      const RunConfig config = load_config(out_args);
      tensor::configure_runtime(config.seed);
      inputs.rgb = input_rgb;
      if (!mask_file.empty()) inputs.mask_file = fs::path(mask_file);
      if (!depth_file.empty()) inputs.depth = fs::path(depth_file);
      if (!out_dir.empty()) inputs.out_dir = fs::path(out_dir);
      inputs.align = parse_switch(align, "--align");
      inputs.composite = parse_switch(composite, "--composite");
      inputs.seed = out_seed;
      auto models = pipeline::load_models(config, inputs.ldm_name);
      emit(pipeline::run_outpaint(config, models, inputs), "");
    } else if (*eval) {
      const RunConfig config = load_config(eval_args);
      if (write_reference_features) {
        const auto reference = pipeline::read_image_set(reference_dir);
        const metrics::FeatureExtractor extractor(config.extractor);
        pipeline::write_feature_set(fs::path(reference_dir) / pipeline::kReferenceFeaturesFile,
                                    extractor.extract(reference.rgb));
      }
      emit(pipeline::evaluate(config, results_dir, reference_dir), eval_out);
    } else if (*abl) {
      const RunConfig config = load_config(abl_args);
      tensor::configure_runtime(config.seed);
      const int n = abl_n.value_or(config.ablation_requests);
      if (n < 5) throw InvalidArgument("ablate-rotation needs at least 5 requests, got " + std::to_string(n));
      auto models = pipeline::load_models(config, abl_ldm);
      const auto data = synth::load_dataset(layout::data_dir(config));
      const json report =
          pipeline::ablate_rotation(config, models, data, n, abl_seed.value_or(derive_seed(config.seed, "ablation")));
      for (const auto& w : report.at("warnings")) std::cerr << "warning: " << w.get<std::string>() << "\n";
      emit(report, abl_out);
    }
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalidArgument;
  } catch (const InvalidState& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalidState;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
