#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "panodiff/config.hpp"
#include "panodiff/image_io.hpp"
#include "panodiff/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace panodiff;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("panodiff_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunConfig small_config(const fs::path& workdir, int count = 12) {
  RunConfig c;
  c.height = 16;
  c.dataset_size = count;
  c.workdir = workdir;
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + PANODIFF_CLI + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_set(const fs::path& dir, const std::string& id, const Panorama& pano, bool with_depth) {
  fs::create_directories(dir);
  io::write_rgb_png(dir / (id + "_rgb.png"), pano.rgb);
  if (with_depth) io::write_depth_png(dir / (id + "_depth.png"), pano.depth);
}

}  // namespace

TEST(RunConfig, DefaultsRoundTripThroughJson) {
  const RunConfig c;
  const json j = c;
  const RunConfig back = j.get<RunConfig>();
  EXPECT_EQ(json(back), j);
  EXPECT_EQ(back.width(), 128);
}

TEST(RunConfig, UnknownKeyIsAParseError) {
  EXPECT_THROW(json({{"heigth", 64}}).get<RunConfig>(), ParseError);
}

TEST(RunConfig, OverridesUseDottedPaths) {
  json j = json::object();
  apply_override(j, "ldm.train_steps=12");
  apply_override(j, "mask.kind=layout");
  apply_override(j, "ldm.use_depth=false");
  const RunConfig c = j.get<RunConfig>();
  EXPECT_EQ(c.ldm.train_steps, 12);
  EXPECT_EQ(c.mask.kind, MaskKind::kLayout);
  EXPECT_FALSE(c.ldm.use_depth);
  EXPECT_EQ(c.ldm.unet.in_channels, 3);
  EXPECT_THROW(apply_override(j, "no_equals_sign"), InvalidArgument);
}

TEST(RunConfig, ValidationRejectsBadSizes) {
  RunConfig c;
  c.height = 30;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c.height = 64;
  c.dataset_size = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(RunConfig, SeedEnvironmentOverride) {
  RunConfig c;
  ::setenv("PANODIFF_SEED", "123", 1);
  apply_seed_env(c);
  EXPECT_EQ(c.seed, 123u);
  ::setenv("PANODIFF_SEED", "12x", 1);
  EXPECT_THROW(apply_seed_env(c), InvalidArgument);
  ::unsetenv("PANODIFF_SEED");
}

TEST(RunConfig, DerivedSeedsDifferPerComponent) {
  RunConfig c;
  const RunConfig r = c.resolved();
  EXPECT_NE(r.vae_rgb.seed, r.vae_depth.seed);
  EXPECT_NE(r.ldm.seed, r.mask.seed);
  EXPECT_EQ(r.ldm.seed, c.resolved().ldm.seed);
  c.seed = 8;
  EXPECT_NE(c.resolved().ldm.seed, r.ldm.seed);
}

TEST(GenData, SplitCountsFollowRatios) {
  const auto dir = scratch("gen");
  const auto manifest = pipeline::gen_data(small_config(dir, 100));
  EXPECT_EQ(manifest.items_in(synth::Split::kTrain).size(), 80u);
  EXPECT_EQ(manifest.items_in(synth::Split::kVal).size(), 10u);
  EXPECT_EQ(manifest.items_in(synth::Split::kTest).size(), 10u);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "data")) files += e.is_regular_file() ? 1 : 0;
  EXPECT_EQ(files, 201u);
  EXPECT_THROW(pipeline::gen_data(small_config(dir, 0)), InvalidArgument);
}

TEST(Train, LdmWithoutAutoencodersNamesTheMissingStage) {
  const auto dir = scratch("train");
  try {
    pipeline::train(small_config(dir), pipeline::Stage::kLdm);
    FAIL() << "expected InvalidState";
  } catch (const InvalidState& e) {
    EXPECT_NE(std::string(e.what()).find("vae-rgb"), std::string::npos);
  }
  EXPECT_THROW(pipeline::stage_from_string("vae"), InvalidArgument);
}

TEST(Evaluate, SameSetScoresZeroAndReportsDepth) {
  const auto dir = scratch("eval_same");
  const RunConfig config = small_config(dir);
  pipeline::gen_data(config);
  const json r = pipeline::evaluate(config, dir / "data" / "train", dir / "data" / "train");
  EXPECT_NEAR(r.at("frechet").get<double>(), 0.0, 1e-6);
  ASSERT_TRUE(r.at("depth_available").get<bool>());
  for (const char* key : {"rmse", "mae", "absrel", "delta125"}) EXPECT_TRUE(r.at("depth").contains(key)) << key;
  EXPECT_DOUBLE_EQ(r.at("depth").at("delta125").get<double>(), 1.0);
  EXPECT_TRUE(r.contains("density"));
  EXPECT_TRUE(r.contains("coverage"));
  EXPECT_DOUBLE_EQ(r.at("lrce").at("results").get<double>(), r.at("lrce").at("reference").get<double>());
}

TEST(Evaluate, MissingDepthIsFlagged) {
  const auto dir = scratch("eval_nodepth");
  const RunConfig config = small_config(dir);
  pipeline::gen_data(config);
  const auto data = synth::load_dataset(dir / "data");
  for (std::size_t i = 0; i < 4; ++i) write_set(dir / "results", "r" + std::to_string(i), data.panoramas[i], false);
  const json r = pipeline::evaluate(config, dir / "results", dir / "data" / "train");
  EXPECT_FALSE(r.at("depth_available").get<bool>());
  EXPECT_FALSE(r.contains("depth"));
}

TEST(Evaluate, SampleIdsPairWithReferenceIds) {
  const auto dir = scratch("eval_pairs");
  const RunConfig config = small_config(dir);
  pipeline::gen_data(config);
  const auto data = synth::load_dataset(dir / "data");
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& item = data.manifest.items[i];
    write_set(dir / "ref", item.id, data.panoramas[i], true);
    write_set(dir / "results", item.id + "_sample0", data.panoramas[i], true);
  }
  const json r = pipeline::evaluate(config, dir / "results", dir / "ref");
  EXPECT_EQ(r.at("depth").at("pairs").get<int>(), 3);
  EXPECT_DOUBLE_EQ(r.at("depth").at("rmse").get<double>(), 0.0);
}

TEST(Evaluate, ExtractorMismatchIsRejected) {
  const auto dir = scratch("eval_mismatch");
  RunConfig config = small_config(dir);
  pipeline::gen_data(config);
  const auto ref = dir / "data" / "train";
  RunConfig other = config;
  other.extractor.seed += 1;
  const auto set = pipeline::read_image_set(ref);
  pipeline::write_feature_set(ref / pipeline::kReferenceFeaturesFile,
                              metrics::FeatureExtractor(other.extractor).extract(set.rgb));
  EXPECT_THROW(pipeline::evaluate(config, ref, ref), InvalidArgument);
  EXPECT_NO_THROW(pipeline::evaluate(other, ref, ref));
}

TEST(Evaluate, EmptyOrMissingDirectories) {
  const auto dir = scratch("eval_empty");
  EXPECT_THROW(pipeline::read_image_set(dir), InvalidArgument);
  EXPECT_THROW(pipeline::read_image_set(dir / "missing"), NotFound);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  const std::string w = " --workdir \"" + dir.string() + "\"";
  EXPECT_EQ(run_cli("gen-data" + w + " --count 0"), 2);
  EXPECT_EQ(run_cli("train" + w + " --stage ldm"), 3);
  EXPECT_EQ(run_cli("train" + w + " --stage nonsense"), 2);
  EXPECT_EQ(run_cli("evaluate" + w + " --results \"" + (dir / "nope").string() + "\" --reference \"" +
                    dir.string() + "\""),
            4);
  EXPECT_EQ(run_cli("gen-data --config \"" + (dir / "absent.json").string() + "\"" + w), 4);
  EXPECT_EQ(run_cli("ablate-rotation" + w + " --n 1"), 2);
  EXPECT_EQ(run_cli("gen-data" + w + " --set height=16 --count 6"), 0);
  EXPECT_TRUE(fs::exists(dir / "data" / "manifest.json"));
}

TEST(Cli, OutpaintWithoutCheckpointsIsInvalidState) {
  const auto dir = scratch("cli_outpaint");
  const std::string w = " --workdir \"" + dir.string() + "\" --set height=16";
  ASSERT_EQ(run_cli("gen-data" + w + " --count 4"), 0);
  const auto manifest = synth::load_manifest(dir / "data");
  const auto input = synth::rgb_path(dir / "data", manifest.items.front());
  EXPECT_EQ(run_cli("outpaint" + w + " --input \"" + input.string() + "\""), 3);
}
