#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

namespace panodiff {

// On disk: one raw little-endian float32 file per tensor plus manifest.json listing
// names, files, shapes, dtype, the config, its hash and the seed.
struct Checkpoint {
  std::string kind;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  nlohmann::json extra = nlohmann::json::object();
  std::map<std::string, torch::Tensor> tensors;
};

// FNV-1a 64 over the compact JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);
bool checkpoint_exists(const std::filesystem::path& dir);
// Reads only manifest.json.
nlohmann::json read_checkpoint_manifest(const std::filesystem::path& dir);

// Parameters and buffers by their dotted names, detached copies.
std::map<std::string, torch::Tensor> module_state(const torch::nn::Module& module, const std::string& prefix = "");
// Copies matching entries into the module; throws ParseError on missing names or shape mismatch.
void load_module_state(torch::nn::Module& module, const std::map<std::string, torch::Tensor>& tensors,
                       const std::string& prefix = "");

}  // namespace panodiff
