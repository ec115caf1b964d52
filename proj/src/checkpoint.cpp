#include "panodiff/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "panodiff/error.hpp"

namespace panodiff {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string file_name_for(const std::string& name) {
  std::string out = name;
  for (auto& ch : out) {
    if (ch == '/' || ch == '\\') ch = '_';
  }
  return out + ".f32";
}

}  // namespace

std::string config_hash(const json& config) {
  const std::string text = config.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void save_checkpoint(const Checkpoint& checkpoint, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  json tensors = json::array();
  for (const auto& [name, tensor] : checkpoint.tensors) {
    const auto t = tensor.detach().to(torch::kFloat32).contiguous();
    const std::string file = file_name_for(name);
    std::ofstream out(dir / file, std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / file).string());
    out.write(reinterpret_cast<const char*>(t.data_ptr<float>()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!out) throw IoError("short write to " + (dir / file).string());
    tensors.push_back({{"name", name}, {"file", file}, {"shape", t.sizes().vec()}});
  }
  json manifest = json::object();
  manifest["format"] = "panodiff-checkpoint";
  manifest["version"] = 1;
  manifest["kind"] = checkpoint.kind;
  manifest["dtype"] = "float32";
  manifest["seed"] = checkpoint.seed;
  manifest["config_hash"] = config_hash(checkpoint.config);
  manifest["config"] = checkpoint.config;
  manifest["extra"] = checkpoint.extra;
  manifest["tensors"] = tensors;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << "\n";
}

json read_checkpoint_manifest(const fs::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw NotFound("checkpoint manifest not found: " + path.string());
  try {
    json manifest = json::parse(in);
    if (manifest.value("format", "") != "panodiff-checkpoint") throw ParseError("not a checkpoint: " + path.string());
    return manifest;
  } catch (const json::exception& e) {
    throw ParseError("corrupt checkpoint manifest " + path.string() + ": " + e.what());
  }
}

bool checkpoint_exists(const fs::path& dir) { return fs::exists(dir / "manifest.json"); }

Checkpoint load_checkpoint(const fs::path& dir) {
  const json manifest = read_checkpoint_manifest(dir);
  Checkpoint out;
  try {
    if (manifest.at("dtype") != "float32") throw ParseError("unsupported checkpoint dtype");
    out.kind = manifest.at("kind").get<std::string>();
    out.config = manifest.at("config");
    out.seed = manifest.at("seed").get<std::uint64_t>();
    out.extra = manifest.value("extra", json::object());
    if (manifest.at("config_hash").get<std::string>() != config_hash(out.config)) {
      throw ParseError("checkpoint config hash mismatch in " + dir.string());
    }
    for (const auto& entry : manifest.at("tensors")) {
      const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
      auto t = torch::empty(shape, torch::kFloat32);
      const auto path = dir / entry.at("file").get<std::string>();
      std::ifstream in(path, std::ios::binary);
      if (!in) throw NotFound("checkpoint tensor file missing: " + path.string());
      const auto bytes = static_cast<std::streamsize>(t.numel() * sizeof(float));
      in.read(reinterpret_cast<char*>(t.data_ptr<float>()), bytes);
      if (in.gcount() != bytes) throw ParseError("truncated tensor file " + path.string());
      out.tensors.emplace(entry.at("name").get<std::string>(), t);
    }
  } catch (const json::exception& e) {
    throw ParseError("malformed checkpoint manifest in " + dir.string() + ": " + e.what());
  }
  return out;
}

std::map<std::string, torch::Tensor> module_state(const torch::nn::Module& module, const std::string& prefix) {
  std::map<std::string, torch::Tensor> out;
  for (const auto& item : module.named_parameters(true)) out[prefix + item.key()] = item.value().detach().clone();
  for (const auto& item : module.named_buffers(true)) out[prefix + item.key()] = item.value().detach().clone();
  return out;
}

void load_module_state(torch::nn::Module& module, const std::map<std::string, torch::Tensor>& tensors,
                       const std::string& prefix) {
  torch::NoGradGuard no_grad;
  auto assign = [&](const std::string& key, torch::Tensor& target) {
    const auto it = tensors.find(prefix + key);
    if (it == tensors.end()) throw ParseError("checkpoint lacks tensor '" + prefix + key + "'");
    if (it->second.sizes() != target.sizes()) throw ParseError("shape mismatch for tensor '" + prefix + key + "'");
    target.copy_(it->second);
  };
  for (auto& item : module.named_parameters(true)) assign(item.key(), item.value());
  for (auto& item : module.named_buffers(true)) assign(item.key(), item.value());
}

}  // namespace panodiff
