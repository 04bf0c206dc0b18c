#pragma once

// Run manifests: the reproducibility envelope written next to every output.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "spanprobe/errors.hpp"
#include "spanprobe/probe.hpp"
#include "spanprobe/report.hpp"

namespace spanprobe {

/// An output directory holds a manifest whose input hashes differ from this run.
class ManifestMismatchError : public Error {
public:
  using Error::Error;
};

struct ManifestInput {
  std::string key;  // role or DistributionKey rendering
  std::string path;
  std::string sha256;
};

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::vector<ManifestInput> inputs;
  ProbeConfig config;
  std::vector<double> fractions;
  std::vector<std::uint64_t> seeds;
  std::optional<std::size_t> train_size;
  std::string output_dir;
  std::string engine_version = kEngineVersion;

  /// Records an input and hashes it; the file must exist.
  void add_input(const std::string& key, const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError(path.string(), "input does not exist");
    inputs.push_back({key, path.string(), sha256_file(path)});
  }
};

inline nlohmann::json to_json(const ProbeConfig& c) {
  return {{"projection_dim", c.projection_dim}, {"mlp_hidden_dim", c.mlp_hidden_dim},
          {"layers", c.layers.to_string()},     {"pooling", "mean"},
          {"learning_rate", c.learning_rate},   {"batch_size", c.batch_size},
          {"epochs", c.epochs},                 {"num_classes", c.num_classes},
          {"adam_beta1", c.adam_beta1},         {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon}};
}

inline nlohmann::json to_json(const RunManifest& m) {
  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& in : m.inputs) inputs.push_back({{"key", in.key}, {"path", in.path}, {"sha256", in.sha256}});
  nlohmann::json j = {{"command", m.command},       {"argv", m.argv},     {"inputs", inputs},
                      {"config", to_json(m.config)}, {"fractions", m.fractions}, {"seeds", m.seeds},
                      {"output_dir", m.output_dir}, {"engine_version", m.engine_version}};
  j["train_size"] = m.train_size ? nlohmann::json(*m.train_size) : nlohmann::json(nullptr);
  return j;
}

inline constexpr const char* kManifestFile = "manifest.json";

/// Refuses to reuse an output directory produced from different inputs.
inline void check_resume(const RunManifest& m, const std::filesystem::path& outdir) {
  const auto path = outdir / kManifestFile;
  if (!std::filesystem::exists(path)) return;
  std::ifstream in(path);
  nlohmann::json prev;
  try {
    prev = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception&) {
    throw ManifestMismatchError("existing manifest is unreadable: " + path.string());
  }
  if (prev.value("command", "") != m.command) {
    throw ManifestMismatchError("output directory holds a '" + prev.value("command", "") + "' run: " + path.string());
  }
  if (prev.value("inputs", nlohmann::json::array()) != to_json(m)["inputs"]) {
    throw ManifestMismatchError("input hashes differ from the existing manifest: " + path.string());
  }
}

inline void write_manifest(const RunManifest& m, const std::filesystem::path& outdir) {
  std::filesystem::create_directories(outdir);
  write_text(outdir / kManifestFile, to_json(m).dump(2) + "\n");
}

}  // namespace spanprobe
