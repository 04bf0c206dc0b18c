#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "spanprobe/synth.hpp"

namespace spanprobe::oracle {

inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "spanprobe_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline ActivationSet synth(std::size_t n, std::uint32_t layers, std::uint32_t hidden, std::uint64_t seed,
                           std::optional<std::uint32_t> signal_layer = std::nullopt, double strength = 0.0,
                           std::uint32_t classes = 2) {
  SynthSpec spec;
  spec.num_examples = n;
  spec.num_layers = layers;
  spec.hidden_dim = hidden;
  spec.num_classes = classes;
  spec.seed = seed;
  spec.signal_layer = signal_layer;
  spec.signal_strength = strength;
  return synth_activations(spec);
}

}  // namespace spanprobe::oracle
