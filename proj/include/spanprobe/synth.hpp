#pragma once

// Synthetic activation sets with an optional label signal planted in one layer.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "spanprobe/activation_store.hpp"
#include "spanprobe/rng.hpp"

namespace spanprobe {

struct SynthSpec {
  std::uint64_t num_examples = 0;
  std::uint32_t num_layers = 1;
  std::uint32_t hidden_dim = 1;
  std::uint32_t num_classes = 2;
  std::uint64_t seed = 0;
  std::optional<std::uint32_t> signal_layer;
  double signal_strength = 0.0;
  std::uint32_t max_span_len = 3;  // span lengths uniform in [1, max_span_len]
  std::uint64_t first_id = 0;      // example ids are first_id, first_id+1, ...
  nlohmann::json metadata = nlohmann::json::object();

  void validate() const {
    if (num_examples < 1) throw ValidationError("synth: N must be >= 1");
    if (num_layers < 1 || hidden_dim < 1) throw ValidationError("synth: L and H must be >= 1");
    if (num_classes < 2) throw ValidationError("synth: K must be >= 2");
    if (signal_layer && *signal_layer >= num_layers) throw ValidationError("synth: signal_layer must be < L");
    if (!(signal_strength >= 0.0) || !std::isfinite(signal_strength)) throw ValidationError("synth: signal_strength must be >= 0");
    if (max_span_len < 1) throw ValidationError("synth: max_span_len must be >= 1");
    if (!metadata.is_object()) throw ValidationError("synth: metadata must be an object");
  }
};

/// Labels uniform over K, tensors standard normal. With a signal layer, each
/// class c gets a fixed random unit direction u_c and every span token at that
/// layer is shifted by signal_strength * u_c.
///
/// Labels, span lengths and noise come from independent substreams, so two
/// specs differing only in signal fields yield the same ids, labels and spans.
inline ActivationSet synth_activations(const SynthSpec& spec) {
  spec.validate();
  const std::size_t L = spec.num_layers, H = spec.hidden_dim, K = spec.num_classes;

  std::vector<std::vector<double>> directions(K, std::vector<double>(H));
  {
    Rng rng(derive_seed(spec.seed, "synth-directions"));
    for (auto& u : directions) {
      double norm = 0.0;
      do {
        norm = 0.0;
        for (auto& x : u) {
          x = rng.normal();
          norm += x * x;
        }
      } while (norm == 0.0);
      norm = std::sqrt(norm);
      for (auto& x : u) x /= norm;
    }
  }

  Rng labels(derive_seed(spec.seed, "synth-labels"));
  Rng spans(derive_seed(spec.seed, "synth-spans"));
  Rng noise(derive_seed(spec.seed, "synth-noise"));

  nlohmann::json meta = {{"encoder", "synthetic"},
                         {"dataset", "synthetic"},
                         {"lang", "none"},
                         {"weights_mode", "pretrained"},
                         {"layers", "synthetic layer index 0..L-1"},
                         {"seed", spec.seed},
                         {"signal_strength", spec.signal_strength}};
  if (spec.signal_layer) meta["signal_layer"] = *spec.signal_layer;
  meta.update(spec.metadata);

  ActivationSet set;
  set.header.num_layers = spec.num_layers;
  set.header.hidden_dim = spec.hidden_dim;
  set.header.num_classes = spec.num_classes;
  set.header.num_examples = spec.num_examples;
  set.header.metadata = meta.dump();
  set.records.reserve(spec.num_examples);

  const Dims dims = set.dims();
  for (std::uint64_t i = 0; i < spec.num_examples; ++i) {
    ActivationRecord r;
    r.example_id = spec.first_id + i;
    r.label = static_cast<std::uint32_t>(labels.uniform_index(K));
    r.span_len = static_cast<std::uint32_t>(1 + spans.uniform_index(spec.max_span_len));
    r.values.resize(std::size_t{r.span_len} * L * H);
    for (auto& v : r.values) v = static_cast<float>(noise.normal());
    if (spec.signal_layer && spec.signal_strength > 0.0) {
      const auto& u = directions[r.label];
      for (std::size_t t = 0; t < r.span_len; ++t) {
        auto tok = r.token(dims, *spec.signal_layer, t);
        for (std::size_t d = 0; d < H; ++d) tok[d] = static_cast<float>(tok[d] + spec.signal_strength * u[d]);
      }
    }
    set.records.push_back(std::move(r));
  }
  return set;
}

}  // namespace spanprobe
