#pragma once

// Online-coding minimum description length and the compression metric.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "spanprobe/activation_store.hpp"
#include "spanprobe/corpus.hpp"
#include "spanprobe/errors.hpp"
#include "spanprobe/parallel.hpp"
#include "spanprobe/probe.hpp"

namespace spanprobe {

/// Doubling grid from 0.1% to 100%.
inline const std::vector<double> kDefaultPortionFractions = {0.001, 0.002, 0.004, 0.008, 0.016, 0.032,
                                                             0.0625, 0.125, 0.25, 0.5, 1.0};

struct PortionSchedule {
  std::vector<std::size_t> boundaries;  // t_1 < ... < t_S = N
  std::vector<double> fractions;

  std::size_t total() const { return boundaries.empty() ? 0 : boundaries.back(); }

  void validate(std::size_t n) const {
    if (boundaries.empty()) throw ConfigError("schedule has no boundaries");
    if (boundaries.front() < 1) throw ConfigError("first schedule boundary must be >= 1");
    for (std::size_t i = 1; i < boundaries.size(); ++i)
      if (boundaries[i] <= boundaries[i - 1]) throw ConfigError("schedule boundaries must be strictly increasing");
    if (boundaries.back() != n) {
      throw ConfigError("last schedule boundary " + std::to_string(boundaries.back()) + " != N " + std::to_string(n));
    }
  }
  bool operator==(const PortionSchedule&) const = default;
};

/// Boundaries round(fraction * N) (half away from zero), clamped to [1, N],
/// deduplicated; N itself is always the last boundary.
inline PortionSchedule make_schedule(std::size_t n, const std::vector<double>& fractions = kDefaultPortionFractions) {
  if (n < 10) throw ConfigError("online coding needs N >= 10, got " + std::to_string(n));
  PortionSchedule s;
  s.fractions = fractions;
  std::vector<std::size_t> b;
  for (double f : fractions) {
    if (!(f > 0.0) || f > 1.0) throw ConfigError("portion fractions must lie in (0, 1]");
    const auto r = static_cast<long long>(std::round(f * static_cast<double>(n)));
    b.push_back(static_cast<std::size_t>(std::clamp<long long>(r, 1, static_cast<long long>(n))));
  }
  b.push_back(n);
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  if (b.size() < 2) throw ConfigError("schedule for N=" + std::to_string(n) + " yields fewer than 2 distinct boundaries");
  s.boundaries = std::move(b);
  return s;
}

struct MDLReport {
  std::size_t num_examples = 0;
  std::uint32_t num_classes = 0;
  PortionSchedule schedule;
  double uniform_cost_bits = 0.0;
  std::vector<double> block_codelengths_bits;
  double total_mdl_bits = 0.0;
  double compression = 0.0;
  std::uint64_t seed = 0;
  LayerSelect layers;
};

/// N log2(K) / total.
inline double compression(double total_mdl_bits, std::size_t n, std::uint32_t k) {
  if (!(total_mdl_bits > 0.0)) throw ConfigError("total MDL must be > 0");
  return static_cast<double>(n) * std::log2(static_cast<double>(k)) / total_mdl_bits;
}

inline std::uint64_t portion_seed(std::uint64_t seed, std::size_t portion) {
  return derive_seed(seed, "portion", portion);
}

/// The first t_1 labels cost log2(K) each; block i+1 is coded by a probe freshly
/// trained on the first t_i records. `ordered` must already be shuffled.
inline MDLReport online_coding(const RecordView& ordered, const ProbeConfig& config, const PortionSchedule& schedule,
                               std::uint64_t seed) {
  const std::size_t n = ordered.size();
  schedule.validate(n);
  config.validate(ordered.dims);
  const double log2k = std::log2(static_cast<double>(config.num_classes));

  MDLReport rep;
  rep.num_examples = n;
  rep.num_classes = config.num_classes;
  rep.schedule = schedule;
  rep.seed = seed;
  rep.layers = config.layers;
  rep.uniform_cost_bits = static_cast<double>(schedule.boundaries.front()) * log2k;

  double total = rep.uniform_cost_bits;
  ForwardCache<double> cache;
  for (std::size_t i = 0; i + 1 < schedule.boundaries.size(); ++i) {
    const std::size_t begin = schedule.boundaries[i];
    const std::size_t end = schedule.boundaries[i + 1];
    TrainResult<double> trained;
    try {
      trained = train_probe<double>(ordered.prefix(begin), config, portion_seed(seed, i));
    } catch (const TrainingError& e) {
      throw TrainingError(e.epoch(), e.batch(), std::string("portion ") + std::to_string(i) + ": " + e.what());
    }
    cache = ForwardCache<double>(trained.params.shape);
    double block = 0.0;
    for (std::size_t j = begin; j < end; ++j) {
      forward_into(trained.params, ordered.dims, ordered[j], cache);
      block += loss_bits<double>(cache.p, ordered[j].label);
    }
    rep.block_codelengths_bits.push_back(block);
    total += block;
  }
  rep.total_mdl_bits = total;
  rep.compression = compression(total, n, config.num_classes);
  return rep;
}

/// Seeded permutation used as the online-coding transmission order.
inline RecordView coding_order(const RecordView& records, std::uint64_t seed) {
  RecordView out = records;
  Rng rng(derive_seed(seed, "coding-order"));
  rng.shuffle(std::span(out.records));
  return out;
}

struct LayerCurve {
  std::vector<std::uint32_t> layers;  // probed layer indices, in request order
  std::vector<double> compression;    // parallel to `layers`
  std::vector<MDLReport> reports;
  std::uint32_t best_layer = 0;  // argmax; ties to the lower layer index
};

/// Online coding with Single(l) for each requested layer (default: all), using
/// the same transmission order and seed for every layer.
inline LayerCurve layerwise_compression(const RecordView& train, const ProbeConfig& config,
                                        const std::vector<double>& fractions, std::uint64_t seed,
                                        std::optional<std::vector<std::uint32_t>> layers = std::nullopt,
                                        std::size_t workers = 1) {
  if (!layers) {
    layers.emplace();
    for (std::uint32_t l = 0; l < train.dims.num_layers; ++l) layers->push_back(l);
  }
  if (layers->empty()) throw ConfigError("no layers requested");
  const RecordView ordered = coding_order(train, seed);
  const PortionSchedule schedule = make_schedule(ordered.size(), fractions);

  LayerCurve curve;
  curve.layers = *layers;
  curve.reports.resize(layers->size());
  parallel_for(layers->size(), workers, [&](std::size_t i) {
    ProbeConfig cfg = config;
    cfg.layers = LayerSelect::single((*layers)[i]);
    try {
      curve.reports[i] = online_coding(ordered, cfg, schedule, seed);
    } catch (const Error& e) {
      throw Error("layer " + std::to_string((*layers)[i]) + ": " + e.what());
    }
  });
  std::size_t best = 0;
  for (std::size_t i = 0; i < curve.reports.size(); ++i) {
    curve.compression.push_back(curve.reports[i].compression);
    const double c = curve.reports[i].compression, cb = curve.reports[best].compression;
    if (c > cb || (c == cb && curve.layers[i] < curve.layers[best])) best = i;
  }
  curve.best_layer = curve.layers[best];
  return curve;
}

inline LayerCurve layerwise_compression(const ActivationSet& set, const SplitIds& splits, const ProbeConfig& config,
                                        const std::vector<double>& fractions, std::uint64_t seed,
                                        std::size_t workers = 1) {
  return layerwise_compression(select_ids(set, splits.train), config, fractions, seed, std::nullopt, workers);
}

}  // namespace spanprobe
