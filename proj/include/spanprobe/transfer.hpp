#pragma once

// Seed-averaged edge probing and source x target transfer matrices with
// pretrained vs randomized-encoder baselines.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <unordered_set>
#include <vector>

#include "spanprobe/activation_store.hpp"
#include "spanprobe/errors.hpp"
#include "spanprobe/parallel.hpp"
#include "spanprobe/probe.hpp"

namespace spanprobe {

enum class WeightsMode { Pretrained, Randomized };

inline const char* to_string(WeightsMode m) { return m == WeightsMode::Pretrained ? "pretrained" : "randomized"; }

inline WeightsMode parse_weights_mode(const std::string& s) {
  if (s == "pretrained") return WeightsMode::Pretrained;
  if (s == "randomized") return WeightsMode::Randomized;
  throw ConfigError("weights mode must be 'pretrained' or 'randomized', got '" + s + "'");
}

/// A data distribution independent of encoder weights mode.
struct Distribution {
  std::string dataset;
  std::string lang;
  std::string encoder;

  auto operator<=>(const Distribution&) const = default;
  std::string to_string() const { return dataset + "/" + lang + "/" + encoder; }
};

struct DistributionKey {
  std::string dataset;
  std::string lang;
  std::string encoder;
  WeightsMode weights_mode = WeightsMode::Pretrained;

  auto operator<=>(const DistributionKey&) const = default;
  Distribution distribution() const { return {dataset, lang, encoder}; }

  void validate() const {
    if (dataset.empty() || lang.empty() || encoder.empty()) throw ConfigError("distribution key tags must be nonempty");
  }
};

inline const std::vector<std::uint64_t> kDefaultSeeds = {1, 2, 3};

struct EdgeProbeResult {
  double mean_accuracy = 0.0;
  std::vector<double> per_seed_accuracy;
  std::vector<std::uint64_t> seeds;
  std::size_t train_size = 0;
  std::size_t test_size = 0;

  bool operator==(const EdgeProbeResult&) const = default;
};

inline void check_disjoint(const RecordView& train, const RecordView& test) {
  std::unordered_set<std::uint64_t> ids;
  ids.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) ids.insert(train[i].example_id);
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (ids.contains(test[i].example_id)) {
      throw LeakageError("example id " + std::to_string(test[i].example_id) + " appears in both train and test");
    }
  }
}

/// One probe per seed, trained on `train` and scored on `test`.
/// With `same_distribution`, train/test id overlap aborts the run.
inline EdgeProbeResult run_edge_probe(const RecordView& train, const RecordView& test, const ProbeConfig& config,
                                      const std::vector<std::uint64_t>& seeds = kDefaultSeeds,
                                      bool same_distribution = true) {
  if (seeds.empty()) throw ConfigError("at least one seed required");
  if (train.dims != test.dims) throw ConfigError("train and test representations have different dims");
  if (same_distribution) check_disjoint(train, test);
  EdgeProbeResult res;
  res.seeds = seeds;
  res.train_size = train.size();
  res.test_size = test.size();
  double sum = 0.0;
  for (auto seed : seeds) {
    const auto trained = train_probe<double>(train, config, seed);
    const double acc = evaluate_accuracy(trained.params, test);
    res.per_seed_accuracy.push_back(acc);
    sum += acc;
  }
  res.mean_accuracy = sum / static_cast<double>(seeds.size());
  return res;
}

struct TrainTest {
  RecordView train;
  RecordView test;
};

struct TransferCell {
  Distribution source;
  Distribution target;
  WeightsMode weights_mode = WeightsMode::Pretrained;
  EdgeProbeResult result;
};

struct TransferMatrix {
  std::vector<Distribution> sources;
  std::vector<Distribution> targets;
  std::vector<std::uint64_t> seeds;
  std::size_t train_size = 0;
  std::vector<TransferCell> cells;  // mode-major, then source, then target

  const TransferCell& cell(const Distribution& s, const Distribution& t, WeightsMode m) const {
    for (const auto& c : cells)
      if (c.source == s && c.target == t && c.weights_mode == m) return c;
    throw ConfigError("no cell " + s.to_string() + " -> " + t.to_string());
  }
};

/// Every (source, target, weights mode) cell trains on source.train and tests on
/// target.test with the same seeds and config. Every distribution must be present
/// in both weights modes, and all train sets must have the same size.
inline TransferMatrix run_transfer_matrix(const std::map<DistributionKey, TrainTest>& sets, const ProbeConfig& config,
                                          const std::vector<std::uint64_t>& seeds = kDefaultSeeds,
                                          std::size_t workers = 1) {
  if (sets.empty()) throw ConfigError("transfer matrix needs at least one distribution");
  std::set<Distribution> dists;
  for (const auto& [key, tt] : sets) {
    key.validate();
    dists.insert(key.distribution());
  }
  const Dims dims = sets.begin()->second.train.dims;
  std::size_t train_size = sets.begin()->second.train.size();
  for (const auto& d : dists) {
    for (WeightsMode m : {WeightsMode::Pretrained, WeightsMode::Randomized}) {
      auto it = sets.find({d.dataset, d.lang, d.encoder, m});
      if (it == sets.end()) {
        throw ConfigError("distribution " + d.to_string() + " lacks its " + to_string(m) + " counterpart");
      }
      if (it->second.train.dims != dims || it->second.test.dims != dims) {
        throw ConfigError("distribution " + d.to_string() + " has representation dims unlike the others");
      }
      if (it->second.train.size() != train_size) {
        throw ConfigError("train sizes differ (" + std::to_string(it->second.train.size()) + " vs " +
                          std::to_string(train_size) + "); equalize them with subsample_train first");
      }
    }
  }

  TransferMatrix mx;
  mx.sources.assign(dists.begin(), dists.end());
  mx.targets = mx.sources;
  mx.seeds = seeds;
  mx.train_size = train_size;
  for (WeightsMode m : {WeightsMode::Pretrained, WeightsMode::Randomized})
    for (const auto& s : mx.sources)
      for (const auto& t : mx.targets) mx.cells.push_back({s, t, m, {}});

  parallel_for(mx.cells.size(), workers, [&](std::size_t i) {
    auto& cell = mx.cells[i];
    const auto& src = sets.at({cell.source.dataset, cell.source.lang, cell.source.encoder, cell.weights_mode});
    const auto& tgt = sets.at({cell.target.dataset, cell.target.lang, cell.target.encoder, cell.weights_mode});
    // Same corpus (the encoder may differ) means the ids share one namespace.
    const bool same = cell.source.dataset == cell.target.dataset && cell.source.lang == cell.target.lang;
    cell.result = run_edge_probe(src.train, tgt.test, config, seeds, same);
  });
  return mx;
}

}  // namespace spanprobe
