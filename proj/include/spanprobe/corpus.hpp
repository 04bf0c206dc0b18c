#pragma once

// Canonical labeled examples, label balancing, stratified splits and
// train-set subsampling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "spanprobe/activation_store.hpp"
#include "spanprobe/errors.hpp"
#include "spanprobe/rng.hpp"

namespace spanprobe {

struct LabeledExample {
  std::uint64_t id = 0;
  std::string text;
  std::size_t span_start = 0;  // word index, inclusive
  std::size_t span_end = 0;    // word index, exclusive
  std::string label_name;
  std::uint32_t label_index = 0;
  std::string lang;
  std::string dataset;
  std::optional<std::string> source_domain;
  std::optional<std::string> target_domain;

  bool operator==(const LabeledExample&) const = default;
};

/// Label names sorted lexicographically; index = position.
struct LabelMap {
  std::vector<std::string> names;

  std::size_t size() const { return names.size(); }
  std::optional<std::uint32_t> find(const std::string& name) const {
    auto it = std::lower_bound(names.begin(), names.end(), name);
    if (it == names.end() || *it != name) return std::nullopt;
    return static_cast<std::uint32_t>(it - names.begin());
  }
  bool operator==(const LabelMap&) const = default;
};

struct Corpus {
  std::vector<LabeledExample> examples;
  LabelMap labels;
};

inline std::size_t word_count(const std::string& text) {
  std::istringstream in(text);
  std::size_t n = 0;
  for (std::string w; in >> w;) ++n;
  return n;
}

inline nlohmann::json to_json(const LabeledExample& ex) {
  nlohmann::json j = {{"id", ex.id},     {"text", ex.text}, {"span_start", ex.span_start}, {"span_end", ex.span_end},
                      {"label", ex.label_name}, {"lang", ex.lang}, {"dataset", ex.dataset}};
  if (ex.source_domain) j["source_domain"] = *ex.source_domain;
  if (ex.target_domain) j["target_domain"] = *ex.target_domain;
  return j;
}

/// Parses newline-delimited JSON records. Blank lines are skipped.
inline Corpus parse_examples(std::istream& in) {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  std::unordered_set<std::uint64_t> seen;
  auto fail = [&](const std::string& what) {
    throw ValidationError("line " + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) fail("record is not a JSON object");
    LabeledExample ex;
    try {
      ex.id = j.at("id").get<std::uint64_t>();
      ex.text = j.at("text").get<std::string>();
      ex.span_start = j.at("span_start").get<std::size_t>();
      ex.span_end = j.at("span_end").get<std::size_t>();
      ex.label_name = j.at("label").get<std::string>();
      ex.lang = j.at("lang").get<std::string>();
      ex.dataset = j.at("dataset").get<std::string>();
      if (j.contains("source_domain") && !j["source_domain"].is_null()) ex.source_domain = j["source_domain"].get<std::string>();
      if (j.contains("target_domain") && !j["target_domain"].is_null()) ex.target_domain = j["target_domain"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("bad field: ") + e.what());
    }
    const std::size_t words = word_count(ex.text);
    if (!(ex.span_start < ex.span_end && ex.span_end <= words)) {
      throw ValidationError("example id " + std::to_string(ex.id) + ": span [" + std::to_string(ex.span_start) + ", " +
                            std::to_string(ex.span_end) + ") out of bounds for " + std::to_string(words) + " words");
    }
    if (!seen.insert(ex.id).second) throw ValidationError("duplicate example id " + std::to_string(ex.id));
    corpus.examples.push_back(std::move(ex));
  }

  std::set<std::string> names;
  for (const auto& ex : corpus.examples) names.insert(ex.label_name);
  corpus.labels.names.assign(names.begin(), names.end());
  for (auto& ex : corpus.examples) ex.label_index = *corpus.labels.find(ex.label_name);
  return corpus;
}

inline Corpus load_examples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  return parse_examples(in);
}

struct SplitRatios {
  double train = 0.7;
  double dev = 0.1;
  double test = 0.2;

  void validate() const {
    if (!(train > 0 && dev > 0 && test > 0)) throw ConfigError("split ratios must be positive");
    if (std::abs(train + dev + test - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  }
  bool operator==(const SplitRatios&) const = default;
};

/// Positions into the input sequence for each split.
struct SplitIndices {
  std::vector<std::size_t> train, dev, test;
};

/// Balances classes by seeded downsampling to the minority count, then splits
/// every class with identical per-class counts and shuffles each split.
/// `labels[i]` is the class of item i; every class in [0, num_classes) must occur.
inline SplitIndices balanced_split_indices(std::span<const std::uint32_t> labels, std::size_t num_classes,
                                           const SplitRatios& ratios, std::uint64_t seed,
                                           const std::vector<std::string>& class_names = {}) {
  ratios.validate();
  if (num_classes < 2) throw ConfigError("need at least 2 classes");
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) throw ValidationError("label index " + std::to_string(labels[i]) + " out of range");
    by_class[labels[i]].push_back(i);
  }
  std::size_t minority = labels.size();
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (by_class[c].empty()) {
      const std::string name = c < class_names.size() ? class_names[c] : std::to_string(c);
      throw ValidationError("class '" + name + "' has no examples");
    }
    minority = std::min(minority, by_class[c].size());
  }

  const auto n_train = static_cast<std::size_t>(std::llround(ratios.train * static_cast<double>(minority)));
  const auto n_train_dev =
      static_cast<std::size_t>(std::llround((ratios.train + ratios.dev) * static_cast<double>(minority)));

  SplitIndices out;
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& members = by_class[c];
    Rng rng(derive_seed(seed, "balance", c));
    rng.shuffle(std::span(members));
    members.resize(minority);
    for (std::size_t k = 0; k < minority; ++k) {
      auto& dst = k < n_train ? out.train : (k < n_train_dev ? out.dev : out.test);
      dst.push_back(members[k]);
    }
  }
  Rng shuffle_rng(derive_seed(seed, "split-shuffle"));
  shuffle_rng.shuffle(std::span(out.train));
  shuffle_rng.shuffle(std::span(out.dev));
  shuffle_rng.shuffle(std::span(out.test));
  return out;
}

/// Seeded, class-stratified choice of exactly `n` of `labels`; returned
/// positions keep their original relative order. Per-class quotas are n/K with
/// the remainder going to the lowest class indices that still have spares.
inline std::vector<std::size_t> stratified_subsample_indices(std::span<const std::uint32_t> labels,
                                                             std::size_t num_classes, std::size_t n,
                                                             std::uint64_t seed) {
  if (n > labels.size()) {
    throw ConfigError("requested train size " + std::to_string(n) + " exceeds available " +
                      std::to_string(labels.size()));
  }
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) by_class.at(labels[i]).push_back(i);

  std::vector<std::size_t> quota(num_classes, 0);
  std::size_t remaining = n;
  // Water-fill: equal shares, capped by availability.
  while (remaining > 0) {
    std::size_t open = 0;
    for (std::size_t c = 0; c < num_classes; ++c) open += quota[c] < by_class[c].size();
    const std::size_t share = std::max<std::size_t>(1, remaining / open);
    for (std::size_t c = 0; c < num_classes && remaining > 0; ++c) {
      const std::size_t take = std::min({share, by_class[c].size() - quota[c], remaining});
      quota[c] += take;
      remaining -= take;
    }
  }

  std::vector<std::size_t> chosen;
  chosen.reserve(n);
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto members = by_class[c];
    Rng rng(derive_seed(seed, "subsample", c));
    rng.shuffle(std::span(members));
    chosen.insert(chosen.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(quota[c]));
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

struct CorpusSplits {
  std::vector<LabeledExample> train, dev, test;
  std::uint64_t seed = 0;
  SplitRatios ratios;
};

inline CorpusSplits balance_and_split(const std::vector<LabeledExample>& examples, const LabelMap& labels,
                                      const SplitRatios& ratios, std::uint64_t seed) {
  if (labels.size() < 2) throw ValidationError("need at least 2 classes, found " + std::to_string(labels.size()));
  std::vector<std::uint32_t> y;
  y.reserve(examples.size());
  for (const auto& ex : examples) y.push_back(ex.label_index);
  const auto idx = balanced_split_indices(y, labels.size(), ratios, seed, labels.names);
  CorpusSplits out;
  out.seed = seed;
  out.ratios = ratios;
  for (auto i : idx.train) out.train.push_back(examples[i]);
  for (auto i : idx.dev) out.dev.push_back(examples[i]);
  for (auto i : idx.test) out.test.push_back(examples[i]);
  return out;
}

inline CorpusSplits subsample_train(const CorpusSplits& splits, std::size_t n, std::uint64_t seed,
                                    std::size_t num_classes) {
  std::vector<std::uint32_t> y;
  for (const auto& ex : splits.train) y.push_back(ex.label_index);
  const auto keep = stratified_subsample_indices(y, num_classes, n, seed);
  CorpusSplits out = splits;
  out.train.clear();
  for (auto i : keep) out.train.push_back(splits.train[i]);
  return out;
}

/// Id lists per split: the document that ties an activation file to a split.
struct SplitIds {
  std::vector<std::uint64_t> train, dev, test;
  std::uint64_t seed = 0;
  SplitRatios ratios;
  std::vector<std::string> labels;

  bool operator==(const SplitIds&) const = default;
};

inline SplitIds split_ids(const CorpusSplits& s, const LabelMap& labels) {
  SplitIds ids{{}, {}, {}, s.seed, s.ratios, labels.names};
  for (const auto& ex : s.train) ids.train.push_back(ex.id);
  for (const auto& ex : s.dev) ids.dev.push_back(ex.id);
  for (const auto& ex : s.test) ids.test.push_back(ex.id);
  return ids;
}

/// Balanced split of an activation set directly from record labels.
inline SplitIds balance_and_split(const ActivationSet& set, const SplitRatios& ratios, std::uint64_t seed) {
  std::vector<std::uint32_t> y;
  y.reserve(set.records.size());
  for (const auto& r : set.records) y.push_back(r.label);
  const auto idx = balanced_split_indices(y, set.header.num_classes, ratios, seed);
  SplitIds ids;
  ids.seed = seed;
  ids.ratios = ratios;
  for (auto i : idx.train) ids.train.push_back(set.records[i].example_id);
  for (auto i : idx.dev) ids.dev.push_back(set.records[i].example_id);
  for (auto i : idx.test) ids.test.push_back(set.records[i].example_id);
  return ids;
}

/// Train ids subsampled to `n` (class-stratified by the records' labels).
inline SplitIds subsample_train(const SplitIds& ids, const ActivationSet& set, std::size_t n, std::uint64_t seed) {
  const RecordView train = select_ids(set, ids.train);
  std::vector<std::uint32_t> y;
  for (std::size_t i = 0; i < train.size(); ++i) y.push_back(train[i].label);
  const auto keep = stratified_subsample_indices(y, set.header.num_classes, n, seed);
  SplitIds out = ids;
  out.train.clear();
  for (auto i : keep) out.train.push_back(ids.train[i]);
  return out;
}

inline nlohmann::json to_json(const SplitIds& s) {
  return {{"schema", 1},
          {"seed", s.seed},
          {"ratios", {s.ratios.train, s.ratios.dev, s.ratios.test}},
          {"labels", s.labels},
          {"train", s.train},
          {"dev", s.dev},
          {"test", s.test}};
}

inline SplitIds split_ids_from_json(const nlohmann::json& j) {
  try {
    SplitIds s;
    if (j.at("schema").get<int>() != 1) throw FormatError("unsupported splits schema");
    s.seed = j.at("seed").get<std::uint64_t>();
    const auto r = j.at("ratios").get<std::vector<double>>();
    if (r.size() != 3) throw FormatError("splits: ratios must have 3 entries");
    s.ratios = {r[0], r[1], r[2]};
    s.labels = j.value("labels", std::vector<std::string>{});
    s.train = j.at("train").get<std::vector<std::uint64_t>>();
    s.dev = j.at("dev").get<std::vector<std::uint64_t>>();
    s.test = j.at("test").get<std::vector<std::uint64_t>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("splits document: ") + e.what());
  }
}

inline void save_split_ids(const SplitIds& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << to_json(s).dump(1) << '\n';
  if (!out) throw IoError(path.string(), "write failed");
}

inline SplitIds load_split_ids(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return split_ids_from_json(j);
}

}  // namespace spanprobe
