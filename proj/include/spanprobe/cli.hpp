#pragma once

// Command-line surface: prep | edge | mdl | mdl-layers | transfer | report | selftest | synth.
//
// Failures print exactly one line to the error stream:
//   error code=<exit code> kind=<kind> message="<text>"

#include <chrono>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "spanprobe/activation_store.hpp"
#include "spanprobe/corpus.hpp"
#include "spanprobe/errors.hpp"
#include "spanprobe/gradcheck.hpp"
#include "spanprobe/manifest.hpp"
#include "spanprobe/mdl.hpp"
#include "spanprobe/param_io.hpp"
#include "spanprobe/probe.hpp"
#include "spanprobe/report.hpp"
#include "spanprobe/synth.hpp"
#include "spanprobe/transfer.hpp"

namespace spanprobe {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitIo = 3,
  kExitFormat = 4,
  kExitManifestMismatch = 5,
  kExitConfig = 6,
  kExitCompute = 7,
};

namespace cli {

struct UsageError : Error {
  using Error::Error;
};

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

inline std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  try {
    for (const auto& item : split_list(s)) out.push_back(std::stoull(item));
  } catch (const std::exception&) {
    throw UsageError("--seeds expects comma-separated integers, got '" + s + "'");
  }
  if (out.empty()) throw UsageError("--seeds is empty");
  return out;
}

inline std::vector<double> parse_reals(const std::string& s, const char* flag) {
  std::vector<double> out;
  try {
    for (const auto& item : split_list(s)) out.push_back(std::stod(item));
  } catch (const std::exception&) {
    throw UsageError(std::string(flag) + " expects comma-separated numbers, got '" + s + "'");
  }
  if (out.empty()) throw UsageError(std::string(flag) + " is empty");
  return out;
}

inline LayerSelect parse_layer_select(const std::string& s) {
  if (s == "mix") return LayerSelect::mix();
  try {
    return LayerSelect::single(static_cast<std::uint32_t>(std::stoul(s)));
  } catch (const std::exception&) {
    throw UsageError("--layers expects 'mix' or a layer index, got '" + s + "'");
  }
}

/// "all" or a comma-separated list of layer indices.
inline std::optional<std::vector<std::uint32_t>> parse_layer_list(const std::string& s) {
  if (s == "all") return std::nullopt;
  std::vector<std::uint32_t> out;
  try {
    for (const auto& item : split_list(s)) out.push_back(static_cast<std::uint32_t>(std::stoul(item)));
  } catch (const std::exception&) {
    throw UsageError("--layers expects 'all' or comma-separated layer indices, got '" + s + "'");
  }
  return out;
}

inline void require_file(const std::string& path) {
  if (path.empty()) throw UsageError("missing required path");
  if (!std::filesystem::exists(path)) throw IoError(path, "no such file");
}

inline bool is_apf(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  return in.gcount() == 4 && std::equal(magic, magic + 4, kApfMagic);
}

inline std::string run_id_of(const ActivationSet& set, const std::string& path) {
  const auto meta = set.header.metadata_json();
  std::vector<std::string> parts;
  for (const char* k : {"dataset", "lang", "encoder", "weights_mode"})
    if (meta.contains(k) && meta[k].is_string()) parts.push_back(meta[k].get<std::string>());
  if (parts.empty()) return std::filesystem::path(path).stem().string();
  return join(parts, [](const std::string& p) { return p; }, ":");
}

inline void check_weights_mode(const ActivationSet& set, const std::string& expected, const std::string& path) {
  if (expected.empty()) return;
  parse_weights_mode(expected);
  const auto meta = set.header.metadata_json();
  const std::string actual = meta.value("weights_mode", std::string{});
  if (actual != expected) {
    throw ValidationError(path + ": metadata weights_mode is '" + actual + "', expected '" + expected + "'");
  }
}

struct Options {
  std::string in, splits, out, layers, seeds = "1,2,3", fractions, weights_mode, ratios = "0.7,0.1,0.2";
  std::optional<std::size_t> train_size;
  std::size_t epochs = 5;
  std::size_t workers = 1;
  // synth
  std::uint64_t n = 2000;
  std::uint32_t num_layers = 13, hidden_dim = 32, classes = 2;
  std::optional<std::uint32_t> signal_layer;
  double signal_strength = 0.0;
  std::string dataset = "synthetic", lang = "none", encoder = "synthetic";
  std::uint64_t first_id = 0;
  // selftest
  std::size_t draws = 20;
};

inline ProbeConfig probe_config(const Options& o, std::uint32_t num_classes) {
  ProbeConfig c;
  c.num_classes = num_classes;
  c.epochs = o.epochs;
  return c;
}

struct Loaded {
  std::string path;
  ActivationSet set;
  SplitIds splits;
};

/// Loads an APF file and its splits; applies --train-size subsampling.
inline Loaded load_inputs(const Options& o, RunManifest& m, std::uint64_t seed) {
  require_file(o.in);
  require_file(o.splits);
  m.add_input("activations", o.in);
  m.add_input("splits", o.splits);
  Loaded l{o.in, read_activation_set(o.in), load_split_ids(o.splits)};
  check_weights_mode(l.set, o.weights_mode, o.in);
  if (o.train_size) l.splits = subsample_train(l.splits, l.set, *o.train_size, derive_seed(seed, "subsample"));
  return l;
}

inline void finish(const RunManifest& m, const RunResults& results, const std::string& outdir, std::ostream& out) {
  for (const auto& p : emit_reports(results, outdir)) out << "wrote " << p.string() << "\n";
  write_manifest(m, outdir);
  out << "wrote " << (std::filesystem::path(outdir) / kManifestFile).string() << "\n";
}

inline RunManifest start_manifest(const std::string& command, const std::vector<std::string>& argv, const Options& o) {
  RunManifest m;
  m.command = command;
  m.argv = argv;
  m.output_dir = o.out;
  m.seeds = parse_seeds(o.seeds);
  m.train_size = o.train_size;
  if (o.out.empty()) throw UsageError("--out is required");
  return m;
}

inline int cmd_synth(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw UsageError("--out is required");
  SynthSpec spec;
  spec.num_examples = o.n;
  spec.num_layers = o.num_layers;
  spec.hidden_dim = o.hidden_dim;
  spec.num_classes = o.classes;
  spec.seed = parse_seeds(o.seeds).front();
  spec.signal_layer = o.signal_layer;
  spec.signal_strength = o.signal_strength;
  spec.first_id = o.first_id;
  spec.metadata = {{"dataset", o.dataset}, {"lang", o.lang}, {"encoder", o.encoder},
                   {"weights_mode", o.weights_mode.empty() ? "pretrained" : o.weights_mode}};
  if (!o.weights_mode.empty()) parse_weights_mode(o.weights_mode);
  write_activation_set(synth_activations(spec), o.out);
  out << "wrote " << o.out << "\n";
  return kExitOk;
}

inline int cmd_prep(const Options& o, const std::vector<std::string>& argv, std::ostream& out) {
  RunManifest m = start_manifest("prep", argv, o);
  require_file(o.in);
  m.add_input("examples", o.in);
  const auto r = parse_reals(o.ratios, "--ratios");
  if (r.size() != 3) throw UsageError("--ratios expects three values train,dev,test");
  const SplitRatios ratios{r[0], r[1], r[2]};
  const std::uint64_t seed = m.seeds.front();
  check_resume(m, o.out);

  SplitIds ids;
  if (is_apf(o.in)) {
    const auto set = read_activation_set(o.in);
    ids = balance_and_split(set, ratios, derive_seed(seed, "split"));
    if (o.train_size) ids = subsample_train(ids, set, *o.train_size, derive_seed(seed, "subsample"));
  } else {
    const Corpus corpus = load_examples(o.in);
    CorpusSplits splits = balance_and_split(corpus.examples, corpus.labels, ratios, derive_seed(seed, "split"));
    if (o.train_size) splits = subsample_train(splits, *o.train_size, derive_seed(seed, "subsample"), corpus.labels.size());
    ids = split_ids(splits, corpus.labels);
  }
  ids.seed = seed;
  std::filesystem::create_directories(o.out);
  save_split_ids(ids, std::filesystem::path(o.out) / "splits.json");
  write_manifest(m, o.out);
  out << "train=" << ids.train.size() << " dev=" << ids.dev.size() << " test=" << ids.test.size() << "\n";
  out << "wrote " << (std::filesystem::path(o.out) / "splits.json").string() << "\n";
  return kExitOk;
}

inline int cmd_edge(const Options& o, const std::vector<std::string>& argv, std::ostream& out) {
  RunManifest m = start_manifest("edge", argv, o);
  const Loaded l = load_inputs(o, m, m.seeds.front());
  check_resume(m, o.out);
  ProbeConfig cfg = probe_config(o, l.set.header.num_classes);
  cfg.layers = o.layers.empty() ? LayerSelect::mix() : parse_layer_select(o.layers);
  m.config = cfg;
  const RecordView train = select_ids(l.set, l.splits.train);
  const RecordView dev = select_ids(l.set, l.splits.dev);
  const RecordView test = select_ids(l.set, l.splits.test);
  check_disjoint(train, test);
  check_disjoint(train, dev);

  std::filesystem::create_directories(o.out);
  EdgeProbeResult res;
  res.seeds = m.seeds;
  res.train_size = train.size();
  res.test_size = test.size();
  for (auto seed : m.seeds) {
    const auto trained = train_probe<double>(train, cfg, seed);
    const double acc = evaluate_accuracy(trained.params, test);
    res.per_seed_accuracy.push_back(acc);
    res.mean_accuracy += acc / static_cast<double>(m.seeds.size());
    const double dev_acc = dev.empty() ? std::nan("") : evaluate_accuracy(trained.params, dev);
    save_params(trained.params, std::filesystem::path(o.out) / ("probe_seed" + std::to_string(seed) + ".bin"));
    out << "seed " << seed << " test_accuracy=" << format_real(acc) << " dev_accuracy=" << format_real(dev_acc) << "\n";
  }
  out << "mean_accuracy=" << format_real(res.mean_accuracy) << "\n";
  RunResults results;
  results.run_id = run_id_of(l.set, o.in);
  results.edge = {{cfg.layers, res}};
  finish(m, results, o.out, out);
  return kExitOk;
}

inline int cmd_mdl(const Options& o, const std::vector<std::string>& argv, std::ostream& out, bool layerwise) {
  RunManifest m = start_manifest(layerwise ? "mdl-layers" : "mdl", argv, o);
  const std::uint64_t seed = m.seeds.front();
  const Loaded l = load_inputs(o, m, seed);
  check_resume(m, o.out);
  ProbeConfig cfg = probe_config(o, l.set.header.num_classes);
  m.fractions = o.fractions.empty() ? kDefaultPortionFractions : parse_reals(o.fractions, "--fractions");
  const RecordView train = select_ids(l.set, l.splits.train);

  RunResults results;
  results.run_id = run_id_of(l.set, o.in);
  if (layerwise) {
    const auto layers = parse_layer_list(o.layers.empty() ? "all" : o.layers);
    cfg.layers = LayerSelect::single(0);
    m.config = cfg;
    LayerCurve curve = layerwise_compression(train, cfg, m.fractions, seed, layers, o.workers);
    for (std::size_t i = 0; i < curve.layers.size(); ++i)
      out << "layer " << curve.layers[i] << " compression=" << format_real(curve.compression[i]) << "\n";
    out << "best_layer=" << curve.best_layer << "\n";
    results.mdl = curve.reports;
    results.curve = std::move(curve);
  } else {
    cfg.layers = o.layers.empty() ? LayerSelect::mix() : parse_layer_select(o.layers);
    m.config = cfg;
    const auto rep = online_coding(coding_order(train, seed), cfg, make_schedule(train.size(), m.fractions), seed);
    out << "total_mdl_bits=" << format_real(rep.total_mdl_bits) << " compression=" << format_real(rep.compression) << "\n";
    results.mdl = {rep};
  }
  finish(m, results, o.out, out);
  return kExitOk;
}

inline int cmd_transfer(const Options& o, const std::vector<std::string>& argv, std::ostream& out) {
  RunManifest m = start_manifest("transfer", argv, o);
  require_file(o.in);
  m.add_input("manifest", o.in);
  nlohmann::json doc;
  {
    std::ifstream in(o.in);
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(o.in + ": " + e.what());
    }
  }
  const std::filesystem::path base = std::filesystem::path(o.in).parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return (path.is_absolute() ? path : base / path).string();
  };
  std::optional<std::size_t> train_size = o.train_size;
  if (!train_size && doc.contains("train_size") && !doc["train_size"].is_null()) train_size = doc["train_size"].get<std::size_t>();
  m.train_size = train_size;
  const std::uint64_t seed = m.seeds.front();

  std::deque<ActivationSet> storage;
  std::map<DistributionKey, TrainTest> sets;
  std::uint32_t num_classes = 0;
  try {
    for (const auto& e : doc.at("entries")) {
      DistributionKey key{e.at("dataset").get<std::string>(), e.at("lang").get<std::string>(),
                          e.at("encoder").get<std::string>(), parse_weights_mode(e.at("weights_mode").get<std::string>())};
      const std::string apf = resolve(e.at("activations").get<std::string>());
      const std::string spl = resolve(e.at("splits").get<std::string>());
      require_file(apf);
      require_file(spl);
      const std::string tag = key.dataset + "/" + key.lang + "/" + key.encoder + "/" + to_string(key.weights_mode);
      m.add_input(tag + ":activations", apf);
      m.add_input(tag + ":splits", spl);
      storage.push_back(read_activation_set(apf));
      const ActivationSet& set = storage.back();
      SplitIds ids = load_split_ids(spl);
      if (train_size) ids = subsample_train(ids, set, *train_size, derive_seed(seed, "subsample"));
      if (num_classes && set.header.num_classes != num_classes) throw ConfigError("entries disagree on num_classes");
      num_classes = set.header.num_classes;
      if (!sets.emplace(key, TrainTest{select_ids(set, ids.train), select_ids(set, ids.test)}).second) {
        throw ConfigError("duplicate manifest entry " + tag);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(o.in + ": " + e.what());
  }
  check_resume(m, o.out);
  m.config = probe_config(o, num_classes);
  m.config.layers = o.layers.empty() ? LayerSelect::mix() : parse_layer_select(o.layers);
  const TransferMatrix mx = run_transfer_matrix(sets, m.config, m.seeds, o.workers);
  for (const auto& c : mx.cells) {
    out << to_string(c.weights_mode) << " " << c.source.to_string() << " -> " << c.target.to_string()
        << " accuracy=" << format_real(c.result.mean_accuracy) << "\n";
  }
  RunResults results;
  results.run_id = "transfer";
  results.transfer = mx;
  finish(m, results, o.out, out);
  return kExitOk;
}

/// Combines layer_curve.csv files into one plot and a best-layer summary.
inline int cmd_report(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw UsageError("--out is required");
  const auto inputs = split_list(o.in);
  if (inputs.empty()) throw UsageError("--in expects one or more layer_curve.csv paths");
  std::vector<NamedCurve> curves;
  CsvWriter summary({"schema_version", "run_id", "best_layer", "best_compression", "num_layers"});
  for (const auto& path : inputs) {
    require_file(path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != join(kLayerCurveColumns, [](const std::string& s) { return s; }, ",")) {
      throw FormatError(path + ": not a layer_curve.csv (header mismatch)");
    }
    NamedCurve curve;
    std::map<std::uint32_t, double> by_layer;
    std::string best_layer = "";
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      // run ids may be quoted; parse RFC 4180 fields.
      std::vector<std::string> f;
      std::string cur;
      bool quoted = false;
      for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
          if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') cur += '"', ++i;
          else if (c == '"') quoted = false;
          else cur += c;
        } else if (c == '"') {
          quoted = true;
        } else if (c == ',') {
          f.push_back(cur);
          cur.clear();
        } else {
          cur += c;
        }
      }
      f.push_back(cur);
      if (f.size() != kLayerCurveColumns.size()) throw FormatError(path + ": malformed row");
      curve.name = f[1];
      by_layer[static_cast<std::uint32_t>(std::stoul(f[2]))] = std::stod(f[3]);
      if (f[5] == "1") best_layer = f[2];
    }
    if (by_layer.empty()) throw FormatError(path + ": no rows");
    if (best_layer.empty()) throw FormatError(path + ": no row marked is_best");
    for (const auto& [layer, v] : by_layer) {
      if (layer != curve.values.size()) throw FormatError(path + ": layers must be 0..L-1 without gaps");
      curve.values.push_back(v);
    }
    summary.row({std::to_string(kCsvSchemaVersion), curve.name, best_layer,
                 format_real(curve.values.at(std::stoul(best_layer))), std::to_string(curve.values.size())});
    curves.push_back(std::move(curve));
  }
  std::error_code ec;
  std::filesystem::create_directories(o.out, ec);
  write_text(std::filesystem::path(o.out) / "layer_curves.svg", layer_curves_svg(curves));
  write_text(std::filesystem::path(o.out) / "summary.csv", summary.str());
  out << "wrote " << (std::filesystem::path(o.out) / "layer_curves.svg").string() << "\n";
  out << "wrote " << (std::filesystem::path(o.out) / "summary.csv").string() << "\n";
  return kExitOk;
}

/// Gradient check over random small probes plus a small online-coding oracle.
inline int cmd_selftest(const Options& o, std::ostream& out) {
  double worst = 0.0;
  for (std::size_t draw = 0; draw < o.draws; ++draw) {
    SynthSpec spec;
    spec.num_examples = 6;
    spec.num_layers = 3;
    spec.hidden_dim = 5;
    spec.num_classes = 3;
    spec.seed = 1000 + draw;
    spec.signal_layer = 1;
    spec.signal_strength = 2.0;
    const auto set = synth_activations(spec);
    ProbeConfig cfg;
    cfg.projection_dim = 6;
    cfg.mlp_hidden_dim = 7;
    cfg.num_classes = 3;
    cfg.layers = draw % 2 ? LayerSelect::mix() : LayerSelect::single(static_cast<std::uint32_t>(draw % 3));
    auto params = init_params<double>(set.dims(), cfg, derive_seed(draw, "selftest"));
    Rng rng(derive_seed(draw, "selftest-perturb"));
    for (auto& w : params.data) w += rng.uniform(-0.5, 0.5);
    worst = std::max(worst, check_gradients(params, view_all(set)).max_rel_error);
  }
  out << "max_gradient_rel_error=" << format_real(worst) << "\n";

  SynthSpec spec;
  spec.num_examples = 24;
  spec.num_layers = 2;
  spec.hidden_dim = 4;
  spec.seed = 5;
  spec.signal_layer = 1;
  spec.signal_strength = 3.0;
  const auto set = synth_activations(spec);
  ProbeConfig cfg;
  cfg.projection_dim = 8;
  cfg.mlp_hidden_dim = 8;
  cfg.layers = LayerSelect::single(1);
  const RecordView ordered = coding_order(view_all(set), 3);
  const PortionSchedule sched{{3, 6, 12, 24}, {}};
  const MDLReport rep = online_coding(ordered, cfg, sched, 3);
  double naive = 3.0 * std::log2(2.0);
  for (std::size_t i = 0; i + 1 < sched.boundaries.size(); ++i) {
    const auto trained = train_probe<double>(ordered.prefix(sched.boundaries[i]), cfg, portion_seed(3, i));
    double block = 0.0;
    for (std::size_t j = sched.boundaries[i]; j < sched.boundaries[i + 1]; ++j)
      block += loss_bits<double>(forward(trained.params, ordered.dims, ordered[j]), ordered[j].label);
    naive += block;
  }
  const bool mdl_ok = naive == rep.total_mdl_bits;
  out << "mdl_oracle_total=" << format_real(naive) << " online_coding_total=" << format_real(rep.total_mdl_bits)
      << (mdl_ok ? " match" : " MISMATCH") << "\n";
  const bool grad_ok = worst < 1e-4;
  if (!grad_ok || !mdl_ok) throw Error(std::string("selftest failed:") + (grad_ok ? "" : " gradient") + (mdl_ok ? "" : " mdl-oracle"));
  out << "selftest ok\n";
  return kExitOk;
}

inline std::pair<int, const char*> classify(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return {kExitUsage, "usage"};
  if (dynamic_cast<const IoError*>(&e)) return {kExitIo, "io"};
  if (dynamic_cast<const ManifestMismatchError*>(&e)) return {kExitManifestMismatch, "manifest-mismatch"};
  if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const CorruptionError*>(&e) ||
      dynamic_cast<const DimensionError*>(&e) || dynamic_cast<const ValidationError*>(&e))
    return {kExitFormat, "format"};
  if (dynamic_cast<const ConfigError*>(&e)) return {kExitConfig, "config"};
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return {kExitIo, "io"};
  return {kExitCompute, "compute"};
}

inline std::string one_line(std::string s) {
  for (auto& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace cli

/// Entry point shared by the executable and the tests. `args` excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace cli;
  CLI::App app{"spanprobe: edge probing, MDL online coding and transfer matrices over span representations"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--in", o.in, "input path");
    sub->add_option("--splits", o.splits, "splits.json");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--layers", o.layers, "mix | layer index | all | comma list");
    sub->add_option("--seeds", o.seeds, "comma-separated seeds (first one seeds splits/order/subsampling)");
    sub->add_option("--train-size", o.train_size, "subsample every train split to this size");
    sub->add_option("--fractions", o.fractions, "online-coding portion fractions");
    sub->add_option("--weights-mode", o.weights_mode, "pretrained | randomized (checked against file metadata)");
    sub->add_option("--epochs", o.epochs, "training epochs per probe");
    sub->add_option("--workers", o.workers, "parallel jobs for layers / matrix cells");
  };
  auto* prep = app.add_subcommand("prep", "balance and split a corpus (JSONL or APF1) into splits.json");
  add_common(prep);
  prep->add_option("--ratios", o.ratios, "train,dev,test ratios");
  auto* edge = app.add_subcommand("edge", "seed-averaged edge-probing accuracy");
  add_common(edge);
  auto* mdl = app.add_subcommand("mdl", "online-coding MDL for one layer selection");
  add_common(mdl);
  auto* mdl_layers = app.add_subcommand("mdl-layers", "layer-wise compression curve");
  add_common(mdl_layers);
  auto* transfer = app.add_subcommand("transfer", "source x target transfer matrix from a run manifest");
  add_common(transfer);
  auto* report = app.add_subcommand("report", "combine layer_curve.csv files into one plot and summary");
  report->add_option("--in", o.in, "comma-separated layer_curve.csv paths");
  report->add_option("--out", o.out, "output directory");
  auto* selftest = app.add_subcommand("selftest", "gradient check and MDL oracle");
  selftest->add_option("--draws", o.draws, "random gradient-check draws");
  auto* synth = app.add_subcommand("synth", "write a synthetic APF1 file");
  synth->add_option("--out", o.out, "output .apf path");
  synth->add_option("--n", o.n, "examples");
  synth->add_option("--num-layers", o.num_layers, "layers L");
  synth->add_option("--hidden-dim", o.hidden_dim, "hidden size H");
  synth->add_option("--classes", o.classes, "classes K");
  synth->add_option("--signal-layer", o.signal_layer, "layer carrying the label signal");
  synth->add_option("--signal-strength", o.signal_strength, "offset norm");
  synth->add_option("--seeds", o.seeds, "seed");
  synth->add_option("--first-id", o.first_id, "first example id");
  synth->add_option("--dataset", o.dataset, "metadata dataset tag");
  synth->add_option("--lang", o.lang, "metadata language tag");
  synth->add_option("--encoder", o.encoder, "metadata encoder tag");
  synth->add_option("--weights-mode", o.weights_mode, "metadata weights mode");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error code=" << kExitUsage << " kind=usage message=\"" << one_line(e.what()) << "\"\n";
    return kExitUsage;
  }

  try {
    if (*prep) return cmd_prep(o, args, out);
    if (*edge) return cmd_edge(o, args, out);
    if (*mdl) return cmd_mdl(o, args, out, false);
    if (*mdl_layers) return cmd_mdl(o, args, out, true);
    if (*transfer) return cmd_transfer(o, args, out);
    if (*report) return cmd_report(o, out);
    if (*selftest) return cmd_selftest(o, out);
    if (*synth) return cmd_synth(o, out);
  } catch (const std::exception& e) {
    const auto [code, kind] = classify(e);
    err << "error code=" << code << " kind=" << kind << " message=\"" << one_line(e.what()) << "\"\n";
    return code;
  }
  return kExitUsage;
}

}  // namespace spanprobe
