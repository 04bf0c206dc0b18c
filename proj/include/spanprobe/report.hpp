#pragma once

// CSV and SVG report emission.

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "spanprobe/errors.hpp"
#include "spanprobe/mdl.hpp"
#include "spanprobe/transfer.hpp"

namespace spanprobe {

inline constexpr const char* kEngineVersion = "0.1.0";
inline constexpr int kCsvSchemaVersion = 1;

/// Shortest round-trippable decimal form.
inline std::string format_real(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

template <class T, class F>
std::string join(const std::vector<T>& items, F&& fmt, const char* sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += fmt(items[i]);
  }
  return out;
}

/// RFC 4180 field quoting.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

class CsvWriter {
public:
  explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) { row(header); }

  void row(const std::vector<std::string>& fields) {
    if (fields.size() != columns_) throw Error("CSV row has " + std::to_string(fields.size()) + " fields, expected " + std::to_string(columns_));
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) text_ += ',';
      text_ += csv_field(fields[i]);
    }
    text_ += "\r\n";
  }
  const std::string& str() const { return text_; }

private:
  std::size_t columns_;
  std::string text_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << text;
  out.close();
  if (!out) throw IoError(path.string(), "write failed");
}

inline std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for hashing");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

inline const std::vector<std::string> kMdlColumns = {
    "schema_version", "run_id",           "layer",      "num_examples",
    "num_classes",    "boundaries",       "uniform_cost_bits", "block_codelengths_bits",
    "total_mdl_bits", "compression",      "seed"};

inline std::string mdl_csv(const std::string& run_id, const std::vector<MDLReport>& reports) {
  CsvWriter csv(kMdlColumns);
  for (const auto& r : reports) {
    csv.row({std::to_string(kCsvSchemaVersion), run_id, r.layers.to_string(), std::to_string(r.num_examples),
             std::to_string(r.num_classes), join(r.schedule.boundaries, [](std::size_t b) { return std::to_string(b); }),
             format_real(r.uniform_cost_bits), join(r.block_codelengths_bits, format_real),
             format_real(r.total_mdl_bits), format_real(r.compression), std::to_string(r.seed)});
  }
  return csv.str();
}

inline const std::vector<std::string> kLayerCurveColumns = {"schema_version", "run_id", "layer", "compression",
                                                           "total_mdl_bits", "is_best"};

inline std::string layer_curve_csv(const std::string& run_id, const LayerCurve& curve) {
  CsvWriter csv(kLayerCurveColumns);
  for (std::size_t i = 0; i < curve.layers.size(); ++i) {
    csv.row({std::to_string(kCsvSchemaVersion), run_id, std::to_string(curve.layers[i]), format_real(curve.compression[i]),
             format_real(curve.reports[i].total_mdl_bits), curve.layers[i] == curve.best_layer ? "1" : "0"});
  }
  return csv.str();
}

inline const std::vector<std::string> kEdgeColumns = {"schema_version", "run_id", "layer_mode", "seeds",
                                                     "per_seed_accuracy", "mean_accuracy", "train_size", "test_size"};

inline std::string edge_csv(const std::string& run_id, const LayerSelect& layers, const EdgeProbeResult& r) {
  CsvWriter csv(kEdgeColumns);
  csv.row({std::to_string(kCsvSchemaVersion), run_id, layers.to_string(),
           join(r.seeds, [](std::uint64_t s) { return std::to_string(s); }), join(r.per_seed_accuracy, format_real),
           format_real(r.mean_accuracy), std::to_string(r.train_size), std::to_string(r.test_size)});
  return csv.str();
}

inline const std::vector<std::string> kTransferColumns = {
    "schema_version", "source_dataset", "source_lang", "source_encoder", "target_dataset", "target_lang",
    "target_encoder", "weights_mode",   "in_distribution", "train_size", "test_size", "seeds",
    "per_seed_accuracy", "mean_accuracy"};

inline std::string transfer_csv(const TransferMatrix& m) {
  CsvWriter csv(kTransferColumns);
  for (const auto& c : m.cells) {
    csv.row({std::to_string(kCsvSchemaVersion), c.source.dataset, c.source.lang, c.source.encoder, c.target.dataset,
             c.target.lang, c.target.encoder, to_string(c.weights_mode), c.source == c.target ? "1" : "0",
             std::to_string(c.result.train_size), std::to_string(c.result.test_size),
             join(c.result.seeds, [](std::uint64_t s) { return std::to_string(s); }),
             join(c.result.per_seed_accuracy, format_real), format_real(c.result.mean_accuracy)});
  }
  return csv.str();
}

/// One compression-vs-layer line; values[i] belongs to layer i.
struct NamedCurve {
  std::string name;
  std::vector<double> values;
};

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

/// SVG 1.1 line plot: x = layer, y = compression, one polyline per curve.
inline std::string layer_curves_svg(const std::vector<NamedCurve>& curves) {
  if (curves.empty()) throw Error("no curves to plot");
  std::size_t num_layers = 0;
  double lo = 1.0, hi = 1.0;
  for (const auto& c : curves) {
    if (c.values.empty()) throw Error("curve '" + c.name + "' is empty");
    num_layers = std::max(num_layers, c.values.size());
    for (double v : c.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  lo = std::floor(lo * 10.0) / 10.0;
  hi = std::ceil(hi * 10.0) / 10.0;
  if (hi <= lo) hi = lo + 0.1;

  const double width = 640, height = 400, left = 70, right = 170, top = 20, bottom = 60;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  auto px = [&](std::size_t layer) {
    return left + (num_layers == 1 ? plot_w / 2 : plot_w * static_cast<double>(layer) / static_cast<double>(num_layers - 1));
  };
  auto py = [&](double v) { return top + plot_h * (hi - v) / (hi - lo); };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

  std::ostringstream s;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width << "\" height=\"" << height << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<line class=\"axis\" x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\""
    << top + plot_h << "\" stroke=\"black\"/>\n"
    << "<line class=\"axis\" x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
    << "\" stroke=\"black\"/>\n";
  for (std::size_t l = 0; l < num_layers; ++l) {
    s << "<g class=\"xtick\"><line x1=\"" << num(px(l)) << "\" y1=\"" << top + plot_h << "\" x2=\"" << num(px(l))
      << "\" y2=\"" << top + plot_h + 5 << "\" stroke=\"black\"/><text x=\"" << num(px(l)) << "\" y=\""
      << top + plot_h + 20 << "\" font-size=\"12\" text-anchor=\"middle\">" << l << "</text></g>\n";
  }
  const int yticks = 5;
  for (int i = 0; i <= yticks; ++i) {
    const double v = lo + (hi - lo) * i / yticks;
    s << "<g class=\"ytick\"><line x1=\"" << left - 5 << "\" y1=\"" << num(py(v)) << "\" x2=\"" << left << "\" y2=\""
      << num(py(v)) << "\" stroke=\"black\"/><text x=\"" << left - 8 << "\" y=\"" << num(py(v) + 4)
      << "\" font-size=\"12\" text-anchor=\"end\">" << num(v) << "</text></g>\n";
  }
  s << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 15 << "\" font-size=\"14\" text-anchor=\"middle\">layer</text>\n"
    << "<text x=\"18\" y=\"" << top + plot_h / 2 << "\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
    << top + plot_h / 2 << ")\">compression</text>\n";
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const char* color = palette[c % std::size(palette)];
    s << "<polyline class=\"curve\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t l = 0; l < curves[c].values.size(); ++l) {
      if (l) s << ' ';
      s << num(px(l)) << ',' << num(py(curves[c].values[l]));
    }
    s << "\"/>\n";
    const double ly = top + 10 + 20.0 * static_cast<double>(c);
    s << "<g class=\"legend\"><line x1=\"" << left + plot_w + 15 << "\" y1=\"" << ly << "\" x2=\"" << left + plot_w + 35
      << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/><text x=\"" << left + plot_w + 40
      << "\" y=\"" << ly + 4 << "\" font-size=\"12\">" << xml_escape(curves[c].name) << "</text></g>\n";
  }
  s << "</svg>\n";
  return s.str();
}

/// Everything one command produced; empty members are skipped.
struct RunResults {
  std::string run_id;
  std::vector<MDLReport> mdl;
  std::optional<LayerCurve> curve;
  std::optional<std::pair<LayerSelect, EdgeProbeResult>> edge;
  std::optional<TransferMatrix> transfer;

  bool empty() const { return mdl.empty() && !curve && !edge && !transfer; }
};

/// Writes the CSV/SVG files for `results` into `outdir`; returns the paths written.
inline std::vector<std::filesystem::path> emit_reports(const RunResults& results, const std::filesystem::path& outdir) {
  if (results.empty()) throw Error("no results to report");
  std::error_code ec;
  std::filesystem::create_directories(outdir, ec);
  if (ec || !std::filesystem::is_directory(outdir)) throw IoError(outdir.string(), "output directory not writable");
  std::vector<std::filesystem::path> written;
  auto put = [&](const char* name, const std::string& text) {
    write_text(outdir / name, text);
    written.push_back(outdir / name);
  };
  if (!results.mdl.empty()) put("mdl_report.csv", mdl_csv(results.run_id, results.mdl));
  if (results.curve) {
    put("layer_curve.csv", layer_curve_csv(results.run_id, *results.curve));
    std::vector<double> values(results.curve->layers.empty() ? 0 : *std::max_element(results.curve->layers.begin(), results.curve->layers.end()) + 1,
                               std::nan(""));
    for (std::size_t i = 0; i < results.curve->layers.size(); ++i) values[results.curve->layers[i]] = results.curve->compression[i];
    // Plot only complete curves over layers 0..L-1.
    if (std::none_of(values.begin(), values.end(), [](double v) { return std::isnan(v); }))
      put("layer_curve.svg", layer_curves_svg({{results.run_id, values}}));
  }
  if (results.edge) put("edge_report.csv", edge_csv(results.run_id, results.edge->first, results.edge->second));
  if (results.transfer) put("transfer_matrix.csv", transfer_csv(*results.transfer));
  return written;
}

}  // namespace spanprobe
