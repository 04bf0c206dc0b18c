#pragma once

// APF1: binary container for per-layer span-token representations.
//
// Layout (all integers little-endian):
//   "APF1"
//   u32 version | u32 num_layers | u32 hidden_dim | u32 num_classes
//   u64 num_examples | u32 dtype_code | u64 metadata_len | metadata bytes
//   u64 record offset x num_examples (absolute)
//   records: u64 example_id | u32 label | u32 span_len | f32 x span_len*L*H
// Tensor order is [layer][token][dim].

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "spanprobe/errors.hpp"

namespace spanprobe {

inline constexpr char kApfMagic[4] = {'A', 'P', 'F', '1'};
inline constexpr std::uint32_t kApfVersion = 1;
inline constexpr std::uint32_t kDtypeFloat32 = 0;
inline constexpr std::size_t kApfFixedHeaderBytes = 40;
inline constexpr std::size_t kApfRecordHeaderBytes = 16;

struct Dims {
  std::uint32_t num_layers = 0;
  std::uint32_t hidden_dim = 0;
  bool operator==(const Dims&) const = default;
};

struct ActivationHeader {
  std::uint32_t version = kApfVersion;
  std::uint32_t num_layers = 0;
  std::uint32_t hidden_dim = 0;
  std::uint32_t num_classes = 0;
  std::uint64_t num_examples = 0;
  std::uint32_t dtype_code = kDtypeFloat32;
  std::string metadata = "{}";

  Dims dims() const { return {num_layers, hidden_dim}; }
  bool operator==(const ActivationHeader&) const = default;

  void validate() const {
    if (version != kApfVersion) throw FormatError("unsupported APF version " + std::to_string(version));
    if (dtype_code != kDtypeFloat32) throw FormatError("unsupported dtype code " + std::to_string(dtype_code));
    if (num_layers < 1) throw ValidationError("num_layers must be >= 1");
    if (hidden_dim < 1) throw ValidationError("hidden_dim must be >= 1");
    if (num_classes < 2) throw ValidationError("num_classes must be >= 2");
    if (num_examples < 1) throw ValidationError("num_examples must be >= 1");
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(metadata);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("metadata is not JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ValidationError("metadata must be a JSON object");
  }

  nlohmann::json metadata_json() const { return nlohmann::json::parse(metadata); }
};

struct ActivationRecord {
  std::uint64_t example_id = 0;
  std::uint32_t label = 0;
  std::uint32_t span_len = 0;
  std::vector<float> values;  // [layer][token][dim]

  bool operator==(const ActivationRecord&) const = default;

  /// Vector of one token at one layer.
  std::span<const float> token(const Dims& d, std::size_t layer, std::size_t t) const {
    const std::size_t h = d.hidden_dim;
    return {values.data() + (layer * span_len + t) * h, h};
  }
  std::span<float> token(const Dims& d, std::size_t layer, std::size_t t) {
    const std::size_t h = d.hidden_dim;
    return {values.data() + (layer * span_len + t) * h, h};
  }

  std::uint64_t encoded_size() const { return kApfRecordHeaderBytes + 4 * values.size(); }
};

/// Throws DimensionError tagged with `index` if `rec` is inconsistent with `header`.
inline void validate_record(const ActivationHeader& header, const ActivationRecord& rec, std::size_t index) {
  if (rec.span_len < 1) throw DimensionError(index, "span_len must be >= 1");
  const std::uint64_t expected =
      std::uint64_t{rec.span_len} * header.num_layers * header.hidden_dim;
  if (rec.values.size() != expected) {
    throw DimensionError(index, "tensor has " + std::to_string(rec.values.size()) + " values, header implies " +
                                    std::to_string(expected) + " (T=" + std::to_string(rec.span_len) +
                                    ", L=" + std::to_string(header.num_layers) +
                                    ", H=" + std::to_string(header.hidden_dim) + ")");
  }
  if (rec.label >= header.num_classes) {
    throw DimensionError(index, "label " + std::to_string(rec.label) + " >= num_classes " +
                                    std::to_string(header.num_classes));
  }
  for (std::size_t i = 0; i < rec.values.size(); ++i) {
    if (!std::isfinite(rec.values[i])) throw DimensionError(index, "non-finite value at position " + std::to_string(i));
  }
}

struct ActivationSet {
  ActivationHeader header;
  std::vector<ActivationRecord> records;

  Dims dims() const { return header.dims(); }
  bool operator==(const ActivationSet&) const = default;
};

/// Non-owning, ordered selection of records from one or more sets sharing dims.
struct RecordView {
  Dims dims;
  std::vector<const ActivationRecord*> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  const ActivationRecord& operator[](std::size_t i) const { return *records[i]; }

  RecordView prefix(std::size_t n) const {
    return {dims, {records.begin(), records.begin() + static_cast<std::ptrdiff_t>(std::min(n, records.size()))}};
  }
  std::vector<std::uint64_t> ids() const {
    std::vector<std::uint64_t> out;
    out.reserve(records.size());
    for (const auto* r : records) out.push_back(r->example_id);
    return out;
  }
};

inline RecordView view_all(const ActivationSet& set) {
  RecordView v{set.dims(), {}};
  v.records.reserve(set.records.size());
  for (const auto& r : set.records) v.records.push_back(&r);
  return v;
}

/// Records with the given ids, in the order of `ids`.
inline RecordView select_ids(const ActivationSet& set, std::span<const std::uint64_t> ids) {
  std::unordered_map<std::uint64_t, const ActivationRecord*> by_id;
  by_id.reserve(set.records.size());
  for (const auto& r : set.records) by_id.emplace(r.example_id, &r);
  RecordView v{set.dims(), {}};
  v.records.reserve(ids.size());
  for (auto id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ValidationError("example id " + std::to_string(id) + " not present in activation set");
    v.records.push_back(it->second);
  }
  return v;
}

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
inline void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
inline void put_f32(std::vector<unsigned char>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::vector<unsigned char>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{p[i]} << (8 * i);
  return v;
}
inline std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{p[i]} << (8 * i);
  return v;
}
inline float get_f32(const unsigned char* p) { return std::bit_cast<float>(get_u32(p)); }
inline double get_f64(const unsigned char* p) { return std::bit_cast<double>(get_u64(p)); }

inline void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw IoError(path.string(), "write failed");
}

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (in.bad()) throw IoError(path.string(), "read failed");
  return bytes;
}

}  // namespace detail

/// Serializes a validated set into APF1 bytes.
inline std::vector<unsigned char> encode_activation_set(const ActivationHeader& header,
                                                        std::span<const ActivationRecord> records) {
  header.validate();
  if (records.size() != header.num_examples) {
    throw ValidationError("header declares " + std::to_string(header.num_examples) + " examples, got " +
                          std::to_string(records.size()));
  }
  for (std::size_t i = 0; i < records.size(); ++i) validate_record(header, records[i], i);

  std::vector<unsigned char> out;
  std::uint64_t total = kApfFixedHeaderBytes + header.metadata.size() + 8 * records.size();
  for (const auto& r : records) total += r.encoded_size();
  out.reserve(total);

  out.insert(out.end(), std::begin(kApfMagic), std::end(kApfMagic));
  detail::put_u32(out, header.version);
  detail::put_u32(out, header.num_layers);
  detail::put_u32(out, header.hidden_dim);
  detail::put_u32(out, header.num_classes);
  detail::put_u64(out, header.num_examples);
  detail::put_u32(out, header.dtype_code);
  detail::put_u64(out, header.metadata.size());
  out.insert(out.end(), header.metadata.begin(), header.metadata.end());

  std::uint64_t offset = out.size() + 8 * records.size();
  for (const auto& r : records) {
    detail::put_u64(out, offset);
    offset += r.encoded_size();
  }
  for (const auto& r : records) {
    detail::put_u64(out, r.example_id);
    detail::put_u32(out, r.label);
    detail::put_u32(out, r.span_len);
    for (float v : r.values) detail::put_f32(out, v);
  }
  return out;
}

inline void write_activation_set(const ActivationHeader& header, std::span<const ActivationRecord> records,
                                 const std::filesystem::path& path) {
  const auto bytes = encode_activation_set(header, records);
  detail::write_file(path, bytes);
}

inline void write_activation_set(const ActivationSet& set, const std::filesystem::path& path) {
  write_activation_set(set.header, set.records, path);
}

/// Random-access reader over an APF1 image held in memory.
///
/// All structural checks (header, offset table, record extents) happen at
/// construction; afterwards the reader is immutable and `record()` may be
/// called concurrently from any number of threads.
class ActivationReader {
public:
  explicit ActivationReader(std::vector<unsigned char> bytes) : bytes_(std::move(bytes)) { parse(); }

  static ActivationReader open(const std::filesystem::path& path) {
    return ActivationReader(detail::read_file(path));
  }

  const ActivationHeader& header() const { return header_; }
  std::size_t size() const { return offsets_.size(); }
  std::span<const std::uint64_t> offsets() const { return offsets_; }

  ActivationRecord record(std::size_t i) const {
    if (i >= offsets_.size()) {
      throw std::out_of_range("record index " + std::to_string(i) + " out of range (N=" +
                              std::to_string(offsets_.size()) + ")");
    }
    return parse_record_at(offsets_[i], i);
  }

  /// Walks the record area front to back without consulting the offset table.
  std::vector<ActivationRecord> records_sequential() const {
    std::vector<ActivationRecord> out;
    out.reserve(offsets_.size());
    std::uint64_t pos = records_begin_;
    for (std::size_t i = 0; i < offsets_.size(); ++i) {
      out.push_back(parse_record_at(pos, i));
      pos += out.back().encoded_size();
    }
    return out;
  }

  ActivationSet load_all() const {
    ActivationSet set{header_, {}};
    set.records.reserve(offsets_.size());
    for (std::size_t i = 0; i < offsets_.size(); ++i) set.records.push_back(record(i));
    return set;
  }

private:
  void need(std::uint64_t pos, std::uint64_t len, const char* what) const {
    if (pos > bytes_.size() || len > bytes_.size() - pos) {
      throw CorruptionError(pos, std::string("truncated ") + what + " (needs " + std::to_string(len) +
                                     " bytes, file has " + std::to_string(bytes_.size()) + ")");
    }
  }

  std::uint64_t record_extent(std::uint64_t pos) const {
    need(pos, kApfRecordHeaderBytes, "record header");
    const std::uint32_t span_len = detail::get_u32(bytes_.data() + pos + 12);
    if (span_len < 1) throw CorruptionError(pos + 12, "record span_len is zero");
    return kApfRecordHeaderBytes + 4ULL * span_len * header_.num_layers * header_.hidden_dim;
  }

  void parse() {
    if (bytes_.size() < 4 || std::memcmp(bytes_.data(), kApfMagic, 4) != 0) throw FormatError("bad magic, not an APF1 file");
    need(0, kApfFixedHeaderBytes, "header");
    const unsigned char* p = bytes_.data();
    header_.version = detail::get_u32(p + 4);
    if (header_.version != kApfVersion) throw FormatError("unsupported APF version " + std::to_string(header_.version));
    header_.num_layers = detail::get_u32(p + 8);
    header_.hidden_dim = detail::get_u32(p + 12);
    header_.num_classes = detail::get_u32(p + 16);
    header_.num_examples = detail::get_u64(p + 20);
    header_.dtype_code = detail::get_u32(p + 28);
    const std::uint64_t meta_len = detail::get_u64(p + 32);
    need(kApfFixedHeaderBytes, meta_len, "metadata");
    header_.metadata.assign(reinterpret_cast<const char*>(p + kApfFixedHeaderBytes), meta_len);
    header_.validate();

    const std::uint64_t table = kApfFixedHeaderBytes + meta_len;
    if (header_.num_examples > (bytes_.size() - table) / 8) throw CorruptionError(table, "truncated offset table");
    records_begin_ = table + 8 * header_.num_examples;
    offsets_.resize(header_.num_examples);
    std::uint64_t expected = records_begin_;
    for (std::size_t i = 0; i < offsets_.size(); ++i) {
      const std::uint64_t at = table + 8 * i;
      offsets_[i] = detail::get_u64(p + at);
      if (offsets_[i] != expected) {
        throw CorruptionError(at, "offset table entry " + std::to_string(i) + " is " + std::to_string(offsets_[i]) +
                                      ", expected " + std::to_string(expected));
      }
      const std::uint64_t extent = record_extent(offsets_[i]);
      need(offsets_[i], extent, "record tensor");
      expected += extent;
    }
    if (expected != bytes_.size()) throw CorruptionError(expected, "trailing bytes after last record");
  }

  ActivationRecord parse_record_at(std::uint64_t pos, std::size_t index) const {
    const std::uint64_t extent = record_extent(pos);
    need(pos, extent, "record tensor");
    const unsigned char* p = bytes_.data() + pos;
    ActivationRecord r;
    r.example_id = detail::get_u64(p);
    r.label = detail::get_u32(p + 8);
    r.span_len = detail::get_u32(p + 12);
    const std::size_t count = (extent - kApfRecordHeaderBytes) / 4;
    r.values.resize(count);
    for (std::size_t k = 0; k < count; ++k) r.values[k] = detail::get_f32(p + kApfRecordHeaderBytes + 4 * k);
    if (r.label >= header_.num_classes) throw CorruptionError(pos + 8, "record " + std::to_string(index) + " label out of range");
    for (std::size_t k = 0; k < count; ++k) {
      if (!std::isfinite(r.values[k])) {
        throw CorruptionError(pos + kApfRecordHeaderBytes + 4 * k, "record " + std::to_string(index) + " non-finite value");
      }
    }
    return r;
  }

  std::vector<unsigned char> bytes_;
  ActivationHeader header_;
  std::vector<std::uint64_t> offsets_;
  std::uint64_t records_begin_ = 0;
};

inline ActivationSet read_activation_set(const std::filesystem::path& path) {
  return ActivationReader::open(path).load_all();
}

}  // namespace spanprobe
