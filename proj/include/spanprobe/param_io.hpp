#pragma once

// Versioned little-endian blob for trained probe parameters.
//
//   "APP1" | u32 version | u32 L | u32 H | u32 P | u32 M | u32 K
//   u32 layer_mode (0 mix, 1 single) | u32 layer | u64 count | f64 x count

#include <cstring>
#include <filesystem>
#include <vector>

#include "spanprobe/activation_store.hpp"
#include "spanprobe/probe.hpp"

namespace spanprobe {

inline constexpr char kParamsMagic[4] = {'A', 'P', 'P', '1'};
inline constexpr std::uint32_t kParamsVersion = 1;

inline std::vector<unsigned char> encode_params(const ProbeParams<double>& p) {
  std::vector<unsigned char> out(std::begin(kParamsMagic), std::end(kParamsMagic));
  detail::put_u32(out, kParamsVersion);
  for (std::size_t v : {p.shape.layers, p.shape.input, p.shape.projection, p.shape.hidden, p.shape.classes})
    detail::put_u32(out, static_cast<std::uint32_t>(v));
  detail::put_u32(out, p.layers.mode == LayerMode::Mix ? 0 : 1);
  detail::put_u32(out, p.layers.layer);
  detail::put_u64(out, p.data.size());
  for (double v : p.data) detail::put_f64(out, v);
  return out;
}

inline ProbeParams<double> decode_params(std::span<const unsigned char> bytes) {
  constexpr std::size_t kHead = 4 + 4 * 8 + 8;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kParamsMagic, 4) != 0) throw FormatError("bad magic, not a probe parameter blob");
  if (bytes.size() < kHead) throw CorruptionError(0, "truncated parameter header");
  const unsigned char* q = bytes.data();
  if (detail::get_u32(q + 4) != kParamsVersion) throw FormatError("unsupported parameter blob version");
  ProbeParams<double> p;
  p.shape = {detail::get_u32(q + 8), detail::get_u32(q + 12), detail::get_u32(q + 16), detail::get_u32(q + 20),
             detail::get_u32(q + 24)};
  const std::uint32_t mode = detail::get_u32(q + 28);
  if (mode > 1) throw FormatError("unknown layer mode");
  p.layers = {mode == 0 ? LayerMode::Mix : LayerMode::Single, detail::get_u32(q + 32)};
  const std::uint64_t count = detail::get_u64(q + 36);
  if (count != p.shape.total()) throw CorruptionError(36, "parameter count disagrees with shape");
  if (bytes.size() != kHead + 8 * count) throw CorruptionError(kHead, "parameter payload size mismatch");
  p.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) p.data[i] = detail::get_f64(q + kHead + 8 * i);
  return p;
}

inline void save_params(const ProbeParams<double>& p, const std::filesystem::path& path) {
  detail::write_file(path, encode_params(p));
}

inline ProbeParams<double> load_params(const std::filesystem::path& path) {
  return decode_params(detail::read_file(path));
}

}  // namespace spanprobe
