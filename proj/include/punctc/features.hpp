// punctc/features.hpp — acoustic feature matrices and their binary container.
//
// File layout (little-endian):
//   magic   u32   'P' 'C' 'F' 'T'
//   version u32   1
//   frames  u32   T
//   dim     u32   F
//   hop_ms  f32
//   data    T*F f32, row-major
// Values are stored as float32; FeatureSequence keeps them as doubles that
// are exactly float-representable, so write/read round-trips bit-exactly.
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "punctc/array.hpp"
#include "punctc/common.hpp"

namespace punctc {

struct FeatureSequence {
  double hop_ms = 10.0;
  Array frames;  // [T x F]

  size_t num_frames() const { return frames.rows(); }
  size_t dim() const { return frames.cols(); }
};

namespace detail {
constexpr uint32_t kFeatureMagic = 0x54464350u;  // "PCFT"
constexpr uint32_t kFeatureVersion = 1;

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}
}  // namespace detail

inline void write_feature_file(const std::string& path,
                               const FeatureSequence& feats) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  ensure(os.good(), "features: cannot open '", path, "' for writing");
  detail::write_pod<uint32_t>(os, detail::kFeatureMagic);
  detail::write_pod<uint32_t>(os, detail::kFeatureVersion);
  detail::write_pod<uint32_t>(os, static_cast<uint32_t>(feats.num_frames()));
  detail::write_pod<uint32_t>(os, static_cast<uint32_t>(feats.dim()));
  detail::write_pod<float>(os, static_cast<float>(feats.hop_ms));
  std::vector<float> buf(feats.frames.numel());
  for (size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<float>(feats.frames.at(i));
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
  ensure(os.good(), "features: write to '", path, "' failed");
}

inline FeatureSequence read_feature_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  ensure(is.good(), "features: cannot open '", path, "'");
  uint32_t magic = detail::read_pod<uint32_t>(is);
  ensure(magic == detail::kFeatureMagic, "features: '", path,
         "' is not a feature file (bad magic)");
  uint32_t version = detail::read_pod<uint32_t>(is);
  ensure(version == detail::kFeatureVersion, "features: '", path,
         "' has unsupported version ", version);
  uint32_t t = detail::read_pod<uint32_t>(is);
  uint32_t f = detail::read_pod<uint32_t>(is);
  float hop = detail::read_pod<float>(is);
  FeatureSequence out;
  out.hop_ms = static_cast<double>(hop);
  out.frames = Array({t, f});
  std::vector<float> buf(static_cast<size_t>(t) * f);
  is.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  ensure(is.good(), "features: '", path, "' truncated");
  for (size_t i = 0; i < buf.size(); ++i)
    out.frames.at(i) = static_cast<double>(buf[i]);
  return out;
}

// Quantize through float32 so in-memory values equal the on-disk encoding.
inline double as_stored(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace punctc
