// punctc/checkpoint.hpp — self-describing model checkpoint container.
//
// Layout (little-endian):
//   magic     u32  'P' 'C' 'C' 'K'
//   version   u32  1
//   meta_len  u64
//   meta      meta_len bytes of JSON: encoder config echo, vocabulary,
//             hop_ms, step/epoch/pos counters, base seed, optimizer flag and
//             a free-form training-config echo
//   n_params  u32
//   per param: name_len u32, name bytes, ndim u32, dims u64 each,
//              values f64 raw
//   if the optimizer flag is set: adam_t u64, then per param the first and
//   second moment arrays as f64 raw in parameter order
// Round-trips are bit-exact; writes go to a temp file renamed into place.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "punctc/autograd.hpp"
#include "punctc/common.hpp"
#include "punctc/features.hpp"
#include "punctc/model.hpp"

namespace punctc {

struct Checkpoint {
  EncoderConfig encoder;
  std::string vocab_symbols;
  double hop_ms = 10.0;
  uint64_t step = 0;
  uint64_t epoch = 0;
  uint64_t pos = 0;  // cursor inside the current epoch's shuffle
  uint64_t seed = 0;
  nlohmann::json train_echo;  // informational copy of the training config
  std::vector<Param> params;
  bool has_optimizer = false;
  uint64_t adam_t = 0;
  std::vector<Array> adam_m, adam_v;
};

namespace detail {
constexpr uint32_t kCheckpointMagic = 0x4b434350u;  // "PCCK"
constexpr uint32_t kCheckpointVersion = 1;

inline void write_array_raw(std::ostream& os, const Array& a) {
  os.write(reinterpret_cast<const char*>(a.data().data()),
           static_cast<std::streamsize>(a.numel() * sizeof(double)));
}

inline void read_array_raw(std::istream& is, Array& a) {
  is.read(reinterpret_cast<char*>(a.data().data()),
          static_cast<std::streamsize>(a.numel() * sizeof(double)));
}
}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  nlohmann::json meta = {
      {"encoder",
       {{"feature_dim", ck.encoder.feature_dim},
        {"layers", ck.encoder.layers},
        {"hidden_dim", ck.encoder.hidden_dim},
        {"heads", ck.encoder.heads},
        {"vocab_size", ck.encoder.vocab_size},
        {"positional_kernel", ck.encoder.positional_kernel},
        {"subsample_factor", ck.encoder.subsample_factor},
        {"ffn_mult", ck.encoder.ffn_mult},
        {"context_free", ck.encoder.context_free}}},
      {"vocab", ck.vocab_symbols},
      {"hop_ms", ck.hop_ms},
      {"step", ck.step},
      {"epoch", ck.epoch},
      {"pos", ck.pos},
      {"seed", ck.seed},
      {"has_optimizer", ck.has_optimizer},
      {"train", ck.train_echo}};
  std::string blob = meta.dump();

  std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    ensure(os.good(), "checkpoint: cannot open '", tmp, "' for writing");
    detail::write_pod<uint32_t>(os, detail::kCheckpointMagic);
    detail::write_pod<uint32_t>(os, detail::kCheckpointVersion);
    detail::write_pod<uint64_t>(os, blob.size());
    os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    detail::write_pod<uint32_t>(os, static_cast<uint32_t>(ck.params.size()));
    for (const Param& p : ck.params) {
      detail::write_pod<uint32_t>(os, static_cast<uint32_t>(p.name.size()));
      os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
      detail::write_pod<uint32_t>(os, static_cast<uint32_t>(p.value.ndim()));
      for (size_t d : p.value.shape()) detail::write_pod<uint64_t>(os, d);
      detail::write_array_raw(os, p.value);
    }
    if (ck.has_optimizer) {
      ensure(ck.adam_m.size() == ck.params.size() &&
                 ck.adam_v.size() == ck.params.size(),
             "checkpoint: optimizer state does not match parameters");
      detail::write_pod<uint64_t>(os, ck.adam_t);
      for (const Array& m : ck.adam_m) detail::write_array_raw(os, m);
      for (const Array& v : ck.adam_v) detail::write_array_raw(os, v);
    }
    ensure(os.good(), "checkpoint: write to '", tmp, "' failed");
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  ensure(is.good(), "checkpoint: cannot open '", path, "'");
  uint32_t magic = detail::read_pod<uint32_t>(is);
  ensure(magic == detail::kCheckpointMagic, "checkpoint: '", path,
         "' is not a checkpoint (bad magic)");
  uint32_t version = detail::read_pod<uint32_t>(is);
  ensure(version == detail::kCheckpointVersion, "checkpoint: '", path,
         "' has unsupported version ", version);
  uint64_t blob_len = detail::read_pod<uint64_t>(is);
  std::string blob(blob_len, '\0');
  is.read(blob.data(), static_cast<std::streamsize>(blob_len));
  ensure(is.good(), "checkpoint: '", path, "' truncated");
  nlohmann::json meta = nlohmann::json::parse(blob);

  Checkpoint ck;
  const auto& e = meta.at("encoder");
  ck.encoder.feature_dim = e.at("feature_dim").get<size_t>();
  ck.encoder.layers = e.at("layers").get<size_t>();
  ck.encoder.hidden_dim = e.at("hidden_dim").get<size_t>();
  ck.encoder.heads = e.at("heads").get<size_t>();
  ck.encoder.vocab_size = e.at("vocab_size").get<size_t>();
  ck.encoder.positional_kernel = e.at("positional_kernel").get<size_t>();
  ck.encoder.subsample_factor = e.at("subsample_factor").get<size_t>();
  ck.encoder.ffn_mult = e.at("ffn_mult").get<size_t>();
  ck.encoder.context_free = e.at("context_free").get<bool>();
  ck.vocab_symbols = meta.at("vocab").get<std::string>();
  ck.hop_ms = meta.at("hop_ms").get<double>();
  ck.step = meta.at("step").get<uint64_t>();
  ck.epoch = meta.at("epoch").get<uint64_t>();
  ck.pos = meta.at("pos").get<uint64_t>();
  ck.seed = meta.at("seed").get<uint64_t>();
  ck.has_optimizer = meta.at("has_optimizer").get<bool>();
  ck.train_echo = meta.at("train");

  uint32_t n = detail::read_pod<uint32_t>(is);
  for (uint32_t i = 0; i < n; ++i) {
    uint32_t name_len = detail::read_pod<uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    uint32_t ndim = detail::read_pod<uint32_t>(is);
    std::vector<size_t> shape(ndim);
    for (auto& d : shape)
      d = static_cast<size_t>(detail::read_pod<uint64_t>(is));
    Param p(name, Array(shape));
    detail::read_array_raw(is, p.value);
    ck.params.push_back(std::move(p));
  }
  if (ck.has_optimizer) {
    ck.adam_t = detail::read_pod<uint64_t>(is);
    for (uint32_t i = 0; i < n; ++i) {
      Array m(ck.params[i].value.shape());
      detail::read_array_raw(is, m);
      ck.adam_m.push_back(std::move(m));
    }
    for (uint32_t i = 0; i < n; ++i) {
      Array v(ck.params[i].value.shape());
      detail::read_array_raw(is, v);
      ck.adam_v.push_back(std::move(v));
    }
  }
  ensure(is.good(), "checkpoint: '", path, "' truncated");
  return ck;
}

// Builds an encoder from a checkpoint, verifying block names and shapes.
inline Encoder encoder_from_checkpoint(const Checkpoint& ck) {
  Encoder enc(ck.encoder, 0);
  ensure(enc.params().size() == ck.params.size(),
         "checkpoint: parameter block count mismatch");
  for (size_t i = 0; i < ck.params.size(); ++i) {
    Param& dst = enc.params()[i];
    const Param& src = ck.params[i];
    ensure(dst.name == src.name && dst.value.shape() == src.value.shape(),
           "checkpoint: parameter block '", src.name,
           "' does not match the configuration");
    dst.value = src.value;
  }
  return enc;
}

}  // namespace punctc
