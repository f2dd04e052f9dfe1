// punctc/eval.hpp — decode helpers and the hypothesis file format.
//
// A hypothesis file holds one line per utterance: the id, a tab, and the
// hypothesis text (possibly empty). Ids must be unique.
#pragma once

#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "punctc/chunking.hpp"
#include "punctc/common.hpp"
#include "punctc/ctc.hpp"
#include "punctc/model.hpp"
#include "punctc/text.hpp"

namespace punctc {

struct DecodeOptions {
  bool chunked = true;
  ChunkPlan plan;
  size_t beam = 5;
};

inline std::string decode_transcript(Encoder& encoder, const Array& features,
                                     const Vocabulary& vocab,
                                     const DecodeOptions& opts) {
  ensure(opts.beam >= 1, "decode: beam must be >= 1");
  EmissionLattice lattice = opts.chunked
                                ? chunked_encode(encoder, features, opts.plan)
                                : encoder.encode(features);
  DecodeResult res = opts.beam == 1 ? greedy_decode(lattice)
                                    : beam_decode(lattice, opts.beam);
  return vocab.detokenize(res.tokens);
}

inline void write_hypotheses(
    const std::string& path,
    const std::vector<std::pair<std::string, std::string>>& id_text) {
  std::ofstream os(path, std::ios::trunc);
  ensure(os.good(), "hypotheses: cannot open '", path, "' for writing");
  for (const auto& [id, text] : id_text) os << id << "\t" << text << "\n";
  ensure(os.good(), "hypotheses: write to '", path, "' failed");
}

inline std::vector<std::pair<std::string, std::string>> read_hypotheses(
    const std::string& path) {
  std::ifstream is(path);
  ensure(is.good(), "hypotheses: cannot open '", path, "'");
  std::vector<std::pair<std::string, std::string>> out;
  std::map<std::string, bool> seen;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    ensure(tab != std::string::npos, "hypotheses: line without tab in '", path,
           "': ", line);
    std::string id = line.substr(0, tab);
    ensure(!seen[id], "hypotheses: duplicate id '", id, "'");
    seen[id] = true;
    out.emplace_back(id, line.substr(tab + 1));
  }
  return out;
}

}  // namespace punctc
