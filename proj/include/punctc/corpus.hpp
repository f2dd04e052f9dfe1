// punctc/corpus.hpp — synthetic punctuated-speech corpus, manifests, batching.
//
// The generator maps every non-punctuation character to a fixed random
// feature signature held for a few frames; punctuation is acoustically cued:
// commas insert a short silence, sentence-final marks a long one, and question
// sentences add a rising ramp on the last feature dimension of their final
// word. A corpus generated with noise 0 is exactly decodable from the
// signatures alone.
#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "punctc/common.hpp"
#include "punctc/features.hpp"
#include "punctc/random.hpp"
#include "punctc/text.hpp"

namespace punctc {

struct GeneratorConfig {
  std::string letters = "abcdefghijklmnopqrstuvwxyz";
  size_t lexicon_size = 40;
  size_t word_len_min = 2, word_len_max = 5;
  double apostrophe_prob = 0.03;  // chance a lexicon word gets a ' before its last letter
  size_t sentences_min = 1, sentences_max = 3;
  size_t words_min = 3, words_max = 6;
  double comma_prob = 0.15;     // after a non-final word
  double question_prob = 0.25;  // sentence ends '?' instead of '.'
  size_t dur_min = 2, dur_max = 5;  // frames per character
  size_t pause_short_min = 3, pause_short_max = 5;
  size_t pause_long_min = 8, pause_long_max = 12;
  double noise_sigma = 0.1;
  size_t feature_dim = 8;
  double hop_ms = 10.0;
  uint64_t signature_seed = 7;

  void validate() const {
    ensure(letters.size() >= 2, "generator: need at least 2 letters");
    ensure(feature_dim >= 2, "generator: feature_dim must be >= 2");
    ensure(lexicon_size >= 1 && word_len_min >= 1 &&
               word_len_max >= word_len_min,
           "generator: bad lexicon settings");
    ensure(sentences_min >= 1 && sentences_max >= sentences_min,
           "generator: bad sentence count range");
    ensure(words_min >= 1 && words_max >= words_min,
           "generator: bad words-per-sentence range");
    ensure(dur_min >= 1 && dur_max >= dur_min, "generator: bad duration range");
    ensure(pause_short_min >= 1 && pause_short_max >= pause_short_min,
           "generator: bad short-pause range");
    ensure(pause_long_min > pause_short_max && pause_long_max >= pause_long_min,
           "generator: long pauses must be longer than short pauses");
    ensure(noise_sigma >= 0.0, "generator: negative noise");
    ensure(hop_ms > 0.0, "generator: hop_ms must be positive");
    Vocabulary::from_symbols(vocab_symbols());  // rejects duplicate letters
    ensure(vocab_symbols().size() >= 4, "generator: vocabulary too small");
  }

  std::string vocab_symbols() const { return default_vocab_symbols(letters); }
};

// char -> signature over dims [0, F-2]; dim F-1 is reserved for the rising
// question cue and stays 0 in every signature.
using SignatureTable = std::map<char, std::vector<double>>;

inline SignatureTable build_signatures(const GeneratorConfig& cfg) {
  SignatureTable table;
  for (char c : cfg.vocab_symbols()) {
    if (is_kept_mark(c)) continue;
    Rng rng(mix_seed(cfg.signature_seed, static_cast<unsigned char>(c)));
    std::vector<double> sig(cfg.feature_dim, 0.0);
    for (size_t d = 0; d + 1 < cfg.feature_dim; ++d)
      sig[d] = as_stored(rng.uniform(-1.0, 1.0));
    table[c] = std::move(sig);
  }
  return table;
}

struct Utterance {
  std::string id;
  FeatureSequence features;
  std::string transcript;  // normalized
  TokenSequence tokens;    // tokenize(transcript)
};

namespace detail {

inline std::vector<std::string> build_lexicon(const GeneratorConfig& cfg,
                                              Rng& rng) {
  std::vector<std::string> words;
  while (words.size() < cfg.lexicon_size) {
    size_t len = static_cast<size_t>(
        rng.uniform_int(static_cast<int64_t>(cfg.word_len_min),
                        static_cast<int64_t>(cfg.word_len_max)));
    std::string w;
    while (w.size() < len) {
      char c = cfg.letters[rng.index(cfg.letters.size())];
      if (!w.empty() && w.back() == c) continue;  // signatures must alternate
      w.push_back(c);
    }
    if (w.size() >= 3 && rng.uniform() < cfg.apostrophe_prob)
      w.insert(w.size() - 1, 1, '\'');
    if (std::find(words.begin(), words.end(), w) == words.end())
      words.push_back(w);
  }
  return words;
}

inline std::string build_transcript(const GeneratorConfig& cfg, Rng& rng,
                                    const std::vector<std::string>& lexicon) {
  std::string text;
  size_t sentences = static_cast<size_t>(
      rng.uniform_int(static_cast<int64_t>(cfg.sentences_min),
                      static_cast<int64_t>(cfg.sentences_max)));
  for (size_t s = 0; s < sentences; ++s) {
    if (!text.empty()) text += ' ';
    size_t words = static_cast<size_t>(
        rng.uniform_int(static_cast<int64_t>(cfg.words_min),
                        static_cast<int64_t>(cfg.words_max)));
    for (size_t w = 0; w < words; ++w) {
      if (w > 0) text += ' ';
      text += lexicon[rng.index(lexicon.size())];
      if (w + 1 < words && rng.uniform() < cfg.comma_prob) text += ',';
    }
    text += rng.uniform() < cfg.question_prob ? '?' : '.';
  }
  return text;
}

}  // namespace detail

// Renders a transcript into feature frames under the signature scheme.
inline FeatureSequence render_features(const std::string& transcript,
                                       const GeneratorConfig& cfg,
                                       const SignatureTable& signatures,
                                       Rng& rng) {
  size_t dim = cfg.feature_dim;
  std::vector<std::vector<double>> rows;
  // spans of the word currently being emitted, for the question cue
  std::vector<size_t> word_frames;

  auto emit = [&](const std::vector<double>& base, size_t count) {
    for (size_t i = 0; i < count; ++i) rows.push_back(base);
  };
  std::vector<double> silence(dim, 0.0);

  for (size_t i = 0; i < transcript.size(); ++i) {
    char c = transcript[i];
    if (c == ',') {
      word_frames.clear();
      emit(silence, static_cast<size_t>(rng.uniform_int(
                        static_cast<int64_t>(cfg.pause_short_min),
                        static_cast<int64_t>(cfg.pause_short_max))));
    } else if (c == '.' || c == '?') {
      if (c == '?' && !word_frames.empty()) {
        // rising cue over the final word, 0 -> 1 on the reserved dimension
        size_t n = word_frames.size();
        for (size_t k = 0; k < n; ++k)
          rows[word_frames[k]][dim - 1] +=
              n > 1 ? static_cast<double>(k) / static_cast<double>(n - 1) : 1.0;
      }
      word_frames.clear();
      emit(silence, static_cast<size_t>(rng.uniform_int(
                        static_cast<int64_t>(cfg.pause_long_min),
                        static_cast<int64_t>(cfg.pause_long_max))));
    } else {
      if (c == ' ') word_frames.clear();
      auto it = signatures.find(c);
      ensure(it != signatures.end(), "generator: no signature for '", c, "'");
      size_t dur = static_cast<size_t>(
          rng.uniform_int(static_cast<int64_t>(cfg.dur_min),
                          static_cast<int64_t>(cfg.dur_max)));
      for (size_t k = 0; k < dur; ++k) {
        if (c != ' ') word_frames.push_back(rows.size());
        rows.push_back(it->second);
      }
    }
  }

  FeatureSequence out;
  out.hop_ms = cfg.hop_ms;
  out.frames = Array({rows.size(), dim});
  for (size_t t = 0; t < rows.size(); ++t)
    for (size_t d = 0; d < dim; ++d)
      out.frames.at(t, d) =
          as_stored(rows[t][d] + (cfg.noise_sigma > 0.0
                                      ? cfg.noise_sigma * rng.gaussian()
                                      : 0.0));
  return out;
}

// Deterministic for a fixed (cfg, seed, count).
inline std::vector<Utterance> generate_corpus(const GeneratorConfig& cfg,
                                              uint64_t seed, size_t count) {
  cfg.validate();
  ensure(count >= 1, "generator: need at least one utterance");
  Vocabulary vocab = Vocabulary::from_symbols(cfg.vocab_symbols());
  SignatureTable signatures = build_signatures(cfg);
  Rng lex_rng(mix_seed(seed, 0));
  std::vector<std::string> lexicon = detail::build_lexicon(cfg, lex_rng);

  std::vector<Utterance> out;
  out.reserve(count);
  Rng rng(mix_seed(seed, 1));
  for (size_t i = 0; i < count; ++i) {
    char id_buf[24];
    std::snprintf(id_buf, sizeof(id_buf), "utt%06zu", i);
    Utterance u;
    u.id = id_buf;
    u.transcript = detail::build_transcript(cfg, rng, lexicon);
    u.tokens = vocab.tokenize(u.transcript);
    u.features = render_features(u.transcript, cfg, signatures, rng);
    out.push_back(std::move(u));
  }
  return out;
}

// ── Manifest ────────────────────────────────────────────────────────────────
// Line-delimited JSON. First line is a header record carrying the format
// version, frame hop, feature dimension and the vocabulary symbols; every
// following line is one utterance.

struct ManifestEntry {
  std::string id;
  std::string feature_path;  // relative to the manifest's directory
  size_t frames = 0;
  std::string transcript;
};

struct Manifest {
  int version = 1;
  double hop_ms = 10.0;
  size_t feature_dim = 0;
  std::string vocab_symbols;
  std::vector<ManifestEntry> entries;
};

inline void write_manifest(const std::string& path, const Manifest& m) {
  std::ofstream os(path, std::ios::trunc);
  ensure(os.good(), "manifest: cannot open '", path, "' for writing");
  nlohmann::json header = {{"type", "header"},
                           {"version", m.version},
                           {"hop_ms", m.hop_ms},
                           {"feature_dim", m.feature_dim},
                           {"vocab", m.vocab_symbols}};
  os << header.dump() << "\n";
  for (const auto& e : m.entries) {
    nlohmann::json rec = {{"id", e.id},
                          {"features", e.feature_path},
                          {"frames", e.frames},
                          {"transcript", e.transcript}};
    os << rec.dump() << "\n";
  }
  ensure(os.good(), "manifest: write to '", path, "' failed");
}

inline Manifest read_manifest(const std::string& path) {
  std::ifstream is(path);
  ensure(is.good(), "manifest: cannot open '", path, "'");
  Manifest m;
  std::string line;
  ensure(static_cast<bool>(std::getline(is, line)), "manifest: '", path,
         "' is empty");
  nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
  ensure(!header.is_discarded() && header.value("type", "") == "header",
         "manifest: '", path, "' does not start with a header record");
  m.version = header.at("version").get<int>();
  ensure(m.version == 1, "manifest: unsupported version ", m.version);
  m.hop_ms = header.at("hop_ms").get<double>();
  m.feature_dim = header.at("feature_dim").get<size_t>();
  m.vocab_symbols = header.at("vocab").get<std::string>();
  std::map<std::string, bool> seen;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
    ensure(!rec.is_discarded(), "manifest: bad record in '", path, "'");
    ManifestEntry e;
    e.id = rec.at("id").get<std::string>();
    e.feature_path = rec.at("features").get<std::string>();
    e.frames = rec.at("frames").get<size_t>();
    e.transcript = rec.at("transcript").get<std::string>();
    ensure(!seen[e.id], "manifest: duplicate id '", e.id, "'");
    seen[e.id] = true;
    m.entries.push_back(std::move(e));
  }
  return m;
}

// Loads every utterance of a manifest, resolving feature paths against the
// manifest's directory.
inline std::vector<Utterance> load_utterances(const std::string& manifest_path) {
  Manifest m = read_manifest(manifest_path);
  Vocabulary vocab = Vocabulary::from_symbols(m.vocab_symbols);
  std::filesystem::path base =
      std::filesystem::path(manifest_path).parent_path();
  std::vector<Utterance> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) {
    Utterance u;
    u.id = e.id;
    u.features = read_feature_file((base / e.feature_path).string());
    ensure(u.features.num_frames() == e.frames, "manifest: '", e.id,
           "' frame count mismatch (", e.frames, " vs ",
           u.features.num_frames(), ")");
    ensure(u.features.dim() == m.feature_dim, "manifest: '", e.id,
           "' feature dim mismatch");
    u.transcript = e.transcript;
    u.tokens = vocab.tokenize(u.transcript);
    out.push_back(std::move(u));
  }
  return out;
}

// Writes features + manifest under out_dir; returns the manifest path.
inline std::string write_corpus(const std::string& out_dir,
                                const std::string& name,
                                const std::vector<Utterance>& utts,
                                const GeneratorConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "feats");
  Manifest m;
  m.hop_ms = cfg.hop_ms;
  m.feature_dim = cfg.feature_dim;
  m.vocab_symbols = cfg.vocab_symbols();
  for (const auto& u : utts) {
    std::string rel = msg("feats/", u.id, ".fbin");
    write_feature_file((fs::path(out_dir) / rel).string(), u.features);
    m.entries.push_back(
        ManifestEntry{u.id, rel, u.features.num_frames(), u.transcript});
  }
  std::string manifest_path = (fs::path(out_dir) / (name + ".jsonl")).string();
  write_manifest(manifest_path, m);
  return manifest_path;
}

// ── Batch assembly ──────────────────────────────────────────────────────────

struct Batch {
  std::vector<Utterance> items;
  bool concatenated = false;
};

// Merges neighbors (1,2), (3,4), ... of the batch order: features stack along
// time, transcripts join with a single space. An odd trailing element passes
// through unmerged.
inline Batch concat_pairs(const Batch& batch, const Vocabulary& vocab) {
  ensure(!batch.items.empty(), "concat_pairs: empty batch");
  ensure(!batch.concatenated, "concat_pairs: batch already concatenated");
  Batch out;
  out.concatenated = true;
  int space_id = vocab.id(' ');
  for (size_t i = 0; i + 1 < batch.items.size(); i += 2) {
    const Utterance& a = batch.items[i];
    const Utterance& b = batch.items[i + 1];
    ensure(a.features.dim() == b.features.dim() &&
               a.features.hop_ms == b.features.hop_ms,
           "concat_pairs: feature layout mismatch between '", a.id, "' and '",
           b.id, "'");
    Utterance m;
    m.id = a.id + "+" + b.id;
    m.transcript = a.transcript + " " + b.transcript;
    m.tokens = a.tokens;
    m.tokens.push_back(space_id);
    m.tokens.insert(m.tokens.end(), b.tokens.begin(), b.tokens.end());
    m.features.hop_ms = a.features.hop_ms;
    m.features.frames =
        Array({a.features.num_frames() + b.features.num_frames(),
               a.features.dim()});
    std::copy(a.features.frames.data().begin(), a.features.frames.data().end(),
              m.features.frames.data().begin());
    std::copy(b.features.frames.data().begin(), b.features.frames.data().end(),
              m.features.frames.data().begin() + a.features.frames.numel());
    out.items.push_back(std::move(m));
  }
  if (batch.items.size() % 2 == 1) out.items.push_back(batch.items.back());
  return out;
}

}  // namespace punctc
