// punctc/chunking.hpp — context-sensitive chunk split/pad/encode/trim/merge
// and the incremental streaming session.
//
// Core chunks partition the input; each is encoded together with left/right
// context frames whose emissions are discarded afterwards, so the merged
// lattice has exactly the emission length of the full sequence. Edge chunks
// get only the context that exists (truncated, never zero-padded). Chunks are
// encoded independently with no state carry-over.
#pragma once

#include <vector>

#include "punctc/autograd.hpp"
#include "punctc/common.hpp"
#include "punctc/ctc.hpp"
#include "punctc/model.hpp"

namespace punctc {

struct ChunkPlan {
  size_t chunk_frames = 100;
  size_t left_frames = 200;
  size_t right_frames = 100;
  size_t subsample_factor = 4;

  void validate() const {
    ensure(subsample_factor >= 1, "chunk plan: subsample factor must be >= 1");
    ensure(chunk_frames >= subsample_factor, "chunk plan: chunk of ",
           chunk_frames, " frames is below the subsample factor ",
           subsample_factor);
    // divisibility keeps emission-frame trimming exact
    ensure(chunk_frames % subsample_factor == 0 &&
               left_frames % subsample_factor == 0 &&
               right_frames % subsample_factor == 0,
           "chunk plan: chunk/left/right (", chunk_frames, "/", left_frames,
           "/", right_frames, ") must be multiples of the subsample factor ",
           subsample_factor);
  }

  size_t lookahead_frames() const { return chunk_frames + right_frames; }
};

struct ChunkSlice {
  size_t start = 0, end = 0;      // core input range [start, end)
  size_t pstart = 0, pend = 0;    // encoded input range [pstart, pend)
  size_t emit_lead = 0;           // leading emission frames to drop
  size_t emit_trail = 0;          // trailing emission frames to drop
};

inline std::vector<ChunkSlice> plan_chunks(size_t total_frames,
                                           const ChunkPlan& plan) {
  plan.validate();
  ensure(total_frames >= 1, "plan_chunks: empty input");
  size_t s = plan.subsample_factor;
  auto emis = [s](size_t t) { return (t + s - 1) / s; };  // ceil(t / s)
  std::vector<ChunkSlice> out;
  for (size_t start = 0; start < total_frames; start += plan.chunk_frames) {
    ChunkSlice slice;
    slice.start = start;
    slice.end = std::min(start + plan.chunk_frames, total_frames);
    slice.pstart = start > plan.left_frames ? start - plan.left_frames : 0;
    slice.pend = std::min(total_frames, slice.end + plan.right_frames);
    slice.emit_lead = start / s - slice.pstart / s;
    slice.emit_trail = emis(slice.pend) - emis(slice.end);
    out.push_back(slice);
  }
  return out;
}

namespace detail {

inline Array slice_feature_rows(const Array& features, size_t start,
                                size_t end) {
  Array out({end - start, features.cols()});
  std::copy(features.data().begin() + start * features.cols(),
            features.data().begin() + end * features.cols(),
            out.data().begin());
  return out;
}

}  // namespace detail

// Graph form of the chunk path: encode every padded slice independently, drop
// the context emissions, concatenate in order. Same emission count as the
// full-sequence encode.
inline Var chunked_encode_node(Tape& tape, Encoder& encoder,
                               const Array& features, const ChunkPlan& plan,
                               bool trainable) {
  ensure(plan.subsample_factor == encoder.config().subsample_factor,
         "chunked_encode: plan subsample factor ", plan.subsample_factor,
         " does not match the encoder's ", encoder.config().subsample_factor);
  std::vector<ChunkSlice> slices = plan_chunks(features.rows(), plan);
  std::vector<Var> kept;
  kept.reserve(slices.size());
  for (const ChunkSlice& slice : slices) {
    Array padded = detail::slice_feature_rows(features, slice.pstart, slice.pend);
    Var lp = encoder.build_log_probs(tape, padded, trainable);
    size_t local = lp.value().rows();
    ensure(slice.emit_lead + slice.emit_trail <= local,
           "chunked_encode: trim (", slice.emit_lead, "+", slice.emit_trail,
           ") exceeds the chunk's ", local, " emission frames");
    kept.push_back(ag::slice_rows(lp, slice.emit_lead,
                                  local - slice.emit_lead - slice.emit_trail));
  }
  return ag::concat_rows(kept);
}

inline EmissionLattice chunked_encode(Encoder& encoder, const Array& features,
                                      const ChunkPlan& plan) {
  Tape tape;
  Var merged = chunked_encode_node(tape, encoder, features, plan, false);
  return EmissionLattice{encoder.config().vocab_size, merged.value()};
}

// Incremental session: frames are pushed in order, a chunk is encoded as soon
// as its core plus the right context is buffered, and flush() finalizes the
// tail. The emitted lattice segments concatenate to exactly
// chunked_encode(all pushed frames), and the running beam decode over them
// equals the batch decode of that lattice.
class StreamSession {
 public:
  struct LatencyRecord {
    size_t chunk_index = 0;
    size_t core_frames = 0;
    size_t emitted_tokens = 0;     // new tokens vs. the previous best hypothesis
    size_t lookahead_frames = 0;   // chunk_frames + right_frames, by construction
  };

  StreamSession(Encoder& encoder, const ChunkPlan& plan, size_t beam)
      : encoder_(&encoder), plan_(plan), decoder_(beam) {
    plan_.validate();
    ensure(plan_.subsample_factor == encoder.config().subsample_factor,
           "stream session: plan subsample factor mismatch");
    buffer_ = Array({0, encoder.config().feature_dim});
  }

  // Appends rows and processes every chunk that became ready. Returns the
  // current best hypothesis.
  DecodeResult push(const Array& rows) {
    ensure(!flushed_, "stream session: push after flush");
    ensure(rows.ndim() == 2 && rows.cols() == encoder_->config().feature_dim,
           "stream session: bad feature rows");
    size_t old = buffer_.rows();
    Array grown({old + rows.rows(), buffer_.cols()});
    std::copy(buffer_.data().begin(), buffer_.data().end(),
              grown.data().begin());
    std::copy(rows.data().begin(), rows.data().end(),
              grown.data().begin() + old * buffer_.cols());
    buffer_ = std::move(grown);
    while ((next_chunk_ + 1) * plan_.chunk_frames + plan_.right_frames <=
           buffer_.rows()) {
      encode_chunk(next_chunk_, /*final=*/false);
      ++next_chunk_;
    }
    return current_best();
  }

  DecodeResult flush() {
    ensure(!flushed_, "stream session: flush called twice");
    flushed_ = true;
    size_t total = buffer_.rows();
    while (next_chunk_ * plan_.chunk_frames < total) {
      encode_chunk(next_chunk_, /*final=*/true);
      ++next_chunk_;
    }
    return current_best();
  }

  // Concatenation of all emitted lattice segments so far.
  EmissionLattice emitted_lattice() const {
    ensure(emitted_.rows() >= 1, "stream session: nothing emitted");
    return EmissionLattice{encoder_->config().vocab_size, emitted_};
  }

  size_t emitted_frames() const { return emitted_.rows(); }
  const std::vector<LatencyRecord>& latency() const { return latency_; }
  bool flushed() const { return flushed_; }

 private:
  DecodeResult current_best() const {
    return emitted_.rows() == 0 ? DecodeResult{} : decoder_.best();
  }

  void encode_chunk(size_t index, bool final) {
    size_t total = buffer_.rows();
    size_t start = index * plan_.chunk_frames;
    size_t end = std::min(start + plan_.chunk_frames, total);
    size_t pstart = start > plan_.left_frames ? start - plan_.left_frames : 0;
    size_t pend = std::min(total, end + plan_.right_frames);
    if (!final)
      ensure(pend == end + plan_.right_frames,
             "stream session: chunk processed before its lookahead arrived");
    size_t s = plan_.subsample_factor;
    size_t emit_lead = start / s - pstart / s;
    size_t emit_keep = (end + s - 1) / s - start / s;

    Array padded = detail::slice_feature_rows(buffer_, pstart, pend);
    EmissionLattice lat = encoder_->encode(padded);

    size_t old = emitted_.rows();
    size_t cols = lat.log_probs.cols();
    Array grown({old + emit_keep, cols});
    std::copy(emitted_.data().begin(), emitted_.data().end(),
              grown.data().begin());
    for (size_t j = 0; j < emit_keep; ++j) {
      auto row = lat.log_probs.row(emit_lead + j);
      std::copy(row.begin(), row.end(), grown.row(old + j).begin());
      decoder_.step(row);
    }
    emitted_ = std::move(grown);

    // emitted tokens are counted against the longest common prefix with the
    // previous best, so a rewritten suffix counts as re-emission
    DecodeResult best = decoder_.best();
    LatencyRecord rec;
    rec.chunk_index = index;
    rec.core_frames = end - start;
    rec.lookahead_frames = plan_.lookahead_frames();
    rec.emitted_tokens =
        best.tokens.size() - common_prefix(previous_best_, best.tokens);
    previous_best_ = best.tokens;
    latency_.push_back(rec);
  }

  static size_t common_prefix(const TokenSequence& a, const TokenSequence& b) {
    size_t n = std::min(a.size(), b.size());
    size_t i = 0;
    while (i < n && a[i] == b[i]) ++i;
    return i;
  }

  Encoder* encoder_;
  ChunkPlan plan_;
  BeamState decoder_;
  Array buffer_;
  Array emitted_ = Array({0, 0});
  TokenSequence previous_best_;
  std::vector<LatencyRecord> latency_;
  size_t next_chunk_ = 0;
  bool flushed_ = false;
};

}  // namespace punctc
