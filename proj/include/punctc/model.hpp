// punctc/model.hpp — toy acoustic encoder.
//
// Pipeline: two stride-2 convolutions (kernel 5) subsample the features by 4,
// a convolutional positional encoding is added residually, then pre-LN
// self-attention blocks and a linear emission head with log-softmax produce
// the lattice. In context_free mode every output frame depends on exactly one
// subsampled input frame: the frontend samples every 4th frame pointwise and
// attention plus positional mixing are disabled. The chunk-consistency tests
// lean on that mode.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "punctc/autograd.hpp"
#include "punctc/common.hpp"
#include "punctc/ctc.hpp"
#include "punctc/random.hpp"

namespace punctc {

struct EncoderConfig {
  size_t feature_dim = 8;
  size_t layers = 4;
  size_t hidden_dim = 64;
  size_t heads = 4;
  size_t vocab_size = 0;
  size_t positional_kernel = 15;
  size_t subsample_factor = 4;  // product of the two frontend strides
  size_t ffn_mult = 4;
  bool context_free = false;

  void validate() const {
    ensure(feature_dim >= 1 && layers >= 1 && hidden_dim >= 1 && heads >= 1 &&
               vocab_size >= 1 && positional_kernel >= 1 && ffn_mult >= 1,
           "encoder config: all dimensions must be >= 1");
    ensure(hidden_dim % heads == 0, "encoder config: hidden_dim ", hidden_dim,
           " not divisible by heads ", heads);
    ensure(subsample_factor == 4,
           "encoder config: the two stride-2 frontend convolutions fix the "
           "subsample factor at 4");
  }

  // ceil(ceil(T/2)/2) == ceil(T/4); depends only on the input length
  size_t emission_frames(size_t t) const {
    return (t + subsample_factor - 1) / subsample_factor;
  }
};

namespace detail {
inline size_t conv_out_len(size_t t, size_t stride) {
  return (t + stride - 1) / stride;
}
inline size_t conv_pad_left(size_t t, size_t kernel, size_t stride) {
  size_t out = conv_out_len(t, stride);
  long total = static_cast<long>((out - 1) * stride + kernel) - static_cast<long>(t);
  if (total < 0) total = 0;
  return static_cast<size_t>(total) / 2;
}
}  // namespace detail

class Encoder {
 public:
  Encoder(EncoderConfig cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    build_params();
    Rng rng(seed);
    for (Param& p : params_) init_param(p, rng);
  }

  const EncoderConfig& config() const { return cfg_; }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

  size_t param_count() const {
    size_t n = 0;
    for (const Param& p : params_) n += p.value.numel();
    return n;
  }

  Param& param(const std::string& name) {
    for (Param& p : params_)
      if (p.name == name) return p;
    fail("encoder: no parameter block named '", name, "'");
  }

  void zero_grads() {
    for (Param& p : params_) p.zero_grad();
  }

  // Full graph: [T x F] features -> [T' x (V+1)] log probabilities.
  // trainable=true routes leaves through Param gradients.
  Var build_log_probs(Tape& tape, const Array& features, bool trainable) {
    Var h = frontend(tape, features, trainable);
    if (!cfg_.context_free) h = ag::add(h, positional(tape, h, trainable));
    for (size_t i = 0; i < cfg_.layers; ++i) h = block(tape, h, i, trainable);
    Var normed = ag::layer_norm(h, fetch(tape, "head.ln.g", trainable),
                                fetch(tape, "head.ln.b", trainable));
    Var logits = ag::add_rowvec(
        ag::matmul(normed, fetch(tape, "head.w", trainable)),
        fetch(tape, "head.b", trainable));
    return ag::log_softmax(logits);
  }

  EmissionLattice encode(const Array& features) {
    Tape tape;
    Var lp = build_log_probs(tape, features, false);
    return EmissionLattice{cfg_.vocab_size, lp.value()};
  }

  // Subsampling frontend: [T x F] -> [T' x H].
  Var frontend(Tape& tape, const Array& features, bool trainable) {
    ensure(features.ndim() == 2 && features.cols() == cfg_.feature_dim,
           "encoder: expected feature dim ", cfg_.feature_dim, ", got ",
           features.cols());
    ensure(features.rows() >= 1, "encoder: empty feature sequence");
    Var x = tape.constant(features);
    if (cfg_.context_free) {
      size_t out = cfg_.emission_frames(features.rows());
      std::vector<size_t> idx(out);
      for (size_t j = 0; j < out; ++j) idx[j] = j * cfg_.subsample_factor;
      Var sampled = ag::gather_rows(x, std::move(idx));
      Var h = ag::add_rowvec(
          ag::matmul(sampled, fetch(tape, "frontend.proj.w", trainable)),
          fetch(tape, "frontend.proj.b", trainable));
      return ag::gelu(h);
    }
    Var h = conv(tape, x, "frontend.conv1", 5, 2, trainable);
    h = ag::gelu(h);
    h = conv(tape, h, "frontend.conv2", 5, 2, trainable);
    return ag::gelu(h);
  }

  // Convolutional positional encoding (stride 1, same length).
  Var positional(Tape& tape, Var h, bool trainable) {
    Var p = conv(tape, h, "posconv", cfg_.positional_kernel, 1, trainable);
    return ag::gelu(p);
  }

 private:
  Var fetch(Tape& tape, const std::string& name, bool trainable) {
    Param& p = param(name);
    return trainable ? tape.leaf(p) : tape.constant(p.value);
  }

  Var conv(Tape& tape, Var x, const std::string& name, size_t kernel,
           size_t stride, bool trainable) {
    size_t t = x.value().rows();
    size_t out = detail::conv_out_len(t, stride);
    size_t pad = detail::conv_pad_left(t, kernel, stride);
    Var cols = ag::im2col(x, kernel, stride, pad, out);
    return ag::add_rowvec(ag::matmul(cols, fetch(tape, name + ".w", trainable)),
                          fetch(tape, name + ".b", trainable));
  }

  Var block(Tape& tape, Var x, size_t layer, bool trainable) {
    std::string pfx = msg("layer", layer, ".");
    if (!cfg_.context_free) {
      Var normed = ag::layer_norm(x, fetch(tape, pfx + "ln1.g", trainable),
                                  fetch(tape, pfx + "ln1.b", trainable));
      x = ag::add(x, attention(tape, normed, pfx, trainable));
    }
    Var normed = ag::layer_norm(x, fetch(tape, pfx + "ln2.g", trainable),
                                fetch(tape, pfx + "ln2.b", trainable));
    Var f = ag::add_rowvec(
        ag::matmul(normed, fetch(tape, pfx + "ffn.w1", trainable)),
        fetch(tape, pfx + "ffn.b1", trainable));
    f = ag::gelu(f);
    f = ag::add_rowvec(ag::matmul(f, fetch(tape, pfx + "ffn.w2", trainable)),
                       fetch(tape, pfx + "ffn.b2", trainable));
    return ag::add(x, f);
  }

  // Unmasked full attention over whatever window the input covers; streaming
  // locality comes from the chunking module feeding windows.
  Var attention(Tape& tape, Var x, const std::string& pfx, bool trainable) {
    size_t dh = cfg_.hidden_dim / cfg_.heads;
    Var q = ag::add_rowvec(
        ag::matmul(x, fetch(tape, pfx + "attn.wq", trainable)),
        fetch(tape, pfx + "attn.bq", trainable));
    Var k = ag::add_rowvec(
        ag::matmul(x, fetch(tape, pfx + "attn.wk", trainable)),
        fetch(tape, pfx + "attn.bk", trainable));
    Var v = ag::add_rowvec(
        ag::matmul(x, fetch(tape, pfx + "attn.wv", trainable)),
        fetch(tape, pfx + "attn.bv", trainable));
    std::vector<Var> heads;
    heads.reserve(cfg_.heads);
    for (size_t h = 0; h < cfg_.heads; ++h) {
      Var qh = ag::slice_cols(q, h * dh, dh);
      Var kh = ag::slice_cols(k, h * dh, dh);
      Var vh = ag::slice_cols(v, h * dh, dh);
      Var scores =
          ag::scale(ag::matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
      heads.push_back(ag::matmul(ag::softmax(scores), vh));
    }
    Var ctx = ag::concat_cols(heads);
    return ag::add_rowvec(ag::matmul(ctx, fetch(tape, pfx + "attn.wo", trainable)),
                          fetch(tape, pfx + "attn.bo", trainable));
  }

  void build_params() {
    size_t f = cfg_.feature_dim;
    size_t h = cfg_.hidden_dim;
    size_t v1 = cfg_.vocab_size + 1;
    size_t ff = cfg_.ffn_mult * h;
    auto add = [&](const std::string& name, std::vector<size_t> shape) {
      params_.emplace_back(name, Array(std::move(shape)));
    };
    if (cfg_.context_free) {
      add("frontend.proj.w", {f, h});
      add("frontend.proj.b", {h});
    } else {
      add("frontend.conv1.w", {5 * f, h});
      add("frontend.conv1.b", {h});
      add("frontend.conv2.w", {5 * h, h});
      add("frontend.conv2.b", {h});
      add("posconv.w", {cfg_.positional_kernel * h, h});
      add("posconv.b", {h});
    }
    for (size_t i = 0; i < cfg_.layers; ++i) {
      std::string pfx = msg("layer", i, ".");
      if (!cfg_.context_free) {
        add(pfx + "ln1.g", {h});
        add(pfx + "ln1.b", {h});
        for (const char* w : {"wq", "wk", "wv", "wo"})
          add(pfx + "attn." + w, {h, h});
        for (const char* b : {"bq", "bk", "bv", "bo"})
          add(pfx + "attn." + b, {h});
      }
      add(pfx + "ln2.g", {h});
      add(pfx + "ln2.b", {h});
      add(pfx + "ffn.w1", {h, ff});
      add(pfx + "ffn.b1", {ff});
      add(pfx + "ffn.w2", {ff, h});
      add(pfx + "ffn.b2", {h});
    }
    add("head.ln.g", {h});
    add("head.ln.b", {h});
    add("head.w", {h, v1});
    add("head.b", {v1});
  }

  static void init_param(Param& p, Rng& rng) {
    bool is_gain = p.name.ends_with(".g");
    bool is_bias = p.name.ends_with(".b") || p.name.ends_with(".b1") ||
                   p.name.ends_with(".b2") || p.name.ends_with(".bq") ||
                   p.name.ends_with(".bk") || p.name.ends_with(".bv") ||
                   p.name.ends_with(".bo");
    if (is_gain) {
      p.value.fill(1.0);
      return;
    }
    if (is_bias) {
      p.value.fill(0.0);
      return;
    }
    // fan-in scaled uniform; fan-in is the input dimension of x * W
    double bound = 1.0 / std::sqrt(static_cast<double>(p.value.rows()));
    for (size_t i = 0; i < p.value.numel(); ++i)
      p.value.at(i) = rng.uniform(-bound, bound);
  }

  EncoderConfig cfg_;
  std::vector<Param> params_;
};

}  // namespace punctc
