// punctc/train.hpp — joint-loss training step, optimizer, schedule, fit loop.
//
// One training step follows the paper's procedure exactly: concatenate
// neighbor pairs of the shuffled batch, encode the concatenated sequences for
// the full-sequence CTC loss, re-encode them chunk by chunk for the chunk CTC
// loss, interpolate with weight lambda, run a single combined backward and one
// optimizer update. Ablation switches drop the chunk term or the
// concatenation.
#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "punctc/checkpoint.hpp"
#include "punctc/chunking.hpp"
#include "punctc/corpus.hpp"
#include "punctc/ctc.hpp"
#include "punctc/model.hpp"

namespace punctc {

enum class Ablation { full, no_chunk_loss, no_concat };

inline std::string ablation_name(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_chunk_loss: return "no-chunk-loss";
    case Ablation::no_concat: return "no-concat";
  }
  fail("unknown ablation");
}

inline Ablation parse_ablation(const std::string& s) {
  if (s == "full") return Ablation::full;
  if (s == "no-chunk-loss") return Ablation::no_chunk_loss;
  if (s == "no-concat") return Ablation::no_concat;
  fail("unknown ablation '", s, "' (expected full, no-chunk-loss, no-concat)");
}

struct TrainConfig {
  double lambda = 0.5;          // chunk-loss interpolation weight
  double lr = 1e-3;
  size_t warmup_steps = 10000;
  size_t max_steps = 1000;
  size_t batch_max_frames = 4000;  // frame budget per batch, before pairing
  ChunkPlan chunk_plan;
  Ablation ablation = Ablation::full;
  uint64_t seed = 1;
  size_t checkpoint_every = 0;  // 0: only the final checkpoint

  void validate() const {
    ensure(lambda >= 0.0 && lambda <= 1.0, "train config: lambda must be in [0, 1]");
    ensure(lr > 0.0, "train config: lr must be positive");
    ensure(warmup_steps >= 1, "train config: warmup_steps must be >= 1");
    ensure(max_steps >= 1, "train config: max_steps must be >= 1");
    ensure(batch_max_frames >= 1, "train config: batch_max_frames must be >= 1");
    chunk_plan.validate();
  }

  nlohmann::json echo() const {
    return {{"lambda", lambda},
            {"lr", lr},
            {"warmup_steps", warmup_steps},
            {"max_steps", max_steps},
            {"batch_max_frames", batch_max_frames},
            {"chunk_frames", chunk_plan.chunk_frames},
            {"left_frames", chunk_plan.left_frames},
            {"right_frames", chunk_plan.right_frames},
            {"ablation", ablation_name(ablation)},
            {"seed", seed}};
  }
};

// Linear warmup to lr, then inverse square root decay.
inline double lr_at(size_t step, const TrainConfig& cfg) {
  ensure(step >= 1, "lr_at: steps are 1-based");
  double w = static_cast<double>(cfg.warmup_steps);
  if (step <= cfg.warmup_steps)
    return cfg.lr * static_cast<double>(step) / w;
  return cfg.lr * std::sqrt(w / static_cast<double>(step));
}

class Adam {
 public:
  explicit Adam(const std::vector<Param>& params, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const Param& p : params) {
      m_.emplace_back(p.value.shape());
      v_.emplace_back(p.value.shape());
    }
  }

  void step(std::vector<Param>& params, double lr) {
    ensure(params.size() == m_.size(), "adam: parameter set changed");
    ++t_;
    double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
      double* w = params[i].value.data().data();
      const double* g = params[i].grad.data().data();
      double* m = m_[i].data().data();
      double* v = v_[i].data().data();
      for (size_t k = 0; k < params[i].value.numel(); ++k) {
        m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
        v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
        w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
      }
    }
  }

  uint64_t t() const { return t_; }
  std::vector<Array>& moments1() { return m_; }
  std::vector<Array>& moments2() { return v_; }
  void restore(uint64_t t, std::vector<Array> m, std::vector<Array> v) {
    ensure(m.size() == m_.size() && v.size() == v_.size(),
           "adam: restored state does not match parameters");
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
  }

 private:
  double beta1_, beta2_, eps_;
  uint64_t t_ = 0;
  std::vector<Array> m_, v_;
};

struct TrainReport {
  size_t step = 0;
  double l_ctc = 0.0;
  double l_chunk = 0.0;
  double l_total = 0.0;
  double grad_norm = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
  size_t batch_elements = 0;
  size_t skipped = 0;

  nlohmann::json to_json() const {
    return {{"step", step},          {"l_ctc", l_ctc},
            {"l_chunk", l_chunk},    {"l_total", l_total},
            {"grad_norm", grad_norm}, {"lr", lr},
            {"wall_ms", wall_ms},    {"batch_elements", batch_elements},
            {"skipped", skipped}};
  }
};

// One step of the training procedure. The batch must be raw (unconcatenated);
// elements whose target cannot be aligned within their emission frames are
// skipped with a warning instead of failing the run.
inline TrainReport train_step(const Batch& raw, Encoder& encoder, Adam& adam,
                              const TrainConfig& cfg, size_t step,
                              const Vocabulary& vocab,
                              std::vector<std::string>* warnings = nullptr) {
  auto t0 = std::chrono::steady_clock::now();
  ensure(!raw.concatenated, "train_step: expected a raw batch");
  cfg.validate();
  Batch work = cfg.ablation == Ablation::no_concat ? raw
                                                   : concat_pairs(raw, vocab);

  encoder.zero_grads();
  Tape tape;
  std::vector<Var> full_losses, chunk_losses;
  std::string used_ids;
  TrainReport report;
  report.step = step;

  for (const Utterance& u : work.items) {
    size_t emission =
        encoder.config().emission_frames(u.features.num_frames());
    size_t need = min_frames_for(u.tokens);
    if (emission < need) {
      ++report.skipped;
      if (warnings)
        warnings->push_back(msg("skipping '", u.id, "': target needs ", need,
                                " emission frames, input provides ", emission));
      continue;
    }
    used_ids += used_ids.empty() ? u.id : "," + u.id;
    Var full_lp = encoder.build_log_probs(tape, u.features.frames, true);
    full_losses.push_back(
        ctc_node(full_lp, u.tokens, encoder.config().vocab_size));
    if (cfg.ablation != Ablation::no_chunk_loss) {
      Var merged = chunked_encode_node(tape, encoder, u.features.frames,
                                       cfg.chunk_plan, true);
      chunk_losses.push_back(
          ctc_node(merged, u.tokens, encoder.config().vocab_size));
    }
  }

  report.batch_elements = full_losses.size();
  if (full_losses.empty()) {
    // nothing trainable in this batch; the step is consumed without an update
    report.lr = lr_at(step, cfg);
    return report;
  }

  auto mean_of = [&](const std::vector<Var>& parts) {
    Var acc = parts[0];
    for (size_t i = 1; i < parts.size(); ++i) acc = ag::add(acc, parts[i]);
    return ag::scale(acc, 1.0 / static_cast<double>(parts.size()));
  };

  Var l_ctc = mean_of(full_losses);
  Var l_total = l_ctc;
  if (cfg.ablation != Ablation::no_chunk_loss) {
    Var l_chunk = mean_of(chunk_losses);
    l_total = ag::add(ag::scale(l_ctc, 1.0 - cfg.lambda),
                      ag::scale(l_chunk, cfg.lambda));
    report.l_chunk = l_chunk.value().at(0);
  }
  report.l_ctc = l_ctc.value().at(0);
  report.l_total = l_total.value().at(0);
  ensure(std::isfinite(report.l_total),
         "train_step: non-finite loss at step ", step,
         "; offending batch: ", used_ids);

  tape.backward(l_total);

  double norm2 = 0.0;
  for (const Param& p : encoder.params())
    for (double g : p.grad.data()) norm2 += g * g;
  report.grad_norm = std::sqrt(norm2);
  report.lr = lr_at(step, cfg);
  adam.step(encoder.params(), report.lr);

  report.wall_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
  return report;
}

// ── Fit loop ────────────────────────────────────────────────────────────────

namespace detail {

// The shuffle of epoch e is a pure function of (seed, e), so a resumed run
// reproduces the exact data order of an uninterrupted one.
inline std::vector<size_t> epoch_order(uint64_t seed, uint64_t epoch, size_t n) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(mix_seed(seed, 0x5ecful + epoch));
  rng.shuffle(idx);
  return idx;
}

}  // namespace detail

struct FitResult {
  std::string final_checkpoint;
  std::vector<TrainReport> log;
};

// Trains for cfg.max_steps steps over the utterance set, writing checkpoints
// and a JSONL training log under out_dir. resume_from, when set, must be a
// checkpoint written by the same configuration; continuation is bit-identical
// to an uninterrupted run.
inline FitResult fit(const std::vector<Utterance>& utts,
                     const Vocabulary& vocab, Encoder& encoder,
                     const TrainConfig& cfg, const std::string& out_dir,
                     const std::string& resume_from = "",
                     std::ostream* progress = nullptr) {
  cfg.validate();
  ensure(!utts.empty(), "fit: empty corpus");
  std::filesystem::create_directories(out_dir);

  Adam adam(encoder.params());
  uint64_t step = 0, epoch = 0, pos = 0;
  double hop_ms = utts.front().features.hop_ms;

  if (!resume_from.empty()) {
    Checkpoint ck = load_checkpoint(resume_from);
    ensure(ck.has_optimizer, "fit: checkpoint '", resume_from,
           "' has no optimizer state, cannot resume");
    encoder = encoder_from_checkpoint(ck);
    adam = Adam(encoder.params());
    adam.restore(ck.adam_t, std::move(ck.adam_m), std::move(ck.adam_v));
    step = ck.step;
    epoch = ck.epoch;
    pos = ck.pos;
    ensure(ck.seed == cfg.seed, "fit: resume seed mismatch");
  }

  auto snapshot = [&](uint64_t at_step, uint64_t at_epoch, uint64_t at_pos) {
    Checkpoint ck;
    ck.encoder = encoder.config();
    ck.vocab_symbols = vocab.symbols();
    ck.hop_ms = hop_ms;
    ck.step = at_step;
    ck.epoch = at_epoch;
    ck.pos = at_pos;
    ck.seed = cfg.seed;
    ck.train_echo = cfg.echo();
    ck.params = encoder.params();
    ck.has_optimizer = true;
    ck.adam_t = adam.t();
    ck.adam_m = adam.moments1();
    ck.adam_v = adam.moments2();
    return ck;
  };

  std::ofstream log_os(
      (std::filesystem::path(out_dir) / "train_log.jsonl").string(),
      resume_from.empty() ? std::ios::trunc : std::ios::app);

  FitResult result;
  std::vector<size_t> order = detail::epoch_order(cfg.seed, epoch, utts.size());
  std::vector<std::string> warnings;
  while (step < cfg.max_steps) {
    if (pos >= order.size()) {
      ++epoch;
      pos = 0;
      order = detail::epoch_order(cfg.seed, epoch, utts.size());
    }
    Batch batch;
    size_t frames = 0;
    while (pos < order.size()) {
      const Utterance& u = utts[order[pos]];
      if (!batch.items.empty() &&
          frames + u.features.num_frames() > cfg.batch_max_frames)
        break;
      frames += u.features.num_frames();
      batch.items.push_back(u);
      ++pos;
      if (frames >= cfg.batch_max_frames) break;
    }
    ++step;
    TrainReport report =
        train_step(batch, encoder, adam, cfg, step, vocab, &warnings);
    for (const std::string& w : warnings) {
      if (progress) *progress << "warning: " << w << "\n";
      log_os << nlohmann::json{{"warning", w}}.dump() << "\n";
    }
    warnings.clear();
    log_os << report.to_json().dump() << "\n";
    result.log.push_back(report);
    if (progress && (step % 100 == 0 || step == cfg.max_steps))
      *progress << "step " << step << " l_total=" << report.l_total
                << " lr=" << report.lr << "\n";
    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "step_%06zu.ckpt",
                    static_cast<size_t>(step));
      save_checkpoint((std::filesystem::path(out_dir) / name).string(),
                      snapshot(step, epoch, pos));
    }
  }
  result.final_checkpoint =
      (std::filesystem::path(out_dir) / "final.ckpt").string();
  save_checkpoint(result.final_checkpoint, snapshot(step, epoch, pos));
  return result;
}

}  // namespace punctc
