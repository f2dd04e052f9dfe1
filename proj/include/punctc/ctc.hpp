// punctc/ctc.hpp — CTC loss, occupancy gradients, and decoders.
//
// Follows Graves et al. (2006): the target is expanded to the blank-augmented
// state sequence [blank, y1, blank, ..., yL, blank] and the loss marginalizes
// over all monotonic alignments with a forward-backward recursion. All lattice
// math stays in log space. Blank is always lattice column 0; vocabulary id v
// lives at column v + 1.
#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "punctc/array.hpp"
#include "punctc/autograd.hpp"
#include "punctc/common.hpp"

namespace punctc {

constexpr size_t kBlank = 0;

using TokenSequence = std::vector<int>;

class CtcInfeasible : public Error {
 public:
  explicit CtcInfeasible(const std::string& what) : Error(what) {}
};

// Per-frame posterior log-distribution over vocabulary + blank.
struct EmissionLattice {
  size_t vocab_size = 0;          // without blank
  Array log_probs;                // [frames x (vocab_size + 1)]

  size_t frames() const { return log_probs.rows(); }

  void validate(double tol = 1e-6) const {
    ensure(log_probs.ndim() == 2 && log_probs.rows() >= 1,
           "lattice: needs at least one emission frame");
    ensure(log_probs.cols() == vocab_size + 1, "lattice: expected ",
           vocab_size + 1, " columns, got ", log_probs.cols());
    for (size_t t = 0; t < frames(); ++t) {
      double lse = log_sum_exp(log_probs.row(t));
      ensure(std::abs(lse) <= tol, "lattice: row ", t,
             " is not normalized, logsumexp = ", lse);
    }
  }
};

inline void check_target(const TokenSequence& target, size_t vocab_size) {
  for (int id : target)
    ensure(id >= 0 && static_cast<size_t>(id) < vocab_size,
           "ctc: target id ", id, " outside vocabulary of size ", vocab_size);
}

// Minimum emission frames that make the target reachable: one frame per label
// plus a separating blank between equal adjacent labels.
inline size_t min_frames_for(const TokenSequence& target) {
  size_t need = target.size();
  for (size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++need;
  return need;
}

namespace detail {

inline int ext_label(const TokenSequence& target, size_t m) {
  return (m % 2 == 1) ? target[m / 2] + 1 : static_cast<int>(kBlank);
}

struct ForwardBackward {
  double log_prob = kNegInf;
  Array occupancy;  // [T x (V+1)], label-occupancy posterior per frame
};

// need_grad=false skips the backward sweep and occupancy accumulation.
inline ForwardBackward ctc_forward_backward(const Array& lp,
                                            const TokenSequence& target,
                                            size_t vocab_size, bool need_grad) {
  size_t t_len = lp.rows();
  size_t m_len = 2 * target.size() + 1;
  auto col = [&](size_t m) { return static_cast<size_t>(ext_label(target, m)); };

  Array alpha({t_len, m_len});
  alpha.fill(kNegInf);
  alpha.at(0, 0) = lp.at(0, col(0));
  if (m_len > 1) alpha.at(0, 1) = lp.at(0, col(1));
  for (size_t t = 1; t < t_len; ++t) {
    for (size_t m = 0; m < m_len; ++m) {
      double acc = alpha.at(t - 1, m);
      if (m >= 1) acc = log_add(acc, alpha.at(t - 1, m - 1));
      if (m >= 2 && col(m) != kBlank && col(m) != col(m - 2))
        acc = log_add(acc, alpha.at(t - 1, m - 2));
      alpha.at(t, m) = acc + lp.at(t, col(m));
    }
  }
  double log_prob = alpha.at(t_len - 1, m_len - 1);
  if (m_len > 1) log_prob = log_add(log_prob, alpha.at(t_len - 1, m_len - 2));

  ForwardBackward out;
  out.log_prob = log_prob;
  if (!need_grad) return out;

  // beta excludes the emission of the current frame, so alpha + beta is the
  // full path mass through (t, m) and no division by a possibly-zero emission
  // probability is needed.
  Array beta({t_len, m_len});
  beta.fill(kNegInf);
  beta.at(t_len - 1, m_len - 1) = 0.0;
  if (m_len > 1) beta.at(t_len - 1, m_len - 2) = 0.0;
  for (size_t t = t_len - 1; t-- > 0;) {
    for (size_t m = 0; m < m_len; ++m) {
      double acc = beta.at(t + 1, m) + lp.at(t + 1, col(m));
      if (m + 1 < m_len)
        acc = log_add(acc, beta.at(t + 1, m + 1) + lp.at(t + 1, col(m + 1)));
      if (m + 2 < m_len && col(m + 2) != kBlank && col(m + 2) != col(m))
        acc = log_add(acc, beta.at(t + 1, m + 2) + lp.at(t + 1, col(m + 2)));
      beta.at(t, m) = acc;
    }
  }

  out.occupancy = Array({t_len, vocab_size + 1});
  if (log_prob != kNegInf) {
    for (size_t t = 0; t < t_len; ++t) {
      for (size_t m = 0; m < m_len; ++m) {
        double mass = alpha.at(t, m) + beta.at(t, m);
        if (mass == kNegInf) continue;
        out.occupancy.at(t, col(m)) += std::exp(mass - log_prob);
      }
    }
  }
  return out;
}

}  // namespace detail

// log P_CTC(target | lattice); -inf when the target is unreachable.
inline double ctc_forward_log_prob(const EmissionLattice& lattice,
                                   const TokenSequence& target) {
  check_target(target, lattice.vocab_size);
  if (lattice.frames() < min_frames_for(target)) return kNegInf;
  return detail::ctc_forward_backward(lattice.log_probs, target,
                                      lattice.vocab_size, false)
      .log_prob;
}

struct CtcLossResult {
  double loss = 0.0;       // -log P_CTC
  Array logit_grad;        // [T x (V+1)]: softmax(logits) - occupancy
  Array occupancy;         // [T x (V+1)] label-occupancy posterior
};

inline CtcLossResult ctc_loss(const EmissionLattice& lattice,
                              const TokenSequence& target) {
  ensure(lattice.log_probs.ndim() == 2 && lattice.frames() >= 1,
         "ctc_loss: empty lattice");
  check_target(target, lattice.vocab_size);
  size_t need = min_frames_for(target);
  if (lattice.frames() < need)
    throw CtcInfeasible(msg("ctc_loss: target needs at least ", need,
                            " emission frames, lattice has ", lattice.frames()));
  auto fb = detail::ctc_forward_backward(lattice.log_probs, target,
                                         lattice.vocab_size, true);
  CtcLossResult out;
  out.loss = -fb.log_prob;
  out.occupancy = fb.occupancy;
  out.logit_grad = Array({lattice.frames(), lattice.vocab_size + 1});
  for (size_t t = 0; t < lattice.frames(); ++t)
    for (size_t k = 0; k <= lattice.vocab_size; ++k)
      out.logit_grad.at(t, k) =
          std::exp(lattice.log_probs.at(t, k)) - fb.occupancy.at(t, k);
  return out;
}

// Exhaustive reference: enumerates every alignment path, collapses it and sums
// the probability of paths that collapse to the target. Test oracle only.
inline double ctc_oracle(const EmissionLattice& lattice,
                         const TokenSequence& target) {
  size_t t_len = lattice.frames();
  size_t v1 = lattice.vocab_size + 1;
  ensure(t_len <= 8 && lattice.vocab_size <= 4,
         "ctc_oracle: tractability guard is frames <= 8 and vocab <= 4, got ",
         t_len, " frames, vocab ", lattice.vocab_size);
  check_target(target, lattice.vocab_size);

  std::vector<size_t> path(t_len, 0);
  double log_total = kNegInf;
  while (true) {
    // collapse: drop repeats, then blanks
    TokenSequence collapsed;
    size_t prev = kBlank;
    for (size_t t = 0; t < t_len; ++t) {
      size_t s = path[t];
      if (s != kBlank && s != prev) collapsed.push_back(static_cast<int>(s) - 1);
      prev = s;
    }
    if (collapsed == target) {
      double lp = 0.0;
      for (size_t t = 0; t < t_len; ++t) lp += lattice.log_probs.at(t, path[t]);
      log_total = log_add(log_total, lp);
    }
    size_t i = 0;
    while (i < t_len && ++path[i] == v1) path[i++] = 0;
    if (i == t_len) break;
  }
  return -log_total;  // +inf when no path collapses to the target
}

struct DecodeResult {
  TokenSequence tokens;
  double score = 0.0;                 // log mass (beam) or best-path log prob (greedy)
  std::vector<size_t> frame_offsets;  // first emission frame per token
};

inline DecodeResult greedy_decode(const EmissionLattice& lattice) {
  DecodeResult out;
  size_t prev = kBlank;
  for (size_t t = 0; t < lattice.frames(); ++t) {
    auto row = lattice.log_probs.row(t);
    size_t best = 0;
    for (size_t k = 1; k < row.size(); ++k)
      if (row[k] > row[best]) best = k;
    out.score += row[best];
    if (best != kBlank && best != prev) {
      out.tokens.push_back(static_cast<int>(best) - 1);
      out.frame_offsets.push_back(t);
    }
    prev = best;
  }
  return out;
}

// Prefix beam search state. Feeding frames one at a time gives the same result
// as decoding the whole lattice at once, which is what the streaming session
// relies on.
class BeamState {
 public:
  explicit BeamState(size_t beam_width) : beam_width_(beam_width) {
    ensure(beam_width_ >= 1, "beam search: beam width must be >= 1");
    prefixes_[{}] = Hyp{0.0, kNegInf, {}};
  }

  static constexpr size_t kUnbounded = std::numeric_limits<size_t>::max();

  size_t frame() const { return t_; }

  void step(std::span<const double> row) {
    std::map<TokenSequence, Hyp> next;
    // Stay paths first: a surviving prefix keeps the offsets it was created
    // with, extensions merging into it later this frame do not overwrite them.
    for (const auto& [p, h] : prefixes_) {
      double total = log_add(h.lp_blank, h.lp_nonblank);
      Hyp stay;
      stay.lp_blank = total + row[kBlank];
      stay.lp_nonblank =
          p.empty() ? kNegInf
                    : h.lp_nonblank + row[static_cast<size_t>(p.back()) + 1];
      stay.offsets = h.offsets;
      next.emplace(p, std::move(stay));
    }
    for (const auto& [p, h] : prefixes_) {
      double total = log_add(h.lp_blank, h.lp_nonblank);
      for (size_t c = 1; c < row.size(); ++c) {
        int tok = static_cast<int>(c) - 1;
        // Extending with the same label needs an intervening blank.
        double mass =
            (!p.empty() && p.back() == tok) ? h.lp_blank + row[c] : total + row[c];
        if (mass == kNegInf) continue;
        TokenSequence q = p;
        q.push_back(tok);
        auto it = next.find(q);
        if (it == next.end()) {
          Hyp ext;
          ext.lp_blank = kNegInf;
          ext.lp_nonblank = mass;
          ext.offsets = h.offsets;
          ext.offsets.push_back(t_);
          next.emplace(std::move(q), std::move(ext));
        } else {
          it->second.lp_nonblank = log_add(it->second.lp_nonblank, mass);
        }
      }
    }
    prune(next);
    prefixes_ = std::move(next);
    ++t_;
  }

  DecodeResult best() const {
    DecodeResult out;
    double best_total = kNegInf;
    const TokenSequence* best_key = nullptr;
    const Hyp* best_hyp = nullptr;
    // Map iteration is lexicographic, so at equal mass the smaller sequence
    // is kept.
    for (const auto& [p, h] : prefixes_) {
      double total = log_add(h.lp_blank, h.lp_nonblank);
      if (total > best_total) {
        best_total = total;
        best_key = &p;
        best_hyp = &h;
      }
    }
    if (best_key != nullptr) {
      out.tokens = *best_key;
      out.score = best_total;
      out.frame_offsets = best_hyp->offsets;
    }
    return out;
  }

 private:
  struct Hyp {
    double lp_blank = kNegInf;
    double lp_nonblank = kNegInf;
    std::vector<size_t> offsets;
  };

  void prune(std::map<TokenSequence, Hyp>& next) {
    if (beam_width_ == kUnbounded || next.size() <= beam_width_) return;
    std::vector<std::pair<double, const TokenSequence*>> ranked;
    ranked.reserve(next.size());
    for (const auto& [p, h] : next)
      ranked.emplace_back(log_add(h.lp_blank, h.lp_nonblank), &p);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return *a.second < *b.second;
    });
    std::map<TokenSequence, Hyp> kept;
    for (size_t i = 0; i < beam_width_; ++i) {
      auto it = next.find(*ranked[i].second);
      kept.emplace(it->first, std::move(it->second));
    }
    next = std::move(kept);
  }

  std::map<TokenSequence, Hyp> prefixes_;
  size_t beam_width_;
  size_t t_ = 0;
};

inline DecodeResult beam_decode(const EmissionLattice& lattice, size_t beam) {
  BeamState state(beam);
  for (size_t t = 0; t < lattice.frames(); ++t)
    state.step(lattice.log_probs.row(t));
  return state.best();
}

// Autograd bridge: scalar CTC loss on a [T x (V+1)] log-probability node.
// d(loss)/d(log_probs) = -occupancy; composed with log_softmax this yields the
// classic softmax(logits) - occupancy logit gradient.
inline Var ctc_node(Var log_probs, const TokenSequence& target,
                    size_t vocab_size) {
  const Array& lp = log_probs.value();
  ensure(lp.ndim() == 2 && lp.cols() == vocab_size + 1,
         "ctc_node: log-prob shape mismatch");
  ensure(lp.rows() >= 1, "ctc_node: empty lattice");
  check_target(target, vocab_size);
  size_t need = min_frames_for(target);
  if (lp.rows() < need)
    throw CtcInfeasible(msg("ctc_node: target needs at least ", need,
                            " emission frames, lattice has ", lp.rows()));
  auto fb = detail::ctc_forward_backward(lp, target, vocab_size,
                                         log_probs.needs_grad());
  TapeNode* parent = log_probs.node();
  return ag::make(log_probs, Array::scalar(-fb.log_prob), log_probs.needs_grad(),
                  [parent, occ = std::move(fb.occupancy)](TapeNode& self) {
                    double g = self.grad.at(0);
                    double* dst = parent->grad.data().data();
                    const double* src = occ.data().data();
                    for (size_t i = 0; i < occ.numel(); ++i)
                      dst[i] -= g * src[i];
                  });
}

}  // namespace punctc
