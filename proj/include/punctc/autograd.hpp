// punctc/autograd.hpp — tape-based reverse-mode differentiation.
//
// A Tape owns the nodes of one forward computation. Nodes are appended in
// evaluation order, so the reverse of the creation order is a topological
// order and backward() visits each node exactly once. Gradients accumulate
// additively; trainable leaves (Param) keep their gradient across tapes until
// explicitly zeroed.
#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "punctc/array.hpp"
#include "punctc/common.hpp"

namespace punctc {

struct Param {
  std::string name;
  Array value;
  Array grad;

  Param(std::string n, Array v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

struct TapeNode {
  Array value;
  Array grad;  // allocated when needs_grad
  bool needs_grad = false;
  std::function<void(TapeNode&)> backprop;
};

class Var {
 public:
  Var() = default;
  Var(Tape* tape, TapeNode* node) : tape_(tape), node_(node) {}

  const Array& value() const { return node_->value; }
  const Array& grad() const {
    ensure(node_->needs_grad, "var: gradient was not tracked for this node");
    return node_->grad;
  }
  bool needs_grad() const { return node_ != nullptr && node_->needs_grad; }
  TapeNode* node() const { return node_; }
  Tape* tape() const { return tape_; }

 private:
  Tape* tape_ = nullptr;
  TapeNode* node_ = nullptr;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Array v) { return Var(this, push(std::move(v), false, {})); }

  // Differentiable input; gradient readable from the Var after backward().
  Var input(Array v) { return Var(this, push(std::move(v), true, {})); }

  // Trainable leaf: backward() adds dLoss/dLeaf into p.grad.
  Var leaf(Param& p) {
    Param* pp = &p;
    TapeNode* n = push(p.value, true, [pp](TapeNode& self) {
      double* dst = pp->grad.data().data();
      const double* src = self.grad.data().data();
      for (size_t i = 0; i < self.grad.numel(); ++i) dst[i] += src[i];
    });
    return Var(this, n);
  }

  TapeNode* push(Array value, bool needs, std::function<void(TapeNode&)> bp) {
    nodes_.emplace_back();
    TapeNode& n = nodes_.back();
    n.value = std::move(value);
    n.needs_grad = needs;
    if (needs) n.grad = Array(n.value.shape());
    n.backprop = std::move(bp);
    return &n;
  }

  void backward(Var loss) {
    ensure(!ran_backward_, "tape: backward() already ran on this tape");
    ensure(loss.node() != nullptr, "tape: backward() on empty var");
    ensure(loss.value().numel() == 1, "tape: loss must be scalar, has ",
           loss.value().numel(), " elements");
    ensure(loss.needs_grad(), "tape: loss does not depend on any tracked leaf");
    ran_backward_ = true;
    loss.node()->grad.at(0) = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (it->needs_grad && it->backprop) it->backprop(*it);
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  std::deque<TapeNode> nodes_;  // stable addresses
  bool ran_backward_ = false;
};

namespace ag {

inline Var make(Var like, Array value, bool needs,
                std::function<void(TapeNode&)> bp) {
  return Var(like.tape(), like.tape()->push(std::move(value), needs,
                                            needs ? std::move(bp) : nullptr));
}

inline void accumulate(Array& dst, const Array& src) {
  double* d = dst.data().data();
  const double* s = src.data().data();
  for (size_t i = 0; i < dst.numel(); ++i) d[i] += s[i];
}

inline Var matmul(Var a, Var b) {
  const Array& av = a.value();
  const Array& bv = b.value();
  ensure(av.ndim() == 2 && bv.ndim() == 2, "matmul: operands must be 2-d");
  ensure(av.cols() == bv.rows(), "matmul: inner dimensions disagree, [",
         av.rows(), " x ", av.cols(), "] * [", bv.rows(), " x ", bv.cols(), "]");
  Array c({av.rows(), bv.cols()});
  gemm(av, bv, c, false);
  TapeNode* an = a.node();
  TapeNode* bn = b.node();
  bool needs = a.needs_grad() || b.needs_grad();
  return make(a, std::move(c), needs, [an, bn](TapeNode& self) {
    if (an->needs_grad) gemm_nt(self.grad, bn->value, an->grad, true);
    if (bn->needs_grad) gemm_tn(an->value, self.grad, bn->grad, true);
  });
}

// a * b^T, used for attention scores.
inline Var matmul_nt(Var a, Var b) {
  const Array& av = a.value();
  const Array& bv = b.value();
  ensure(av.ndim() == 2 && bv.ndim() == 2, "matmul_nt: operands must be 2-d");
  ensure(av.cols() == bv.cols(), "matmul_nt: inner dimensions disagree");
  Array c({av.rows(), bv.rows()});
  gemm_nt(av, bv, c, false);
  TapeNode* an = a.node();
  TapeNode* bn = b.node();
  bool needs = a.needs_grad() || b.needs_grad();
  return make(a, std::move(c), needs, [an, bn](TapeNode& self) {
    if (an->needs_grad) gemm(self.grad, bn->value, an->grad, true);
    if (bn->needs_grad) gemm_tn(self.grad, an->value, bn->grad, true);
  });
}

inline Var add(Var a, Var b) {
  ensure(a.value().same_shape(b.value()), "add: shape mismatch");
  Array c = a.value();
  accumulate(c, b.value());
  TapeNode* an = a.node();
  TapeNode* bn = b.node();
  bool needs = a.needs_grad() || b.needs_grad();
  return make(a, std::move(c), needs, [an, bn](TapeNode& self) {
    if (an->needs_grad) accumulate(an->grad, self.grad);
    if (bn->needs_grad) accumulate(bn->grad, self.grad);
  });
}

// Adds row vector v [C] to every row of a [T x C].
inline Var add_rowvec(Var a, Var v) {
  const Array& av = a.value();
  const Array& vv = v.value();
  ensure(av.ndim() == 2 && vv.numel() == av.cols(), "add_rowvec: shape mismatch");
  Array c = av;
  for (size_t i = 0; i < av.rows(); ++i) {
    auto r = c.row(i);
    for (size_t j = 0; j < av.cols(); ++j) r[j] += vv.at(j);
  }
  TapeNode* an = a.node();
  TapeNode* vn = v.node();
  bool needs = a.needs_grad() || v.needs_grad();
  return make(a, std::move(c), needs, [an, vn](TapeNode& self) {
    if (an->needs_grad) accumulate(an->grad, self.grad);
    if (vn->needs_grad) {
      size_t cols = self.grad.cols();
      for (size_t i = 0; i < self.grad.rows(); ++i) {
        auto r = self.grad.row(i);
        for (size_t j = 0; j < cols; ++j) vn->grad.at(j) += r[j];
      }
    }
  });
}

inline Var scale(Var a, double s) {
  Array c = a.value();
  for (double& v : c.data()) v *= s;
  TapeNode* an = a.node();
  return make(a, std::move(c), a.needs_grad(), [an, s](TapeNode& self) {
    double* dst = an->grad.data().data();
    const double* src = self.grad.data().data();
    for (size_t i = 0; i < self.grad.numel(); ++i) dst[i] += s * src[i];
  });
}

inline Var mul(Var a, Var b) {
  ensure(a.value().same_shape(b.value()), "mul: shape mismatch");
  Array c = a.value();
  const double* bp = b.value().data().data();
  for (size_t i = 0; i < c.numel(); ++i) c.at(i) *= bp[i];
  TapeNode* an = a.node();
  TapeNode* bn = b.node();
  bool needs = a.needs_grad() || b.needs_grad();
  return make(a, std::move(c), needs, [an, bn](TapeNode& self) {
    const double* g = self.grad.data().data();
    if (an->needs_grad) {
      const double* bv = bn->value.data().data();
      double* dst = an->grad.data().data();
      for (size_t i = 0; i < self.grad.numel(); ++i) dst[i] += g[i] * bv[i];
    }
    if (bn->needs_grad) {
      const double* av = an->value.data().data();
      double* dst = bn->grad.data().data();
      for (size_t i = 0; i < self.grad.numel(); ++i) dst[i] += g[i] * av[i];
    }
  });
}

inline double gelu_fwd(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }
inline double gelu_bwd(double x) {
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) +
         x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

inline Var gelu(Var a) {
  Array c = a.value();
  for (double& v : c.data()) v = gelu_fwd(v);
  TapeNode* an = a.node();
  return make(a, std::move(c), a.needs_grad(), [an](TapeNode& self) {
    const double* g = self.grad.data().data();
    const double* x = an->value.data().data();
    double* dst = an->grad.data().data();
    for (size_t i = 0; i < self.grad.numel(); ++i) dst[i] += g[i] * gelu_bwd(x[i]);
  });
}

// Row-wise layer normalization with gain g and bias b.
inline Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5) {
  const Array& x = a.value();
  ensure(x.ndim() == 2, "layer_norm: input must be 2-d");
  size_t rows = x.rows(), cols = x.cols();
  ensure(gain.value().numel() == cols && bias.value().numel() == cols,
         "layer_norm: gain/bias size mismatch");
  Array out({rows, cols});
  Array xhat({rows, cols});
  Array inv_std({rows});
  for (size_t i = 0; i < rows; ++i) {
    auto xr = x.row(i);
    double mean = 0.0;
    for (double v : xr) mean += v;
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (double v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<double>(cols);
    double inv = 1.0 / std::sqrt(var + eps);
    inv_std.at(i) = inv;
    for (size_t j = 0; j < cols; ++j) {
      double h = (xr[j] - mean) * inv;
      xhat.at(i, j) = h;
      out.at(i, j) = gain.value().at(j) * h + bias.value().at(j);
    }
  }
  TapeNode* an = a.node();
  TapeNode* gn = gain.node();
  TapeNode* bn = bias.node();
  bool needs = a.needs_grad() || gain.needs_grad() || bias.needs_grad();
  return make(a, std::move(out), needs,
              [an, gn, bn, xhat = std::move(xhat),
               inv_std = std::move(inv_std)](TapeNode& self) {
                size_t rows = self.grad.rows(), cols = self.grad.cols();
                for (size_t i = 0; i < rows; ++i) {
                  auto dy = self.grad.row(i);
                  if (gn->needs_grad || bn->needs_grad) {
                    for (size_t j = 0; j < cols; ++j) {
                      if (gn->needs_grad) gn->grad.at(j) += dy[j] * xhat.at(i, j);
                      if (bn->needs_grad) bn->grad.at(j) += dy[j];
                    }
                  }
                  if (an->needs_grad) {
                    double mean_dyh = 0.0, mean_dyh_xhat = 0.0;
                    for (size_t j = 0; j < cols; ++j) {
                      double dyh = dy[j] * gn->value.at(j);
                      mean_dyh += dyh;
                      mean_dyh_xhat += dyh * xhat.at(i, j);
                    }
                    mean_dyh /= static_cast<double>(cols);
                    mean_dyh_xhat /= static_cast<double>(cols);
                    double inv = inv_std.at(i);
                    for (size_t j = 0; j < cols; ++j) {
                      double dyh = dy[j] * gn->value.at(j);
                      an->grad.at(i, j) +=
                          inv * (dyh - mean_dyh - xhat.at(i, j) * mean_dyh_xhat);
                    }
                  }
                }
              });
}

// Row-wise softmax.
inline Var softmax(Var a) {
  const Array& x = a.value();
  ensure(x.ndim() == 2, "softmax: input must be 2-d");
  Array out({x.rows(), x.cols()});
  for (size_t i = 0; i < x.rows(); ++i) {
    auto xr = x.row(i);
    double hi = kNegInf;
    for (double v : xr) hi = std::max(hi, v);
    double sum = 0.0;
    for (size_t j = 0; j < x.cols(); ++j) {
      double e = std::exp(xr[j] - hi);
      out.at(i, j) = e;
      sum += e;
    }
    for (size_t j = 0; j < x.cols(); ++j) out.at(i, j) /= sum;
  }
  TapeNode* an = a.node();
  return make(a, std::move(out), a.needs_grad(), [an](TapeNode& self) {
    size_t rows = self.grad.rows(), cols = self.grad.cols();
    for (size_t i = 0; i < rows; ++i) {
      auto dy = self.grad.row(i);
      auto s = self.value.row(i);
      double dot = 0.0;
      for (size_t j = 0; j < cols; ++j) dot += dy[j] * s[j];
      for (size_t j = 0; j < cols; ++j) an->grad.at(i, j) += s[j] * (dy[j] - dot);
    }
  });
}

// Row-wise log-softmax, stabilized by max subtraction.
inline Var log_softmax(Var a) {
  const Array& x = a.value();
  ensure(x.ndim() == 2, "log_softmax: input must be 2-d");
  ensure(x.cols() >= 2, "log_softmax: need at least 2 classes, got ", x.cols());
  ensure(x.all_finite(), "log_softmax: non-finite input");
  Array out({x.rows(), x.cols()});
  for (size_t i = 0; i < x.rows(); ++i) {
    auto xr = x.row(i);
    double lse = log_sum_exp(xr);
    for (size_t j = 0; j < x.cols(); ++j) out.at(i, j) = xr[j] - lse;
  }
  TapeNode* an = a.node();
  return make(a, std::move(out), a.needs_grad(), [an](TapeNode& self) {
    size_t rows = self.grad.rows(), cols = self.grad.cols();
    for (size_t i = 0; i < rows; ++i) {
      auto dy = self.grad.row(i);
      auto y = self.value.row(i);
      double sum = 0.0;
      for (size_t j = 0; j < cols; ++j) sum += dy[j];
      for (size_t j = 0; j < cols; ++j)
        an->grad.at(i, j) += dy[j] - std::exp(y[j]) * sum;
    }
  });
}

// Row-wise logsumexp reduction to a length-T vector.
inline Var logsumexp(Var a) {
  const Array& x = a.value();
  ensure(x.ndim() == 2, "logsumexp: input must be 2-d");
  Array out({x.rows()});
  for (size_t i = 0; i < x.rows(); ++i) out.at(i) = log_sum_exp(x.row(i));
  TapeNode* an = a.node();
  return make(a, std::move(out), a.needs_grad(), [an](TapeNode& self) {
    size_t rows = an->value.rows(), cols = an->value.cols();
    for (size_t i = 0; i < rows; ++i) {
      double g = self.grad.at(i);
      double y = self.value.at(i);
      for (size_t j = 0; j < cols; ++j)
        an->grad.at(i, j) += g * std::exp(an->value.at(i, j) - y);
    }
  });
}

inline Var slice_rows(Var a, size_t start, size_t len) {
  const Array& x = a.value();
  ensure(x.ndim() == 2 && start + len <= x.rows(), "slice_rows: out of range");
  Array out({len, x.cols()});
  std::copy(x.data().begin() + start * x.cols(),
            x.data().begin() + (start + len) * x.cols(), out.data().begin());
  TapeNode* an = a.node();
  return make(a, std::move(out), a.needs_grad(), [an, start](TapeNode& self) {
    size_t cols = self.grad.cols();
    for (size_t i = 0; i < self.grad.rows(); ++i) {
      auto g = self.grad.row(i);
      for (size_t j = 0; j < cols; ++j) an->grad.at(start + i, j) += g[j];
    }
  });
}

inline Var slice_cols(Var a, size_t start, size_t len) {
  const Array& x = a.value();
  ensure(x.ndim() == 2 && start + len <= x.cols(), "slice_cols: out of range");
  Array out({x.rows(), len});
  for (size_t i = 0; i < x.rows(); ++i)
    for (size_t j = 0; j < len; ++j) out.at(i, j) = x.at(i, start + j);
  TapeNode* an = a.node();
  return make(a, std::move(out), a.needs_grad(), [an, start](TapeNode& self) {
    for (size_t i = 0; i < self.grad.rows(); ++i)
      for (size_t j = 0; j < self.grad.cols(); ++j)
        an->grad.at(i, start + j) += self.grad.at(i, j);
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  ensure(!parts.empty(), "concat_rows: no parts");
  size_t cols = parts[0].value().cols();
  size_t rows = 0;
  bool needs = false;
  for (const Var& p : parts) {
    ensure(p.value().ndim() == 2 && p.value().cols() == cols,
           "concat_rows: column mismatch");
    rows += p.value().rows();
    needs = needs || p.needs_grad();
  }
  Array out({rows, cols});
  size_t at = 0;
  std::vector<TapeNode*> nodes;
  nodes.reserve(parts.size());
  for (const Var& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(),
              out.data().begin() + at * cols);
    at += p.value().rows();
    nodes.push_back(p.node());
  }
  return make(parts[0], std::move(out), needs,
              [nodes = std::move(nodes)](TapeNode& self) {
                size_t cols = self.grad.cols();
                size_t at = 0;
                for (TapeNode* n : nodes) {
                  size_t r = n->value.rows();
                  if (n->needs_grad) {
                    for (size_t i = 0; i < r; ++i)
                      for (size_t j = 0; j < cols; ++j)
                        n->grad.at(i, j) += self.grad.at(at + i, j);
                  }
                  at += r;
                }
              });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  ensure(!parts.empty(), "concat_cols: no parts");
  size_t rows = parts[0].value().rows();
  size_t cols = 0;
  bool needs = false;
  for (const Var& p : parts) {
    ensure(p.value().ndim() == 2 && p.value().rows() == rows,
           "concat_cols: row mismatch");
    cols += p.value().cols();
    needs = needs || p.needs_grad();
  }
  Array out({rows, cols});
  size_t at = 0;
  std::vector<TapeNode*> nodes;
  std::vector<size_t> offsets;
  for (const Var& p : parts) {
    for (size_t i = 0; i < rows; ++i)
      for (size_t j = 0; j < p.value().cols(); ++j)
        out.at(i, at + j) = p.value().at(i, j);
    nodes.push_back(p.node());
    offsets.push_back(at);
    at += p.value().cols();
  }
  return make(parts[0], std::move(out), needs,
              [nodes = std::move(nodes), offsets = std::move(offsets)](TapeNode& self) {
                for (size_t k = 0; k < nodes.size(); ++k) {
                  TapeNode* n = nodes[k];
                  if (!n->needs_grad) continue;
                  size_t off = offsets[k];
                  for (size_t i = 0; i < n->value.rows(); ++i)
                    for (size_t j = 0; j < n->value.cols(); ++j)
                      n->grad.at(i, j) += self.grad.at(i, off + j);
                }
              });
}

// Gathers rows of a by index; indices may repeat and adjoints accumulate.
inline Var gather_rows(Var a, std::vector<size_t> idx) {
  const Array& x = a.value();
  ensure(x.ndim() == 2, "gather_rows: input must be 2-d");
  for (size_t i : idx) ensure(i < x.rows(), "gather_rows: index out of range");
  Array out({idx.size(), x.cols()});
  for (size_t i = 0; i < idx.size(); ++i)
    std::copy(x.row(idx[i]).begin(), x.row(idx[i]).end(), out.row(i).begin());
  TapeNode* an = a.node();
  return make(a, std::move(out), a.needs_grad(),
              [an, idx = std::move(idx)](TapeNode& self) {
                size_t cols = self.grad.cols();
                for (size_t i = 0; i < idx.size(); ++i)
                  for (size_t j = 0; j < cols; ++j)
                    an->grad.at(idx[i], j) += self.grad.at(i, j);
              });
}

// Strided sliding-window unfold: output row j collects the input rows of the
// window starting at j*stride - pad_left, zero outside the sequence. A matmul
// against a [K*C x Cout] kernel matrix turns this into a 1-d convolution.
inline Var im2col(Var a, size_t kernel, size_t stride, size_t pad_left,
                  size_t out_rows) {
  const Array& x = a.value();
  ensure(x.ndim() == 2, "im2col: input must be 2-d");
  size_t t = x.rows(), c = x.cols();
  Array out({out_rows, kernel * c});
  for (size_t j = 0; j < out_rows; ++j) {
    for (size_t k = 0; k < kernel; ++k) {
      long src = static_cast<long>(j * stride + k) - static_cast<long>(pad_left);
      if (src < 0 || src >= static_cast<long>(t)) continue;
      for (size_t cc = 0; cc < c; ++cc)
        out.at(j, k * c + cc) = x.at(static_cast<size_t>(src), cc);
    }
  }
  TapeNode* an = a.node();
  return make(a, std::move(out), a.needs_grad(),
              [an, kernel, stride, pad_left](TapeNode& self) {
                size_t t = an->value.rows(), c = an->value.cols();
                for (size_t j = 0; j < self.grad.rows(); ++j) {
                  for (size_t k = 0; k < kernel; ++k) {
                    long src = static_cast<long>(j * stride + k) -
                               static_cast<long>(pad_left);
                    if (src < 0 || src >= static_cast<long>(t)) continue;
                    for (size_t cc = 0; cc < c; ++cc)
                      an->grad.at(static_cast<size_t>(src), cc) +=
                          self.grad.at(j, k * c + cc);
                  }
                }
              });
}

inline Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  TapeNode* an = a.node();
  return make(a, Array::scalar(total), a.needs_grad(), [an](TapeNode& self) {
    double g = self.grad.at(0);
    for (double& v : an->grad.data()) v += g;
  });
}

}  // namespace ag
}  // namespace punctc
