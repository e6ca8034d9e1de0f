#pragma once

// Minimal reverse-mode tape over Matrix values.
//
// Operations append nodes in evaluation order; backward() walks the tape in
// reverse, so gradient accumulation order is fixed and results are
// bit-reproducible. Leaves may carry a sink that receives their gradient.

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "sia/mask.hpp"
#include "sia/matrix.hpp"

namespace sia {

enum class MaskMode { additive, multiplicative, none };

inline const char* to_string(MaskMode m) {
  switch (m) {
    case MaskMode::additive: return "additive";
    case MaskMode::multiplicative: return "multiplicative";
    case MaskMode::none: return "none";
  }
  return "?";
}

inline MaskMode mask_mode_from_string(const std::string& s) {
  if (s == "additive") return MaskMode::additive;
  if (s == "multiplicative") return MaskMode::multiplicative;
  if (s == "none") return MaskMode::none;
  throw ArgumentError("unknown mask mode '" + s + "'");
}

// Logit offset applied to blocked cells in additive mode.
inline constexpr double kBlockedLogit = -1e9;

namespace ad {

struct Var {
  std::size_t id = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  Var leaf(Matrix value, Matrix* grad_sink = nullptr) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = grad_sink != nullptr;
    n.sink = grad_sink;
    nodes_.push_back(std::move(n));
    return {nodes_.size() - 1};
  }

  Var constant(Matrix value) { return leaf(std::move(value), nullptr); }

  Var op(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
    Node n;
    n.value = std::move(value);
    for (Var v : inputs) n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {nodes_.size() - 1};
  }

  Var op(Matrix value, std::span<const Var> inputs, Backward backward) {
    Node n;
    n.value = std::move(value);
    for (Var v : inputs) n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {nodes_.size() - 1};
  }

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Gradient of the seeded output w.r.t. v; zero-shaped if v was unreached.
  const Matrix& grad(Var v) const { return nodes_[v.id].grad; }

  // Adds g into the gradient of v (no-op if v does not require a gradient).
  void accumulate(Var v, const Matrix& g) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (n.grad.empty()) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }
  Matrix* grad_slot(Var v) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
    return &n.grad;
  }

  // Back-propagates from `out`, seeding its gradient with `seed` (ones if
  // omitted), then adds leaf gradients into their sinks scaled by `sink_scale`.
  void backward(Var out, std::optional<Matrix> seed = std::nullopt, double sink_scale = 1.0) {
    const Matrix& v = nodes_[out.id].value;
    accumulate(out, seed ? *seed : Matrix(v.rows(), v.cols(), 1.0));
    for (std::size_t i = out.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty()) continue;
      if (n.backward) n.backward(*this, i);
      if (n.sink != nullptr) {
        n.sink->require_same_shape(n.grad, "gradient sink");
        for (std::size_t k = 0; k < n.grad.size(); ++k) {
          n.sink->data()[k] += sink_scale * n.grad.data()[k];
        }
      }
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Matrix* sink = nullptr;
    Backward backward;
  };
  std::vector<Node> nodes_;

  friend const Matrix& node_grad(const Tape& t, std::size_t i);
};

inline const Matrix& node_grad(const Tape& t, std::size_t i) { return t.nodes_[i].grad; }

inline Var matmul(Tape& t, Var a, Var b) {
  return t.op(sia::matmul(t.value(a), t.value(b)), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Matrix& g = node_grad(tp, self);
    if (tp.requires_grad(a)) tp.accumulate(a, matmul_nt(g, tp.value(b)));
    if (tp.requires_grad(b)) tp.accumulate(b, matmul_tn(tp.value(a), g));
  });
}

// a * b^T
inline Var matmul_nt(Tape& t, Var a, Var b) {
  return t.op(sia::matmul_nt(t.value(a), t.value(b)), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Matrix& g = node_grad(tp, self);
    if (tp.requires_grad(a)) tp.accumulate(a, sia::matmul(g, tp.value(b)));
    if (tp.requires_grad(b)) tp.accumulate(b, matmul_tn(g, tp.value(a)));
  });
}

inline Var add(Tape& t, Var a, Var b) {
  t.value(a).require_same_shape(t.value(b), "add");
  return t.op(t.value(a) + t.value(b), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Matrix& g = node_grad(tp, self);
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

// Adds a 1 x c row to every row of a.
inline Var add_row(Tape& t, Var a, Var bias) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(bias);
  if (bv.rows() != 1 || bv.cols() != av.cols()) {
    throw ShapeError("add_row: bias " + bv.shape_string() + " for " + av.shape_string());
  }
  Matrix out = av;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bv(0, j);
  }
  return t.op(std::move(out), {a, bias}, [a, bias](Tape& tp, std::size_t self) {
    const Matrix& g = node_grad(tp, self);
    tp.accumulate(a, g);
    if (tp.requires_grad(bias)) {
      Matrix gb(1, g.cols());
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
      }
      tp.accumulate(bias, gb);
    }
  });
}

inline Var scale(Tape& t, Var a, double s) {
  return t.op(scaled(t.value(a), s), {a}, [a, s](Tape& tp, std::size_t self) {
    tp.accumulate(a, scaled(node_grad(tp, self), s));
  });
}

inline Var slice_cols(Tape& t, Var a, std::size_t begin, std::size_t count) {
  const Matrix& av = t.value(a);
  if (begin + count > av.cols()) throw ShapeError("slice_cols out of range");
  Matrix out(av.rows(), count);
  for (std::size_t i = 0; i < av.rows(); ++i) {
    for (std::size_t j = 0; j < count; ++j) out(i, j) = av(i, begin + j);
  }
  return t.op(std::move(out), {a}, [a, begin, count](Tape& tp, std::size_t self) {
    if (Matrix* ga = tp.grad_slot(a)) {
      const Matrix& g = node_grad(tp, self);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < count; ++j) (*ga)(i, begin + j) += g(i, j);
      }
    }
  });
}

inline Var concat_cols(Tape& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  const std::size_t rows = t.value(parts[0]).rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    if (t.value(p).rows() != rows) throw ShapeError("concat_cols: row mismatch");
    cols += t.value(p).cols();
  }
  Matrix out(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const Matrix& pv = t.value(p);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < pv.cols(); ++j) out(i, off + j) = pv(i, j);
    }
    off += pv.cols();
  }
  return t.op(std::move(out), std::span<const Var>(parts), [parts](Tape& tp, std::size_t self) {
    const Matrix& g = node_grad(tp, self);
    std::size_t o = 0;
    for (Var p : parts) {
      const std::size_t c = tp.value(p).cols();
      if (Matrix* gp = tp.grad_slot(p)) {
        for (std::size_t i = 0; i < g.rows(); ++i) {
          for (std::size_t j = 0; j < c; ++j) (*gp)(i, j) += g(i, o + j);
        }
      }
      o += c;
    }
  });
}

// Row i of the output is row ids[i] of table.
inline Var gather_rows(Tape& t, Var table, std::vector<std::size_t> ids) {
  const Matrix& tv = t.value(table);
  Matrix out(ids.size(), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= tv.rows()) throw ShapeError("gather_rows: id out of range");
    for (std::size_t j = 0; j < tv.cols(); ++j) out(i, j) = tv(ids[i], j);
  }
  return t.op(std::move(out), {table}, [table, ids = std::move(ids)](Tape& tp, std::size_t self) {
    if (Matrix* gt = tp.grad_slot(table)) {
      const Matrix& g = node_grad(tp, self);
      for (std::size_t i = 0; i < ids.size(); ++i) {
        for (std::size_t j = 0; j < g.cols(); ++j) (*gt)(ids[i], j) += g(i, j);
      }
    }
  });
}

// Applies an attention mask to n x n logits. Rows with no allowed key are
// treated as diagonal-only.
inline Var apply_mask(Tape& t, Var logits, const AttentionMask& mask, MaskMode mode) {
  const Matrix& lv = t.value(logits);
  const std::size_t n = lv.rows();
  if (lv.cols() != n) throw ShapeError("apply_mask: logits must be square");
  if (mode == MaskMode::none) return logits;
  if (mask.size() != n) {
    throw ShapeError("mask size " + std::to_string(mask.size()) + " does not match sequence " +
                     std::to_string(n));
  }
  // Both modes reduce to out = factor * logits + offset per cell.
  Matrix factor(n, n, 1.0);
  Matrix offset(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const bool empty = mask.row_empty(i);
    for (std::size_t j = 0; j < n; ++j) {
      const bool allowed = empty ? i == j : mask(i, j);
      if (allowed) continue;
      if (mode == MaskMode::additive) {
        offset(i, j) = kBlockedLogit;
      } else {
        factor(i, j) = 0.0;
      }
    }
  }
  Matrix out(n, n);
  for (std::size_t k = 0; k < out.size(); ++k) {
    out.data()[k] = factor.data()[k] * lv.data()[k] + offset.data()[k];
  }
  return t.op(std::move(out), {logits},
              [logits, factor = std::move(factor)](Tape& tp, std::size_t self) {
                Matrix g = node_grad(tp, self);
                for (std::size_t k = 0; k < g.size(); ++k) g.data()[k] *= factor.data()[k];
                tp.accumulate(logits, g);
              });
}

inline Matrix softmax_rows_value(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double mx = a(i, 0);
    for (std::size_t j = 1; j < a.cols(); ++j) mx = std::max(mx, a(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
      out(i, j) = std::exp(a(i, j) - mx);
      sum += out(i, j);
    }
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) /= sum;
  }
  return out;
}

inline Var softmax_rows(Tape& t, Var a) {
  return t.op(softmax_rows_value(t.value(a)), {a}, [a](Tape& tp, std::size_t self) {
    const Matrix& g = node_grad(tp, self);
    // Value of this node is stored on the tape.
    const Matrix& y = tp.value(Var{self});
    Matrix ga(y.rows(), y.cols());
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) ga(i, j) = y(i, j) * (g(i, j) - dot);
    }
    tp.accumulate(a, ga);
  });
}

inline constexpr double kLayerNormEps = 1e-12;

// Per-row normalization followed by the affine gain/bias (both 1 x c).
inline Var layer_norm(Tape& t, Var x, Var gamma, Var beta) {
  const Matrix& xv = t.value(x);
  const Matrix& gv = t.value(gamma);
  const Matrix& bv = t.value(beta);
  const std::size_t r = xv.rows();
  const std::size_t c = xv.cols();
  if (gv.rows() != 1 || gv.cols() != c || !gv.same_shape(bv)) {
    throw ShapeError("layer_norm: gain/bias shape for " + xv.shape_string());
  }
  Matrix xhat(r, c);
  std::vector<double> inv_std(r);
  Matrix out(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += xv(i, j);
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xv(i, j) - mean) * (xv(i, j) - mean);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat(i, j) = (xv(i, j) - mean) * inv_std[i];
      out(i, j) = xhat(i, j) * gv(0, j) + bv(0, j);
    }
  }
  return t.op(std::move(out), {x, gamma, beta},
              [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                  Tape& tp, std::size_t self) {
                const Matrix& g = node_grad(tp, self);
                const Matrix& gv2 = tp.value(gamma);
                const std::size_t rr = g.rows();
                const std::size_t cc = g.cols();
                if (tp.requires_grad(gamma) || tp.requires_grad(beta)) {
                  Matrix gg(1, cc);
                  Matrix gb(1, cc);
                  for (std::size_t i = 0; i < rr; ++i) {
                    for (std::size_t j = 0; j < cc; ++j) {
                      gg(0, j) += g(i, j) * xhat(i, j);
                      gb(0, j) += g(i, j);
                    }
                  }
                  tp.accumulate(gamma, gg);
                  tp.accumulate(beta, gb);
                }
                if (tp.requires_grad(x)) {
                  Matrix gx(rr, cc);
                  const double inv_c = 1.0 / static_cast<double>(cc);
                  for (std::size_t i = 0; i < rr; ++i) {
                    double sum_d = 0.0;
                    double sum_dx = 0.0;
                    for (std::size_t j = 0; j < cc; ++j) {
                      const double d = g(i, j) * gv2(0, j);
                      sum_d += d;
                      sum_dx += d * xhat(i, j);
                    }
                    for (std::size_t j = 0; j < cc; ++j) {
                      const double d = g(i, j) * gv2(0, j);
                      gx(i, j) = inv_std[i] * (d - inv_c * sum_d - xhat(i, j) * inv_c * sum_dx);
                    }
                  }
                  tp.accumulate(x, gx);
                }
              });
}

// tanh approximation of GELU.
inline double gelu_value(double x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
}

inline double gelu_derivative(double x) {
  constexpr double k = 0.7978845608028654;
  const double u = k * (x + 0.044715 * x * x * x);
  const double th = std::tanh(u);
  const double du = k * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
}

inline Var gelu(Tape& t, Var a) {
  Matrix out = t.value(a);
  for (double& v : out.data()) v = gelu_value(v);
  return t.op(std::move(out), {a}, [a](Tape& tp, std::size_t self) {
    Matrix g = node_grad(tp, self);
    const Matrix& x = tp.value(a);
    for (std::size_t k = 0; k < g.size(); ++k) g.data()[k] *= gelu_derivative(x.data()[k]);
    tp.accumulate(a, g);
  });
}

inline constexpr double kProbClamp = 1e-12;

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Binary cross-entropy of sigmoid(z) against label y, with the probability
// clamped to [1e-12, 1 - 1e-12]. z is 1 x 1.
inline Var sigmoid_bce(Tape& t, Var z, int y) {
  const double zv = t.value(z)(0, 0);
  const double g = sigmoid(zv);
  const double gc = std::clamp(g, kProbClamp, 1.0 - kProbClamp);
  const double yy = static_cast<double>(y);
  const double loss = -(yy * std::log(gc) + (1.0 - yy) * std::log(1.0 - gc));
  return t.op(Matrix(1, 1, loss), {z}, [z, g, gc, yy](Tape& tp, std::size_t self) {
    const double up = node_grad(tp, self)(0, 0);
    // Clamped probabilities have zero slope.
    const double dz = g == gc ? g - yy : 0.0;
    tp.accumulate(z, Matrix(1, 1, up * dz));
  });
}

}  // namespace ad
}  // namespace sia
