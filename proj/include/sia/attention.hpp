#pragma once

// Masked scaled-dot-product attention, multi-head attention, the two-layer
// syntax-informed attention block and residual fusion.
//
// Each public operation has a Matrix-level entry point and a tape-level
// builder used by the model for gradients. Both run the same code.

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "sia/autodiff.hpp"
#include "sia/mask.hpp"
#include "sia/matrix.hpp"

namespace sia {

struct AttentionConfig {
  std::size_t model_dim = 16;
  std::size_t num_heads = 2;
  MaskMode mask_mode = MaskMode::additive;

  std::size_t head_dim() const { return model_dim / num_heads; }

  void validate() const {
    if (num_heads == 0 || model_dim == 0 || model_dim % num_heads != 0) {
      throw ArgumentError("model_dim " + std::to_string(model_dim) +
                          " must be a positive multiple of num_heads " +
                          std::to_string(num_heads));
    }
  }
};

// Projection weights for all heads. Head h owns columns
// [h*head_dim, (h+1)*head_dim) of wq/wk/wv (and rows of wo).
struct MultiHeadParams {
  Matrix wq, wk, wv, wo;  // model_dim x model_dim
  Matrix bq, bk, bv, bo;  // 1 x model_dim

  static MultiHeadParams zeros(std::size_t d) {
    return {Matrix(d, d), Matrix(d, d), Matrix(d, d), Matrix(d, d),
            Matrix(1, d), Matrix(1, d), Matrix(1, d), Matrix(1, d)};
  }

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    f(std::string("wq"), self.wq);
    f(std::string("wk"), self.wk);
    f(std::string("wv"), self.wv);
    f(std::string("wo"), self.wo);
    f(std::string("bq"), self.bq);
    f(std::string("bk"), self.bk);
    f(std::string("bv"), self.bv);
    f(std::string("bo"), self.bo);
  }
};

// One SIA layer: masked multi-head attention, residual, layer norm.
struct SiaLayerParams {
  MultiHeadParams attn;
  Matrix ln_gamma, ln_beta;  // 1 x model_dim

  static SiaLayerParams zeros(std::size_t d) {
    return {MultiHeadParams::zeros(d), Matrix(1, d, 1.0), Matrix(1, d)};
  }

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    MultiHeadParams::visit(self.attn, [&](const std::string& n, auto& m) { f("attn." + n, m); });
    f(std::string("ln_gamma"), self.ln_gamma);
    f(std::string("ln_beta"), self.ln_beta);
  }
};

struct SiaBlockParams {
  std::array<SiaLayerParams, 2> layers;

  static SiaBlockParams zeros(std::size_t d) { return {{SiaLayerParams::zeros(d), SiaLayerParams::zeros(d)}}; }
};

// Attention weights captured per head, in evaluation order.
struct AttentionTrace {
  std::vector<Matrix> weights;
};

namespace ad {

struct MultiHeadVars {
  Var wq, wk, wv, wo, bq, bk, bv, bo;
};

struct SiaLayerVars {
  MultiHeadVars attn;
  Var ln_gamma, ln_beta;
};

inline MultiHeadVars bind(Tape& t, const MultiHeadParams& p, MultiHeadParams* g) {
  auto leaf = [&](Matrix MultiHeadParams::*member) {
    return t.leaf(p.*member, g == nullptr ? nullptr : &(g->*member));
  };
  return {leaf(&MultiHeadParams::wq), leaf(&MultiHeadParams::wk), leaf(&MultiHeadParams::wv),
          leaf(&MultiHeadParams::wo), leaf(&MultiHeadParams::bq), leaf(&MultiHeadParams::bk),
          leaf(&MultiHeadParams::bv), leaf(&MultiHeadParams::bo)};
}

inline SiaLayerVars bind(Tape& t, const SiaLayerParams& p, SiaLayerParams* g) {
  SiaLayerVars v;
  v.attn = bind(t, p.attn, g == nullptr ? nullptr : &g->attn);
  v.ln_gamma = t.leaf(p.ln_gamma, g == nullptr ? nullptr : &g->ln_gamma);
  v.ln_beta = t.leaf(p.ln_beta, g == nullptr ? nullptr : &g->ln_beta);
  return v;
}

// softmax(mask(Q K^T) / sqrt(d_k)) V for one head. Multiplicative mode is the
// literal cellwise product of the 0/1 mask with the logits.
inline Var masked_attention(Tape& t, Var q, Var k, Var v, const AttentionMask& mask,
                            MaskMode mode, AttentionTrace* trace = nullptr) {
  const Matrix& qv = t.value(q);
  const Matrix& kv = t.value(k);
  const Matrix& vv = t.value(v);
  if (qv.cols() != kv.cols() || qv.rows() != kv.rows() || kv.rows() != vv.rows()) {
    throw ShapeError("masked_attention: Q " + qv.shape_string() + ", K " + kv.shape_string() +
                     ", V " + vv.shape_string());
  }
  if (mode != MaskMode::none && mask.size() != qv.rows()) {
    throw ShapeError("masked_attention: mask size " + std::to_string(mask.size()) +
                     " for sequence " + std::to_string(qv.rows()));
  }
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(kv.cols()));
  Var logits = matmul_nt(t, q, k);
  logits = apply_mask(t, logits, mask, mode);
  logits = scale(t, logits, inv_sqrt_dk);
  Var weights = softmax_rows(t, logits);
  if (trace != nullptr) trace->weights.push_back(t.value(weights));
  return matmul(t, weights, v);
}

inline Var multi_head(Tape& t, Var x, const MultiHeadVars& p, const AttentionMask& mask,
                      const AttentionConfig& cfg, AttentionTrace* trace = nullptr) {
  cfg.validate();
  if (t.value(x).cols() != cfg.model_dim) {
    throw ShapeError("multi_head: input width " + std::to_string(t.value(x).cols()) +
                     " != model_dim " + std::to_string(cfg.model_dim));
  }
  Var q = add_row(t, matmul(t, x, p.wq), p.bq);
  Var k = add_row(t, matmul(t, x, p.wk), p.bk);
  Var v = add_row(t, matmul(t, x, p.wv), p.bv);
  const std::size_t hd = cfg.head_dim();
  std::vector<Var> heads;
  heads.reserve(cfg.num_heads);
  for (std::size_t h = 0; h < cfg.num_heads; ++h) {
    heads.push_back(masked_attention(t, slice_cols(t, q, h * hd, hd), slice_cols(t, k, h * hd, hd),
                                     slice_cols(t, v, h * hd, hd), mask, cfg.mask_mode, trace));
  }
  Var cat = heads.size() == 1 ? heads[0] : concat_cols(t, heads);
  return add_row(t, matmul(t, cat, p.wo), p.bo);
}

inline Var sia_layer(Tape& t, Var x, const SiaLayerVars& p, const AttentionMask& mask,
                     const AttentionConfig& cfg, AttentionTrace* trace = nullptr) {
  Var attn = multi_head(t, x, p.attn, mask, cfg, trace);
  return layer_norm(t, add(t, x, attn), p.ln_gamma, p.ln_beta);
}

inline Var sia_block(Tape& t, Var h_tap, const std::array<SiaLayerVars, 2>& layers,
                     const AttentionMask& mask, const AttentionConfig& cfg,
                     AttentionTrace* trace = nullptr) {
  Var h = h_tap;
  for (const auto& layer : layers) h = sia_layer(t, h, layer, mask, cfg, trace);
  return h;
}

inline Var fuse(Tape& t, Var h, Var h_sia) { return add(t, h, h_sia); }

}  // namespace ad

// Single-head attention output. Q, K, V have mask.size() rows.
inline Matrix masked_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                               const AttentionMask& mask, MaskMode mode,
                               AttentionTrace* trace = nullptr) {
  ad::Tape t;
  ad::Var out = ad::masked_attention(t, t.constant(q), t.constant(k), t.constant(v), mask, mode, trace);
  return t.value(out);
}

inline Matrix masked_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                               const AttentionMask& mask, const AttentionConfig& cfg) {
  if (q.cols() != cfg.head_dim()) {
    throw ShapeError("masked_attention: width " + std::to_string(q.cols()) + " != head_dim " +
                     std::to_string(cfg.head_dim()));
  }
  return masked_attention(q, k, v, mask, cfg.mask_mode);
}

// Attention weight matrix (rows sum to one) for one head.
inline Matrix attention_weights(const Matrix& q, const Matrix& k, const AttentionMask& mask,
                                MaskMode mode) {
  AttentionTrace trace;
  masked_attention(q, k, Matrix(k.rows(), 1), mask, mode, &trace);
  return trace.weights.front();
}

inline Matrix multi_head(const Matrix& x, const MultiHeadParams& params, const AttentionMask& mask,
                         const AttentionConfig& cfg, AttentionTrace* trace = nullptr) {
  ad::Tape t;
  const auto vars = ad::bind(t, params, nullptr);
  return t.value(ad::multi_head(t, t.constant(x), vars, mask, cfg, trace));
}

inline Matrix sia_block(const Matrix& h_tap, const AttentionMask& mask, const SiaBlockParams& params,
                        const AttentionConfig& cfg, AttentionTrace* trace = nullptr) {
  ad::Tape t;
  const std::array<ad::SiaLayerVars, 2> vars{ad::bind(t, params.layers[0], nullptr),
                                             ad::bind(t, params.layers[1], nullptr)};
  return t.value(ad::sia_block(t, t.constant(h_tap), vars, mask, cfg, trace));
}

inline Matrix fuse(const Matrix& h, const Matrix& h_sia) {
  h.require_same_shape(h_sia, "fuse");
  return h + h_sia;
}

}  // namespace sia
