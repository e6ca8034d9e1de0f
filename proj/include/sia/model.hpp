#pragma once

// Toy transformer-encoder response-selection model with a syntax-informed
// attention branch.
//
//   H_0  = token + position embeddings of [CLS] u_1 [EOU] ... [SEP] r [SEP]
//   H_l  = post-norm encoder layer l (unmasked), l = 1..layers
//   Hsia = sia_block(H_k, M) * sia_out          (k = tap layer, M = syntax mask)
//   H'   = H_layers + Hsia
//   g    = sigmoid(H'[CLS] . task_w + task_b)

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sia/attention.hpp"
#include "sia/autodiff.hpp"
#include "sia/dialogue.hpp"
#include "sia/mask.hpp"
#include "sia/matrix.hpp"

namespace sia {

class Vocabulary {
 public:
  static constexpr std::size_t kUnk = 0;
  static constexpr std::size_t kCls = 1;
  static constexpr std::size_t kEou = 2;
  static constexpr std::size_t kSep = 3;

  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

  // `words` excludes the four reserved entries.
  explicit Vocabulary(const std::vector<std::string>& words) {
    for (const char* s : {"[UNK]", "[CLS]", "[EOU]", "[SEP]"}) add(s);
    for (const auto& w : words) add(w);
  }

  // Forms in first-appearance order over contexts then responses.
  static Vocabulary from_examples(const std::vector<DialogueExample>& examples) {
    Vocabulary v;
    for (const auto& ex : examples) {
      for (const auto& u : ex.context) {
        for (const auto& t : u.tokens) v.add(t.form);
      }
      for (const auto& t : ex.response.tokens) v.add(t.form);
    }
    return v;
  }

  std::size_t size() const noexcept { return forms_.size(); }
  const std::string& form(std::size_t id) const { return forms_.at(id); }
  const std::vector<std::string>& forms() const noexcept { return forms_; }

  std::size_t id(const std::string& form) const {
    auto it = index_.find(form);
    return it == index_.end() ? kUnk : it->second;
  }

  // Words after the reserved entries.
  std::vector<std::string> words() const { return {forms_.begin() + 4, forms_.end()}; }

 private:
  void add(const std::string& w) {
    if (index_.contains(w)) return;
    index_.emplace(w, forms_.size());
    forms_.push_back(w);
  }

  std::vector<std::string> forms_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct ModelConfig {
  std::size_t max_len = 64;
  std::size_t dim = 16;
  std::size_t heads = 2;
  std::size_t layers = 2;
  std::size_t ffn_dim = 32;
  std::size_t tap_layer = 0;  // 0 selects ceil(layers / 2)
  int m = 4;
  MaskKind mask_kind = MaskKind::sia;
  MaskMode mask_mode = MaskMode::additive;
  SpecialTokenPolicy special_tokens = SpecialTokenPolicy::unmasked;
  bool sia_enabled = true;

  std::size_t tap() const { return tap_layer == 0 ? (layers + 1) / 2 : tap_layer; }

  AttentionConfig attention(MaskMode mode) const { return {dim, heads, mode}; }

  void validate() const {
    attention(mask_mode).validate();
    if (layers == 0) throw ArgumentError("model needs at least one encoder layer");
    if (tap() < 1 || tap() > layers) {
      throw ArgumentError("tap layer " + std::to_string(tap()) + " outside 1.." +
                          std::to_string(layers));
    }
    if (m < 1) throw ArgumentError("m must be >= 1");
    if (max_len < 4 || ffn_dim == 0) throw ArgumentError("max_len >= 4 and ffn_dim >= 1 required");
  }
};

struct EncoderLayerParams {
  MultiHeadParams attn;
  Matrix ln1_gamma, ln1_beta;
  Matrix ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  Matrix ln2_gamma, ln2_beta;

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    MultiHeadParams::visit(self.attn, [&](const std::string& n, auto& m) { f("attn." + n, m); });
    f(std::string("ln1_gamma"), self.ln1_gamma);
    f(std::string("ln1_beta"), self.ln1_beta);
    f(std::string("ffn_w1"), self.ffn_w1);
    f(std::string("ffn_b1"), self.ffn_b1);
    f(std::string("ffn_w2"), self.ffn_w2);
    f(std::string("ffn_b2"), self.ffn_b2);
    f(std::string("ln2_gamma"), self.ln2_gamma);
    f(std::string("ln2_beta"), self.ln2_beta);
  }
};

// Every trainable tensor. Gradients use the same type.
struct Weights {
  Matrix token_embedding;     // vocab x dim
  Matrix position_embedding;  // max_len x dim
  std::vector<EncoderLayerParams> layers;
  SiaBlockParams sia;
  Matrix sia_out;  // dim x dim
  Matrix task_w;   // dim x 1
  Matrix task_b;   // 1 x 1

  // Zero tensors with the shapes implied by (config, vocab_size); layer-norm
  // gains are zero too.
  static Weights zeros(const ModelConfig& c, std::size_t vocab_size) {
    Weights w;
    const std::size_t d = c.dim;
    w.token_embedding = Matrix(vocab_size, d);
    w.position_embedding = Matrix(c.max_len, d);
    for (std::size_t l = 0; l < c.layers; ++l) {
      w.layers.push_back({MultiHeadParams::zeros(d), Matrix(1, d), Matrix(1, d),
                          Matrix(d, c.ffn_dim), Matrix(1, c.ffn_dim), Matrix(c.ffn_dim, d),
                          Matrix(1, d), Matrix(1, d), Matrix(1, d)});
    }
    w.sia = SiaBlockParams::zeros(d);
    for (auto& layer : w.sia.layers) layer.ln_gamma.fill(0.0);
    w.sia_out = Matrix(d, d);
    w.task_w = Matrix(d, 1);
    w.task_b = Matrix(1, 1);
    return w;
  }

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    f(std::string("token_embedding"), self.token_embedding);
    f(std::string("position_embedding"), self.position_embedding);
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      EncoderLayerParams::visit(self.layers[l], [&](const std::string& n, auto& m) {
        f("layers." + std::to_string(l) + "." + n, m);
      });
    }
    for (std::size_t l = 0; l < self.sia.layers.size(); ++l) {
      SiaLayerParams::visit(self.sia.layers[l], [&](const std::string& n, auto& m) {
        f("sia." + std::to_string(l) + "." + n, m);
      });
    }
    f(std::string("sia_out"), self.sia_out);
    f(std::string("task_w"), self.task_w);
    f(std::string("task_b"), self.task_b);
  }

  template <typename F> void for_each(F&& f) { visit(*this, f); }
  template <typename F> void for_each(F&& f) const { visit(*this, f); }

  std::vector<Matrix*> tensors() {
    std::vector<Matrix*> out;
    for_each([&](const std::string&, Matrix& m) { out.push_back(&m); });
    return out;
  }
  std::vector<const Matrix*> tensors() const {
    std::vector<const Matrix*> out;
    for_each([&](const std::string&, const Matrix& m) { out.push_back(&m); });
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const Matrix& m) { n += m.size(); });
    return n;
  }

  bool all_finite() const {
    bool ok = true;
    for_each([&](const std::string&, const Matrix& m) { ok = ok && m.all_finite(); });
    return ok;
  }
};

struct ModelParams {
  ModelConfig config;
  Vocabulary vocab;
  Weights weights;
};

namespace detail {

// Portable uniform draw in [0, 1) from a standard-specified engine.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline void fill_uniform(Matrix& m, double limit, std::mt19937_64& rng) {
  for (double& v : m.data()) v = (2.0 * uniform01(rng) - 1.0) * limit;
}

inline double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

inline void init_multi_head(MultiHeadParams& p, std::size_t d, std::mt19937_64& rng) {
  for (Matrix* w : {&p.wq, &p.wk, &p.wv, &p.wo}) fill_uniform(*w, glorot_limit(d, d), rng);
}

}  // namespace detail

// Seeded uniform initialization; biases zero, layer-norm gains one.
inline ModelParams init_model(const ModelConfig& config, Vocabulary vocab, std::uint64_t seed) {
  config.validate();
  ModelParams p{config, std::move(vocab), {}};
  p.weights = Weights::zeros(config, p.vocab.size());
  std::mt19937_64 rng(seed);
  Weights& w = p.weights;
  const std::size_t d = config.dim;
  detail::fill_uniform(w.token_embedding, 1.0, rng);
  detail::fill_uniform(w.position_embedding, 0.1, rng);
  for (auto& layer : w.layers) {
    detail::init_multi_head(layer.attn, d, rng);
    detail::fill_uniform(layer.ffn_w1, detail::glorot_limit(d, config.ffn_dim), rng);
    detail::fill_uniform(layer.ffn_w2, detail::glorot_limit(config.ffn_dim, d), rng);
    layer.ln1_gamma.fill(1.0);
    layer.ln2_gamma.fill(1.0);
  }
  for (auto& layer : w.sia.layers) {
    detail::init_multi_head(layer.attn, d, rng);
    layer.ln_gamma.fill(1.0);
  }
  detail::fill_uniform(w.sia_out, detail::glorot_limit(d, d), rng);
  detail::fill_uniform(w.task_w, detail::glorot_limit(d, 1), rng);
  return p;
}

// Model input for one context/response pair.
struct EncodedInput {
  std::vector<std::size_t> ids;
  AttentionMask mask;
};

inline EncodedInput encode(const ModelParams& p, const std::vector<DependencyTree>& context,
                           const DependencyTree& response) {
  const AssembledSequence seq = assemble(context, response);
  if (seq.size() > p.config.max_len) {
    throw DataError("sequence length " + std::to_string(seq.size()) + " exceeds max_len " +
                    std::to_string(p.config.max_len));
  }
  EncodedInput in;
  in.ids.reserve(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    switch (seq.positions[i].kind) {
      case PositionKind::cls: in.ids.push_back(Vocabulary::kCls); break;
      case PositionKind::eou: in.ids.push_back(Vocabulary::kEou); break;
      case PositionKind::sep: in.ids.push_back(Vocabulary::kSep); break;
      case PositionKind::word: in.ids.push_back(p.vocab.id(seq.token(i).form)); break;
    }
  }
  in.mask = build_mask(seq, p.config.mask_kind, p.config.m, p.config.special_tokens);
  return in;
}

inline EncodedInput encode(const ModelParams& p, const DialogueExample& ex) {
  return encode(p, ex.context, ex.response);
}

// Attention weights recorded during one forward pass.
struct ForwardTrace {
  std::vector<AttentionTrace> backbone;  // per encoder layer, weights per head
  std::vector<AttentionTrace> sia;       // per SIA layer, weights per head
  Matrix hidden;                         // final backbone hidden state H
  Matrix fused;                          // H'
};

namespace ad {

struct EncoderLayerVars {
  MultiHeadVars attn;
  Var ln1_gamma, ln1_beta, ffn_w1, ffn_b1, ffn_w2, ffn_b2, ln2_gamma, ln2_beta;
};

struct ModelVars {
  Var token_embedding, position_embedding;
  std::vector<EncoderLayerVars> layers;
  std::array<SiaLayerVars, 2> sia;
  Var sia_out, task_w, task_b;
};

inline ModelVars bind(Tape& t, const Weights& w, Weights* g) {
  auto leaf = [&](const Matrix& v, Matrix* s) { return t.leaf(v, s); };
  auto gp = [&](auto member) -> Matrix* { return g == nullptr ? nullptr : &((*g).*member); };
  ModelVars v;
  v.token_embedding = leaf(w.token_embedding, gp(&Weights::token_embedding));
  v.position_embedding = leaf(w.position_embedding, gp(&Weights::position_embedding));
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const EncoderLayerParams& p = w.layers[l];
    EncoderLayerParams* q = g == nullptr ? nullptr : &g->layers[l];
    auto lg = [&](auto member) -> Matrix* { return q == nullptr ? nullptr : &(q->*member); };
    EncoderLayerVars lv;
    lv.attn = bind(t, p.attn, q == nullptr ? nullptr : &q->attn);
    lv.ln1_gamma = leaf(p.ln1_gamma, lg(&EncoderLayerParams::ln1_gamma));
    lv.ln1_beta = leaf(p.ln1_beta, lg(&EncoderLayerParams::ln1_beta));
    lv.ffn_w1 = leaf(p.ffn_w1, lg(&EncoderLayerParams::ffn_w1));
    lv.ffn_b1 = leaf(p.ffn_b1, lg(&EncoderLayerParams::ffn_b1));
    lv.ffn_w2 = leaf(p.ffn_w2, lg(&EncoderLayerParams::ffn_w2));
    lv.ffn_b2 = leaf(p.ffn_b2, lg(&EncoderLayerParams::ffn_b2));
    lv.ln2_gamma = leaf(p.ln2_gamma, lg(&EncoderLayerParams::ln2_gamma));
    lv.ln2_beta = leaf(p.ln2_beta, lg(&EncoderLayerParams::ln2_beta));
    v.layers.push_back(lv);
  }
  for (std::size_t l = 0; l < 2; ++l) {
    v.sia[l] = bind(t, w.sia.layers[l], g == nullptr ? nullptr : &g->sia.layers[l]);
  }
  v.sia_out = leaf(w.sia_out, gp(&Weights::sia_out));
  v.task_w = leaf(w.task_w, gp(&Weights::task_w));
  v.task_b = leaf(w.task_b, gp(&Weights::task_b));
  return v;
}

inline Var encoder_layer(Tape& t, Var x, const EncoderLayerVars& p, const AttentionConfig& cfg,
                         AttentionTrace* trace) {
  const AttentionMask unused;
  Var a = layer_norm(t, add(t, x, multi_head(t, x, p.attn, unused, cfg, trace)), p.ln1_gamma,
                     p.ln1_beta);
  Var hidden = gelu(t, add_row(t, matmul(t, a, p.ffn_w1), p.ffn_b1));
  Var ffn = add_row(t, matmul(t, hidden, p.ffn_w2), p.ffn_b2);
  return layer_norm(t, add(t, a, ffn), p.ln2_gamma, p.ln2_beta);
}

// Builds the graph up to the pre-sigmoid logit (1 x 1).
inline Var forward_logit(Tape& t, const ModelParams& p, const ModelVars& v, const EncodedInput& in,
                         ForwardTrace* trace = nullptr) {
  const ModelConfig& c = p.config;
  std::vector<std::size_t> positions(in.ids.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;
  Var h = add(t, gather_rows(t, v.token_embedding, in.ids),
              gather_rows(t, v.position_embedding, std::move(positions)));

  const AttentionConfig backbone_cfg = c.attention(MaskMode::none);
  if (trace != nullptr) trace->backbone.assign(c.layers, {});
  Var tap = h;
  for (std::size_t l = 0; l < c.layers; ++l) {
    h = encoder_layer(t, h, v.layers[l], backbone_cfg,
                      trace == nullptr ? nullptr : &trace->backbone[l]);
    if (l + 1 == c.tap()) tap = h;
  }
  if (trace != nullptr) trace->hidden = t.value(h);

  Var fused = h;
  if (c.sia_enabled) {
    const AttentionConfig sia_cfg = c.attention(c.mask_mode);
    Var h_sia = tap;
    if (trace != nullptr) trace->sia.assign(2, {});
    for (std::size_t l = 0; l < 2; ++l) {
      h_sia = sia_layer(t, h_sia, v.sia[l], in.mask, sia_cfg,
                        trace == nullptr ? nullptr : &trace->sia[l]);
    }
    fused = fuse(t, h, matmul(t, h_sia, v.sia_out));
  }
  if (trace != nullptr) trace->fused = t.value(fused);
  Var cls = gather_rows(t, fused, {0});
  return add(t, matmul(t, cls, v.task_w), v.task_b);
}

}  // namespace ad

inline double forward_logit(const ModelParams& p, const EncodedInput& in,
                            ForwardTrace* trace = nullptr) {
  ad::Tape t;
  const auto vars = ad::bind(t, p.weights, nullptr);
  return t.value(ad::forward_logit(t, p, vars, in, trace))(0, 0);
}

// Matching score g(c, r) in (0, 1).
inline double forward(const ModelParams& p, const EncodedInput& in, ForwardTrace* trace = nullptr) {
  return ad::sigmoid(forward_logit(p, in, trace));
}

inline double forward(const ModelParams& p, const DialogueExample& ex) {
  return forward(p, encode(p, ex));
}

inline double forward(const ModelParams& p, const std::vector<DependencyTree>& context,
                      const DependencyTree& response) {
  return forward(p, encode(p, context, response));
}

// Final fused representation of [CLS] (1 x dim).
inline Matrix cls_representation(const ModelParams& p, const EncodedInput& in) {
  ForwardTrace trace;
  forward_logit(p, in, &trace);
  Matrix out(1, p.config.dim);
  for (std::size_t j = 0; j < p.config.dim; ++j) out(0, j) = trace.fused(0, j);
  return out;
}

inline double bce(double g, int y) {
  const double gc = std::clamp(g, ad::kProbClamp, 1.0 - ad::kProbClamp);
  return -(y * std::log(gc) + (1 - y) * std::log(1.0 - gc));
}

struct LabeledInput {
  EncodedInput input;
  int label = 0;
};

inline std::vector<LabeledInput> encode_all(const ModelParams& p,
                                            const std::vector<DialogueExample>& batch) {
  std::vector<LabeledInput> out;
  out.reserve(batch.size());
  for (const auto& ex : batch) {
    if (ex.label != 0 && ex.label != 1) throw DataError("label outside {0,1}");
    out.push_back({encode(p, ex), ex.label});
  }
  return out;
}

// Mean binary cross-entropy over the batch.
inline double loss(const std::vector<LabeledInput>& batch, const ModelParams& p) {
  if (batch.empty()) throw ArgumentError("loss of an empty batch");
  double sum = 0.0;
  for (const auto& b : batch) sum += bce(forward(p, b.input), b.label);
  return sum / static_cast<double>(batch.size());
}

inline double loss(const std::vector<DialogueExample>& batch, const ModelParams& p) {
  return loss(encode_all(p, batch), p);
}

struct LossAndGradients {
  double loss = 0.0;
  Weights gradients;
};

// Exact reverse-mode gradients of the mean loss. Examples are accumulated in
// batch order.
template <typename Batch>
LossAndGradients gradients_of(const Batch& batch, std::size_t count,
                              const ModelParams& p) {
  if (count == 0) throw ArgumentError("gradients of an empty batch");
  LossAndGradients out{0.0, Weights::zeros(p.config, p.vocab.size())};
  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t i = 0; i < count; ++i) {
    const LabeledInput& b = batch(i);
    ad::Tape t;
    const auto vars = ad::bind(t, p.weights, &out.gradients);
    ad::Var l = ad::sigmoid_bce(t, ad::forward_logit(t, p, vars, b.input), b.label);
    out.loss += t.value(l)(0, 0);
    t.backward(l, std::nullopt, inv);
  }
  out.loss *= inv;
  return out;
}

inline LossAndGradients gradients(const std::vector<LabeledInput>& batch, const ModelParams& p) {
  return gradients_of([&](std::size_t i) -> const LabeledInput& { return batch[i]; }, batch.size(), p);
}

inline LossAndGradients gradients(const std::vector<DialogueExample>& batch, const ModelParams& p) {
  return gradients(encode_all(p, batch), p);
}

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t epochs = 100;
  std::uint64_t seed = 1;
  std::size_t batch_size = 8;
  int m = 4;
  MaskMode mask_mode = MaskMode::additive;
  // Sampled negatives added per positive example (0 uses the dataset as is).
  std::size_t negative_ratio = 0;
  // Keep embeddings and encoder layers 1..k fixed.
  bool freeze_below_tap = false;
};

struct TrainResult {
  ModelParams params;
  std::vector<double> epoch_losses;
};

// Called after each epoch with its mean loss.
using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

namespace detail {

// Fisher-Yates with the portable uniform draw.
inline void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(v[i - 1], v[std::min(j, i - 1)]);
  }
}

}  // namespace detail

// Pairs each positive context with `ratio` responses drawn from other
// positive examples, labeled 0. Output keeps the originals first.
inline std::vector<DialogueExample> add_negative_samples(const std::vector<DialogueExample>& data,
                                                         std::size_t ratio, std::uint64_t seed) {
  std::vector<DialogueExample> out = data;
  if (ratio == 0) return out;
  std::vector<std::size_t> positives;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].label == 1) positives.push_back(i);
  }
  if (positives.size() < 2) return out;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (std::size_t i : positives) {
    for (std::size_t r = 0; r < ratio; ++r) {
      std::size_t j = i;
      while (j == i) {
        j = positives[static_cast<std::size_t>(detail::uniform01(rng) *
                                               static_cast<double>(positives.size()))];
      }
      out.push_back({data[i].context, data[j].response, 0});
    }
  }
  return out;
}

// Mini-batch gradient descent with a fixed learning rate. Throws
// NumericError when the loss or any parameter becomes non-finite.
inline TrainResult train(const std::vector<DialogueExample>& dataset, const TrainConfig& cfg,
                         ModelParams initial, const EpochCallback& on_epoch = {}) {
  if (dataset.empty()) throw ArgumentError("training set is empty");
  if (!(cfg.learning_rate >= 0.0) || cfg.batch_size == 0) {
    throw ArgumentError("learning rate must be >= 0 and batch size >= 1");
  }
  initial.config.m = cfg.m;
  initial.config.mask_mode = cfg.mask_mode;
  initial.config.validate();
  TrainResult result{std::move(initial), {}};
  ModelParams& p = result.params;

  const auto examples = add_negative_samples(dataset, cfg.negative_ratio, cfg.seed);
  const auto encoded = encode_all(p, examples);
  std::mt19937_64 rng(cfg.seed + 0x5bd1e995ULL);
  std::vector<std::size_t> order(encoded.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const std::size_t frozen_layers = cfg.freeze_below_tap ? p.config.tap() : 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    detail::shuffle(order, rng);
    double epoch_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      auto grads = gradients_of(
          [&](std::size_t i) -> const LabeledInput& { return encoded[order[start + i]]; }, count, p);
      if (!std::isfinite(grads.loss)) {
        throw NumericError("non-finite loss in epoch " + std::to_string(epoch + 1));
      }
      epoch_sum += grads.loss * static_cast<double>(count);
      if (frozen_layers > 0) {
        grads.gradients.token_embedding.fill(0.0);
        grads.gradients.position_embedding.fill(0.0);
        for (std::size_t l = 0; l < frozen_layers; ++l) {
          EncoderLayerParams::visit(grads.gradients.layers[l],
                                    [](const std::string&, Matrix& m) { m.fill(0.0); });
        }
      }
      auto params = p.weights.tensors();
      const auto gs = std::as_const(grads.gradients).tensors();
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto dst = params[k]->data();
        auto src = gs[k]->data();
        for (std::size_t e = 0; e < dst.size(); ++e) dst[e] -= cfg.learning_rate * src[e];
      }
      if (!p.weights.all_finite()) {
        throw NumericError("non-finite parameters in epoch " + std::to_string(epoch + 1));
      }
    }
    const double mean = epoch_sum / static_cast<double>(encoded.size());
    if (!std::isfinite(mean)) throw NumericError("non-finite epoch loss");
    result.epoch_losses.push_back(mean);
    if (on_epoch) on_epoch(epoch + 1, mean);
  }
  return result;
}

// Builds the vocabulary from the dataset and initializes from cfg.seed.
inline TrainResult train(const std::vector<DialogueExample>& dataset, const TrainConfig& cfg,
                         ModelConfig model, const EpochCallback& on_epoch = {}) {
  model.m = cfg.m;
  model.mask_mode = cfg.mask_mode;
  return train(dataset, cfg, init_model(model, Vocabulary::from_examples(dataset), cfg.seed),
               on_epoch);
}

inline double accuracy(const std::vector<DialogueExample>& data, const ModelParams& p) {
  if (data.empty()) throw ArgumentError("accuracy of an empty set");
  std::size_t hit = 0;
  for (const auto& ex : data) hit += (forward(p, ex) > 0.5) == (ex.label == 1);
  return static_cast<double>(hit) / static_cast<double>(data.size());
}

struct RankedCandidate {
  std::size_t index = 0;
  double score = 0.0;
};

// Candidates by descending score; ties keep ascending candidate index.
inline std::vector<RankedCandidate> score_candidates(const std::vector<DependencyTree>& context,
                                                     const std::vector<DependencyTree>& candidates,
                                                     const ModelParams& p) {
  if (candidates.empty()) throw ArgumentError("no candidates to score");
  std::vector<RankedCandidate> out;
  out.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    out.push_back({i, forward(p, context, candidates[i])});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RankedCandidate& a, const RankedCandidate& b) { return a.score > b.score; });
  return out;
}

// ---- checkpoints ----------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"max_len", c.max_len},
          {"dim", c.dim},
          {"heads", c.heads},
          {"layers", c.layers},
          {"ffn_dim", c.ffn_dim},
          {"tap_layer", c.tap()},
          {"m", c.m},
          {"mask_kind", to_string(c.mask_kind)},
          {"mask_mode", to_string(c.mask_mode)},
          {"special_tokens", c.special_tokens == SpecialTokenPolicy::unmasked ? "unmasked"
                                                                              : "diagonal_only"},
          {"sia_enabled", c.sia_enabled}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.max_len = j.at("max_len").get<std::size_t>();
  c.dim = j.at("dim").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
  c.tap_layer = j.at("tap_layer").get<std::size_t>();
  c.m = j.at("m").get<int>();
  c.mask_kind = mask_kind_from_string(j.at("mask_kind").get<std::string>());
  c.mask_mode = mask_mode_from_string(j.at("mask_mode").get<std::string>());
  const auto sp = j.at("special_tokens").get<std::string>();
  if (sp == "unmasked") {
    c.special_tokens = SpecialTokenPolicy::unmasked;
  } else if (sp == "diagonal_only") {
    c.special_tokens = SpecialTokenPolicy::diagonal_only;
  } else {
    throw DataError("unknown special_tokens policy '" + sp + "'");
  }
  c.sia_enabled = j.at("sia_enabled").get<bool>();
  return c;
}

inline nlohmann::json checkpoint_to_json(const ModelParams& p) {
  nlohmann::json tensors = nlohmann::json::object();
  p.weights.for_each([&](const std::string& name, const Matrix& m) {
    tensors[name] = {{"shape", {m.rows(), m.cols()}},
                     {"data", std::vector<double>(m.data().begin(), m.data().end())}};
  });
  return {{"format", "sia-checkpoint"},
          {"version", kCheckpointVersion},
          {"config", config_to_json(p.config)},
          {"vocab", p.vocab.words()},
          {"tensors", std::move(tensors)}};
}

// Rejects missing tensors and any shape that disagrees with the config.
inline ModelParams checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "sia-checkpoint") {
      throw DataError("not a checkpoint file");
    }
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw DataError("unsupported checkpoint version " + j.at("version").dump());
    }
    ModelParams p;
    p.config = config_from_json(j.at("config"));
    p.config.validate();
    p.vocab = Vocabulary(j.at("vocab").get<std::vector<std::string>>());
    p.weights = Weights::zeros(p.config, p.vocab.size());
    const auto& tensors = j.at("tensors");
    std::size_t seen = 0;
    p.weights.for_each([&](const std::string& name, Matrix& m) {
      auto it = tensors.find(name);
      if (it == tensors.end()) throw ShapeError("checkpoint lacks tensor '" + name + "'");
      const auto shape = it->at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2 || shape[0] != m.rows() || shape[1] != m.cols()) {
        throw ShapeError("tensor '" + name + "' has shape " + it->at("shape").dump() +
                         ", expected " + m.shape_string());
      }
      const auto data = it->at("data").get<std::vector<double>>();
      if (data.size() != m.size()) throw ShapeError("tensor '" + name + "' data length mismatch");
      std::copy(data.begin(), data.end(), m.data().begin());
      ++seen;
    });
    if (seen != tensors.size()) throw ShapeError("checkpoint has unexpected extra tensors");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const ModelParams& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << checkpoint_to_json(p).dump() << '\n';
}

inline ModelParams load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_json(detail::parse_json_text(detail::read_file(path)));
}

}  // namespace sia
