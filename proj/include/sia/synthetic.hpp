#pragma once

// Seeded synthetic "keyword-linked" dialogues: every context mentions one
// topic keyword, and the correct response carries that topic's paired
// response keyword. Keywords are tree roots; filler words hang below them.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sia/dialogue.hpp"
#include "sia/model.hpp"

namespace sia {

struct SyntheticOptions {
  std::size_t topics = 4;
  std::size_t max_context = 3;  // utterances per context, at least 1
  std::size_t min_words = 2;
  std::size_t max_words = 4;
};

namespace synthetic {

inline const std::vector<std::string>& context_keywords() {
  static const std::vector<std::string> k{"printer", "network", "battery", "screen",
                                          "audio",   "kernel",  "mouse",   "disk"};
  return k;
}

inline const std::vector<std::string>& response_keywords() {
  static const std::vector<std::string> k{"toner", "router", "charger", "monitor",
                                          "speaker", "module", "cursor", "partition"};
  return k;
}

inline const std::vector<std::string>& fillers() {
  static const std::vector<std::string> f{"the", "my",     "is",    "it",    "not",   "so",
                                          "now", "please", "again", "still", "today", "here"};
  return f;
}

class Generator {
 public:
  Generator(std::uint64_t seed, SyntheticOptions opts) : rng_(seed), opts_(opts) {
    if (opts_.topics < 2 || opts_.topics > context_keywords().size()) {
      throw ArgumentError("topics must be in 2.." + std::to_string(context_keywords().size()));
    }
    if (opts_.max_context < 1 || opts_.min_words < 1 || opts_.max_words < opts_.min_words) {
      throw ArgumentError("invalid synthetic options");
    }
  }

  std::size_t uniform(std::size_t n) {
    return static_cast<std::size_t>(detail::uniform01(rng_) * static_cast<double>(n));
  }

  std::size_t topic() { return uniform(opts_.topics); }

  // Random tree; `root_form` (if nonempty) becomes one root token.
  DependencyTree utterance(const std::string& root_form) {
    const std::size_t len = opts_.min_words + uniform(opts_.max_words - opts_.min_words + 1);
    const std::size_t root = 1 + uniform(len);
    DependencyTree t;
    std::vector<std::size_t> attached{root};
    for (std::size_t i = 1; i <= len; ++i) {
      t.tokens.push_back({i, fillers()[uniform(fillers().size())], 0, "dep"});
    }
    t.tokens[root - 1].deprel = "root";
    if (!root_form.empty()) t.tokens[root - 1].form = root_form;
    for (std::size_t i = 1; i <= len; ++i) {
      if (i == root) continue;
      t.tokens[i - 1].head = attached[uniform(attached.size())];
      attached.push_back(i);
    }
    return t;
  }

  std::vector<DependencyTree> context(std::size_t topic) {
    const std::size_t m = 1 + uniform(opts_.max_context);
    const std::size_t key_at = uniform(m);
    std::vector<DependencyTree> c;
    for (std::size_t u = 0; u < m; ++u) {
      c.push_back(utterance(u == key_at ? context_keywords()[topic] : std::string{}));
    }
    return c;
  }

  DependencyTree response(std::size_t topic) { return utterance(response_keywords()[topic]); }

  std::size_t other_topic(std::size_t topic) {
    const std::size_t shift = 1 + uniform(opts_.topics - 1);
    return (topic + shift) % opts_.topics;
  }

 private:
  std::mt19937_64 rng_;
  SyntheticOptions opts_;
};

}  // namespace synthetic

// `count` positive dialogues (label 1).
inline std::vector<DialogueExample> generate_dialogues(std::size_t count, std::uint64_t seed,
                                                       const SyntheticOptions& opts = {}) {
  synthetic::Generator gen(seed, opts);
  std::vector<DialogueExample> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t t = gen.topic();
    DialogueExample ex;
    ex.context = gen.context(t);
    ex.response = gen.response(t);
    ex.label = 1;
    out.push_back(std::move(ex));
  }
  return out;
}

// Positive and negative dialogues for the same contexts, interleaved.
inline std::vector<DialogueExample> generate_labeled_dialogues(std::size_t contexts,
                                                               std::uint64_t seed,
                                                               const SyntheticOptions& opts = {}) {
  synthetic::Generator gen(seed, opts);
  std::vector<DialogueExample> out;
  for (std::size_t i = 0; i < contexts; ++i) {
    const std::size_t t = gen.topic();
    auto ctx = gen.context(t);
    out.push_back({ctx, gen.response(t), 1});
    out.push_back({std::move(ctx), gen.response(gen.other_topic(t)), 0});
  }
  return out;
}

// Each case has one correct response and `candidates - 1` off-topic ones, in
// random order.
inline std::vector<EvalCase> generate_eval_cases(std::size_t count, std::size_t candidates,
                                                 std::uint64_t seed,
                                                 const SyntheticOptions& opts = {}) {
  if (candidates < 2) throw ArgumentError("need at least two candidates per case");
  synthetic::Generator gen(seed, opts);
  std::vector<EvalCase> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t t = gen.topic();
    EvalCase c;
    c.context = gen.context(t);
    const std::size_t pos = gen.uniform(candidates);
    for (std::size_t k = 0; k < candidates; ++k) {
      c.candidates.push_back(gen.response(k == pos ? t : gen.other_topic(t)));
      c.labels.push_back(k == pos ? 1 : 0);
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace sia
