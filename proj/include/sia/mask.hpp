#pragma once

// Sequence assembly and syntactic attention masks.
//
// The sequence layout is [CLS] u_1 [EOU] ... u_M [EOU] [SEP] r [SEP]. Rows of
// a mask are queries and columns are keys: cell (i, j) = 1 means position j
// takes part in the attention computation of position i.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sia/dialogue.hpp"
#include "sia/error.hpp"
#include "sia/syntax.hpp"

namespace sia {

enum class PositionKind { word, cls, eou, sep };

struct Position {
  PositionKind kind = PositionKind::word;
  std::size_t utterance = 0;  // 1..M context, M+1 response; 0 for special tokens
  std::size_t token = 0;      // 1-based token index; 0 for special tokens

  bool is_word() const noexcept { return kind == PositionKind::word; }
  friend bool operator==(const Position&, const Position&) = default;
};

struct AssembledSequence {
  std::vector<Position> positions;
  std::vector<DependencyTree> utterances;  // context utterances, then the response
  std::vector<TreeStats> stats;            // parallel to utterances
  std::size_t num_context = 0;

  std::size_t size() const noexcept { return positions.size(); }

  const Token& token(std::size_t pos) const {
    const Position& p = positions.at(pos);
    return utterances.at(p.utterance - 1).at(p.token);
  }
  std::size_t depth(std::size_t pos) const {
    const Position& p = positions.at(pos);
    return stats.at(p.utterance - 1).depth.at(p.token - 1);
  }
  const std::set<std::size_t>& ancestors(std::size_t pos) const {
    const Position& p = positions.at(pos);
    return stats.at(p.utterance - 1).ancestors.at(p.token - 1);
  }

  std::string label(std::size_t pos) const {
    switch (positions.at(pos).kind) {
      case PositionKind::cls: return "[CLS]";
      case PositionKind::eou: return "[EOU]";
      case PositionKind::sep: return "[SEP]";
      case PositionKind::word: break;
    }
    return token(pos).form;
  }
};

inline AssembledSequence assemble(const std::vector<DependencyTree>& context,
                                  const DependencyTree& response) {
  if (context.empty()) throw DataError("empty context");
  AssembledSequence seq;
  seq.num_context = context.size();
  seq.utterances = context;
  seq.utterances.push_back(response);
  for (const auto& tree : seq.utterances) seq.stats.push_back(tree_stats(tree));

  auto words = [&](std::size_t u) {
    for (std::size_t t = 1; t <= seq.utterances[u - 1].size(); ++t) {
      seq.positions.push_back({PositionKind::word, u, t});
    }
  };
  seq.positions.push_back({PositionKind::cls, 0, 0});
  for (std::size_t u = 1; u <= context.size(); ++u) {
    words(u);
    seq.positions.push_back({PositionKind::eou, 0, 0});
  }
  seq.positions.push_back({PositionKind::sep, 0, 0});
  words(context.size() + 1);
  seq.positions.push_back({PositionKind::sep, 0, 0});
  return seq;
}

inline AssembledSequence assemble(const DialogueExample& example) {
  return assemble(example.context, example.response);
}

enum class MaskKind { intra, inter, sia };

inline const char* to_string(MaskKind k) {
  switch (k) {
    case MaskKind::intra: return "intra";
    case MaskKind::inter: return "inter";
    case MaskKind::sia: return "sia";
  }
  return "?";
}

inline MaskKind mask_kind_from_string(const std::string& s) {
  if (s == "intra") return MaskKind::intra;
  if (s == "inter") return MaskKind::inter;
  if (s == "sia") return MaskKind::sia;
  throw ArgumentError("unknown mask kind '" + s + "'");
}

// How rows and columns of [CLS]/[EOU]/[SEP] are filled.
enum class SpecialTokenPolicy {
  unmasked,      // entire row and column allowed
  diagonal_only  // only the self cell allowed
};

class AttentionMask {
 public:
  AttentionMask() = default;
  AttentionMask(std::size_t n, MaskKind kind, std::optional<int> m = std::nullopt, bool fill = false)
      : n_(n), kind_(kind), m_(m), cells_(n * n, fill ? 1 : 0) {}

  static AttentionMask all_ones(std::size_t n) { return AttentionMask(n, MaskKind::sia, {}, true); }

  std::size_t size() const noexcept { return n_; }
  MaskKind kind() const noexcept { return kind_; }
  std::optional<int> m() const noexcept { return m_; }

  bool operator()(std::size_t i, std::size_t j) const { return cells_[i * n_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool v) { cells_[i * n_ + j] = v ? 1 : 0; }

  std::size_t popcount() const {
    std::size_t c = 0;
    for (auto v : cells_) c += v;
    return c;
  }

  bool row_empty(std::size_t i) const {
    for (std::size_t j = 0; j < n_; ++j) {
      if ((*this)(i, j)) return false;
    }
    return true;
  }

  // Cell-wise equality, ignoring kind and m.
  bool same_cells(const AttentionMask& o) const { return n_ == o.n_ && cells_ == o.cells_; }

 private:
  std::size_t n_ = 0;
  MaskKind kind_ = MaskKind::sia;
  std::optional<int> m_;
  std::vector<std::uint8_t> cells_;
};

namespace detail {
inline void apply_special_policy(const AssembledSequence& seq, AttentionMask& mask,
                                 SpecialTokenPolicy policy) {
  const std::size_t n = seq.size();
  for (std::size_t s = 0; s < n; ++s) {
    if (seq.positions[s].is_word()) continue;
    if (policy == SpecialTokenPolicy::unmasked) {
      for (std::size_t j = 0; j < n; ++j) {
        mask.set(s, j, true);
        mask.set(j, s, true);
      }
    } else {
      mask.set(s, s, true);
    }
  }
}
}  // namespace detail

inline AttentionMask intra_mask(const AssembledSequence& seq,
                                SpecialTokenPolicy policy = SpecialTokenPolicy::unmasked) {
  const std::size_t n = seq.size();
  AttentionMask mask(n, MaskKind::intra);
  for (std::size_t i = 0; i < n; ++i) {
    const Position& pi = seq.positions[i];
    if (!pi.is_word()) continue;
    mask.set(i, i, true);
    const auto& anc = seq.ancestors(i);
    for (std::size_t j = 0; j < n; ++j) {
      const Position& pj = seq.positions[j];
      if (pj.is_word() && pj.utterance == pi.utterance && anc.contains(pj.token)) {
        mask.set(i, j, true);
      }
    }
  }
  detail::apply_special_policy(seq, mask, policy);
  return mask;
}

inline AttentionMask inter_mask(const AssembledSequence& seq, int m,
                                SpecialTokenPolicy policy = SpecialTokenPolicy::unmasked) {
  if (m < 1) throw ArgumentError("inter-mask bound m must be >= 1, got " + std::to_string(m));
  const std::size_t n = seq.size();
  AttentionMask mask(n, MaskKind::inter, m);
  const auto bound = static_cast<std::size_t>(m);
  std::vector<std::size_t> depth(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (seq.positions[i].is_word()) depth[i] = seq.depth(i);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (depth[i] == 0) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (depth[j] != 0 && depth[i] + depth[j] <= bound) mask.set(i, j, true);
    }
  }
  detail::apply_special_policy(seq, mask, policy);
  return mask;
}

inline AttentionMask sia_mask(const AssembledSequence& seq, int m,
                              SpecialTokenPolicy policy = SpecialTokenPolicy::unmasked) {
  const AttentionMask inter = inter_mask(seq, m, policy);
  const AttentionMask intra = intra_mask(seq, policy);
  const std::size_t n = seq.size();
  AttentionMask mask(n, MaskKind::sia, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) mask.set(i, j, intra(i, j) || inter(i, j));
  }
  return mask;
}

inline AttentionMask build_mask(const AssembledSequence& seq, MaskKind kind, int m,
                                SpecialTokenPolicy policy = SpecialTokenPolicy::unmasked) {
  switch (kind) {
    case MaskKind::intra: return intra_mask(seq, policy);
    case MaskKind::inter: return inter_mask(seq, m, policy);
    case MaskKind::sia: return sia_mask(seq, m, policy);
  }
  throw ArgumentError("unknown mask kind");
}

// `subword_owner[s]` is the mask position that subword s belongs to. It must
// start at 0, never decrease, advance by at most one, and end at n-1.
inline AttentionMask expand_to_subwords(const AttentionMask& mask,
                                        std::span<const std::size_t> subword_owner) {
  const std::size_t n = mask.size();
  const std::size_t s = subword_owner.size();
  if (n == 0 && s == 0) return mask;
  if (s == 0 || subword_owner.front() != 0 || subword_owner.back() + 1 != n) {
    throw ArgumentError("subword partition does not cover all mask positions");
  }
  for (std::size_t k = 1; k < s; ++k) {
    const std::size_t prev = subword_owner[k - 1];
    const std::size_t cur = subword_owner[k];
    if (cur < prev) throw ArgumentError("subword partition overlaps (owner decreases)");
    if (cur > prev + 1) throw ArgumentError("subword partition is not contiguous");
  }
  AttentionMask out(s, mask.kind(), mask.m());
  for (std::size_t a = 0; a < s; ++a) {
    for (std::size_t b = 0; b < s; ++b) out.set(a, b, mask(subword_owner[a], subword_owner[b]));
  }
  return out;
}

// Owner map for a partition given as per-position subword counts (each >= 1).
inline std::vector<std::size_t> owners_from_counts(std::span<const std::size_t> counts) {
  std::vector<std::size_t> owners;
  for (std::size_t p = 0; p < counts.size(); ++p) {
    if (counts[p] == 0) throw ArgumentError("every position needs at least one subword");
    owners.insert(owners.end(), counts[p], p);
  }
  return owners;
}

inline nlohmann::json mask_to_json(const AttentionMask& mask) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < mask.size(); ++j) row.push_back(mask(i, j) ? 1 : 0);
    rows.push_back(std::move(row));
  }
  nlohmann::json out = {{"n", mask.size()}, {"rows", std::move(rows)},
                        {"kind", to_string(mask.kind())}};
  out["m"] = mask.m() ? nlohmann::json(*mask.m()) : nlohmann::json(nullptr);
  return out;
}

inline AttentionMask mask_from_json(const nlohmann::json& j) {
  const std::size_t n = j.at("n").get<std::size_t>();
  std::optional<int> m;
  if (!j.at("m").is_null()) m = j.at("m").get<int>();
  AttentionMask mask(n, mask_kind_from_string(j.at("kind").get<std::string>()), m);
  const auto& rows = j.at("rows");
  if (rows.size() != n) throw ShapeError("mask row count differs from n");
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].size() != n) throw ShapeError("mask row length differs from n");
    for (std::size_t c = 0; c < n; ++c) mask.set(i, c, rows[i][c].get<int>() != 0);
  }
  return mask;
}

// Heatmap with one row per query: "█" allowed, "·" blocked.
inline std::string render_mask_ascii(const AttentionMask& mask, const AssembledSequence& seq) {
  std::ostringstream out;
  out << "mask kind=" << to_string(mask.kind()) << " m=";
  if (mask.m()) out << *mask.m(); else out << "-";
  out << " n=" << mask.size() << '\n';
  for (std::size_t i = 0; i < mask.size(); ++i) {
    std::string label = seq.label(i);
    if (label.size() > 12) label = label.substr(0, 12);
    out << (i < 10 ? "  " : i < 100 ? " " : "") << i << ' ' << label
        << std::string(13 - label.size(), ' ');
    for (std::size_t j = 0; j < mask.size(); ++j) out << (mask(i, j) ? "█" : "·");
    out << '\n';
  }
  return out.str();
}

}  // namespace sia
