#pragma once

// Ranking metrics over already-ranked relevance lists (position 0 = top).

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "sia/error.hpp"

namespace sia {

struct RankedCase {
  std::vector<int> relevance;

  std::size_t n() const noexcept { return relevance.size(); }
  std::size_t positives() const {
    std::size_t c = 0;
    for (int r : relevance) c += r != 0;
    return c;
  }
};

namespace detail {
inline void require_positive(const RankedCase& c) {
  if (c.positives() == 0) throw ArgumentError("ranked case has no positive label");
}
inline void require_cases(const std::vector<RankedCase>& cases) {
  if (cases.empty()) throw ArgumentError("no ranked cases");
}
}  // namespace detail

// Fraction of the case's positives found in the top k.
inline double recall_at_k(const RankedCase& c, std::size_t k) {
  if (k < 1 || k > c.n()) {
    throw ArgumentError("k = " + std::to_string(k) + " outside 1.." + std::to_string(c.n()));
  }
  detail::require_positive(c);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < k; ++i) hit += c.relevance[i] != 0;
  return static_cast<double>(hit) / static_cast<double>(c.positives());
}

inline double reciprocal_rank(const RankedCase& c) {
  detail::require_positive(c);
  for (std::size_t i = 0; i < c.n(); ++i) {
    if (c.relevance[i] != 0) return 1.0 / static_cast<double>(i + 1);
  }
  return 0.0;
}

inline double average_precision(const RankedCase& c) {
  detail::require_positive(c);
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < c.n(); ++i) {
    if (c.relevance[i] == 0) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  return sum / static_cast<double>(hits);
}

inline double mrr(const std::vector<RankedCase>& cases) {
  detail::require_cases(cases);
  double s = 0.0;
  for (const auto& c : cases) s += reciprocal_rank(c);
  return s / static_cast<double>(cases.size());
}

inline double map(const std::vector<RankedCase>& cases) {
  detail::require_cases(cases);
  double s = 0.0;
  for (const auto& c : cases) s += average_precision(c);
  return s / static_cast<double>(cases.size());
}

inline double p_at_1(const std::vector<RankedCase>& cases) {
  detail::require_cases(cases);
  std::size_t hit = 0;
  for (const auto& c : cases) hit += !c.relevance.empty() && c.relevance.front() != 0;
  return static_cast<double>(hit) / static_cast<double>(cases.size());
}

// Mean of recall_at_k over cases, with k capped at each case's pool size.
inline double mean_recall_at_k(const std::vector<RankedCase>& cases, std::size_t k) {
  detail::require_cases(cases);
  double s = 0.0;
  for (const auto& c : cases) s += recall_at_k(c, std::min(k, c.n()));
  return s / static_cast<double>(cases.size());
}

}  // namespace sia
