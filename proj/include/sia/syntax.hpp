#pragma once

// Ancestor sets and depths over dependency trees. Roots have depth 1.

#include <cstddef>
#include <set>
#include <vector>

#include "sia/conllu.hpp"
#include "sia/error.hpp"

namespace sia {

// Per-token statistics, indexed by 0-based token position. Ancestor entries
// are 1-based token indices.
struct TreeStats {
  std::vector<std::set<std::size_t>> ancestors;
  std::vector<std::size_t> depth;
};

namespace detail {
inline void check_token_index(const DependencyTree& tree, std::size_t i) {
  if (i == 0 || i > tree.size()) {
    throw ArgumentError("token index " + std::to_string(i) + " out of range 1.." +
                        std::to_string(tree.size()));
  }
}
}  // namespace detail

// Tokens on the head chain from i's parent up to its root.
inline std::set<std::size_t> ancestors(const DependencyTree& tree, std::size_t i) {
  detail::check_token_index(tree, i);
  std::set<std::size_t> out;
  for (std::size_t cur = tree.at(i).head; cur != 0; cur = tree.at(cur).head) out.insert(cur);
  return out;
}

inline std::size_t depth(const DependencyTree& tree, std::size_t i) {
  detail::check_token_index(tree, i);
  std::size_t d = 1;
  for (std::size_t cur = tree.at(i).head; cur != 0; cur = tree.at(cur).head) ++d;
  return d;
}

// Batch form of ancestors()/depth(). Depths are memoized so each head link is
// resolved once; ancestor sets are copied from the parent's set.
inline TreeStats tree_stats(const DependencyTree& tree) {
  validate_tree(tree);
  const std::size_t n = tree.size();
  TreeStats stats;
  stats.ancestors.resize(n);
  stats.depth.assign(n, 0);

  std::vector<std::size_t> chain;
  for (std::size_t start = 1; start <= n; ++start) {
    // Walk up until a resolved token or a root, then resolve top-down.
    chain.clear();
    std::size_t cur = start;
    while (cur != 0 && stats.depth[cur - 1] == 0) {
      chain.push_back(cur);
      cur = tree.at(cur).head;
    }
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
      const std::size_t tok = *it;
      const std::size_t parent = tree.at(tok).head;
      if (parent == 0) {
        stats.depth[tok - 1] = 1;
      } else {
        stats.depth[tok - 1] = stats.depth[parent - 1] + 1;
        stats.ancestors[tok - 1] = stats.ancestors[parent - 1];
        stats.ancestors[tok - 1].insert(parent);
      }
    }
  }
  return stats;
}

}  // namespace sia
