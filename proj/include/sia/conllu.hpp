#pragma once

// Dependency trees and the CoNLL-U reader/writer.
//
// Only ID, FORM, HEAD and DEPREL are read. Multiword-token ranges ("2-3")
// and empty nodes ("2.1") are skipped; the remaining columns are written
// back as "_".

#include <cstddef>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sia/error.hpp"

namespace sia {

struct Token {
  std::size_t index = 0;  // 1-based position in the utterance
  std::string form;
  std::size_t head = 0;  // 0 = root, otherwise 1-based index of the parent
  std::string deprel;

  friend bool operator==(const Token&, const Token&) = default;
};

struct DependencyTree {
  std::vector<Token> tokens;

  std::size_t size() const noexcept { return tokens.size(); }
  bool empty() const noexcept { return tokens.empty(); }
  // 1-based access, matching Token::index and Token::head.
  const Token& at(std::size_t index) const { return tokens.at(index - 1); }

  friend bool operator==(const DependencyTree&, const DependencyTree&) = default;
};

namespace detail {

inline bool has_control_separator(std::string_view s) {
  return s.find_first_of("\t\n\r") != std::string_view::npos;
}

// Checks every Token/DependencyTree invariant. `line_of(i)` maps a 0-based
// token position to the source line reported in errors; 0 means "no line".
template <typename LineOf>
void validate_tree(const DependencyTree& tree, LineOf line_of) {
  auto fail = [&](std::size_t pos, const std::string& what) {
    const std::size_t line = line_of(pos);
    if (line != 0) throw ParseError(line, what);
    throw DataError(what + " at token " + std::to_string(pos + 1));
  };
  const std::size_t n = tree.tokens.size();
  if (n == 0) throw DataError("empty dependency tree");
  bool has_root = false;
  for (std::size_t pos = 0; pos < n; ++pos) {
    const Token& t = tree.tokens[pos];
    if (t.index != pos + 1) {
      fail(pos, "token index " + std::to_string(t.index) + " out of sequence (expected " +
                    std::to_string(pos + 1) + ")");
    }
    if (t.form.empty()) fail(pos, "empty FORM");
    if (t.deprel.empty()) fail(pos, "empty DEPREL");
    if (has_control_separator(t.form) || has_control_separator(t.deprel)) {
      fail(pos, "tab or newline inside a field");
    }
    if (t.head == t.index) fail(pos, "self-loop");
    if (t.head > n) {
      fail(pos, "head " + std::to_string(t.head) + " out of range 0.." + std::to_string(n));
    }
    has_root = has_root || t.head == 0;
  }
  if (!has_root) fail(0, "no root token (head 0)");
  // Every head chain must reach a root within n steps.
  for (std::size_t pos = 0; pos < n; ++pos) {
    std::size_t cur = pos + 1;
    std::size_t steps = 0;
    while (cur != 0 && steps <= n) {
      cur = tree.tokens[cur - 1].head;
      ++steps;
    }
    if (cur != 0) fail(pos, "cyclic heads");
  }
}

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

inline bool parse_unsigned(std::string_view s, std::size_t& value) {
  if (s.empty() || s.size() > 9) return false;
  std::size_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
    v = v * 10 + static_cast<std::size_t>(c - '0');
  }
  value = v;
  return true;
}

}  // namespace detail

inline void validate_tree(const DependencyTree& tree) {
  detail::validate_tree(tree, [](std::size_t) -> std::size_t { return 0; });
}

// Parses CoNLL-U text into one tree per sentence block. Throws ParseError
// naming the offending line.
inline std::vector<DependencyTree> parse_conllu(std::string_view text) {
  std::vector<DependencyTree> trees;
  DependencyTree current;
  std::vector<std::size_t> lines;

  auto flush = [&] {
    if (current.tokens.empty()) return;
    detail::validate_tree(current, [&](std::size_t pos) { return lines[pos]; });
    trees.push_back(std::move(current));
    current = DependencyTree{};
    lines.clear();
  };

  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    const bool last = end == std::string_view::npos;
    if (last) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (line.empty()) {
      flush();
    } else if (line.front() != '#') {
      const auto cols = detail::split_tabs(line);
      if (cols.size() != 10) {
        throw ParseError(line_no, "expected 10 tab-separated columns, found " +
                                      std::to_string(cols.size()));
      }
      const std::string_view id = cols[0];
      if (id.find('-') != std::string_view::npos || id.find('.') != std::string_view::npos) {
        if (last) break;
        continue;
      }
      Token tok;
      if (!detail::parse_unsigned(id, tok.index) || tok.index == 0) {
        throw ParseError(line_no, "non-numeric ID '" + std::string(id) + "'");
      }
      if (!detail::parse_unsigned(cols[6], tok.head)) {
        throw ParseError(line_no, "non-numeric HEAD '" + std::string(cols[6]) + "'");
      }
      tok.form = std::string(cols[1]);
      tok.deprel = std::string(cols[7]);
      if (tok.head == tok.index) throw ParseError(line_no, "self-loop");
      current.tokens.push_back(std::move(tok));
      lines.push_back(line_no);
    }
    if (last) break;
  }
  flush();
  return trees;
}

inline std::string serialize_conllu(const std::vector<DependencyTree>& trees) {
  std::ostringstream out;
  for (const auto& tree : trees) {
    for (const auto& t : tree.tokens) {
      out << t.index << '\t' << t.form << "\t_\t_\t_\t_\t" << t.head << '\t' << t.deprel
          << "\t_\t_\n";
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace sia
