#pragma once

// Dialogue records and their JSON schemas.
//
//   dialogue file: [{"context": [Utterance...], "response": Utterance, "label": 0|1}, ...]
//   eval file:     [{"context": [Utterance...], "candidates": [Utterance...],
//                    "labels": [0|1, ...]}, ...]
//   Utterance:     {"tokens": [{"form": str, "head": int, "deprel": str}, ...]}
//
// Token indices are implicit (1-based array position).

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sia/conllu.hpp"
#include "sia/error.hpp"

namespace sia {

struct DialogueExample {
  std::vector<DependencyTree> context;
  DependencyTree response;
  int label = 0;

  friend bool operator==(const DialogueExample&, const DialogueExample&) = default;
};

// A context with a pool of candidate responses, used for ranking evaluation.
struct EvalCase {
  std::vector<DependencyTree> context;
  std::vector<DependencyTree> candidates;
  std::vector<int> labels;
};

inline void validate_example(const DialogueExample& ex) {
  if (ex.context.empty()) throw DataError("empty context");
  if (ex.label != 0 && ex.label != 1) {
    throw DataError("label " + std::to_string(ex.label) + " outside {0,1}");
  }
  for (std::size_t u = 0; u < ex.context.size(); ++u) {
    try {
      validate_tree(ex.context[u]);
    } catch (const DataError& e) {
      throw DataError("context utterance " + std::to_string(u) + ": " + e.what());
    }
  }
  try {
    validate_tree(ex.response);
  } catch (const DataError& e) {
    throw DataError(std::string("response: ") + e.what());
  }
}

namespace detail {

using nlohmann::json;

inline const json& require(const json& obj, const char* key) {
  if (!obj.is_object()) throw DataError("expected a JSON object");
  auto it = obj.find(key);
  if (it == obj.end()) throw DataError(std::string("missing field '") + key + "'");
  return *it;
}

inline DependencyTree tree_from_json(const json& utt) {
  const json& toks = require(utt, "tokens");
  if (!toks.is_array()) throw DataError("'tokens' must be an array");
  DependencyTree tree;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const json& t = toks[i];
    const json& form = require(t, "form");
    const json& head = require(t, "head");
    const json& deprel = require(t, "deprel");
    if (!form.is_string() || !deprel.is_string()) {
      throw DataError("'form' and 'deprel' must be strings");
    }
    if (!head.is_number_integer() || head.get<long long>() < 0) {
      throw DataError("'head' must be a non-negative integer");
    }
    tree.tokens.push_back(Token{i + 1, form.get<std::string>(),
                                static_cast<std::size_t>(head.get<long long>()),
                                deprel.get<std::string>()});
  }
  return tree;
}

inline std::vector<DependencyTree> trees_from_json(const json& arr, const char* key) {
  if (!arr.is_array()) throw DataError(std::string("'") + key + "' must be an array");
  std::vector<DependencyTree> out;
  out.reserve(arr.size());
  for (const auto& u : arr) out.push_back(tree_from_json(u));
  return out;
}

inline json parse_json_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("invalid JSON: ") + e.what());
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace detail

inline nlohmann::json tree_to_json(const DependencyTree& tree) {
  nlohmann::json toks = nlohmann::json::array();
  for (const auto& t : tree.tokens) {
    toks.push_back({{"form", t.form}, {"head", t.head}, {"deprel", t.deprel}});
  }
  return {{"tokens", std::move(toks)}};
}

inline nlohmann::json trees_to_json(const std::vector<DependencyTree>& trees) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& t : trees) arr.push_back(tree_to_json(t));
  return arr;
}

inline nlohmann::json dialogues_to_json(const std::vector<DialogueExample>& examples) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& ex : examples) {
    arr.push_back({{"context", trees_to_json(ex.context)},
                   {"response", tree_to_json(ex.response)},
                   {"label", ex.label}});
  }
  return arr;
}

inline nlohmann::json eval_cases_to_json(const std::vector<EvalCase>& cases) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : cases) {
    arr.push_back({{"context", trees_to_json(c.context)},
                   {"candidates", trees_to_json(c.candidates)},
                   {"labels", c.labels}});
  }
  return arr;
}

// Errors name the offending record index.
inline std::vector<DialogueExample> parse_dialogues(const std::string& text) {
  const auto doc = detail::parse_json_text(text);
  if (!doc.is_array()) throw DataError("dialogue file must be a JSON array");
  std::vector<DialogueExample> out;
  out.reserve(doc.size());
  for (std::size_t r = 0; r < doc.size(); ++r) {
    try {
      const auto& rec = doc[r];
      DialogueExample ex;
      ex.context = detail::trees_from_json(detail::require(rec, "context"), "context");
      ex.response = detail::tree_from_json(detail::require(rec, "response"));
      const auto& label = detail::require(rec, "label");
      if (!label.is_number_integer()) throw DataError("'label' must be an integer");
      const long long raw = label.get<long long>();
      if (raw != 0 && raw != 1) throw DataError("label " + std::to_string(raw) + " outside {0,1}");
      ex.label = static_cast<int>(raw);
      validate_example(ex);
      out.push_back(std::move(ex));
    } catch (const DataError& e) {
      throw DataError("record " + std::to_string(r) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<DialogueExample> load_dialogues(const std::filesystem::path& path) {
  return parse_dialogues(detail::read_file(path));
}

inline std::vector<EvalCase> parse_eval_cases(const std::string& text) {
  const auto doc = detail::parse_json_text(text);
  if (!doc.is_array()) throw DataError("eval file must be a JSON array");
  std::vector<EvalCase> out;
  for (std::size_t r = 0; r < doc.size(); ++r) {
    try {
      const auto& rec = doc[r];
      EvalCase c;
      c.context = detail::trees_from_json(detail::require(rec, "context"), "context");
      c.candidates = detail::trees_from_json(detail::require(rec, "candidates"), "candidates");
      const auto& labels = detail::require(rec, "labels");
      if (!labels.is_array()) throw DataError("'labels' must be an array");
      for (const auto& l : labels) {
        if (!l.is_number_integer() || (l.get<long long>() != 0 && l.get<long long>() != 1)) {
          throw DataError("labels must be 0 or 1");
        }
        c.labels.push_back(l.get<int>());
      }
      if (c.context.empty()) throw DataError("empty context");
      if (c.candidates.empty()) throw DataError("empty candidate list");
      if (c.labels.size() != c.candidates.size()) {
        throw DataError("labels and candidates differ in length");
      }
      for (const auto& t : c.context) validate_tree(t);
      for (const auto& t : c.candidates) validate_tree(t);
      out.push_back(std::move(c));
    } catch (const DataError& e) {
      throw DataError("record " + std::to_string(r) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<EvalCase> load_eval_cases(const std::filesystem::path& path) {
  return parse_eval_cases(detail::read_file(path));
}

}  // namespace sia
