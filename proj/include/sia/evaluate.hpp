#pragma once

// Ranks candidate pools with a trained model and reports ranking metrics.

#include <cstddef>
#include <vector>

#include "json.hpp"
#include "sia/dialogue.hpp"
#include "sia/metrics.hpp"
#include "sia/model.hpp"

namespace sia {

struct EvaluationReport {
  double r10_at_1 = 0.0;
  double r10_at_2 = 0.0;
  double r10_at_5 = 0.0;
  double map = 0.0;
  double mrr = 0.0;
  double p_at_1 = 0.0;
  std::size_t num_cases = 0;
};

inline RankedCase rank_case(const EvalCase& c, const ModelParams& p) {
  RankedCase out;
  for (const auto& r : score_candidates(c.context, c.candidates, p)) {
    out.relevance.push_back(c.labels.at(r.index));
  }
  return out;
}

// R10@k fields hold R_n@min(k, n) when a pool has fewer than ten candidates.
inline EvaluationReport report_from_cases(const std::vector<RankedCase>& ranked) {
  EvaluationReport rep;
  rep.num_cases = ranked.size();
  rep.r10_at_1 = mean_recall_at_k(ranked, 1);
  rep.r10_at_2 = mean_recall_at_k(ranked, 2);
  rep.r10_at_5 = mean_recall_at_k(ranked, 5);
  rep.map = sia::map(ranked);
  rep.mrr = sia::mrr(ranked);
  rep.p_at_1 = sia::p_at_1(ranked);
  return rep;
}

inline EvaluationReport evaluate(const std::vector<EvalCase>& cases, const ModelParams& p) {
  if (cases.empty()) throw DataError("evaluation set is empty");
  std::vector<RankedCase> ranked;
  ranked.reserve(cases.size());
  for (const auto& c : cases) ranked.push_back(rank_case(c, p));
  return report_from_cases(ranked);
}

inline nlohmann::json report_to_json(const EvaluationReport& r) {
  return {{"R10@1", r.r10_at_1}, {"R10@2", r.r10_at_2}, {"R10@5", r.r10_at_5},
          {"MAP", r.map},        {"MRR", r.mrr},        {"P@1", r.p_at_1},
          {"num_cases", r.num_cases}};
}

}  // namespace sia
