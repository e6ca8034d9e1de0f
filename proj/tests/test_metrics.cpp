#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "metric_cases.hpp"
#include "sia/sia.hpp"

namespace {

using metric_cases::kHand;
using sia::RankedCase;

TEST(Metrics, SpecExamples) {
  EXPECT_EQ(sia::recall_at_k({{1, 0, 0, 0, 0, 0, 0, 0, 0, 0}}, 1), 1.0);
  EXPECT_EQ(sia::recall_at_k({{0, 0, 1, 0, 0, 0, 0, 0, 0, 0}}, 2), 0.0);
  EXPECT_EQ(sia::recall_at_k({{1, 0, 1, 0}}, 2), 0.5);

  EXPECT_EQ(sia::mrr({{{1, 0}}}), 1.0);
  EXPECT_DOUBLE_EQ(sia::mrr({{{0, 0, 1}}}), 1.0 / 3);
  EXPECT_EQ(sia::mrr({{{1, 0, 0, 0}}, {{0, 0, 0, 1}}}), 0.625);

  EXPECT_EQ(sia::map({{{1, 1, 0}}}), 1.0);
  EXPECT_DOUBLE_EQ(sia::map({{{1, 0, 1}}}), 5.0 / 6);
  EXPECT_EQ(sia::map({{{0, 1}}}), 0.5);

  EXPECT_EQ(sia::p_at_1({{{1, 0}}, {{1}}}), 1.0);
  EXPECT_EQ(sia::p_at_1({{{1, 0}}, {{0, 1}}, {{0, 1}}, {{0, 0, 1}}}), 0.25);
  EXPECT_EQ(sia::p_at_1({{{0, 1}}}), 0.0);
}

TEST(Metrics, HandComputedTable) {
  ASSERT_GE(kHand.size(), 20u);
  std::vector<RankedCase> all;
  double rr = 0, ap = 0, top = 0;
  for (const auto& h : kHand) {
    const RankedCase c{h.relevance};
    EXPECT_EQ(sia::reciprocal_rank(c), h.rr);
    EXPECT_EQ(sia::average_precision(c), h.ap);
    EXPECT_EQ(sia::recall_at_k(c, 1), h.r1);
    if (c.n() >= 2) {
      EXPECT_EQ(sia::recall_at_k(c, 2), h.r2);
    }
    EXPECT_EQ(sia::p_at_1({c}), h.top);
    all.push_back(c);
    rr += h.rr;
    ap += h.ap;
    top += h.top;
  }
  const double n = static_cast<double>(kHand.size());
  EXPECT_EQ(sia::mrr(all), rr / n);
  EXPECT_EQ(sia::map(all), ap / n);
  EXPECT_EQ(sia::p_at_1(all), top / n);
}

TEST(Metrics, Errors) {
  EXPECT_THROW(sia::recall_at_k({{1, 0}}, 0), sia::ArgumentError);
  EXPECT_THROW(sia::recall_at_k({{1, 0}}, 3), sia::ArgumentError);
  EXPECT_THROW(sia::recall_at_k({{0, 0}}, 1), sia::ArgumentError);
  EXPECT_THROW(sia::mrr({{{0, 0}}}), sia::ArgumentError);
  EXPECT_THROW(sia::map({{{1}}, {{0, 0}}}), sia::ArgumentError);
  EXPECT_THROW(sia::mrr({}), sia::ArgumentError);
}

RankedCase random_case(std::mt19937_64& rng, bool single) {
  const std::size_t n = 1 + rng() % 10;
  RankedCase c{std::vector<int>(n, 0)};
  if (single) {
    c.relevance[rng() % n] = 1;
  } else {
    for (auto& r : c.relevance) r = rng() % 3 == 0;
    c.relevance[rng() % n] = 1;
  }
  return c;
}

TEST(Metrics, RecallMonotoneAndCompleteAtN) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 500; ++i) {
    const auto c = random_case(rng, false);
    double prev = 0.0;
    for (std::size_t k = 1; k <= c.n(); ++k) {
      const double r = sia::recall_at_k(c, k);
      EXPECT_GE(r, prev);
      EXPECT_GE(r, 0.0);
      EXPECT_LE(r, 1.0);
      prev = r;
    }
    EXPECT_EQ(sia::recall_at_k(c, c.n()), 1.0);
  }
}

TEST(Metrics, NegativeTailInvariance) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 300; ++i) {
    const auto c = random_case(rng, false);
    auto longer = c;
    longer.relevance.resize(c.n() + 1 + rng() % 5, 0);
    EXPECT_EQ(sia::p_at_1({c}), sia::p_at_1({longer}));
    EXPECT_EQ(sia::reciprocal_rank(c), sia::reciprocal_rank(longer));
    EXPECT_EQ(sia::average_precision(c), sia::average_precision(longer));
  }
}

TEST(Metrics, MapEqualsMrrForSinglePositive) {
  std::mt19937_64 rng(7);
  std::vector<RankedCase> cases;
  for (int i = 0; i < 500; ++i) {
    cases.push_back(random_case(rng, true));
    EXPECT_EQ(sia::average_precision(cases.back()), sia::reciprocal_rank(cases.back()));
  }
  EXPECT_EQ(sia::map(cases), sia::mrr(cases));
}

TEST(Metrics, RangesOnRandomCases) {
  std::mt19937_64 rng(8);
  std::vector<RankedCase> cases;
  for (int i = 0; i < 200; ++i) cases.push_back(random_case(rng, false));
  for (double v : {sia::map(cases), sia::mrr(cases), sia::p_at_1(cases)}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_GT(sia::map(cases), 0.0);
  EXPECT_GE(sia::mrr(cases), sia::p_at_1(cases));
}

TEST(Report, CapsKAtPoolSizeAndHasExactKeys) {
  const std::vector<RankedCase> cases{{{0, 1}}, {{1, 0}}};
  const auto rep = sia::report_from_cases(cases);
  EXPECT_EQ(rep.r10_at_1, 0.5);
  EXPECT_EQ(rep.r10_at_2, 1.0);
  EXPECT_EQ(rep.r10_at_5, 1.0);
  EXPECT_EQ(rep.map, 0.75);
  EXPECT_EQ(rep.num_cases, 2u);
  const auto j = sia::report_to_json(rep);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  EXPECT_EQ(keys, (std::vector<std::string>{"MAP", "MRR", "P@1", "R10@1", "R10@2", "R10@5", "num_cases"}));
}

}  // namespace
