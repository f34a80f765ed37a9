#include <gtest/gtest.h>

#include <cmath>

#include "bowelsound/metrics.hpp"
#include "bowelsound/rng.hpp"

using namespace bowelsound;

namespace {

constexpr Label P = Label::P;
constexpr Label NP = Label::NP;

// Mann-Whitney statistic: fraction of (positive, negative) pairs ranked
// correctly, ties counting one half.
double pairwise_auc(const LabelSequence& truth, const std::vector<double>& scores) {
  double good = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    for (std::size_t k = 0; k < truth.size(); ++k) {
      if (truth[i] != P || truth[k] != NP) continue;
      pairs += 1.0;
      good += scores[i] > scores[k] ? 1.0 : scores[i] == scores[k] ? 0.5 : 0.0;
    }
  return good / pairs;
}

}  // namespace

TEST(Metrics, F1FromPublishedPrecisionRecall) {
  const double f1_p = f1_score(0.9654, 0.9169);
  const double f1_np = f1_score(0.5589, 0.7624);
  EXPECT_NEAR(f1_p, 0.9405, 5e-5);
  EXPECT_NEAR(f1_np, 0.6450, 5e-5);
  EXPECT_NEAR((0.6450 + 0.9405) / 2.0, 0.7928, 5e-5);
  EXPECT_NEAR((f1_np + f1_p) / 2.0, 0.7928, 5e-5);
}

TEST(Metrics, ConfusionIdentities) {
  const LabelSequence truth{P, P, P, NP, NP, P, NP, P};
  const LabelSequence pred{P, NP, P, NP, P, P, NP, NP};
  const auto r = compute_metrics(truth, pred);
  EXPECT_EQ(r.counts, (ConfusionCounts{3, 2, 1, 2}));
  EXPECT_EQ(r.counts.total(), truth.size());
  EXPECT_DOUBLE_EQ(r.acc, 5.0 / 8.0);
  EXPECT_DOUBLE_EQ(r.p.rec, 3.0 / 5.0);
  EXPECT_DOUBLE_EQ(r.p.pre, 3.0 / 4.0);
  EXPECT_DOUBLE_EQ(r.np.rec, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.np.pre, 2.0 / 4.0);
  EXPECT_DOUBLE_EQ(r.p.f1, 2 * r.p.pre * r.p.rec / (r.p.pre + r.p.rec));
  EXPECT_NEAR(r.ma_f1, (r.np.f1 + r.p.f1) / 2.0, 1e-12);
  EXPECT_NEAR(r.wt_f1, (5 * r.p.f1 + 3 * r.np.f1) / 8.0, 1e-12);
}

TEST(Metrics, WeightedF1EqualsMacroForBalancedSupport) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    LabelSequence truth, pred;
    for (int i = 0; i < 20; ++i) truth.push_back(i < 10 ? P : NP);
    for (int i = 0; i < 20; ++i) pred.push_back(rng.bernoulli(0.5) ? P : NP);
    const auto r = compute_metrics(truth, pred);
    EXPECT_NEAR(r.wt_f1, r.ma_f1, 1e-12);
  }
}

TEST(Metrics, AucEdgeCases) {
  const LabelSequence truth{NP, NP, P, P};
  EXPECT_DOUBLE_EQ(*roc_auc(truth, std::vector<double>{0.1, 0.2, 0.8, 0.9}), 1.0);
  EXPECT_DOUBLE_EQ(*roc_auc(truth, std::vector<double>{0.5, 0.5, 0.5, 0.5}), 0.5);
  EXPECT_DOUBLE_EQ(*roc_auc(truth, std::vector<double>{0.9, 0.8, 0.2, 0.1}), 0.0);
  EXPECT_FALSE(roc_auc(LabelSequence{P, P}, std::vector<double>{0.1, 0.7}).has_value());
  const auto r = compute_metrics(LabelSequence{NP, NP}, LabelSequence{NP, P}, std::vector<double>{0.2, 0.7});
  EXPECT_FALSE(r.auc.has_value());
}

TEST(Metrics, AucMatchesPairwiseCountAndIsRankInvariant) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    LabelSequence truth;
    std::vector<double> scores;
    const std::size_t n = 5 + rng.below(60);
    for (std::size_t i = 0; i < n; ++i) {
      truth.push_back(rng.bernoulli(0.4) ? P : NP);
      scores.push_back(std::round(rng.uniform() * 10.0) / 10.0);  // coarse grid forces ties
    }
    if (!roc_auc(truth, scores)) continue;
    EXPECT_NEAR(*roc_auc(truth, scores), pairwise_auc(truth, scores), 1e-12);
    std::vector<double> transformed;
    for (double s : scores) transformed.push_back(std::exp(3.0 * s) - 7.0);
    EXPECT_NEAR(*roc_auc(truth, transformed), *roc_auc(truth, scores), 1e-12);
  }
}

TEST(Metrics, PooledConfusionIsSumOfParts) {
  const LabelSequence t1{P, NP, P}, p1{P, P, NP}, t2{NP, NP}, p2{NP, P};
  LabelSequence t = t1, p = p1;
  t.insert(t.end(), t2.begin(), t2.end());
  p.insert(p.end(), p2.begin(), p2.end());
  EXPECT_EQ(count_confusion(t, p), count_confusion(t1, p1) + count_confusion(t2, p2));
}

TEST(Metrics, LengthMismatch) {
  try {
    compute_metrics(LabelSequence{P}, LabelSequence{P, NP});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::LengthMismatch);
  }
}

TEST(Metrics, ReportFormats) {
  const auto r = compute_metrics(LabelSequence{P, NP, P}, LabelSequence{P, NP, NP}, std::vector<double>{0.9, 0.2, 0.4});
  const auto row = format_report_row("pooled", r);
  EXPECT_NE(row.find("0.6667"), std::string::npos);
  const auto kv = format_report_kv("x", r);
  EXPECT_NE(kv.find("x.acc = "), std::string::npos);
  EXPECT_NE(kv.find("x.fn = 1"), std::string::npos);
  EXPECT_NE(kv.find("x.auc = 1"), std::string::npos);
}
