#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

#include <gtest/gtest.h>

#include "cxr/common/error.hpp"
#include "cxr/metrics/io.hpp"
#include "cxr/metrics/metrics.hpp"
#include "test_util.hpp"

using namespace cxr;
using cxr::testing::TempDir;

namespace {

// Published two-decimal percentage vs a full-precision fraction.
void expect_pct(const Metric& m, double published) {
  ASSERT_TRUE(m.has_value());
  EXPECT_NEAR(*m * 100.0, published, 0.005);
}

// Builds a prediction set with the given confusion counts.
PredictionSet from_counts(const ConfusionMatrix& cm) {
  PredictionSet p;
  auto add = [&](std::size_t count, Label truth, Label pred) {
    for (std::size_t i = 0; i < count; ++i) {
      p.ids.push_back("x" + std::to_string(p.ids.size()));
      p.y_true.push_back(truth);
      p.y_pred.push_back(pred);
      p.y_prob.push_back(pred == Label::kPneumonia ? 0.9 : 0.1);
    }
  };
  add(cm.tp, Label::kPneumonia, Label::kPneumonia);
  add(cm.tn, Label::kNormal, Label::kNormal);
  add(cm.fp, Label::kNormal, Label::kPneumonia);
  add(cm.fn, Label::kPneumonia, Label::kNormal);
  return p;
}

// Independent brute-force count.
ConfusionMatrix count_by_hand(const PredictionSet& p) {
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool t = p.y_true[i] == Label::kPneumonia;
    const bool y = p.y_pred[i] == Label::kPneumonia;
    if (t && y) ++cm.tp;
    else if (!t && !y) ++cm.tn;
    else if (!t && y) ++cm.fp;
    else ++cm.fn;
  }
  return cm;
}

const ConfusionMatrix kResnetFt{386, 134, 1, 2};
const ConfusionMatrix kDensenetFt{385, 132, 3, 3};
const ConfusionMatrix kCustomCnn{376, 128, 7, 12};

}  // namespace

TEST(Metrics, ClassificationMatchesPublishedRows) {
  const auto r = classification_report(kResnetFt);
  expect_pct(r.accuracy, 99.43);
  expect_pct(r.precision, 99.74);
  expect_pct(r.recall, 99.48);
  expect_pct(r.f1, 99.61);

  const auto d = classification_report(kDensenetFt);
  expect_pct(d.accuracy, 98.85);
  expect_pct(d.precision, 99.23);
  expect_pct(d.recall, 99.23);
  expect_pct(d.f1, 99.23);

  const auto c = classification_report(kCustomCnn);
  expect_pct(c.accuracy, 96.37);
  expect_pct(c.precision, 98.17);
  expect_pct(c.recall, 96.91);
  expect_pct(c.f1, 97.54);
}

TEST(Metrics, RemainingPublishedOverallRows) {
  // Frozen rows: confusion counts from the confusion breakdown.
  const auto dn = classification_report(ConfusionMatrix{372, 122, 13, 16});
  expect_pct(dn.accuracy, 94.46);
  expect_pct(dn.f1, 96.25);
  const auto rn = classification_report(ConfusionMatrix{370, 116, 19, 18});
  expect_pct(rn.accuracy, 92.93);
  expect_pct(rn.precision, 95.12);
  const auto ef = classification_report(ConfusionMatrix{345, 130, 5, 43});
  expect_pct(ef.accuracy, 90.82);
  expect_pct(ef.precision, 98.57);
  expect_pct(ef.recall, 88.92);
  expect_pct(ef.f1, 93.50);
}

TEST(Metrics, ClinicalMatchesPublishedRows) {
  const auto r = clinical_report(kResnetFt);
  expect_pct(r.sensitivity, 99.48);
  expect_pct(r.specificity, 99.26);
  expect_pct(r.ppv, 99.74);
  expect_pct(r.npv, 98.53);

  const auto d = clinical_report(kDensenetFt);
  expect_pct(d.npv, 97.78);
  ASSERT_TRUE(d.balance_pp);
  EXPECT_NEAR(*d.balance_pp, 1.45, 0.005);

  const auto c = clinical_report(kCustomCnn);
  expect_pct(c.sensitivity, 96.91);
  expect_pct(c.specificity, 94.81);
  expect_pct(c.ppv, 98.17);
  expect_pct(c.npv, 91.43);
  ASSERT_TRUE(c.balance_pp);
  EXPECT_NEAR(*c.balance_pp, 2.09, 0.005);
}

TEST(Metrics, BalanceIsFullPrecisionDifference) {
  // 386/388 - 134/135 = 0.2252..pp; the published 0.22 is the difference of
  // the rounded columns, which the full-precision rule does not reproduce.
  const auto r = clinical_report(kResnetFt);
  ASSERT_TRUE(r.balance_pp);
  const double expected = std::abs(386.0 / 388.0 - 134.0 / 135.0) * 100.0;
  EXPECT_DOUBLE_EQ(*r.balance_pp, expected);
  EXPECT_NEAR(*r.balance_pp, 0.2253, 5e-5);
}

TEST(Metrics, PerClassMatchesPublishedRows) {
  const auto r = per_class_metrics(kResnetFt);
  expect_pct(r.normal.precision, 98.53);
  expect_pct(r.normal.recall, 99.26);
  expect_pct(r.normal.f1, 98.89);
  expect_pct(r.pneumonia.precision, 99.74);
  expect_pct(r.pneumonia.recall, 99.48);
  expect_pct(r.pneumonia.f1, 99.61);

  const auto c = per_class_metrics(kCustomCnn);
  expect_pct(c.normal.precision, 91.43);
  expect_pct(c.normal.recall, 94.81);
  expect_pct(c.normal.f1, 93.09);
}

TEST(Metrics, TrivialPerfectMatrix) {
  const auto r = classification_report(ConfusionMatrix{1, 1, 0, 0});
  for (const auto& m : {r.accuracy, r.precision, r.recall, r.f1}) {
    ASSERT_TRUE(m);
    EXPECT_EQ(*m, 1.0);
  }
}

TEST(Metrics, NoPositivesLeavesSensitivityUndefined) {
  const ConfusionMatrix cm{0, 7, 0, 0};
  const auto c = clinical_report(cm);
  ASSERT_TRUE(c.specificity);
  EXPECT_EQ(*c.specificity, 1.0);
  EXPECT_FALSE(c.sensitivity);
  EXPECT_FALSE(c.ppv);
  EXPECT_FALSE(c.balance_pp);
  const auto r = classification_report(cm);
  EXPECT_FALSE(r.precision);
  EXPECT_FALSE(r.recall);
  EXPECT_FALSE(r.f1);
  const auto reasons = undefined_reasons(cm);
  EXPECT_TRUE(reasons.count("sensitivity"));
  EXPECT_FALSE(reasons.count("specificity"));
}

TEST(Metrics, UndefinedSerializesAsNull) {
  TempDir tmp;
  const auto s = summarize(ConfusionMatrix{0, 7, 0, 0});
  write_metrics_json(tmp / "m.json", s);
  const auto j = to_json(s);
  EXPECT_TRUE(j.dump().find("NaN") == std::string::npos);
  const auto back = read_metrics_json(tmp / "m.json");
  EXPECT_FALSE(back.clinical.sensitivity);
  EXPECT_EQ(back.confusion, s.confusion);
}

TEST(Metrics, ConfusionFromPredictionsMatchesHandCount) {
  const auto p = from_counts(kResnetFt);
  EXPECT_EQ(confusion(p), kResnetFt);
  EXPECT_EQ(confusion(p).n(), 523u);
  EXPECT_EQ(confusion(p).errors(), 3u);
}

TEST(Metrics, InvalidPredictionSetsRejected) {
  PredictionSet empty;
  EXPECT_THROW(confusion(empty), InvalidArgument);
  PredictionSet p;
  p.ids = {"a"};
  p.y_true = {Label::kNormal};
  p.y_prob = {1.5};
  p.y_pred = {Label::kPneumonia};
  EXPECT_THROW(p.validate(), InvalidArgument);
  p.y_prob = {0.5};
  p.y_pred.clear();
  EXPECT_THROW(confusion(p), InvalidArgument);
}

TEST(Metrics, DecisionRuleTiesGoPositive) {
  EXPECT_EQ(decide(0.5), Label::kPneumonia);
  EXPECT_EQ(decide(std::nextafter(0.5, 0.0)), Label::kNormal);
  EXPECT_EQ(decide(0.0), Label::kNormal);
  EXPECT_EQ(decide(1.0), Label::kPneumonia);
}

TEST(MetricsProperty, ConfusionTotalsAndPermutationInvariance) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    auto p = cxr::testing::random_predictions(2 + rng.below(300), rng, trial % 2 == 0);
    const auto cm = confusion(p);
    EXPECT_EQ(cm.n(), p.size());
    EXPECT_EQ(cm, count_by_hand(p));

    std::vector<std::size_t> order(p.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(std::span<std::size_t>(order), rng);
    PredictionSet q;
    for (auto i : order) {
      q.ids.push_back(p.ids[i]);
      q.y_true.push_back(p.y_true[i]);
      q.y_prob.push_back(p.y_prob[i]);
      q.y_pred.push_back(p.y_pred[i]);
    }
    EXPECT_EQ(confusion(q), cm);
    const auto a = classification_report(cm, p);
    const auto b = classification_report(confusion(q), q);
    EXPECT_EQ(a.accuracy, b.accuracy);
    EXPECT_EQ(a.f1, b.f1);
    ASSERT_TRUE(a.auc && b.auc);
    EXPECT_NEAR(*a.auc, *b.auc, 1e-12);
  }
}

TEST(MetricsProperty, F1IdentityFromStoredPrecisionRecall) {
  Rng rng(12);
  for (int trial = 0; trial < 500; ++trial) {
    ConfusionMatrix cm{rng.below(50), rng.below(50), rng.below(50), rng.below(50)};
    if (cm.n() == 0) continue;
    const auto r = classification_report(cm);
    if (!r.precision || !r.recall || *r.precision + *r.recall == 0.0) {
      EXPECT_FALSE(r.f1);
      continue;
    }
    ASSERT_TRUE(r.f1);
    const double p = *r.precision, q = *r.recall;
    EXPECT_NEAR(*r.f1, 2 * p * q / (p + q), 1e-12);
  }
}

TEST(MetricsProperty, LabelInversionDuality) {
  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = cxr::testing::random_predictions(2 + rng.below(100), rng);
    const auto inv = invert_labels(p);
    const auto cm = confusion(p);
    const auto icm = confusion(inv);
    EXPECT_EQ(icm, invert(cm));
    const auto a = clinical_report(cm);
    const auto b = clinical_report(icm);
    EXPECT_EQ(a.specificity, b.sensitivity);
    EXPECT_EQ(a.sensitivity, b.specificity);

    // NORMAL-class metrics are the positive-class metrics of the inverted run.
    const auto pc = per_class_metrics(p);
    const auto ir = classification_report(icm);
    EXPECT_EQ(pc.normal.precision, ir.precision);
    EXPECT_EQ(pc.normal.recall, ir.recall);
    EXPECT_EQ(pc.normal.f1, ir.f1);
    const auto r = classification_report(cm);
    EXPECT_EQ(pc.pneumonia.precision, r.precision);
    EXPECT_EQ(pc.pneumonia.f1, r.f1);
  }
}

TEST(MetricsProperty, SymmetricPerfectToy) {
  PredictionSet p;
  for (int i = 0; i < 6; ++i) {
    p.ids.push_back(std::to_string(i));
    p.y_true.push_back(i % 2 ? Label::kPneumonia : Label::kNormal);
    p.y_prob.push_back(i % 2 ? 0.8 : 0.2);
  }
  apply_threshold(p);
  const auto pc = per_class_metrics(p);
  for (const auto& m : {pc.normal.precision, pc.normal.recall, pc.normal.f1, pc.pneumonia.precision,
                        pc.pneumonia.recall, pc.pneumonia.f1})
    EXPECT_EQ(m, Metric(1.0));
}

TEST(MetricsProperty, ThresholdMonotonicity) {
  Rng rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    auto p = cxr::testing::random_predictions(2 + rng.below(200), rng, trial % 3 == 0);
    ConfusionMatrix prev{};
    bool first = true;
    for (int k = 0; k <= 20; ++k) {
      apply_threshold(p, k / 20.0);
      const auto cm = confusion(p);
      if (!first) {
        EXPECT_LE(cm.tp, prev.tp);
        EXPECT_LE(cm.fp, prev.fp);
      }
      prev = cm;
      first = false;
    }
  }
}

TEST(Auc, SeparatedAndInvertedScores) {
  PredictionSet p;
  for (int i = 0; i < 10; ++i) {
    p.ids.push_back(std::to_string(i));
    p.y_true.push_back(i < 5 ? Label::kNormal : Label::kPneumonia);
    p.y_prob.push_back(i / 10.0);
  }
  apply_threshold(p);
  EXPECT_DOUBLE_EQ(roc_and_auc(p).second, 1.0);
  for (auto& s : p.y_prob) s = 1.0 - s;
  EXPECT_DOUBLE_EQ(roc_and_auc(p).second, 0.0);
  for (auto& s : p.y_prob) s = 0.5;
  EXPECT_DOUBLE_EQ(roc_and_auc(p).second, 0.5);
  EXPECT_DOUBLE_EQ(auc_pairwise_oracle(p), 0.5);
}

TEST(Auc, SingleClassIsAnError) {
  PredictionSet p;
  p.ids = {"a", "b"};
  p.y_true = {Label::kNormal, Label::kNormal};
  p.y_prob = {0.1, 0.7};
  apply_threshold(p);
  EXPECT_THROW(roc_curve(p), InvalidArgument);
  // The full report degrades to a null AUC rather than failing.
  EXPECT_FALSE(classification_report(confusion(p), p).auc);
}

TEST(Auc, CurveShape) {
  Rng rng(15);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = cxr::testing::random_predictions(2 + rng.below(100), rng, trial % 2 == 0);
    const auto roc = roc_curve(p);
    ASSERT_EQ(roc.thresholds.size(), roc.fpr.size());
    ASSERT_EQ(roc.thresholds.size(), roc.tpr.size());
    EXPECT_EQ(roc.thresholds.front(), std::numeric_limits<double>::infinity());
    EXPECT_EQ(roc.fpr.front(), 0.0);
    EXPECT_EQ(roc.tpr.front(), 0.0);
    EXPECT_EQ(roc.fpr.back(), 1.0);
    EXPECT_EQ(roc.tpr.back(), 1.0);
    for (std::size_t i = 1; i < roc.thresholds.size(); ++i) {
      EXPECT_LT(roc.thresholds[i], roc.thresholds[i - 1]);
      EXPECT_GE(roc.fpr[i], roc.fpr[i - 1]);
      EXPECT_GE(roc.tpr[i], roc.tpr[i - 1]);
    }
  }
}

TEST(AucProperty, TrapezoidEqualsPairwiseOracle) {
  Rng rng(16);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = cxr::testing::random_predictions(2 + rng.below(499), rng, trial % 2 == 1);
    const double a = roc_and_auc(p).second;
    EXPECT_NEAR(a, auc_pairwise_oracle(p), 1e-9) << "trial " << trial;
  }
}

TEST(MetricsIo, PredictionsAndRocRoundTrip) {
  TempDir tmp;
  Rng rng(17);
  auto p = cxr::testing::random_predictions(50, rng);
  p.ids[3] = "NORMAL/has,comma.jpeg";
  write_predictions_csv(tmp / "p.csv", p);
  const auto q = read_predictions_csv(tmp / "p.csv");
  EXPECT_EQ(q.ids, p.ids);
  EXPECT_EQ(q.y_true, p.y_true);
  EXPECT_EQ(q.y_prob, p.y_prob);
  EXPECT_EQ(q.y_pred, p.y_pred);

  const auto roc = roc_curve(p);
  write_roc_csv(tmp / "roc.csv", roc);
  const auto back = read_roc_csv(tmp / "roc.csv");
  EXPECT_EQ(back.thresholds, roc.thresholds);
  EXPECT_EQ(back.fpr, roc.fpr);
  EXPECT_EQ(back.tpr, roc.tpr);
}

TEST(MetricsIo, SummaryRoundTrip) {
  TempDir tmp;
  Rng rng(18);
  const auto p = cxr::testing::random_predictions(80, rng);
  const auto s = summarize(p, "VAL");
  write_metrics_json(tmp / "metrics.json", s);
  const auto b = read_metrics_json(tmp / "metrics.json");
  EXPECT_EQ(b.split, "VAL");
  EXPECT_EQ(b.confusion, s.confusion);
  EXPECT_EQ(b.classification.accuracy, s.classification.accuracy);
  EXPECT_EQ(b.classification.auc, s.classification.auc);
  EXPECT_EQ(b.clinical.npv, s.clinical.npv);
  EXPECT_EQ(b.per_class.normal.f1, s.per_class.normal.f1);
}
