#include "cxr/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cxr/common/error.hpp"

namespace cxr {

void PredictionSet::validate() const {
  const std::size_t n = y_true.size();
  if (ids.size() != n || y_prob.size() != n || (!y_pred.empty() && y_pred.size() != n))
    throw InvalidArgument("prediction set fields have mismatched lengths");
  for (double p : y_prob)
    if (!std::isfinite(p) || p < 0.0 || p > 1.0)
      throw InvalidArgument("prediction probabilities must lie in [0, 1]");
}

Label decide(double positive_prob, double threshold) {
  return positive_prob >= threshold ? Label::kPneumonia : Label::kNormal;
}

void apply_threshold(PredictionSet& preds, double threshold) {
  preds.y_pred.resize(preds.y_prob.size());
  for (std::size_t i = 0; i < preds.y_prob.size(); ++i)
    preds.y_pred[i] = decide(preds.y_prob[i], threshold);
}

PredictionSet invert_labels(const PredictionSet& preds) {
  PredictionSet out = preds;
  for (auto& l : out.y_true) l = invert(l);
  for (auto& l : out.y_pred) l = invert(l);
  for (auto& p : out.y_prob) p = 1.0 - p;
  return out;
}

Metric safe_ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

Metric harmonic_mean(Metric a, Metric b) {
  if (!a || !b || (*a + *b) == 0.0) return std::nullopt;
  return 2.0 * *a * *b / (*a + *b);
}

ConfusionMatrix confusion(const PredictionSet& preds) {
  preds.validate();
  if (preds.size() == 0) throw InvalidArgument("confusion matrix of an empty prediction set");
  if (preds.y_pred.size() != preds.size()) throw InvalidArgument("y_pred is not populated");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool actual = preds.y_true[i] == Label::kPneumonia;
    const bool called = preds.y_pred[i] == Label::kPneumonia;
    if (actual && called) ++cm.tp;
    else if (!actual && !called) ++cm.tn;
    else if (called) ++cm.fp;
    else ++cm.fn;
  }
  return cm;
}

ConfusionMatrix invert(const ConfusionMatrix& cm) { return {cm.tn, cm.tp, cm.fn, cm.fp}; }

ClassificationReport classification_report(const ConfusionMatrix& cm, Metric auc) {
  ClassificationReport r;
  r.accuracy = safe_ratio(cm.tp + cm.tn, cm.n());
  r.precision = safe_ratio(cm.tp, cm.tp + cm.fp);
  r.recall = safe_ratio(cm.tp, cm.tp + cm.fn);
  r.f1 = harmonic_mean(r.precision, r.recall);
  r.auc = auc;
  return r;
}

ClassificationReport classification_report(const ConfusionMatrix& cm, const PredictionSet& preds) {
  if (confusion(preds) != cm)
    throw InvalidArgument("confusion matrix is inconsistent with the prediction set");
  const bool has_pos = std::count(preds.y_true.begin(), preds.y_true.end(), Label::kPneumonia) > 0;
  const bool has_neg = std::count(preds.y_true.begin(), preds.y_true.end(), Label::kNormal) > 0;
  Metric auc;
  if (has_pos && has_neg) auc = roc_and_auc(preds).second;
  return classification_report(cm, auc);
}

ClinicalReport clinical_report(const ConfusionMatrix& cm) {
  ClinicalReport r;
  r.sensitivity = safe_ratio(cm.tp, cm.tp + cm.fn);
  r.specificity = safe_ratio(cm.tn, cm.tn + cm.fp);
  r.ppv = safe_ratio(cm.tp, cm.tp + cm.fp);
  r.npv = safe_ratio(cm.tn, cm.tn + cm.fn);
  if (r.sensitivity && r.specificity) r.balance_pp = std::abs(*r.sensitivity - *r.specificity) * 100.0;
  return r;
}

PerClassMetrics per_class_metrics(const ConfusionMatrix& cm) {
  const auto pos = classification_report(cm);
  const auto neg = classification_report(invert(cm));
  return {{neg.precision, neg.recall, neg.f1}, {pos.precision, pos.recall, pos.f1}};
}

PerClassMetrics per_class_metrics(const PredictionSet& preds) {
  const auto pos = classification_report(confusion(preds));
  const auto neg = classification_report(confusion(invert_labels(preds)));
  return {{neg.precision, neg.recall, neg.f1}, {pos.precision, pos.recall, pos.f1}};
}

RocCurve roc_curve(const PredictionSet& preds) {
  preds.validate();
  std::size_t n_pos = 0;
  for (auto l : preds.y_true) n_pos += l == Label::kPneumonia;
  const std::size_t n_neg = preds.size() - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw InvalidArgument("ROC requires both classes in y_true");

  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds.y_prob[a] > preds.y_prob[b]; });

  RocCurve roc;
  roc.thresholds.push_back(std::numeric_limits<double>::infinity());
  roc.fpr.push_back(0.0);
  roc.tpr.push_back(0.0);
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double score = preds.y_prob[order[k]];
    // Consume the whole block of tied scores before emitting a point.
    while (k < order.size() && preds.y_prob[order[k]] == score) {
      if (preds.y_true[order[k]] == Label::kPneumonia) ++tp;
      else ++fp;
      ++k;
    }
    roc.thresholds.push_back(score);
    roc.fpr.push_back(static_cast<double>(fp) / static_cast<double>(n_neg));
    roc.tpr.push_back(static_cast<double>(tp) / static_cast<double>(n_pos));
  }
  return roc;
}

double auc_trapezoid(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.fpr.size(); ++i)
    area += (curve.fpr[i] - curve.fpr[i - 1]) * (curve.tpr[i] + curve.tpr[i - 1]) * 0.5;
  return area;
}

std::pair<RocCurve, double> roc_and_auc(const PredictionSet& preds) {
  auto curve = roc_curve(preds);
  const double auc = auc_trapezoid(curve);
  return {std::move(curve), auc};
}

double auc_pairwise_oracle(const PredictionSet& preds) {
  preds.validate();
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds.y_true[i] != Label::kPneumonia) continue;
    for (std::size_t j = 0; j < preds.size(); ++j) {
      if (preds.y_true[j] != Label::kNormal) continue;
      ++pairs;
      if (preds.y_prob[i] > preds.y_prob[j]) wins += 1.0;
      else if (preds.y_prob[i] == preds.y_prob[j]) wins += 0.5;
    }
  }
  if (pairs == 0) throw InvalidArgument("AUC requires both classes in y_true");
  return wins / static_cast<double>(pairs);
}

std::map<std::string, std::string> undefined_reasons(const ConfusionMatrix& cm) {
  std::map<std::string, std::string> out;
  if (cm.n() == 0) out["accuracy"] = "empty evaluation set";
  if (cm.tp + cm.fp == 0) {
    out["precision"] = "no positive predictions (TP + FP = 0)";
    out["ppv"] = out["precision"];
  }
  if (cm.tp + cm.fn == 0) {
    out["recall"] = "no positive cases (TP + FN = 0)";
    out["sensitivity"] = out["recall"];
  }
  if (cm.tn + cm.fp == 0) out["specificity"] = "no negative cases (TN + FP = 0)";
  if (cm.tn + cm.fn == 0) out["npv"] = "no negative predictions (TN + FN = 0)";
  const auto r = classification_report(cm);
  if (!r.f1) out["f1"] = "precision or recall undefined or both zero";
  if (out.count("sensitivity") || out.count("specificity"))
    out["balance_pp"] = "sensitivity or specificity undefined";
  return out;
}

}  // namespace cxr
