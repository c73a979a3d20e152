#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cxr/data/labels.hpp"

namespace cxr {

/// Per-record predictions. PNEUMONIA is the positive class; y_prob is the
/// positive-class probability.
struct PredictionSet {
  std::vector<std::string> ids;
  std::vector<Label> y_true;
  std::vector<double> y_prob;
  std::vector<Label> y_pred;

  std::size_t size() const { return y_true.size(); }
  /// Throws InvalidArgument on length mismatch or probabilities outside [0,1].
  void validate() const;
};

/// Decision rule shared by single models and averaging ensembles:
/// p >= threshold is PNEUMONIA (ties go to the positive class).
Label decide(double positive_prob, double threshold = 0.5);

/// Fills y_pred from y_prob using `decide`.
void apply_threshold(PredictionSet& preds, double threshold = 0.5);

/// Swaps the roles of the two classes (labels inverted, p -> 1 - p).
PredictionSet invert_labels(const PredictionSet& preds);

struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  std::size_t n() const { return tp + tn + fp + fn; }
  std::size_t errors() const { return fp + fn; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// Metric that may be undefined (zero denominator). Undefined values are
/// reported as null, never as 0 or NaN.
using Metric = std::optional<double>;

/// Ratio, or nullopt when the denominator is zero.
Metric safe_ratio(std::size_t num, std::size_t den);
/// Harmonic mean; nullopt if either input is undefined or both are zero.
Metric harmonic_mean(Metric a, Metric b);

struct ClassificationReport {
  Metric accuracy, precision, recall, f1, auc;
};

struct ClinicalReport {
  Metric sensitivity, specificity, ppv, npv;
  Metric balance_pp;  ///< |sensitivity - specificity| in percentage points
};

struct ClassMetrics {
  Metric precision, recall, f1;
};

struct PerClassMetrics {
  ClassMetrics normal;
  ClassMetrics pneumonia;
};

struct RocCurve {
  std::vector<double> thresholds;  ///< descending; first is +inf
  std::vector<double> fpr;
  std::vector<double> tpr;
};

/// Throws InvalidArgument on an empty set or a missing y_pred.
ConfusionMatrix confusion(const PredictionSet& preds);

/// Label-inverted confusion matrix (TP<->TN, FP<->FN).
ConfusionMatrix invert(const ConfusionMatrix& cm);

/// Threshold-only metrics; auc is left as supplied.
ClassificationReport classification_report(const ConfusionMatrix& cm, Metric auc = std::nullopt);

/// Full report. `cm` must equal confusion(preds); AUC is computed when both
/// classes are present and null otherwise.
ClassificationReport classification_report(const ConfusionMatrix& cm, const PredictionSet& preds);

ClinicalReport clinical_report(const ConfusionMatrix& cm);

PerClassMetrics per_class_metrics(const ConfusionMatrix& cm);
PerClassMetrics per_class_metrics(const PredictionSet& preds);

/// ROC swept over the unique scores in descending order, anchored at (0,0)
/// and (1,1). Throws InvalidArgument unless both classes occur in y_true.
RocCurve roc_curve(const PredictionSet& preds);
double auc_trapezoid(const RocCurve& curve);
std::pair<RocCurve, double> roc_and_auc(const PredictionSet& preds);

/// P(score_pos > score_neg) + 0.5 * P(tie) by enumerating every pair.
double auc_pairwise_oracle(const PredictionSet& preds);

/// Human-readable reason for each undefined metric, keyed by metric name.
std::map<std::string, std::string> undefined_reasons(const ConfusionMatrix& cm);

}  // namespace cxr
