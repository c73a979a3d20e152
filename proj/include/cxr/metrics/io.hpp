#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "cxr/metrics/metrics.hpp"

namespace cxr {

/// Everything written to metrics.json for one evaluated prediction set.
struct MetricsSummary {
  std::string split = "TEST";
  ConfusionMatrix confusion;
  ClassificationReport classification;
  ClinicalReport clinical;
  PerClassMetrics per_class;
};

MetricsSummary summarize(const PredictionSet& preds, std::string split = "TEST");
/// Threshold metrics only (AUC null): used when just the counts are known.
MetricsSummary summarize(const ConfusionMatrix& cm, std::string split = "TEST");

nlohmann::json to_json(const MetricsSummary& summary);
MetricsSummary metrics_from_json(const nlohmann::json& j);

void write_metrics_json(const std::filesystem::path& path, const MetricsSummary& summary);
MetricsSummary read_metrics_json(const std::filesystem::path& path);

/// predictions.csv: id,y_true,y_prob,y_pred. Probabilities are written with
/// round-trip precision.
void write_predictions_csv(const std::filesystem::path& path, const PredictionSet& preds);
PredictionSet read_predictions_csv(const std::filesystem::path& path);

/// roc.csv: threshold,fpr,tpr
void write_roc_csv(const std::filesystem::path& path, const RocCurve& roc);
RocCurve read_roc_csv(const std::filesystem::path& path);

std::string format_double(double v);

}  // namespace cxr
