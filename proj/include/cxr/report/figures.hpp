#pragma once

#include <filesystem>
#include <vector>

#include "cxr/report/report.hpp"

namespace cxr {

/// Grouped bars (accuracy, precision, recall, F1, AUC) per single model, in
/// ranked order.
void write_metric_bars(const std::vector<RunRecord>& runs, const std::filesystem::path& png);

/// ROC curves of every run that has roc.csv, with the chance diagonal.
/// Returns false (and writes nothing) if no run has a curve.
bool write_roc_overlay(const std::vector<RunRecord>& runs, const std::filesystem::path& png);

/// One row per case category from `<run>/gradcam/panel.json`, overlays tiled
/// left to right. Returns false if the run has no panel.
bool write_gradcam_montage(const RunRecord& run, const std::filesystem::path& png);

}  // namespace cxr
