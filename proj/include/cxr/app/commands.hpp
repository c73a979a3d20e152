#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cxr/data/manifest.hpp"
#include "cxr/ensemble/ensemble.hpp"
#include "cxr/models/model.hpp"
#include "cxr/report/config.hpp"

namespace cxr {

/// UTC "YYYYmmdd-HHMMSS".
std::string utc_timestamp();

/// Scans the dataset, splits it and writes the manifest (CSV + sidecar) to
/// config.manifest_path(). Returns the manifest path.
std::filesystem::path cmd_split(const RunConfig& config);

struct TrainOptions {
  std::vector<ModelSelector> models;  ///< empty: every model in the config
  std::optional<WeightSource> weights;  ///< default: WeightSource::from_env()
  std::string timestamp;              ///< default: utc_timestamp()
};

/// One new run directory `<outputs>/<arch>_<regime>_<timestamp>` per model
/// (a numeric suffix avoids collisions, nothing is overwritten). Each holds
/// config.json, run.json, history.csv, stop.json and checkpoints/best.pt.
std::vector<std::filesystem::path> cmd_train(const RunConfig& config, const TrainOptions& opts = {});

/// Evaluates the best checkpoint on `split` (TEST or VAL) and writes
/// predictions.csv, metrics.json and roc.csv at the run root. VAL results
/// carry a `_val` suffix. Returns the metrics file.
std::filesystem::path cmd_evaluate(const std::filesystem::path& run_dir, Split split = Split::kTest);

/// Grad-CAM overlays for the case panel of the TEST predictions:
/// gradcam/<category>/<id>.png plus gradcam/panel.json. Returns panel.json.
std::filesystem::path cmd_gradcam(const std::filesystem::path& run_dir,
                                  std::optional<std::size_t> per_category = std::nullopt);

struct EnsembleOptions {
  EnsembleMethod method = EnsembleMethod::kSimpleAverage;
  std::vector<std::filesystem::path> runs;  ///< empty: latest finetune run per architecture
  std::filesystem::path outputs;
  std::string timestamp;
};

/// Combines member TEST predictions into `<outputs>/ensembles/<method>_<timestamp>/`.
/// Weighted averaging uses each member's validation F1 (metrics_val.json),
/// falling back to the test F1 with a warning.
std::filesystem::path cmd_ensemble(const EnsembleOptions& opts);

struct ReportOptions {
  std::vector<std::string> runs;  ///< globs; empty: every run under outputs
  std::filesystem::path outputs;
  std::filesystem::path out_dir;  ///< default: <outputs>/report
  bool force = false;
};

std::filesystem::path cmd_report(const ReportOptions& opts);

/// Run directories (with run.json or ensemble.json) directly under `outputs`
/// and `outputs/ensembles`.
std::vector<std::filesystem::path> discover_runs(const std::filesystem::path& outputs);

/// Record id made safe for a file name: path separators and other unusual
/// characters become '_'.
std::string sanitize_id(const std::string& id);

}  // namespace cxr
