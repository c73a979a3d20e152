#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cxr/metrics/io.hpp"
#include "cxr/metrics/metrics.hpp"

namespace cxr {

/// One evaluated model or ensemble as seen by the report.
struct RunRecord {
  std::string name;     ///< run directory name
  std::string arch;     ///< architecture token; empty for ensembles
  std::string regime;   ///< regime token; empty for ensembles
  std::string method;   ///< ensemble method token; empty for single models
  std::string manifest_hash;
  MetricsSummary metrics;
  std::optional<RocCurve> roc;
  std::filesystem::path dir;

  bool is_ensemble() const { return !method.empty(); }
  bool is_baseline() const { return arch == "custom_cnn"; }
  /// "ResNet50", "DenseNet121", "EfficientNet-B0", "Custom CNN" or the method name.
  std::string model_label() const;
  /// "Finetune", "Frozen", "Scratch".
  std::string mode_label() const;
  /// "ResNet50 (finetune)"; the baseline is just "Custom CNN".
  std::string row_label() const;
};

/// Reads run.json (or ensemble.json), metrics.json and roc.csv from each
/// directory. Runs without metrics.json are skipped with a warning. When
/// several runs share an arch/regime pair the lexicographically last
/// (latest timestamp) is kept. Throws ConfigError if the runs were made
/// from different manifests, unless `force`.
std::vector<RunRecord> load_runs(const std::vector<std::filesystem::path>& dirs, bool force = false);

/// Directories matching shell glob patterns, sorted and de-duplicated.
std::vector<std::filesystem::path> expand_globs(const std::vector<std::string>& patterns);

struct ReportTable {
  std::string name;   ///< file stem
  std::string title;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> sources;  ///< metrics.json each row was read from
};

/// Percentage with 2 decimals ("99.43"); "n/a" for undefined values.
std::string pct(const Metric& m);
/// Signed percentage-point difference ("+3.06"); "n/a" if either side is undefined.
std::string delta_pp(const Metric& from, const Metric& to);
/// Relative change in percent ("-84.21%"); "n/a" when `from` is 0.
std::string relative_change(std::size_t from, std::size_t to);

/// Single models in descending accuracy, ties by row label.
std::vector<const RunRecord*> ranked_models(const std::vector<RunRecord>& runs);

ReportTable overall_table(const std::vector<RunRecord>& runs);
/// Empty when there is no baseline or no transfer model.
std::optional<ReportTable> improvement_table(const std::vector<RunRecord>& runs);
/// Empty when no architecture has both a frozen and a finetune run.
std::optional<ReportTable> regime_table(const std::vector<RunRecord>& runs);
ReportTable confusion_table(const std::vector<RunRecord>& runs);
ReportTable clinical_table(const std::vector<RunRecord>& runs);
ReportTable classwise_table(const std::vector<RunRecord>& runs);
/// Empty when there are no ensemble runs.
std::optional<ReportTable> ensemble_table(const std::vector<RunRecord>& runs);

std::vector<ReportTable> build_tables(const std::vector<RunRecord>& runs);

std::string render_markdown(const ReportTable& table);
std::string render_csv(const ReportTable& table);

/// Writes tables/<name>.{csv,md}, figures/*.png and report.md under `out_dir`.
/// The output depends only on the run artifacts. Returns the report.md path.
std::filesystem::path write_report(const std::vector<RunRecord>& runs,
                                   const std::filesystem::path& out_dir);

}  // namespace cxr
