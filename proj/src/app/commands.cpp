#include "cxr/app/commands.hpp"

#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <set>

#include <json.hpp>

#include "cxr/common/error.hpp"
#include "cxr/common/log.hpp"
#include "cxr/explain/capture.hpp"
#include "cxr/explain/gradcam.hpp"
#include "cxr/metrics/io.hpp"
#include "cxr/report/report.hpp"
#include "cxr/training/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cxr {
namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Creates `<parent>/<stem>` or, if taken, `<stem>_2`, `<stem>_3`, ...
fs::path fresh_dir(const fs::path& parent, const std::string& stem) {
  fs::create_directories(parent);
  for (int k = 1;; ++k) {
    const auto dir = parent / (k == 1 ? stem : stem + "_" + std::to_string(k));
    if (fs::create_directory(dir)) return dir;
  }
}

std::string suffix_for(Split split) { return split == Split::kTest ? "" : "_val"; }

torch::Tensor to_tensor(const Image& img) {
  auto t = torch::empty({1, img.channels, img.height, img.width}, torch::kFloat32);
  std::memcpy(t.data_ptr<float>(), img.data.data(), img.data.size() * sizeof(float));
  return t;
}

struct RunContext {
  RunConfig config;
  json meta;
  SplitManifest manifest;
};

RunContext open_run(const fs::path& run_dir) {
  if (!fs::is_directory(run_dir)) throw DataError("run directory not found: " + run_dir.string());
  RunContext ctx{RunConfig::from_json(read_json(run_dir / "config.json")),
                 read_json(run_dir / "run.json"), {}};
  const auto manifest_path = run_dir / "manifest.csv";
  const auto expected = ctx.meta.value("manifest_hash", "");
  if (file_hash(manifest_path) != expected)
    throw DataError("manifest in " + run_dir.string() + " does not match run.json");
  ctx.manifest = read_manifest(manifest_path);
  return ctx;
}

}  // namespace

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

std::string sanitize_id(const std::string& id) {
  std::string out;
  for (char c : id) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' || c == '_';
    out += ok ? c : '_';
  }
  return out;
}

fs::path cmd_split(const RunConfig& config) {
  config.validate();
  const auto scan = scan_dataset_dir(config.dataset_root, config.class_dirs);
  if (scan.skipped > 0) log::warn(std::to_string(scan.skipped) + " files skipped while scanning");
  const auto manifest = stratified_split(scan.manifest, config.ratios, config.split_seed);
  const auto path = config.manifest_path();
  write_manifest(manifest, path);
  for (Split s : kAssignedSplits)
    log::info(std::string(to_string(s)) + ": " +
              std::to_string(manifest.count(s, Label::kNormal)) + " NORMAL, " +
              std::to_string(manifest.count(s, Label::kPneumonia)) + " PNEUMONIA");
  return path;
}

std::vector<fs::path> cmd_train(const RunConfig& config, const TrainOptions& opts) {
  config.validate();
  const auto manifest_path = config.manifest_path();
  if (!fs::exists(manifest_path))
    throw DataError("manifest " + manifest_path.string() + " not found; run `split` first");
  const auto manifest = read_manifest(manifest_path);
  const auto manifest_hash = file_hash(manifest_path);
  const auto weights = opts.weights.value_or(WeightSource::from_env());
  const auto timestamp = opts.timestamp.empty() ? utc_timestamp() : opts.timestamp;
  const auto& selectors = opts.models.empty() ? config.models : opts.models;

  std::vector<fs::path> dirs;
  for (const auto& sel : selectors) {
    auto spec = default_spec(sel.arch, sel.regime);
    spec.input_size = config.train.preprocess.target_size;
    // Build before creating the directory so a missing weight file leaves no debris.
    auto model = build_model(spec, weights);
    const auto dir = fresh_dir(config.outputs, std::string(to_string(sel.arch)) + "_" +
                                                   std::string(to_string(sel.regime)) + "_" +
                                                   timestamp);
    log::info("training " + sel.token() + " into " + dir.string());
    fs::copy_file(manifest_path, dir / "manifest.csv");
    if (fs::exists(manifest_sidecar_path(manifest_path)))
      fs::copy_file(manifest_sidecar_path(manifest_path), dir / "manifest.json");
    write_json(dir / "config.json", config.to_json());
    write_json(dir / "run.json", {{"arch", std::string(to_string(sel.arch))},
                                  {"regime", std::string(to_string(sel.regime))},
                                  {"spec", spec.to_json()},
                                  {"config_hash", config.hash()},
                                  {"manifest_hash", manifest_hash},
                                  {"seed", config.train.seed},
                                  {"created", timestamp}});
    const auto counts = count_parameters(model);
    json groups = json::array();
    for (const auto& g : counts.by_group)
      groups.push_back({{"name", g.name},
                        {"parameters", g.parameter_count},
                        {"trainable", g.trainable},
                        {"learning_rate", g.learning_rate}});
    write_json(dir / "parameters.json",
               {{"total", counts.total}, {"trainable", counts.trainable}, {"groups", groups}});
    train(model, manifest, config.dataset_root, config.train, dir);
    dirs.push_back(dir);
  }
  return dirs;
}

fs::path cmd_evaluate(const fs::path& run_dir, Split split) {
  if (split != Split::kTest && split != Split::kVal)
    throw ConfigError("evaluate supports the TEST and VAL splits");
  const auto ctx = open_run(run_dir);
  auto records = ctx.manifest.records_in(split);
  if (records.empty()) throw DataError(std::string(to_string(split)) + " split is empty");
  auto model = load_checkpoint(run_dir / "checkpoints" / "best.pt");
  const auto& tc = ctx.config.train;
  const BatchLoader loader(ctx.config.dataset_root, std::move(records), split, tc.preprocess,
                           AugmentPolicy::identity(), tc.seed, tc.workers);
  const auto result = evaluate(model, loader, tc.batch_size);

  const auto sfx = suffix_for(split);
  const auto summary = summarize(result.preds, std::string(to_string(split)));
  write_predictions_csv(run_dir / ("predictions" + sfx + ".csv"), result.preds);
  const auto metrics_path = run_dir / ("metrics" + sfx + ".json");
  write_metrics_json(metrics_path, summary);
  const auto cm = summary.confusion;
  if (cm.tp + cm.fn > 0 && cm.tn + cm.fp > 0)
    write_roc_csv(run_dir / ("roc" + sfx + ".csv"), roc_curve(result.preds));
  log::info(std::string(to_string(split)) + " accuracy " +
            format_double(summary.classification.accuracy.value_or(0.0)));
  return metrics_path;
}

fs::path cmd_gradcam(const fs::path& run_dir, std::optional<std::size_t> per_category) {
  const auto ctx = open_run(run_dir);
  const auto preds_path = run_dir / "predictions.csv";
  if (!fs::exists(preds_path)) throw DataError("no predictions.csv in " + run_dir.string() + "; run `evaluate` first");
  const auto preds = read_predictions_csv(preds_path);
  const auto panel = select_case_panel(preds, per_category.value_or(ctx.config.gradcam.per_category));
  auto model = load_checkpoint(run_dir / "checkpoints" / "best.pt");
  const auto& pp = ctx.config.train.preprocess;

  const auto out_dir = run_dir / "gradcam";
  fs::remove_all(out_dir);
  json panel_json = json::object();
  for (const auto& [category, entries] : panel) {
    const std::string cat(to_string(category));
    panel_json[cat] = json::array();
    for (const auto& e : entries) {
      const auto prepared = prepare_image(load_image(ctx.config.dataset_root / e.id, e.id), pp);
      const auto bundle = capture(model, to_tensor(normalize(prepared, pp)), index_of(e.predicted));
      auto map = upsample(gradcam(bundle), prepared.height, prepared.width);
      const auto rel = fs::path("gradcam") / cat / (sanitize_id(fs::path(e.id).replace_extension().generic_string()) + ".png");
      fs::create_directories((run_dir / rel).parent_path());
      save_png(run_dir / rel, overlay(map, prepared, ctx.config.gradcam.alpha));
      panel_json[cat].push_back({{"id", e.id},
                                 {"confidence", e.confidence},
                                 {"truth", std::string(to_string(e.truth))},
                                 {"predicted", std::string(to_string(e.predicted))},
                                 {"file", rel.generic_string()}});
    }
  }
  const auto path = out_dir / "panel.json";
  write_json(path, panel_json);
  return path;
}

std::vector<fs::path> discover_runs(const fs::path& outputs) {
  std::vector<fs::path> out;
  for (const auto& parent : {outputs, outputs / "ensembles"}) {
    if (!fs::is_directory(parent)) continue;
    for (const auto& e : fs::directory_iterator(parent))
      if (e.is_directory() &&
          (fs::exists(e.path() / "run.json") || fs::exists(e.path() / "ensemble.json")))
        out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

fs::path cmd_ensemble(const EnsembleOptions& opts) {
  std::vector<fs::path> runs = opts.runs;
  if (runs.empty()) {
    // Latest finetune run per architecture.
    std::map<std::string, fs::path> latest;
    for (const auto& dir : discover_runs(opts.outputs)) {
      if (!fs::exists(dir / "run.json")) continue;
      const auto meta = read_json(dir / "run.json");
      if (meta.value("regime", "") != "finetune") continue;
      auto& slot = latest[meta.value("arch", "")];
      if (slot.empty() || dir.filename() > slot.filename()) slot = dir;
    }
    for (const auto& [arch, dir] : latest) runs.push_back(dir);
  }
  if (runs.size() < 2) throw ConfigError("an ensemble needs at least 2 evaluated runs");

  std::vector<MemberPrediction> members;
  json member_json = json::array();
  std::set<std::string> hashes;
  for (const auto& dir : runs) {
    const auto meta = read_json(dir / "run.json");
    hashes.insert(meta.value("manifest_hash", ""));
    MemberPrediction m;
    m.model_name = dir.filename().string();
    m.preds = read_predictions_csv(dir / "predictions.csv");
    std::string weight_source = "metrics_val.json";
    auto weight_file = dir / weight_source;
    if (!fs::exists(weight_file)) {
      weight_source = "metrics.json";
      weight_file = dir / weight_source;
      if (opts.method == EnsembleMethod::kWeightedAverage)
        log::warn(m.model_name + ": no validation metrics, weighting by test F1");
    }
    m.weight_metric = read_metrics_json(weight_file).classification.f1.value_or(0.0);
    member_json.push_back({{"run", m.model_name}, {"weight", m.weight_metric}, {"weight_source", weight_source}});
    members.push_back(std::move(m));
  }
  if (hashes.size() > 1) throw ConfigError("ensemble members come from different manifests");

  const auto preds = combine(opts.method, members);
  const auto timestamp = opts.timestamp.empty() ? utc_timestamp() : opts.timestamp;
  const auto dir = fresh_dir(opts.outputs / "ensembles",
                             std::string(to_string(opts.method)) + "_" + timestamp);
  write_json(dir / "ensemble.json", {{"method", std::string(to_string(opts.method))},
                                     {"members", member_json},
                                     {"manifest_hash", *hashes.begin()},
                                     {"created", timestamp}});
  write_predictions_csv(dir / "predictions.csv", preds);
  const auto summary = summarize(preds, "TEST");
  write_metrics_json(dir / "metrics.json", summary);
  const auto cm = summary.confusion;
  if (cm.tp + cm.fn > 0 && cm.tn + cm.fp > 0) write_roc_csv(dir / "roc.csv", roc_curve(preds));
  return dir;
}

fs::path cmd_report(const ReportOptions& opts) {
  const auto dirs = opts.runs.empty() ? discover_runs(opts.outputs) : expand_globs(opts.runs);
  if (dirs.empty()) throw DataError("no run directories found");
  const auto runs = load_runs(dirs, opts.force);
  return write_report(runs, opts.out_dir.empty() ? opts.outputs / "report" : opts.out_dir);
}

}  // namespace cxr
