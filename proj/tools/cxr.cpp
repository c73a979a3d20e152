// Command-line front end: split, train, evaluate, gradcam, ensemble, report, schema.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cxr/app/commands.hpp"
#include "cxr/common/error.hpp"
#include "cxr/common/log.hpp"
#include "cxr/report/report.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kConfigFailure = 1;
constexpr int kRuntimeFailure = 2;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string log_level = "info";
};

cxr::RunConfig load_config(const Globals& g) {
  if (g.config.empty()) throw cxr::ConfigError("--config is required for this command");
  auto cfg = cxr::load_run_config(g.config);
  if (g.seed) cfg.override_seed(*g.seed);
  if (!g.out.empty()) cfg.outputs = fs::absolute(g.out).lexically_normal();
  cfg.validate();
  return cfg;
}

// Where runs live for commands that may work without a config.
fs::path outputs_dir(const Globals& g) {
  if (!g.out.empty()) return g.out;
  if (!g.config.empty()) return load_config(g).outputs;
  return "runs";
}

cxr::log::Level parse_level(const std::string& s) {
  if (s == "debug") return cxr::log::Level::kDebug;
  if (s == "info") return cxr::log::Level::kInfo;
  if (s == "warn") return cxr::log::Level::kWarn;
  if (s == "error") return cxr::log::Level::kError;
  throw cxr::ConfigError("unknown log level '" + s + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chest X-ray pneumonia classification experiments"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Run configuration (JSON)");
  app.add_option("--seed", g.seed, "Override the split and training seed");
  app.add_option("--out", g.out, "Override the outputs directory");
  app.add_option("--log-level", g.log_level, "debug, info, warn or error");

  auto* split = app.add_subcommand("split", "Scan the dataset and write the stratified manifest");

  auto* train = app.add_subcommand("train", "Train models into new run directories");
  std::vector<std::string> models;
  train->add_option("--model", models, "Selector such as resnet50:finetune (repeatable)");

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a run's best checkpoint");
  std::string eval_run, eval_split = "TEST";
  evaluate->add_option("--run", eval_run, "Run directory")->required();
  evaluate->add_option("--split", eval_split, "TEST or VAL");

  auto* gradcam = app.add_subcommand("gradcam", "Grad-CAM case panels for an evaluated run");
  std::string cam_run;
  std::optional<std::size_t> per_category;
  gradcam->add_option("--run", cam_run, "Run directory")->required();
  gradcam->add_option("--per-category", per_category, "Cases per TP/TN/FP/FN category");

  auto* ensemble = app.add_subcommand("ensemble", "Combine evaluated runs");
  std::string method = "simple";
  std::vector<std::string> ens_runs;
  ensemble->add_option("--method", method, "simple, weighted or vote");
  ensemble->add_option("--runs", ens_runs, "Member run directories or globs");

  auto* report = app.add_subcommand("report", "Render tables and figures from run artifacts");
  std::vector<std::string> report_runs;
  std::string report_dir;
  bool force = false;
  report->add_option("--runs", report_runs, "Run directories or globs");
  report->add_option("--report-dir", report_dir, "Destination (default <outputs>/report)");
  report->add_flag("--force", force, "Allow runs from different manifests");

  auto* schema = app.add_subcommand("schema", "Print the JSON schema of the run configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigFailure;
  }

  try {
    cxr::log::set_level(parse_level(g.log_level));
    if (*schema) {
      std::cout << cxr::run_config_schema().dump(2) << '\n';
    } else if (*split) {
      std::cout << cxr::cmd_split(load_config(g)).string() << '\n';
    } else if (*train) {
      cxr::TrainOptions opts;
      for (const auto& m : models) opts.models.push_back(cxr::parse_selector(m));
      for (const auto& dir : cxr::cmd_train(load_config(g), opts)) std::cout << dir.string() << '\n';
    } else if (*evaluate) {
      std::cout << cxr::cmd_evaluate(eval_run, cxr::parse_split(eval_split)).string() << '\n';
    } else if (*gradcam) {
      std::cout << cxr::cmd_gradcam(cam_run, per_category).string() << '\n';
    } else if (*ensemble) {
      cxr::EnsembleOptions opts;
      opts.method = cxr::parse_ensemble_method(method);
      opts.outputs = outputs_dir(g);
      opts.runs = cxr::expand_globs(ens_runs);
      if (!ens_runs.empty() && opts.runs.empty()) throw cxr::DataError("no run directories match --runs");
      std::cout << cxr::cmd_ensemble(opts).string() << '\n';
    } else if (*report) {
      cxr::ReportOptions opts;
      opts.runs = report_runs;
      opts.outputs = outputs_dir(g);
      opts.out_dir = report_dir;
      opts.force = force;
      std::cout << cxr::cmd_report(opts).string() << '\n';
    }
  } catch (const cxr::ConfigError& e) {
    cxr::log::error(e.what());
    return kConfigFailure;
  } catch (const std::exception& e) {
    cxr::log::error(e.what());
    return kRuntimeFailure;
  }
  return kOk;
}
