#include "cxr/report/report.hpp"

#include <glob.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cxr/common/csv.hpp"
#include "cxr/common/error.hpp"
#include "cxr/common/log.hpp"
#include "cxr/report/figures.hpp"

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

std::string fixed2(double v) {
  // Exact halves are rare at this scale; printf rounding is the presentation rule.
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

std::string signed2(double v) {
  std::string s = fixed2(v);
  if (s[0] != '-') s = "+" + s;
  return s;
}

Metric fn_rate(const ConfusionMatrix& cm) { return safe_ratio(cm.fn, cm.tp + cm.fn); }

std::string source_of(const RunRecord& r) { return r.name + "/metrics.json"; }

std::string mean_pct(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return fixed2(100.0 * s / static_cast<double>(xs.size()));
}

std::string signed_mean_pp(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return signed2(100.0 * s / static_cast<double>(xs.size()));
}

std::string arch_label(const std::string& arch) {
  if (arch == "custom_cnn") return "Custom CNN";
  if (arch == "resnet50") return "ResNet50";
  if (arch == "densenet121") return "DenseNet121";
  if (arch == "efficientnet_b0") return "EfficientNet-B0";
  return arch;
}

std::string method_label(const std::string& method) {
  if (method == "simple") return "Simple Average";
  if (method == "weighted") return "Weighted Average";
  if (method == "vote") return "Majority Voting";
  return method;
}

}  // namespace

std::string RunRecord::model_label() const {
  return is_ensemble() ? method_label(method) : arch_label(arch);
}

std::string RunRecord::mode_label() const {
  if (regime.empty()) return "";
  std::string s = regime;
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string RunRecord::row_label() const {
  if (is_ensemble() || is_baseline()) return model_label();
  return model_label() + " (" + regime + ")";
}

std::vector<fs::path> expand_globs(const std::vector<std::string>& patterns) {
  std::set<fs::path> found;
  for (const auto& pattern : patterns) {
    glob_t g{};
    const int rc = ::glob(pattern.c_str(), GLOB_NOSORT, nullptr, &g);
    if (rc == 0)
      for (std::size_t i = 0; i < g.gl_pathc; ++i)
        if (fs::is_directory(g.gl_pathv[i])) found.insert(fs::path(g.gl_pathv[i]));
    globfree(&g);
  }
  return {found.begin(), found.end()};
}

std::vector<RunRecord> load_runs(const std::vector<fs::path>& dirs, bool force) {
  std::map<std::string, RunRecord> by_key;
  for (const auto& dir : dirs) {
    RunRecord r;
    r.dir = dir;
    r.name = dir.filename().string();
    if (r.name.empty()) r.name = dir.parent_path().filename().string();
    json meta;
    if (fs::exists(dir / "run.json")) {
      meta = read_json(dir / "run.json");
      r.arch = meta.at("arch").get<std::string>();
      r.regime = meta.at("regime").get<std::string>();
    } else if (fs::exists(dir / "ensemble.json")) {
      meta = read_json(dir / "ensemble.json");
      r.method = meta.at("method").get<std::string>();
    } else {
      log::warn("skipping " + dir.string() + ": no run.json or ensemble.json");
      continue;
    }
    r.manifest_hash = meta.value("manifest_hash", "");
    if (!fs::exists(dir / "metrics.json")) {
      log::warn("skipping " + dir.string() + ": metrics.json missing (run `evaluate` first)");
      continue;
    }
    r.metrics = read_metrics_json(dir / "metrics.json");
    if (fs::exists(dir / "roc.csv")) r.roc = read_roc_csv(dir / "roc.csv");

    const std::string key = r.is_ensemble() ? "ensemble:" + r.method : r.arch + ":" + r.regime;
    auto it = by_key.find(key);
    if (it != by_key.end()) {
      const bool newer = r.name > it->second.name;
      log::warn("several runs for " + key + "; keeping " + (newer ? r.name : it->second.name));
      if (newer) it->second = std::move(r);
    } else {
      by_key.emplace(key, std::move(r));
    }
  }

  std::vector<RunRecord> runs;
  for (auto& [key, r] : by_key) runs.push_back(std::move(r));
  std::set<std::string> hashes;
  for (const auto& r : runs) hashes.insert(r.manifest_hash);
  if (hashes.size() > 1) {
    std::string msg = "runs come from different dataset manifests:";
    for (const auto& r : runs) msg += " " + r.name + "=" + (r.manifest_hash.empty() ? "?" : r.manifest_hash);
    if (!force) throw ConfigError(msg + " (pass --force to report anyway)");
    log::warn(msg);
  }
  return runs;
}

std::string pct(const Metric& m) { return m ? fixed2(*m * 100.0) : "n/a"; }

std::string delta_pp(const Metric& from, const Metric& to) {
  if (!from || !to) return "n/a";
  return signed2((*to - *from) * 100.0);
}

std::string relative_change(std::size_t from, std::size_t to) {
  if (from == 0) return "n/a";
  const double v = (static_cast<double>(to) - static_cast<double>(from)) / static_cast<double>(from);
  return signed2(v * 100.0) + "%";
}

std::vector<const RunRecord*> ranked_models(const std::vector<RunRecord>& runs) {
  std::vector<const RunRecord*> out;
  for (const auto& r : runs)
    if (!r.is_ensemble()) out.push_back(&r);
  std::stable_sort(out.begin(), out.end(), [](const RunRecord* a, const RunRecord* b) {
    const double aa = a->metrics.classification.accuracy.value_or(-1.0);
    const double ba = b->metrics.classification.accuracy.value_or(-1.0);
    if (aa != ba) return aa > ba;
    return a->row_label() < b->row_label();
  });
  return out;
}

ReportTable overall_table(const std::vector<RunRecord>& runs) {
  ReportTable t{"overall", "Overall model performance (test set)",
                {"Model", "Mode", "Acc", "Prec", "Rec", "F1", "AUC", "Sens", "Spec"}, {}, {}};
  for (const auto* r : ranked_models(runs)) {
    const auto& c = r->metrics.classification;
    const auto& k = r->metrics.clinical;
    t.rows.push_back({r->model_label(), r->mode_label(), pct(c.accuracy), pct(c.precision),
                      pct(c.recall), pct(c.f1), pct(c.auc), pct(k.sensitivity), pct(k.specificity)});
    t.sources.push_back(source_of(*r));
  }
  return t;
}

std::optional<ReportTable> improvement_table(const std::vector<RunRecord>& runs) {
  const auto ranked = ranked_models(runs);
  const RunRecord* base = nullptr;
  const RunRecord* best = nullptr;
  for (const auto* r : ranked) {
    if (r->is_baseline()) {
      if (!base) base = r;
    } else if (!best) {
      best = r;
    }
  }
  if (!base || !best) return std::nullopt;
  const auto& b = base->metrics;
  const auto& x = best->metrics;
  ReportTable t{"improvement",
                "Transfer learning improvement over baseline",
                {"Metric", base->row_label(), best->model_label() + " (TL)", "Improvement"},
                {},
                {}};
  auto row = [&](const char* name, const Metric& from, const Metric& to) {
    t.rows.push_back({name, pct(from), pct(to), delta_pp(from, to)});
  };
  row("Accuracy (%)", b.classification.accuracy, x.classification.accuracy);
  row("F1-Score (%)", b.classification.f1, x.classification.f1);
  row("AUC (%)", b.classification.auc, x.classification.auc);
  row("Sensitivity (%)", b.clinical.sensitivity, x.clinical.sensitivity);
  row("Specificity (%)", b.clinical.specificity, x.clinical.specificity);
  t.rows.push_back({"Total Errors", std::to_string(b.confusion.errors()),
                    std::to_string(x.confusion.errors()),
                    relative_change(b.confusion.errors(), x.confusion.errors())});
  t.rows.push_back({"False Negatives", std::to_string(b.confusion.fn), std::to_string(x.confusion.fn),
                    relative_change(b.confusion.fn, x.confusion.fn)});
  t.sources = {source_of(*base), source_of(*best)};
  return t;
}

std::optional<ReportTable> regime_table(const std::vector<RunRecord>& runs) {
  std::map<std::string, std::pair<const RunRecord*, const RunRecord*>> pairs;
  for (const auto& r : runs) {
    if (r.is_ensemble() || r.is_baseline()) continue;
    auto& p = pairs[r.arch];
    (r.regime == "frozen" ? p.first : p.second) = &r;
  }
  ReportTable t{"regime",
                "Fine-tuning vs frozen backbone",
                {"Architecture", "Frozen Acc", "Finetune Acc", "Delta Acc", "Delta F1"},
                {},
                {}};
  std::vector<double> fr_acc, ft_acc, d_acc, d_f1;
  // Fixed architecture order, matching the sweep.
  for (const char* arch : {"resnet50", "densenet121", "efficientnet_b0"}) {
    const auto it = pairs.find(arch);
    if (it == pairs.end() || !it->second.first || !it->second.second) continue;
    const auto& fr = it->second.first->metrics.classification;
    const auto& ft = it->second.second->metrics.classification;
    t.rows.push_back({arch_label(arch), pct(fr.accuracy), pct(ft.accuracy),
                      delta_pp(fr.accuracy, ft.accuracy), delta_pp(fr.f1, ft.f1)});
    t.sources.push_back(source_of(*it->second.first) + ";" + source_of(*it->second.second));
    if (fr.accuracy && ft.accuracy && fr.f1 && ft.f1) {
      fr_acc.push_back(*fr.accuracy);
      ft_acc.push_back(*ft.accuracy);
      d_acc.push_back(*ft.accuracy - *fr.accuracy);
      d_f1.push_back(*ft.f1 - *fr.f1);
    }
  }
  if (t.rows.empty()) return std::nullopt;
  if (!d_acc.empty()) {
    t.rows.push_back({"Average", mean_pct(fr_acc), mean_pct(ft_acc), signed_mean_pp(d_acc),
                      signed_mean_pp(d_f1)});
    t.sources.push_back("mean of the rows above");
  }
  return t;
}

ReportTable confusion_table(const std::vector<RunRecord>& runs) {
  ReportTable t{"confusion", "Confusion matrix breakdown",
                {"Model", "TP", "TN", "FP", "FN", "Errors", "FN Rate"}, {}, {}};
  for (const auto* r : ranked_models(runs)) {
    const auto& cm = r->metrics.confusion;
    const auto rate = fn_rate(cm);
    t.rows.push_back({r->row_label(), std::to_string(cm.tp), std::to_string(cm.tn),
                      std::to_string(cm.fp), std::to_string(cm.fn), std::to_string(cm.errors()),
                      rate ? pct(rate) + "%" : "n/a"});
    t.sources.push_back(source_of(*r));
  }
  return t;
}

ReportTable clinical_table(const std::vector<RunRecord>& runs) {
  ReportTable t{"clinical", "Clinical metrics",
                {"Model", "Sens", "Spec", "PPV", "NPV", "Balance"}, {}, {}};
  for (const auto* r : ranked_models(runs)) {
    const auto& k = r->metrics.clinical;
    t.rows.push_back({r->row_label(), pct(k.sensitivity), pct(k.specificity), pct(k.ppv),
                      pct(k.npv), k.balance_pp ? fixed2(*k.balance_pp) : "n/a"});
    t.sources.push_back(source_of(*r));
  }
  return t;
}

ReportTable classwise_table(const std::vector<RunRecord>& runs) {
  ReportTable t{"classwise",
                "Class-wise performance",
                {"Model", "Normal Prec", "Normal Rec", "Normal F1", "Pneumonia Prec",
                 "Pneumonia Rec", "Pneumonia F1"},
                {},
                {}};
  for (const auto* r : ranked_models(runs)) {
    const auto& n = r->metrics.per_class.normal;
    const auto& p = r->metrics.per_class.pneumonia;
    t.rows.push_back({r->row_label(), pct(n.precision), pct(n.recall), pct(n.f1), pct(p.precision),
                      pct(p.recall), pct(p.f1)});
    t.sources.push_back(source_of(*r));
  }
  return t;
}

std::optional<ReportTable> ensemble_table(const std::vector<RunRecord>& runs) {
  ReportTable t{"ensemble", "Ensemble methods",
                {"Method", "Accuracy", "F1-Score", "AUC", "FP", "FN"}, {}, {}};
  std::vector<const RunRecord*> ens;
  for (const auto& r : runs)
    if (r.is_ensemble()) ens.push_back(&r);
  if (ens.empty()) return std::nullopt;
  const auto order = [](const std::string& m) {
    if (m == "simple") return 0;
    if (m == "weighted") return 1;
    if (m == "vote") return 2;
    return 3;
  };
  std::stable_sort(ens.begin(), ens.end(), [&](const RunRecord* a, const RunRecord* b) {
    if (order(a->method) != order(b->method)) return order(a->method) < order(b->method);
    return a->name < b->name;
  });
  for (const auto* r : ens) {
    const auto& m = r->metrics;
    t.rows.push_back({r->model_label(), pct(m.classification.accuracy), pct(m.classification.f1),
                      pct(m.classification.auc), std::to_string(m.confusion.fp),
                      std::to_string(m.confusion.fn)});
    t.sources.push_back(source_of(*r));
  }
  return t;
}

std::vector<ReportTable> build_tables(const std::vector<RunRecord>& runs) {
  std::vector<ReportTable> out;
  out.push_back(overall_table(runs));
  if (auto t = improvement_table(runs)) out.push_back(std::move(*t));
  if (auto t = regime_table(runs)) out.push_back(std::move(*t));
  out.push_back(confusion_table(runs));
  out.push_back(clinical_table(runs));
  out.push_back(classwise_table(runs));
  if (auto t = ensemble_table(runs)) out.push_back(std::move(*t));
  return out;
}

std::string render_markdown(const ReportTable& table) {
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    out << '|';
    for (const auto& c : cells) out << ' ' << c << " |";
    out << '\n';
  };
  out << "### " << table.title << "\n\n";
  line(table.header);
  out << '|';
  for (std::size_t i = 0; i < table.header.size(); ++i) out << (i == 0 ? " --- |" : " ---: |");
  out << '\n';
  for (const auto& row : table.rows) line(row);
  return out.str();
}

std::string render_csv(const ReportTable& table) {
  std::string out = csv::join(table.header) + "\n";
  for (const auto& row : table.rows) out += csv::join(row) + "\n";
  return out;
}

fs::path write_report(const std::vector<RunRecord>& runs, const fs::path& out_dir) {
  if (runs.empty()) throw DataError("nothing to report: no evaluated runs");
  fs::create_directories(out_dir / "tables");
  fs::create_directories(out_dir / "figures");

  auto write_text = [](const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DataError("cannot write " + p.string());
    out << s;
  };

  const auto tables = build_tables(runs);
  std::ostringstream md;
  md << "# Experiment report\n\n";
  json sources = json::object();
  for (const auto& t : tables) {
    write_text(out_dir / "tables" / (t.name + ".csv"), render_csv(t));
    write_text(out_dir / "tables" / (t.name + ".md"), render_markdown(t));
    md << render_markdown(t) << '\n';
    sources[t.name] = t.sources;
  }
  write_text(out_dir / "tables" / "sources.json", sources.dump(2) + "\n");

  md << "## Figures\n\n";
  write_metric_bars(runs, out_dir / "figures" / "metrics.png");
  md << "![metrics](figures/metrics.png)\n\n";
  if (write_roc_overlay(runs, out_dir / "figures" / "roc.png")) md << "![roc](figures/roc.png)\n\n";
  for (const auto& r : runs) {
    const auto name = "gradcam_" + r.name + ".png";
    if (!r.is_ensemble() && write_gradcam_montage(r, out_dir / "figures" / name))
      md << "![grad-cam " << r.row_label() << "](figures/" << name << ")\n\n";
  }
  const auto path = out_dir / "report.md";
  write_text(path, md.str());
  return path;
}

}  // namespace cxr
