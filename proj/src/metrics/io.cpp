#include "cxr/metrics/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

#include "cxr/common/csv.hpp"
#include "cxr/common/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cxr {
namespace {

json metric(const Metric& m) { return m ? json(*m) : json(nullptr); }

Metric read_metric(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

json class_block(const ClassMetrics& m) {
  return {{"precision", metric(m.precision)}, {"recall", metric(m.recall)}, {"f1", metric(m.f1)}};
}

ClassMetrics read_class_block(const json& j) {
  return {read_metric(j, "precision"), read_metric(j, "recall"), read_metric(j, "f1")};
}

double parse_double(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw DataError("malformed number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw DataError("malformed number '" + s + "'");
  }
}

}  // namespace

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

MetricsSummary summarize(const PredictionSet& preds, std::string split) {
  MetricsSummary s;
  s.split = std::move(split);
  s.confusion = confusion(preds);
  s.classification = classification_report(s.confusion, preds);
  s.clinical = clinical_report(s.confusion);
  s.per_class = per_class_metrics(s.confusion);
  return s;
}

MetricsSummary summarize(const ConfusionMatrix& cm, std::string split) {
  MetricsSummary s;
  s.split = std::move(split);
  s.confusion = cm;
  s.classification = classification_report(cm);
  s.clinical = clinical_report(cm);
  s.per_class = per_class_metrics(cm);
  return s;
}

json to_json(const MetricsSummary& s) {
  const auto& c = s.confusion;
  json undefined = json::object();
  for (const auto& [k, v] : undefined_reasons(c)) undefined[k] = v;
  if (!s.classification.auc) undefined["auc"] = "scores unavailable or single-class ground truth";
  return {
      {"split", s.split},
      {"n", c.n()},
      {"confusion", {{"tp", c.tp}, {"tn", c.tn}, {"fp", c.fp}, {"fn", c.fn}}},
      {"classification",
       {{"accuracy", metric(s.classification.accuracy)},
        {"precision", metric(s.classification.precision)},
        {"recall", metric(s.classification.recall)},
        {"f1", metric(s.classification.f1)},
        {"auc", metric(s.classification.auc)}}},
      {"clinical",
       {{"sensitivity", metric(s.clinical.sensitivity)},
        {"specificity", metric(s.clinical.specificity)},
        {"ppv", metric(s.clinical.ppv)},
        {"npv", metric(s.clinical.npv)},
        {"balance_pp", metric(s.clinical.balance_pp)}}},
      {"per_class",
       {{"NORMAL", class_block(s.per_class.normal)},
        {"PNEUMONIA", class_block(s.per_class.pneumonia)}}},
      {"undefined", undefined},
  };
}

MetricsSummary metrics_from_json(const json& j) {
  try {
    MetricsSummary s;
    s.split = j.value("split", "TEST");
    const auto& c = j.at("confusion");
    s.confusion = {c.at("tp").get<std::size_t>(), c.at("tn").get<std::size_t>(),
                   c.at("fp").get<std::size_t>(), c.at("fn").get<std::size_t>()};
    const auto& cl = j.at("classification");
    s.classification = {read_metric(cl, "accuracy"), read_metric(cl, "precision"),
                        read_metric(cl, "recall"), read_metric(cl, "f1"), read_metric(cl, "auc")};
    const auto& cn = j.at("clinical");
    s.clinical = {read_metric(cn, "sensitivity"), read_metric(cn, "specificity"),
                  read_metric(cn, "ppv"), read_metric(cn, "npv"), read_metric(cn, "balance_pp")};
    const auto& pc = j.at("per_class");
    s.per_class = {read_class_block(pc.at("NORMAL")), read_class_block(pc.at("PNEUMONIA"))};
    return s;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed metrics document: ") + e.what());
  }
}

void write_metrics_json(const fs::path& path, const MetricsSummary& summary) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_json(summary).dump(2) << '\n';
}

MetricsSummary read_metrics_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return metrics_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw DataError("malformed " + path.string() + ": " + e.what());
  }
}

void write_predictions_csv(const fs::path& path, const PredictionSet& preds) {
  preds.validate();
  csv::Table t;
  t.header = {"id", "y_true", "y_prob", "y_pred"};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    t.rows.push_back({preds.ids[i], std::string(to_string(preds.y_true[i])),
                      format_double(preds.y_prob[i]),
                      preds.y_pred.empty() ? std::string() : std::string(to_string(preds.y_pred[i]))});
  }
  csv::write(path, t);
}

PredictionSet read_predictions_csv(const fs::path& path) {
  const auto t = csv::read(path);
  const auto id = t.column("id"), yt = t.column("y_true"), yp = t.column("y_prob"),
             yd = t.column("y_pred");
  PredictionSet p;
  for (const auto& row : t.rows) {
    p.ids.push_back(row[id]);
    p.y_true.push_back(parse_label(row[yt]));
    p.y_prob.push_back(parse_double(row[yp]));
    p.y_pred.push_back(parse_label(row[yd]));
  }
  p.validate();
  return p;
}

void write_roc_csv(const fs::path& path, const RocCurve& roc) {
  csv::Table t;
  t.header = {"threshold", "fpr", "tpr"};
  for (std::size_t i = 0; i < roc.fpr.size(); ++i)
    t.rows.push_back({format_double(roc.thresholds[i]), format_double(roc.fpr[i]),
                      format_double(roc.tpr[i])});
  csv::write(path, t);
}

RocCurve read_roc_csv(const fs::path& path) {
  const auto t = csv::read(path);
  const auto th = t.column("threshold"), f = t.column("fpr"), tp = t.column("tpr");
  RocCurve roc;
  for (const auto& row : t.rows) {
    roc.thresholds.push_back(parse_double(row[th]));
    roc.fpr.push_back(parse_double(row[f]));
    roc.tpr.push_back(parse_double(row[tp]));
  }
  return roc;
}

}  // namespace cxr
