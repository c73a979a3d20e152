#include "cxr/report/figures.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cxr/common/error.hpp"
#include "cxr/common/log.hpp"
#include "cxr/data/image.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cxr {
namespace {

const cv::Scalar kBlack(0, 0, 0);
const cv::Scalar kGrey(160, 160, 160);
const cv::Scalar kWhite(255, 255, 255);

// BGR, tab10-like.
const std::array<cv::Scalar, 10> kPalette{
    cv::Scalar(180, 119, 31), cv::Scalar(14, 127, 255),  cv::Scalar(44, 160, 44),
    cv::Scalar(40, 39, 214),  cv::Scalar(189, 103, 148), cv::Scalar(75, 86, 140),
    cv::Scalar(194, 119, 227), cv::Scalar(127, 127, 127), cv::Scalar(34, 189, 188),
    cv::Scalar(207, 190, 23)};

constexpr int kFont = cv::FONT_HERSHEY_SIMPLEX;

void text(cv::Mat& img, const std::string& s, cv::Point at, double scale = 0.45,
          const cv::Scalar& color = kBlack) {
  cv::putText(img, s, at, kFont, scale, color, 1, cv::LINE_AA);
}

void save(const fs::path& path, const cv::Mat& img) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), img)) throw DataError("cannot write " + path.string());
}

std::string fmt(const char* f, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

void write_metric_bars(const std::vector<RunRecord>& runs, const fs::path& png) {
  const auto models = ranked_models(runs);
  const std::array<const char*, 5> names{"Accuracy", "Precision", "Recall", "F1", "AUC"};
  auto value = [](const RunRecord& r, std::size_t k) -> Metric {
    const auto& c = r.metrics.classification;
    const std::array<Metric, 5> v{c.accuracy, c.precision, c.recall, c.f1, c.auc};
    return v[k];
  };

  double lo = 100.0;
  for (const auto* r : models)
    for (std::size_t k = 0; k < names.size(); ++k)
      if (auto v = value(*r, k)) lo = std::min(lo, *v * 100.0);
  lo = std::max(0.0, std::floor((lo - 5.0) / 5.0) * 5.0);
  const double hi = 100.0;

  const int left = 60, right = 20, top = 40, bottom = 110;
  const int group_w = 30 * static_cast<int>(names.size()) + 30;
  const int width = left + right + std::max(1, static_cast<int>(models.size())) * group_w;
  const int height = 420;
  const int plot_h = height - top - bottom;
  cv::Mat img(height, std::max(width, left + 100 * static_cast<int>(names.size())), CV_8UC3, kWhite);

  text(img, "Test-set metrics (%)", {left, 24}, 0.6);
  auto y_of = [&](double v) {
    return top + static_cast<int>(std::lround((hi - v) / (hi - lo) * plot_h));
  };
  for (double v = lo; v <= hi + 1e-9; v += (hi - lo) / 5.0) {
    const int y = y_of(v);
    cv::line(img, {left, y}, {img.cols - right, y}, cv::Scalar(230, 230, 230), 1);
    text(img, fmt("%.0f", v), {8, y + 5}, 0.4);
  }
  cv::line(img, {left, top}, {left, top + plot_h}, kBlack, 1);
  cv::line(img, {left, top + plot_h}, {img.cols - right, top + plot_h}, kBlack, 1);

  for (std::size_t m = 0; m < models.size(); ++m) {
    const int x0 = left + 15 + static_cast<int>(m) * group_w;
    for (std::size_t k = 0; k < names.size(); ++k) {
      const auto v = value(*models[m], k);
      if (!v) continue;
      const int x = x0 + static_cast<int>(k) * 30;
      const int y = y_of(std::clamp(*v * 100.0, lo, hi));
      cv::rectangle(img, {x, y}, {x + 24, top + plot_h}, kPalette[k], cv::FILLED);
    }
    text(img, models[m]->model_label(), {x0, top + plot_h + 18}, 0.4);
    text(img, models[m]->mode_label(), {x0, top + plot_h + 34}, 0.4, kGrey);
  }
  for (std::size_t k = 0; k < names.size(); ++k) {
    const int x = left + static_cast<int>(k) * 100;
    const int y = height - 30;
    cv::rectangle(img, {x, y - 10}, {x + 12, y + 2}, kPalette[k], cv::FILLED);
    text(img, names[k], {x + 16, y}, 0.4);
  }
  save(png, img);
}

bool write_roc_overlay(const std::vector<RunRecord>& runs, const fs::path& png) {
  std::vector<const RunRecord*> with_roc;
  for (const auto* r : ranked_models(runs))
    if (r->roc) with_roc.push_back(r);
  for (const auto& r : runs)
    if (r.is_ensemble() && r.roc) with_roc.push_back(&r);
  if (with_roc.empty()) return false;

  const int size = 400, left = 50, top = 40;
  const int legend_h = 18 * static_cast<int>(with_roc.size()) + 20;
  cv::Mat img(top + size + 50 + legend_h, left + size + 30, CV_8UC3, kWhite);
  auto pt = [&](double fpr, double tpr) {
    return cv::Point(left + static_cast<int>(std::lround(fpr * size)),
                     top + static_cast<int>(std::lround((1.0 - tpr) * size)));
  };
  text(img, "ROC curves (test set)", {left, 24}, 0.6);
  cv::rectangle(img, pt(0, 1), pt(1, 0), kBlack, 1);
  for (int i = 0; i < 20; i += 2) {
    const double a = i / 20.0, b = (i + 1) / 20.0;
    cv::line(img, pt(a, a), pt(b, b), kGrey, 1, cv::LINE_AA);
  }
  for (int i = 0; i <= 4; ++i) {
    const double v = i / 4.0;
    text(img, fmt("%.2f", v), {pt(v, 0).x - 14, top + size + 16}, 0.35);
    text(img, fmt("%.2f", v), {8, pt(0, v).y + 4}, 0.35);
  }
  text(img, "False positive rate", {left + size / 2 - 70, top + size + 36}, 0.45);
  text(img, "TPR", {left + 6, top + 16}, 0.4, kGrey);

  for (std::size_t i = 0; i < with_roc.size(); ++i) {
    const auto& roc = *with_roc[i]->roc;
    std::vector<cv::Point> pts;
    for (std::size_t k = 0; k < roc.fpr.size(); ++k) pts.push_back(pt(roc.fpr[k], roc.tpr[k]));
    const auto& color = kPalette[i % kPalette.size()];
    cv::polylines(img, pts, false, color, 2, cv::LINE_AA);
    const int y = top + size + 60 + 18 * static_cast<int>(i);
    cv::line(img, {left, y - 4}, {left + 20, y - 4}, color, 2);
    const auto& auc = with_roc[i]->metrics.classification.auc;
    text(img, with_roc[i]->row_label() + "  AUC " + (auc ? fmt("%.4f", *auc) : "n/a"),
         {left + 26, y}, 0.42);
  }
  save(png, img);
  return true;
}

bool write_gradcam_montage(const RunRecord& run, const fs::path& png) {
  const auto panel_path = run.dir / "gradcam" / "panel.json";
  if (!fs::exists(panel_path)) return false;
  json panel;
  {
    std::ifstream in(panel_path);
    try {
      panel = json::parse(in);
    } catch (const json::parse_error&) {
      log::warn("ignoring malformed " + panel_path.string());
      return false;
    }
  }
  const int tile = 128, label_w = 60, pad = 4;
  const std::array<const char*, 4> cats{"TP", "TN", "FP", "FN"};
  std::size_t cols = 1;
  for (const char* c : cats)
    if (panel.contains(c)) cols = std::max(cols, panel[c].size());
  cv::Mat img(30 + 4 * (tile + pad), std::max(360, label_w + static_cast<int>(cols) * (tile + pad)),
              CV_8UC3, kWhite);
  text(img, "Grad-CAM: " + run.row_label(), {8, 20}, 0.5);
  for (std::size_t row = 0; row < cats.size(); ++row) {
    const int y = 30 + static_cast<int>(row) * (tile + pad);
    text(img, cats[row], {10, y + tile / 2}, 0.6);
    if (!panel.contains(cats[row])) continue;
    const auto& entries = panel[cats[row]];
    for (std::size_t k = 0; k < entries.size(); ++k) {
      const auto file = run.dir / entries[k].at("file").get<std::string>();
      if (!fs::exists(file)) continue;
      const auto rgb = load_png_rgb(file);
      cv::Mat src(rgb.height, rgb.width, CV_8UC3, const_cast<unsigned char*>(rgb.pixels.data()));
      cv::Mat bgr, scaled;
      cv::cvtColor(src, bgr, cv::COLOR_RGB2BGR);
      cv::resize(bgr, scaled, {tile, tile}, 0, 0, cv::INTER_AREA);
      scaled.copyTo(img(cv::Rect(label_w + static_cast<int>(k) * (tile + pad), y, tile, tile)));
    }
  }
  save(png, img);
  return true;
}

}  // namespace cxr
