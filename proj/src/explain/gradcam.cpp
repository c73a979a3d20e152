#include "cxr/explain/gradcam.hpp"

#include <algorithm>
#include <cmath>

#include "cxr/common/error.hpp"
#include "cxr/data/preprocess.hpp"

namespace cxr {

std::string_view to_string(CaseCategory category) {
  switch (category) {
    case CaseCategory::kTP: return "TP";
    case CaseCategory::kTN: return "TN";
    case CaseCategory::kFP: return "FP";
    case CaseCategory::kFN: return "FN";
  }
  return "TP";
}

CaseCategory parse_case_category(std::string_view text) {
  if (text == "TP") return CaseCategory::kTP;
  if (text == "TN") return CaseCategory::kTN;
  if (text == "FP") return CaseCategory::kFP;
  if (text == "FN") return CaseCategory::kFN;
  throw InvalidArgument("unknown case category '" + std::string(text) + "'");
}

CaseCategory categorize(Label truth, Label predicted) {
  if (truth == Label::kPneumonia)
    return predicted == Label::kPneumonia ? CaseCategory::kTP : CaseCategory::kFN;
  return predicted == Label::kPneumonia ? CaseCategory::kFP : CaseCategory::kTN;
}

float Heatmap::max() const {
  return values.empty() ? 0.0f : *std::max_element(values.begin(), values.end());
}

Heatmap gradcam(const ActivationBundle& b) {
  if (b.channels <= 0 || b.height <= 0 || b.width <= 0)
    throw InvalidArgument("activation bundle has an empty shape");
  const std::size_t plane = static_cast<std::size_t>(b.height) * b.width;
  const std::size_t expected = plane * b.channels;
  if (b.activations.size() != expected || b.gradients.size() != expected)
    throw InvalidArgument("activation and gradient tensors do not match the declared shape");

  std::vector<double> raw(plane, 0.0);
  for (int k = 0; k < b.channels; ++k) {
    const float* g = b.gradients.data() + k * plane;
    const float* a = b.activations.data() + k * plane;
    double weight = 0.0;
    for (std::size_t i = 0; i < plane; ++i) weight += g[i];
    weight /= static_cast<double>(plane);
    if (weight == 0.0) continue;
    for (std::size_t i = 0; i < plane; ++i) raw[i] += weight * a[i];
  }

  double peak = 0.0;
  for (double& v : raw) {
    v = std::max(v, 0.0);
    peak = std::max(peak, v);
  }
  Heatmap map;
  map.height = b.height;
  map.width = b.width;
  map.values.assign(plane, 0.0f);
  if (peak > 0.0)
    for (std::size_t i = 0; i < plane; ++i) map.values[i] = static_cast<float>(raw[i] / peak);
  return map;
}

Heatmap upsample(const Heatmap& map, int height, int width) {
  Image img(1, map.height, map.width);
  img.data = map.values;
  const Image up = resize_bilinear(img, height, width);
  Heatmap out = map;
  out.height = height;
  out.width = width;
  out.values = up.data;
  for (float& v : out.values) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

CasePanel select_case_panel(const PredictionSet& preds, std::size_t per_category) {
  preds.validate();
  if (preds.y_pred.size() != preds.size()) throw InvalidArgument("y_pred is not populated");
  CasePanel panel;
  for (auto c : {CaseCategory::kTP, CaseCategory::kTN, CaseCategory::kFP, CaseCategory::kFN})
    panel[c] = {};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Label pred = preds.y_pred[i];
    const double conf = pred == Label::kPneumonia ? preds.y_prob[i] : 1.0 - preds.y_prob[i];
    panel[categorize(preds.y_true[i], pred)].push_back({preds.ids[i], conf, preds.y_true[i], pred});
  }
  for (auto& [category, entries] : panel) {
    std::sort(entries.begin(), entries.end(), [](const PanelEntry& a, const PanelEntry& b) {
      if (a.confidence != b.confidence) return a.confidence > b.confidence;
      return a.id < b.id;
    });
    if (entries.size() > per_category) entries.resize(per_category);
  }
  return panel;
}

void jet_color(float v, unsigned char rgb[3]) {
  v = std::clamp(v, 0.0f, 1.0f);
  const auto channel = [v](float centre) {
    const float x = std::clamp(1.5f - std::abs(4.0f * v - centre), 0.0f, 1.0f);
    return static_cast<unsigned char>(std::lround(x * 255.0f));
  };
  rgb[0] = channel(3.0f);
  rgb[1] = channel(2.0f);
  rgb[2] = channel(1.0f);
}

RgbImage overlay(const Heatmap& heatmap, const Image& original, float alpha) {
  if (heatmap.height != original.height || heatmap.width != original.width)
    throw InvalidArgument("heatmap and image sizes differ; upsample the heatmap first");
  if (heatmap.values.size() != static_cast<std::size_t>(heatmap.height) * heatmap.width)
    throw InvalidArgument("heatmap value count does not match its shape");
  const Image gray = to_grayscale(original);
  RgbImage out{original.height, original.width, {}};
  out.pixels.resize(static_cast<std::size_t>(out.height) * out.width * 3);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const float g = std::clamp(gray.at(0, y, x), 0.0f, 1.0f) * 255.0f;
      const float h = std::clamp(heatmap.at(y, x), 0.0f, 1.0f);
      const float opacity = alpha * h;
      unsigned char color[3];
      jet_color(h, color);
      auto* px = &out.pixels[(static_cast<std::size_t>(y) * out.width + x) * 3];
      for (int c = 0; c < 3; ++c) {
        const float v = (1.0f - opacity) * g + opacity * static_cast<float>(color[c]);
        px[c] = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 255.0f)));
      }
    }
  }
  return out;
}

}  // namespace cxr
