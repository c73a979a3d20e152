#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cxr/data/image.hpp"
#include "cxr/metrics/metrics.hpp"

namespace cxr {

enum class CaseCategory { kTP, kTN, kFP, kFN };

std::string_view to_string(CaseCategory category);
CaseCategory parse_case_category(std::string_view text);
CaseCategory categorize(Label truth, Label predicted);

/// Activations of the final convolutional layer and the gradient of the
/// selected class score with respect to them. Both are K x H x W, channel-major.
struct ActivationBundle {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> activations;
  std::vector<float> gradients;
  int class_index = 0;
};

/// Localization map with values in [0,1].
struct Heatmap {
  int height = 0;
  int width = 0;
  std::vector<float> values;
  std::string source_id;
  std::optional<CaseCategory> category;

  float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  float max() const;
};

/// Channel weights are the spatial means of the gradients; the map is
/// ReLU(sum_k w_k A_k) divided by its maximum, or all zeros when the maximum
/// is zero. Throws InvalidArgument on inconsistent shapes.
Heatmap gradcam(const ActivationBundle& bundle);

/// Bilinear upsampling to the input resolution, clamped to [0,1].
Heatmap upsample(const Heatmap& map, int height, int width);

struct PanelEntry {
  std::string id;
  double confidence = 0.0;  ///< probability assigned to the predicted class
  Label truth = Label::kNormal;
  Label predicted = Label::kNormal;
};

using CasePanel = std::map<CaseCategory, std::vector<PanelEntry>>;

/// Up to `per_category` ids for each of TP/TN/FP/FN ordered by descending
/// confidence in the predicted class (for errors: how confidently wrong),
/// ties broken by ascending id. Every category key is present.
CasePanel select_case_panel(const PredictionSet& preds, std::size_t per_category = 4);

/// Jet colormap for v in [0,1] -> RGB bytes.
void jet_color(float v, unsigned char rgb[3]);

/// Blends the colour-mapped heatmap over a grayscale rendering of `original`
/// with per-pixel opacity alpha * h: a zero map reproduces the original and a
/// uniform 1 map tints every pixel at opacity alpha. Throws InvalidArgument if
/// the sizes differ.
RgbImage overlay(const Heatmap& heatmap, const Image& original, float alpha = 0.4f);

}  // namespace cxr
