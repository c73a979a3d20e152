#pragma once

#include <array>
#include <string>
#include <string_view>

namespace cxr {

/// Class label. PNEUMONIA is the positive class everywhere in the library;
/// the integer value doubles as the logit index.
enum class Label : int { kNormal = 0, kPneumonia = 1 };

enum class Split : int { kTrain = 0, kVal = 1, kTest = 2, kUnassigned = 3 };

inline constexpr std::array<Label, 2> kAllLabels{Label::kNormal, Label::kPneumonia};
inline constexpr std::array<Split, 3> kAssignedSplits{Split::kTrain, Split::kVal, Split::kTest};

std::string_view to_string(Label label);
std::string_view to_string(Split split);

/// Accepts "NORMAL"/"PNEUMONIA" (any case) and "N"/"P".
Label parse_label(std::string_view text);
/// Accepts "TRAIN", "VAL", "TEST", "UNASSIGNED" (any case).
Split parse_split(std::string_view text);

constexpr Label invert(Label label) {
  return label == Label::kPneumonia ? Label::kNormal : Label::kPneumonia;
}

constexpr int index_of(Label label) { return static_cast<int>(label); }
constexpr int index_of(Split split) { return static_cast<int>(split); }

}  // namespace cxr
