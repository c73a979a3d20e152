#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cxr/metrics/metrics.hpp"

namespace cxr {

struct MemberPrediction {
  std::string model_name;
  PredictionSet preds;
  double weight_metric = 1.0;  ///< F1 used by weighted_average
};

enum class EnsembleMethod { kSimpleAverage, kWeightedAverage, kMajorityVote };

std::string_view to_string(EnsembleMethod method);
EnsembleMethod parse_ensemble_method(std::string_view text);

/// Mean of member probabilities, thresholded at 0.5 (ties -> PNEUMONIA).
/// Throws InvalidArgument with fewer than 2 members or misaligned ids.
PredictionSet simple_average(std::span<const MemberPrediction> members);

/// sum(w_i p_i) / sum(w_i) using each member's weight_metric.
/// Throws InvalidArgument on negative or all-zero weights.
PredictionSet weighted_average(std::span<const MemberPrediction> members);
PredictionSet weighted_average(std::span<const MemberPrediction> members,
                               std::span<const double> weights);

/// Per record, the class with the most votes; a tie goes to PNEUMONIA.
/// y_prob is the fraction of PNEUMONIA votes.
PredictionSet majority_vote(std::span<const MemberPrediction> members);

PredictionSet combine(EnsembleMethod method, std::span<const MemberPrediction> members);

}  // namespace cxr
