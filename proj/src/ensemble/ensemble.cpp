#include "cxr/ensemble/ensemble.hpp"

#include <algorithm>
#include <cmath>

#include "cxr/common/error.hpp"

namespace cxr {
namespace {

void check_aligned(std::span<const MemberPrediction> members) {
  if (members.size() < 2) throw InvalidArgument("an ensemble needs at least 2 members");
  const auto& ref = members.front().preds;
  ref.validate();
  for (const auto& m : members) {
    m.preds.validate();
    if (m.preds.ids != ref.ids)
      throw InvalidArgument("member '" + m.model_name + "' is not aligned on record ids");
    if (m.preds.y_true != ref.y_true)
      throw InvalidArgument("member '" + m.model_name + "' disagrees on ground truth");
  }
}

PredictionSet skeleton(std::span<const MemberPrediction> members) {
  PredictionSet out;
  out.ids = members.front().preds.ids;
  out.y_true = members.front().preds.y_true;
  out.y_prob.resize(out.ids.size());
  out.y_pred.resize(out.ids.size());
  return out;
}

// Summing the sorted terms makes the result independent of member order, and
// clamping to the member range keeps the average inside its convex hull even
// after rounding.
double ordered_mean(std::vector<std::pair<double, double>>& weighted_probs) {
  std::sort(weighted_probs.begin(), weighted_probs.end());
  double num = 0.0, den = 0.0, lo = 1.0, hi = 0.0;
  for (const auto& [p, w] : weighted_probs) {
    num += w * p;
    den += w;
    if (w > 0.0) {
      lo = std::min(lo, p);
      hi = std::max(hi, p);
    }
  }
  return std::clamp(num / den, lo, hi);
}

}  // namespace

std::string_view to_string(EnsembleMethod method) {
  switch (method) {
    case EnsembleMethod::kSimpleAverage: return "simple";
    case EnsembleMethod::kWeightedAverage: return "weighted";
    case EnsembleMethod::kMajorityVote: return "vote";
  }
  return "simple";
}

EnsembleMethod parse_ensemble_method(std::string_view text) {
  if (text == "simple" || text == "simple_average") return EnsembleMethod::kSimpleAverage;
  if (text == "weighted" || text == "weighted_average") return EnsembleMethod::kWeightedAverage;
  if (text == "vote" || text == "majority_vote") return EnsembleMethod::kMajorityVote;
  throw ConfigError("unknown ensemble method '" + std::string(text) + "'");
}

PredictionSet simple_average(std::span<const MemberPrediction> members) {
  check_aligned(members);
  PredictionSet out = skeleton(members);
  std::vector<std::pair<double, double>> terms(members.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t m = 0; m < members.size(); ++m) terms[m] = {members[m].preds.y_prob[i], 1.0};
    out.y_prob[i] = ordered_mean(terms);
    out.y_pred[i] = decide(out.y_prob[i]);
  }
  return out;
}

PredictionSet weighted_average(std::span<const MemberPrediction> members,
                               std::span<const double> weights) {
  check_aligned(members);
  if (weights.size() != members.size())
    throw InvalidArgument("one weight per ensemble member is required");
  double total = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw InvalidArgument("ensemble weights must be >= 0");
    total += w;
  }
  if (total == 0.0) throw InvalidArgument("ensemble weights are all zero");
  // Equal weights are the simple average; route them there so the identity is exact.
  if (std::all_of(weights.begin(), weights.end(), [&](double w) { return w == weights[0]; }))
    return simple_average(members);

  PredictionSet out = skeleton(members);
  std::vector<std::pair<double, double>> terms(members.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t m = 0; m < members.size(); ++m)
      terms[m] = {members[m].preds.y_prob[i], weights[m]};
    out.y_prob[i] = ordered_mean(terms);
    out.y_pred[i] = decide(out.y_prob[i]);
  }
  return out;
}

PredictionSet weighted_average(std::span<const MemberPrediction> members) {
  std::vector<double> weights;
  for (const auto& m : members) weights.push_back(m.weight_metric);
  return weighted_average(members, weights);
}

PredictionSet majority_vote(std::span<const MemberPrediction> members) {
  check_aligned(members);
  for (const auto& m : members)
    if (m.preds.y_pred.size() != m.preds.size())
      throw InvalidArgument("member '" + m.model_name + "' has no hard predictions");
  PredictionSet out = skeleton(members);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::size_t positive = 0;
    for (const auto& m : members) positive += m.preds.y_pred[i] == Label::kPneumonia;
    const std::size_t negative = members.size() - positive;
    out.y_pred[i] = positive >= negative ? Label::kPneumonia : Label::kNormal;
    out.y_prob[i] = static_cast<double>(positive) / static_cast<double>(members.size());
  }
  return out;
}

PredictionSet combine(EnsembleMethod method, std::span<const MemberPrediction> members) {
  switch (method) {
    case EnsembleMethod::kSimpleAverage: return simple_average(members);
    case EnsembleMethod::kWeightedAverage: return weighted_average(members);
    case EnsembleMethod::kMajorityVote: return majority_vote(members);
  }
  throw InvalidArgument("unknown ensemble method");
}

}  // namespace cxr
