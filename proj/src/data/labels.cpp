#include "cxr/data/labels.hpp"

#include <algorithm>
#include <cctype>
#include <string>

#include "cxr/common/error.hpp"

namespace cxr {
namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

}  // namespace

std::string_view to_string(Label label) {
  return label == Label::kPneumonia ? "PNEUMONIA" : "NORMAL";
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "TRAIN";
    case Split::kVal: return "VAL";
    case Split::kTest: return "TEST";
    case Split::kUnassigned: return "UNASSIGNED";
  }
  return "UNASSIGNED";
}

Label parse_label(std::string_view text) {
  const auto u = upper(text);
  if (u == "NORMAL" || u == "N" || u == "0") return Label::kNormal;
  if (u == "PNEUMONIA" || u == "P" || u == "1") return Label::kPneumonia;
  throw DataError("unknown label '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
  const auto u = upper(text);
  if (u == "TRAIN") return Split::kTrain;
  if (u == "VAL" || u == "VALIDATION") return Split::kVal;
  if (u == "TEST") return Split::kTest;
  if (u == "UNASSIGNED") return Split::kUnassigned;
  throw DataError("unknown split '" + std::string(text) + "'");
}

}  // namespace cxr
