#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <torch/torch.h>

#include "cxr/models/model.hpp"
#include "test_util.hpp"

namespace cxr::testing {

/// Directory of randomly initialised backbone weight files, one per transfer
/// architecture, written once per process. Stands in for the ImageNet cache.
inline const WeightSource& standin_weights() {
  static const WeightSource source = [] {
    static TempDir dir;  // removed at exit
    torch::manual_seed(1234);
    WeightSource ws{dir.path()};
    for (auto arch : {ArchitectureId::kResNet50, ArchitectureId::kDenseNet121,
                      ArchitectureId::kEfficientNetB0}) {
      auto backbone = make_backbone(arch);
      save_state_dict(*backbone, ws.file_for(arch));
    }
    return ws;
  }();
  return source;
}

/// name -> tensor copy of every parameter and buffer.
inline std::map<std::string, torch::Tensor> snapshot(const torch::nn::Module& m) {
  std::map<std::string, torch::Tensor> out;
  for (const auto& p : m.named_parameters()) out[p.key()] = p.value().detach().clone();
  for (const auto& b : m.named_buffers()) out["buffer:" + b.key()] = b.value().detach().clone();
  return out;
}

inline bool same_tensors(const std::map<std::string, torch::Tensor>& a,
                         const std::map<std::string, torch::Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    if (it == b.end() || !torch::equal(v, it->second)) return false;
  }
  return true;
}

}  // namespace cxr::testing
