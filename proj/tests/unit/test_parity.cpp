#include <cstdlib>
#include <fstream>
#include <iterator>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "cxr/models/backbones.hpp"
#include "cxr/models/model.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace cxr;

namespace {

c10::Dict<c10::IValue, c10::IValue> load_dict(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return torch::pickle_load(bytes).toGenericDict();
}

double rel_error(const torch::Tensor& got, const torch::Tensor& want) {
  const double scale = std::max(1.0, want.abs().max().item<double>());
  return (got - want).abs().max().item<double>() / scale;
}

}  // namespace

// Backbones loaded from torchvision exports must reproduce torchvision's own
// eval-mode features. Needs python3 with torchvision; skipped otherwise.
TEST(Parity, BackbonesMatchTorchvision) {
  if (std::system("python3 -c 'import torchvision' >/dev/null 2>&1") != 0)
    GTEST_SKIP() << "python3 with torchvision not available";
  cxr::testing::TempDir tmp;
  const std::string cmd = "python3 " CXR_SOURCE_DIR "/tests/python/make_parity_fixture.py " +
                          tmp.path().string();
  ASSERT_EQ(std::system(cmd.c_str()), 0);

  const WeightSource ws{tmp.path()};
  for (auto arch : {ArchitectureId::kResNet50, ArchitectureId::kDenseNet121,
                    ArchitectureId::kEfficientNetB0}) {
    SCOPED_TRACE(std::string(to_string(arch)));
    auto backbone = std::dynamic_pointer_cast<BackboneImpl>(make_backbone(arch));
    ASSERT_TRUE(backbone);
    load_state_dict(*backbone, ws.file_for(arch));
    backbone->eval();
    const auto ref = load_dict(tmp / (std::string(to_string(arch)) + "_ref.pt"));
    torch::NoGradGuard ng;
    const auto f = backbone->features(ref.at("input").toTensor());
    const auto want_f = ref.at("features").toTensor();
    ASSERT_EQ(f.sizes(), want_f.sizes());
    EXPECT_LT(rel_error(f, want_f), 1e-4);
    const auto p = backbone->pool(f);
    const auto want_p = ref.at("pooled").toTensor();
    ASSERT_EQ(p.sizes(), want_p.sizes());
    EXPECT_EQ(p.size(1), backbone->feature_dim());
    EXPECT_LT(rel_error(p, want_p), 1e-4);
  }
}
