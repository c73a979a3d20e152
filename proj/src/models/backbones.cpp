#include "cxr/models/backbones.hpp"

#include <string>

namespace nn = torch::nn;

namespace cxr {
namespace {

nn::Conv2d conv(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride = 1,
                std::int64_t groups = 1, bool bias = false) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, k)
                        .stride(stride)
                        .padding((k - 1) / 2)
                        .groups(groups)
                        .bias(bias));
}

// ---------------------------------------------------------------- ResNet-50

class BottleneckImpl : public nn::Module {
 public:
  BottleneckImpl(std::int64_t inplanes, std::int64_t planes, std::int64_t stride) {
    conv1 = register_module("conv1", conv(inplanes, planes, 1));
    bn1 = register_module("bn1", nn::BatchNorm2d(planes));
    conv2 = register_module("conv2", conv(planes, planes, 3, stride));
    bn2 = register_module("bn2", nn::BatchNorm2d(planes));
    conv3 = register_module("conv3", conv(planes, planes * 4, 1));
    bn3 = register_module("bn3", nn::BatchNorm2d(planes * 4));
    if (stride != 1 || inplanes != planes * 4) {
      downsample = register_module(
          "downsample", nn::Sequential(conv(inplanes, planes * 4, 1, stride),
                                       nn::BatchNorm2d(planes * 4)));
    }
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto out = torch::relu(bn1(conv1(x)));
    out = torch::relu(bn2(conv2(out)));
    out = bn3(conv3(out));
    const auto identity = downsample.is_empty() ? x : downsample->forward(x);
    return torch::relu(out + identity);
  }

 private:
  nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr};
  nn::BatchNorm2d bn1{nullptr}, bn2{nullptr}, bn3{nullptr};
  nn::Sequential downsample{nullptr};
};
TORCH_MODULE(Bottleneck);

class ResNet50Impl : public BackboneImpl {
 public:
  ResNet50Impl() {
    conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(3, 64, 7).stride(2).padding(3).bias(false)));
    bn1 = register_module("bn1", nn::BatchNorm2d(64));
    const std::int64_t planes[] = {64, 128, 256, 512};
    const int blocks[] = {3, 4, 6, 3};
    std::int64_t inplanes = 64;
    for (int s = 0; s < 4; ++s) {
      nn::Sequential layer;
      for (int b = 0; b < blocks[s]; ++b) {
        const std::int64_t stride = (b == 0 && s > 0) ? 2 : 1;
        layer->push_back(Bottleneck(inplanes, planes[s], stride));
        inplanes = planes[s] * 4;
      }
      layers[s] = register_module("layer" + std::to_string(s + 1), layer);
    }
  }

  torch::Tensor features(const torch::Tensor& x) override {
    auto out = torch::relu(bn1(conv1(x)));
    out = torch::max_pool2d(out, 3, 2, 1);
    for (auto& layer : layers) out = layer->forward(out);
    return out;
  }

  torch::Tensor pool(const torch::Tensor& fmap) override {
    return torch::adaptive_avg_pool2d(fmap, {1, 1}).flatten(1);
  }

  std::int64_t feature_dim() const override { return 2048; }

  std::vector<std::vector<std::string>> stages() const override {
    return {{"conv1", "bn1"}, {"layer1"}, {"layer2"}, {"layer3"}, {"layer4"}};
  }

  std::string final_conv_layer() const override { return "layer4"; }

 private:
  nn::Conv2d conv1{nullptr};
  nn::BatchNorm2d bn1{nullptr};
  nn::Sequential layers[4];
};

// ------------------------------------------------------------- DenseNet-121

class DenseLayerImpl : public nn::Module {
 public:
  DenseLayerImpl(std::int64_t in, std::int64_t growth, std::int64_t bn_size) {
    norm1 = register_module("norm1", nn::BatchNorm2d(in));
    conv1 = register_module("conv1", conv(in, bn_size * growth, 1));
    norm2 = register_module("norm2", nn::BatchNorm2d(bn_size * growth));
    conv2 = register_module("conv2", conv(bn_size * growth, growth, 3));
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto out = conv1(torch::relu(norm1(x)));
    return conv2(torch::relu(norm2(out)));
  }

 private:
  nn::BatchNorm2d norm1{nullptr}, norm2{nullptr};
  nn::Conv2d conv1{nullptr}, conv2{nullptr};
};
TORCH_MODULE(DenseLayer);

class DenseBlockImpl : public nn::Module {
 public:
  DenseBlockImpl(int num_layers, std::int64_t in, std::int64_t growth, std::int64_t bn_size) {
    for (int i = 0; i < num_layers; ++i)
      layers_.push_back(register_module("denselayer" + std::to_string(i + 1),
                                        DenseLayer(in + i * growth, growth, bn_size)));
  }

  torch::Tensor forward(const torch::Tensor& x) {
    std::vector<torch::Tensor> feats{x};
    for (auto& layer : layers_) feats.push_back(layer->forward(torch::cat(feats, 1)));
    return torch::cat(feats, 1);
  }

 private:
  std::vector<DenseLayer> layers_;
};
TORCH_MODULE(DenseBlock);

class TransitionImpl : public nn::Module {
 public:
  TransitionImpl(std::int64_t in, std::int64_t out) {
    norm = register_module("norm", nn::BatchNorm2d(in));
    conv_ = register_module("conv", conv(in, out, 1));
  }

  torch::Tensor forward(const torch::Tensor& x) {
    return torch::avg_pool2d(conv_(torch::relu(norm(x))), 2, 2);
  }

 private:
  nn::BatchNorm2d norm{nullptr};
  nn::Conv2d conv_{nullptr};
};
TORCH_MODULE(Transition);

class DenseFeaturesImpl : public nn::Module {
 public:
  DenseFeaturesImpl() {
    constexpr std::int64_t growth = 32, bn_size = 4;
    const int block_layers[] = {6, 12, 24, 16};
    conv0 = register_module("conv0", nn::Conv2d(nn::Conv2dOptions(3, 64, 7).stride(2).padding(3).bias(false)));
    norm0 = register_module("norm0", nn::BatchNorm2d(64));
    std::int64_t channels = 64;
    for (int b = 0; b < 4; ++b) {
      blocks[b] = register_module("denseblock" + std::to_string(b + 1),
                                  DenseBlock(block_layers[b], channels, growth, bn_size));
      channels += block_layers[b] * growth;
      if (b < 3) {
        transitions[b] = register_module("transition" + std::to_string(b + 1),
                                         Transition(channels, channels / 2));
        channels /= 2;
      }
    }
    norm5 = register_module("norm5", nn::BatchNorm2d(channels));
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto out = torch::relu(norm0(conv0(x)));
    out = torch::max_pool2d(out, 3, 2, 1);
    for (int b = 0; b < 4; ++b) {
      out = blocks[b]->forward(out);
      if (b < 3) out = transitions[b]->forward(out);
    }
    return norm5(out);
  }

 private:
  nn::Conv2d conv0{nullptr};
  nn::BatchNorm2d norm0{nullptr}, norm5{nullptr};
  DenseBlock blocks[4] = {nullptr, nullptr, nullptr, nullptr};
  Transition transitions[3] = {nullptr, nullptr, nullptr};
};
TORCH_MODULE(DenseFeatures);

class DenseNet121Impl : public BackboneImpl {
 public:
  DenseNet121Impl() { features_ = register_module("features", DenseFeatures()); }

  torch::Tensor features(const torch::Tensor& x) override { return features_->forward(x); }

  torch::Tensor pool(const torch::Tensor& fmap) override {
    return torch::adaptive_avg_pool2d(torch::relu(fmap), {1, 1}).flatten(1);
  }

  std::int64_t feature_dim() const override { return 1024; }

  std::vector<std::vector<std::string>> stages() const override {
    return {{"features.conv0", "features.norm0"},
            {"features.denseblock1", "features.transition1"},
            {"features.denseblock2", "features.transition2"},
            {"features.denseblock3", "features.transition3"},
            {"features.denseblock4", "features.norm5"}};
  }

  std::string final_conv_layer() const override { return "features.norm5"; }

 private:
  DenseFeatures features_{nullptr};
};

// ---------------------------------------------------------- EfficientNet-B0

// Sequential with a concrete forward signature so it can nest inside another.
class StackImpl : public nn::SequentialImpl {
 public:
  using SequentialImpl::SequentialImpl;
  torch::Tensor forward(torch::Tensor x) { return SequentialImpl::forward(x); }
};
TORCH_MODULE(Stack);

Stack conv_norm_act(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride = 1,
                    std::int64_t groups = 1, bool act = true) {
  Stack seq(conv(in, out, k, stride, groups), nn::BatchNorm2d(out));
  if (act) seq->push_back(nn::SiLU());
  return seq;
}

class SqueezeExcitationImpl : public nn::Module {
 public:
  SqueezeExcitationImpl(std::int64_t channels, std::int64_t squeeze) {
    fc1 = register_module("fc1", nn::Conv2d(nn::Conv2dOptions(channels, squeeze, 1)));
    fc2 = register_module("fc2", nn::Conv2d(nn::Conv2dOptions(squeeze, channels, 1)));
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto s = torch::adaptive_avg_pool2d(x, {1, 1});
    s = torch::sigmoid(fc2(torch::silu(fc1(s))));
    return x * s;
  }

 private:
  nn::Conv2d fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(SqueezeExcitation);

class MBConvImpl : public nn::Module {
 public:
  MBConvImpl(std::int64_t expand, std::int64_t k, std::int64_t stride, std::int64_t in,
             std::int64_t out, double drop_prob)
      : use_residual_(stride == 1 && in == out), drop_prob_(drop_prob) {
    const std::int64_t hidden = in * expand;
    Stack seq;
    if (expand != 1) seq->push_back(conv_norm_act(in, hidden, 1));
    seq->push_back(conv_norm_act(hidden, hidden, k, stride, hidden));
    seq->push_back(SqueezeExcitation(hidden, std::max<std::int64_t>(1, in / 4)));
    seq->push_back(conv_norm_act(hidden, out, 1, 1, 1, false));
    block = register_module("block", seq);
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto out = block->forward(x);
    if (!use_residual_) return out;
    if (is_training() && drop_prob_ > 0.0) {
      // Stochastic depth, per sample.
      const double keep = 1.0 - drop_prob_;
      auto mask = torch::empty({out.size(0), 1, 1, 1}, out.options()).bernoulli_(keep);
      out = out * mask / keep;
    }
    return out + x;
  }

 private:
  Stack block{nullptr};
  bool use_residual_;
  double drop_prob_;
};
TORCH_MODULE(MBConv);

class EfficientNetB0Impl : public BackboneImpl {
 public:
  EfficientNetB0Impl() {
    struct StageCfg {
      std::int64_t expand, kernel, stride, in, out;
      int layers;
    };
    const StageCfg cfg[] = {{1, 3, 1, 32, 16, 1},  {6, 3, 2, 16, 24, 2},  {6, 5, 2, 24, 40, 2},
                            {6, 3, 2, 40, 80, 3},  {6, 5, 1, 80, 112, 3}, {6, 5, 2, 112, 192, 4},
                            {6, 3, 1, 192, 320, 1}};
    constexpr double kStochasticDepth = 0.2;
    int total_blocks = 0;
    for (const auto& c : cfg) total_blocks += c.layers;

    Stack seq;
    seq->push_back(conv_norm_act(3, 32, 3, 2));
    int block_id = 0;
    for (const auto& c : cfg) {
      Stack stage;
      for (int i = 0; i < c.layers; ++i) {
        const double p = kStochasticDepth * block_id / total_blocks;
        stage->push_back(MBConv(c.expand, c.kernel, i == 0 ? c.stride : 1, i == 0 ? c.in : c.out,
                                c.out, p));
        ++block_id;
      }
      seq->push_back(stage);
    }
    seq->push_back(conv_norm_act(320, 1280, 1));
    features_ = register_module("features", seq);
  }

  torch::Tensor features(const torch::Tensor& x) override { return features_->forward(x); }

  torch::Tensor pool(const torch::Tensor& fmap) override {
    return torch::adaptive_avg_pool2d(fmap, {1, 1}).flatten(1);
  }

  std::int64_t feature_dim() const override { return 1280; }

  std::vector<std::vector<std::string>> stages() const override {
    std::vector<std::vector<std::string>> out;
    for (int i = 0; i <= 6; ++i) out.push_back({"features." + std::to_string(i)});
    out.push_back({"features.7", "features.8"});
    return out;
  }

  std::string final_conv_layer() const override { return "features.8"; }

 private:
  Stack features_{nullptr};
};

}  // namespace

std::shared_ptr<BackboneImpl> make_resnet50() { return std::make_shared<ResNet50Impl>(); }
std::shared_ptr<BackboneImpl> make_densenet121() { return std::make_shared<DenseNet121Impl>(); }
std::shared_ptr<BackboneImpl> make_efficientnet_b0() {
  return std::make_shared<EfficientNetB0Impl>();
}

}  // namespace cxr
