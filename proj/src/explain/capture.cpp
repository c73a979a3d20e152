#include "cxr/explain/capture.hpp"

#include "cxr/common/error.hpp"

namespace cxr {

ActivationBundle capture(ModelHandle& model, const torch::Tensor& image,
                         std::optional<int> class_override) {
  auto x = image.dim() == 3 ? image.unsqueeze(0) : image;
  if (x.dim() != 4 || x.size(0) != 1 || x.size(1) != 3)
    throw InvalidArgument("capture expects a single 3-channel image");
  if (class_override && (*class_override < 0 || *class_override >= model.spec().num_classes))
    throw InvalidArgument("class override out of range");

  const bool was_training = model.net().is_training();
  model.eval_mode();
  torch::AutoGradMode enable(true);
  // A leaf input that requires grad keeps the graph alive even when the
  // whole backbone is frozen.
  x = x.detach().to(torch::kFloat32).set_requires_grad(true);
  const auto fmap = model.net().feature_map(x);
  const auto logits = model.net().classify(fmap);
  const int cls = class_override ? *class_override : static_cast<int>(logits[0].argmax().item<std::int64_t>());
  const auto grads = torch::autograd::grad({logits[0][cls]}, {fmap}, /*grad_outputs=*/{},
                                           /*retain_graph=*/false, /*create_graph=*/false);
  if (was_training) model.train_mode();

  const auto a = fmap.detach()[0].contiguous().to(torch::kFloat32);
  const auto g = grads[0].detach()[0].contiguous().to(torch::kFloat32);
  ActivationBundle b;
  b.channels = static_cast<int>(a.size(0));
  b.height = static_cast<int>(a.size(1));
  b.width = static_cast<int>(a.size(2));
  b.activations.assign(a.data_ptr<float>(), a.data_ptr<float>() + a.numel());
  b.gradients.assign(g.data_ptr<float>(), g.data_ptr<float>() + g.numel());
  b.class_index = cls;
  return b;
}

}  // namespace cxr
