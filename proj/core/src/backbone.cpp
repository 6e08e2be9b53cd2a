#include "catwm/backbone.hpp"

#include <string>

#include <torch/torch.h>

#include "catwm/error.hpp"

namespace catwm {
namespace {

torch::nn::Conv2dOptions conv(std::int64_t in, std::int64_t out, std::int64_t stride) {
  return torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1);
}

class ConvBackbone final : public FeatureBackbone {
 public:
  ConvBackbone() {
    layers_ = register_module("layers", torch::nn::Sequential(torch::nn::Conv2d(conv(3, 16, 2)), torch::nn::ReLU(),
                                                              torch::nn::Conv2d(conv(16, 32, 2)), torch::nn::ReLU(),
                                                              torch::nn::Conv2d(conv(32, 64, 2)), torch::nn::ReLU()));
  }

  torch::Tensor forward(const torch::Tensor& x) override {
    return layers_->forward((x - 0.5) * 4.0).mean({2, 3});
  }
  std::int64_t feature_dim() const override { return 64; }

 private:
  torch::nn::Sequential layers_{nullptr};
};

struct BasicBlockImpl : torch::nn::Module {
  BasicBlockImpl(std::int64_t in, std::int64_t out, std::int64_t stride) {
    conv1 = register_module("conv1", torch::nn::Conv2d(conv(in, out, stride)));
    conv2 = register_module("conv2", torch::nn::Conv2d(conv(out, out, 1)));
    shortcut = register_module("shortcut",
                               torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1).stride(stride).bias(false)));
  }
  torch::Tensor forward(const torch::Tensor& x) {
    auto y = conv2(torch::relu(conv1(x)));
    return torch::relu(y + shortcut(x));
  }
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, shortcut{nullptr};
};
TORCH_MODULE(BasicBlock);

class ResNetBackbone final : public FeatureBackbone {
 public:
  ResNetBackbone() {
    stem_ = register_module("stem", torch::nn::Conv2d(conv(3, 16, 1)));
    block1_ = register_module("block1", BasicBlock(16, 32, 2));
    block2_ = register_module("block2", BasicBlock(32, 64, 2));
  }

  torch::Tensor forward(const torch::Tensor& x) override {
    auto y = torch::relu(stem_((x - 0.5) * 4.0));
    return block2_(block1_(y)).mean({2, 3});
  }
  std::int64_t feature_dim() const override { return 64; }

 private:
  torch::nn::Conv2d stem_{nullptr};
  BasicBlock block1_{nullptr}, block2_{nullptr};
};

}  // namespace

std::string_view backbone_name(BackboneKind kind) { return kind == BackboneKind::Conv ? "conv" : "resnet"; }

BackboneKind parse_backbone(std::string_view name) {
  if (name == "conv") return BackboneKind::Conv;
  if (name == "resnet") return BackboneKind::ResNet;
  throw ValidationError("unknown backbone '" + std::string(name) + "'");
}

double FeatureBackbone::checksum() const {
  double acc = 0.0;
  std::int64_t offset = 0;
  for (const auto& p : parameters()) {
    auto flat = p.detach().to(torch::kDouble).flatten();
    auto weights = torch::arange(offset + 1, offset + 1 + flat.numel(), torch::kDouble);
    acc += (flat * weights).sum().item<double>();
    offset += flat.numel();
  }
  return acc;
}

std::shared_ptr<FeatureBackbone> make_backbone(BackboneKind kind, std::uint64_t seed) {
  torch::manual_seed(seed);
  std::shared_ptr<FeatureBackbone> net;
  if (kind == BackboneKind::Conv) {
    net = std::make_shared<ConvBackbone>();
  } else {
    net = std::make_shared<ResNetBackbone>();
  }
  for (auto& p : net->parameters()) p.set_requires_grad(false);
  net->eval();
  return net;
}

}  // namespace catwm
