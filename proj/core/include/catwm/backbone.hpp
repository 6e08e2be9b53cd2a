#pragma once

#include <cstdint>
#include <memory>
#include <string_view>

#include <torch/nn/module.h>
#include <torch/types.h>

namespace catwm {

enum class BackboneKind { Conv, ResNet };

std::string_view backbone_name(BackboneKind kind);
BackboneKind parse_backbone(std::string_view name);

/// Frozen image feature encoder. Weights are drawn once from `seed` and never
/// receive gradients; gradients still flow through to the input image.
class FeatureBackbone : public torch::nn::Module {
 public:
  virtual torch::Tensor forward(const torch::Tensor& x) = 0;
  virtual std::int64_t feature_dim() const = 0;

  /// Order-sensitive checksum of every weight, for the frozen contract.
  double checksum() const;
};

std::shared_ptr<FeatureBackbone> make_backbone(BackboneKind kind, std::uint64_t seed);

}  // namespace catwm
