#pragma once

#include <cstdint>

#include <torch/nn/module.h>
#include <torch/nn/modules/container/sequential.h>
#include <torch/nn/modules/conv.h>
#include <torch/nn/modules/linear.h>
#include <torch/types.h>

#include "catwm/rng.hpp"

namespace catwm {

struct WatermarkConfig {
  int payload_bits = 16;  // d_m
  int channels = 16;      // base width of both networks
  int res_blocks = 4;
  int resolution = 32;    // side length the message patterns are learned at
  std::uint64_t init_seed = 7;

  void validate() const;
};

/// Residual conv block: x + conv(gelu(conv(x))).
struct ResBlockImpl : torch::nn::Module {
  explicit ResBlockImpl(std::int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
};
TORCH_MODULE(ResBlock);

/// Encoder-decoder producing a luminance residual in [-1, 1] conditioned on
/// the message. The message enters twice: as a learned map at the
/// bottleneck and as a learned full-resolution pattern before the output.
class EmbedderImpl : public torch::nn::Module {
 public:
  explicit EmbedderImpl(const WatermarkConfig& config);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& bits);

 private:
  std::int64_t payload_;
  std::int64_t resolution_;
  torch::nn::Linear bottleneck_msg_{nullptr}, pattern_{nullptr};
  torch::nn::Conv2d in_{nullptr}, down1_{nullptr}, down2_{nullptr}, fuse_{nullptr};
  torch::nn::Sequential blocks_{nullptr};
  torch::nn::Conv2d up1_{nullptr}, merge1_{nullptr}, up2_{nullptr}, merge2_{nullptr}, out_{nullptr};
};
TORCH_MODULE(Embedder);

/// Conv/batch-norm encoder with global average pooling and a linear head to
/// d_m scores.
class ExtractorImpl : public torch::nn::Module {
 public:
  explicit ExtractorImpl(const WatermarkConfig& config);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential features_{nullptr};
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(Extractor);

/// Embedder/extractor pair. Counts forward calls so a training step can be
/// checked to run exactly one embed and one extract.
class WatermarkModel {
 public:
  explicit WatermarkModel(const WatermarkConfig& config);

  /// clamp(x + alpha * r(x, m)) with r added equally to R, G and B (a pure
  /// luma offset in YUV). Throws PayloadMismatch if m is not (B, d_m).
  torch::Tensor embed(const torch::Tensor& x, const torch::Tensor& bits, double alpha);
  /// Per-bit logits; a bit decodes to 1 when sigmoid(score) > 0.5.
  torch::Tensor extract(const torch::Tensor& x);

  std::vector<torch::Tensor> embedder_parameters() const;
  std::vector<torch::Tensor> extractor_parameters() const;
  std::vector<torch::Tensor> parameters() const;

  void train(bool on = true);
  const WatermarkConfig& config() const { return config_; }
  Embedder& embedder() { return embedder_; }
  Extractor& extractor() { return extractor_; }

  std::int64_t embed_calls() const { return embed_calls_; }
  std::int64_t extract_calls() const { return extract_calls_; }

 private:
  WatermarkConfig config_;
  Embedder embedder_{nullptr};
  Extractor extractor_{nullptr};
  std::int64_t embed_calls_ = 0;
  std::int64_t extract_calls_ = 0;
};

/// Random {0,1} messages of shape (batch, bits) as floats.
torch::Tensor random_messages(std::int64_t batch, std::int64_t bits, Rng& rng);

/// Mean binary cross-entropy between sigmoid(scores) and the bits.
torch::Tensor message_loss(const torch::Tensor& scores, const torch::Tensor& bits);

/// Mean squared error in BT.601 YUV.
torch::Tensor perceptual_loss(const torch::Tensor& x, const torch::Tensor& y);

struct AlphaSchedule {
  double alpha_start = 1.0;
  double alpha_end = 0.2;
  double decay_fraction = 0.4;  // final share of training spent decaying
};

/// alpha_start until the decay window, then cosine down to alpha_end.
double alpha_schedule(double epoch, double total_epochs, const AlphaSchedule& schedule = {});

}  // namespace catwm
