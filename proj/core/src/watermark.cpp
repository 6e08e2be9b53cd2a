#include "catwm/watermark.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include <torch/torch.h>

#include "catwm/color.hpp"
#include "catwm/error.hpp"

namespace F = torch::nn::functional;

namespace catwm {
namespace {

torch::nn::Conv2d conv3(std::int64_t in, std::int64_t out, std::int64_t stride = 1) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

torch::nn::Conv2d conv1(std::int64_t in, std::int64_t out) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1));
}

constexpr std::int64_t kPatternChannels = 4;

torch::Tensor resize_to(const torch::Tensor& x, std::int64_t h, std::int64_t w) {
  if (x.size(2) == h && x.size(3) == w) return x;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<std::int64_t>{h, w})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

torch::Tensor upsample2(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kNearest));
}

}  // namespace

void WatermarkConfig::validate() const {
  std::ostringstream errs;
  if (payload_bits <= 0) errs << " payload_bits must be > 0;";
  if (channels <= 0) errs << " channels must be > 0;";
  if (res_blocks < 0) errs << " res_blocks must be >= 0;";
  if (resolution <= 0 || resolution % 4 != 0) errs << " resolution must be a positive multiple of 4;";
  if (!errs.str().empty()) throw ValidationError("watermark:" + errs.str());
}

ResBlockImpl::ResBlockImpl(std::int64_t channels) {
  conv1 = register_module("conv1", conv3(channels, channels));
  conv2 = register_module("conv2", conv3(channels, channels));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x) { return x + conv2(torch::gelu(conv1(x))); }

EmbedderImpl::EmbedderImpl(const WatermarkConfig& config)
    : payload_(config.payload_bits), resolution_(config.resolution) {
  const std::int64_t c = config.channels;
  const auto low = resolution_ / 4;
  bottleneck_msg_ = register_module("bottleneck_msg", torch::nn::Linear(payload_, payload_ * low * low));
  pattern_ = register_module("pattern", torch::nn::Linear(payload_, kPatternChannels * resolution_ * resolution_));
  in_ = register_module("stem", conv3(3, c));
  down1_ = register_module("down1", conv3(c, 2 * c, 2));
  down2_ = register_module("down2", conv3(2 * c, 4 * c, 2));
  fuse_ = register_module("fuse", conv1(4 * c + payload_, 4 * c));
  blocks_ = register_module("blocks", torch::nn::Sequential());
  for (int i = 0; i < config.res_blocks; ++i) blocks_->push_back(ResBlock(4 * c));
  up1_ = register_module("up1", conv3(4 * c, 2 * c));
  merge1_ = register_module("merge1", conv3(4 * c, 2 * c));
  up2_ = register_module("up2", conv3(2 * c, c));
  merge2_ = register_module("merge2", conv3(2 * c + kPatternChannels, c));
  out_ = register_module("out", conv1(c, 1));
}

torch::Tensor EmbedderImpl::forward(const torch::Tensor& x, const torch::Tensor& bits) {
  const auto batch = bits.size(0);
  const auto low = resolution_ / 4;
  auto signs = bits * 2.0 - 1.0;
  auto e0 = torch::gelu(in_(x * 2.0 - 1.0));
  auto e1 = torch::gelu(down1_(e0));
  auto e2 = torch::gelu(down2_(e1));
  auto msg = resize_to(bottleneck_msg_(signs).view({batch, payload_, low, low}), e2.size(2), e2.size(3));
  auto b = torch::gelu(fuse_(torch::cat({e2, msg}, 1)));
  if (!blocks_->is_empty()) b = blocks_->forward(b);
  auto d1 = torch::gelu(up1_(upsample2(b)));
  d1 = torch::gelu(merge1_(torch::cat({d1, e1}, 1)));
  auto d0 = torch::gelu(up2_(upsample2(d1)));
  auto pattern =
      resize_to(pattern_(signs).view({batch, kPatternChannels, resolution_, resolution_}), d0.size(2), d0.size(3));
  d0 = torch::gelu(merge2_(torch::cat({d0, e0, pattern}, 1)));
  return torch::tanh(out_(d0));
}

ExtractorImpl::ExtractorImpl(const WatermarkConfig& config) {
  const std::int64_t c = config.channels;
  features_ = register_module("features", torch::nn::Sequential());
  const std::int64_t widths[][3] = {{3, c, 1}, {c, 2 * c, 2}, {2 * c, 4 * c, 2}, {4 * c, 4 * c, 1}};
  for (const auto& w : widths) {
    features_->push_back(conv3(w[0], w[1], w[2]));
    features_->push_back(torch::nn::BatchNorm2d(w[1]));
    features_->push_back(torch::nn::GELU());
  }
  head_ = register_module("head", torch::nn::Linear(4 * c, config.payload_bits));
}

torch::Tensor ExtractorImpl::forward(const torch::Tensor& x) {
  return head_(features_->forward(x * 2.0 - 1.0).mean({2, 3}));
}

WatermarkModel::WatermarkModel(const WatermarkConfig& config) : config_(config) {
  config_.validate();
  torch::manual_seed(config_.init_seed);
  embedder_ = Embedder(config_);
  extractor_ = Extractor(config_);
}

torch::Tensor WatermarkModel::embed(const torch::Tensor& x, const torch::Tensor& bits, double alpha) {
  if (x.dim() != 4 || x.size(1) != 3) throw ShapeMismatch("embed expects (batch, 3, H, W)");
  if (x.size(2) % 4 != 0 || x.size(3) % 4 != 0) throw ShapeMismatch("embed needs H and W divisible by 4");
  if (bits.dim() != 2 || bits.size(0) != x.size(0) || bits.size(1) != config_.payload_bits)
    throw PayloadMismatch("message must be (batch, " + std::to_string(config_.payload_bits) + ")");
  ++embed_calls_;
  if (alpha == 0.0) return x;
  auto residual = embedder_->forward(x, bits.to(x.options()));
  return torch::clamp(x + alpha * residual, 0.0, 1.0);
}

torch::Tensor WatermarkModel::extract(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 3) throw ShapeMismatch("extract expects (batch, 3, H, W)");
  ++extract_calls_;
  return extractor_->forward(x);
}

std::vector<torch::Tensor> WatermarkModel::embedder_parameters() const { return embedder_->parameters(); }
std::vector<torch::Tensor> WatermarkModel::extractor_parameters() const { return extractor_->parameters(); }

std::vector<torch::Tensor> WatermarkModel::parameters() const {
  auto out = embedder_parameters();
  auto ext = extractor_parameters();
  out.insert(out.end(), ext.begin(), ext.end());
  return out;
}

void WatermarkModel::train(bool on) {
  embedder_->train(on);
  extractor_->train(on);
}

torch::Tensor random_messages(std::int64_t batch, std::int64_t bits, Rng& rng) {
  auto m = torch::empty({batch, bits}, torch::kFloat);
  auto* data = m.data_ptr<float>();
  for (std::int64_t i = 0; i < m.numel(); ++i) data[i] = static_cast<float>(rng.next_u64() >> 63);
  return m;
}

torch::Tensor message_loss(const torch::Tensor& scores, const torch::Tensor& bits) {
  if (scores.sizes() != bits.sizes()) throw LengthMismatch("scores and message shapes differ");
  return F::binary_cross_entropy_with_logits(scores, bits.to(scores.options()));
}

torch::Tensor perceptual_loss(const torch::Tensor& x, const torch::Tensor& y) {
  if (x.sizes() != y.sizes()) throw ShapeMismatch("perceptual loss needs equal shapes");
  return (rgb_to_yuv(x) - rgb_to_yuv(y)).pow(2).mean();
}

double alpha_schedule(double epoch, double total_epochs, const AlphaSchedule& s) {
  if (total_epochs <= 0 || epoch < 0 || epoch > total_epochs) throw DomainError("epoch outside [0, total]");
  const double start = total_epochs * (1.0 - s.decay_fraction);
  if (epoch <= start) return s.alpha_start;
  const double progress = (epoch - start) / (total_epochs - start);
  return s.alpha_end + (s.alpha_start - s.alpha_end) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace catwm
