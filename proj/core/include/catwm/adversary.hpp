#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <torch/nn/module.h>
#include <torch/nn/modules/container/sequential.h>
#include <torch/nn/modules/rnn.h>
#include <torch/types.h>

#include "catwm/attacks.hpp"
#include "catwm/backbone.hpp"
#include "catwm/rng.hpp"

namespace catwm {

struct AdversaryConfig {
  int depth = 1;             // attack steps T, 1 or 2
  double tau = 1.0;          // Gumbel-Softmax temperature
  double tau_ent = 1.0;      // temperature of the entropy softmax
  double lambda_ent = 0.1;   // entropy bonus weight
  int hidden_dim = 384;      // d_h
  int projection_hidden = 128;
  int head_hidden = 128;
  BackboneKind backbone = BackboneKind::Conv;
  std::uint64_t backbone_seed = 1234;

  /// Throws ValidationError listing every violated invariant.
  void validate() const;
};

/// Recurrent attack controller: frozen features, two-layer projection, GRU
/// cell and a two-layer head producing one logit per primitive.
class AttackControllerImpl : public torch::nn::Module {
 public:
  AttackControllerImpl(const AdversaryConfig& config, std::int64_t num_primitives);

  /// z_t in R^{d_h}. Backbone is frozen; projection is trainable.
  torch::Tensor extract_features(const torch::Tensor& x);

  struct StepOutput {
    torch::Tensor hidden;
    torch::Tensor logits;
  };
  StepOutput step(const torch::Tensor& features, const torch::Tensor& hidden);

  torch::Tensor initial_state(std::int64_t batch, const torch::TensorOptions& opts) const;

  /// Projection, GRU and head parameters (the backbone is excluded).
  std::vector<torch::Tensor> trainable_parameters() const;
  std::int64_t trainable_parameter_count() const;
  const FeatureBackbone& backbone() const { return *backbone_; }

  const AdversaryConfig& config() const { return config_; }
  std::int64_t num_primitives() const { return num_primitives_; }

 private:
  AdversaryConfig config_;
  std::int64_t num_primitives_;
  std::shared_ptr<FeatureBackbone> backbone_;
  torch::nn::Sequential projection_{nullptr};
  torch::nn::GRUCell gru_{nullptr};
  torch::nn::Sequential head_{nullptr};
};
TORCH_MODULE(AttackController);

struct GumbelSample {
  torch::Tensor pi;    // forward exactly one-hot, backward through `soft`
  torch::Tensor soft;  // softmax((logits + g) / tau)
  std::vector<std::int64_t> index;  // argmax of perturbed logits, lowest index on ties
};

/// Straight-through Gumbel-Softmax over the last dim of (batch, K) logits.
/// Noise is drawn i.i.d. per element from `rng`.
GumbelSample gumbel_select(const torch::Tensor& logits, double tau, Rng& rng);

/// Same, with caller-supplied Gumbel noise of the logits' shape.
GumbelSample gumbel_select_with_noise(const torch::Tensor& logits, double tau, const torch::Tensor& gumbel_noise);

/// Forward value `value` (must not require grad); backward routes the
/// incoming gradient unchanged to `surrogate`.
torch::Tensor forward_as(const torch::Tensor& value, const torch::Tensor& surrogate);

/// H = -sum p log p with p = softmax(logits / tau_ent) over the last dim.
torch::Tensor policy_entropy(const torch::Tensor& logits, double tau_ent);

/// x_{t+1} = sum_i pi_i f_i(x_t, params_i), one row of pi per batch element.
/// When every row of pi is exactly one-hot the forward value equals the
/// selected primitive's full-batch output bit-for-bit and only the selected
/// branches are differentiated; gradients match the dense mixture.
torch::Tensor attack_step(const torch::Tensor& x, const torch::Tensor& pi, std::span<const AttackPrimitive> primitives,
                          std::span<const AttackParams> params);

/// Dense relaxed mixture, every branch differentiated.
torch::Tensor mixture(const torch::Tensor& x, const torch::Tensor& pi, std::span<const AttackPrimitive> primitives,
                      std::span<const AttackParams> params);

struct TrajectoryStep {
  torch::Tensor logits;   // (B, K)
  torch::Tensor pi;       // (B, K)
  torch::Tensor soft;     // (B, K)
  std::vector<std::int64_t> index;
  std::vector<AttackParams> params;  // one per primitive
  torch::Tensor entropy;  // (B,)
  torch::Tensor image;    // x_{t+1}
};

struct AdversaryTrajectory {
  std::vector<TrajectoryStep> steps;

  /// Sum over steps of the batch-mean entropy (differentiable).
  torch::Tensor total_entropy() const;
};

struct RolloutOptions {
  /// Per step, an optional primitive index applied to every element instead
  /// of the sampled one. Noise is still drawn so later steps see the same
  /// random stream.
  std::vector<std::optional<std::int64_t>> forced;
};

struct RolloutResult {
  torch::Tensor image;
  AdversaryTrajectory trajectory;
};

RolloutResult rollout(AttackController& controller, const torch::Tensor& x0, std::span<const AttackPrimitive> primitives,
                      Rng& rng, const RolloutOptions& options = {});

}  // namespace catwm
