#include "catwm/adversary.hpp"

#include <sstream>

#include <torch/torch.h>

#include "catwm/error.hpp"

namespace catwm {
namespace {

struct ForwardAsFunction : public torch::autograd::Function<ForwardAsFunction> {
  static torch::Tensor forward(torch::autograd::AutogradContext* /*ctx*/, const torch::Tensor& value,
                               const torch::Tensor& /*surrogate*/) {
    return value.clone();
  }
  static torch::autograd::variable_list backward(torch::autograd::AutogradContext* /*ctx*/,
                                                 torch::autograd::variable_list grad_out) {
    return {torch::Tensor(), grad_out[0]};
  }
};

bool rows_one_hot(const torch::Tensor& pi) {
  auto v = pi.detach();
  const bool entries = ((v == 0) | (v == 1)).all().item<bool>();
  return entries && (v.sum(1) == 1).all().item<bool>();
}

void check_mixture_args(const torch::Tensor& x, const torch::Tensor& pi, std::span<const AttackPrimitive> primitives,
                        std::span<const AttackParams> params) {
  check_image_batch(x);
  const auto k = static_cast<std::int64_t>(primitives.size());
  if (pi.dim() != 2 || pi.size(0) != x.size(0) || pi.size(1) != k)
    throw ShapeMismatch("pi must be (batch, K) with K = number of primitives");
  if (params.size() != primitives.size()) throw LengthMismatch("one parameter set per primitive expected");
}

}  // namespace

void AdversaryConfig::validate() const {
  std::ostringstream errs;
  if (depth != 1 && depth != 2) errs << " depth must be 1 or 2;";
  if (!(tau > 0)) errs << " tau must be > 0;";
  if (!(tau_ent > 0)) errs << " tau_ent must be > 0;";
  if (!(lambda_ent >= 0)) errs << " lambda_ent must be >= 0;";
  if (hidden_dim <= 0) errs << " hidden_dim must be > 0;";
  if (projection_hidden <= 0 || head_hidden <= 0) errs << " MLP widths must be > 0;";
  if (!errs.str().empty()) throw ValidationError("adversary:" + errs.str());
}

AttackControllerImpl::AttackControllerImpl(const AdversaryConfig& config, std::int64_t num_primitives)
    : config_(config), num_primitives_(num_primitives) {
  config_.validate();
  backbone_ = register_module("backbone", make_backbone(config.backbone, config.backbone_seed));
  projection_ = register_module(
      "projection", torch::nn::Sequential(torch::nn::Linear(backbone_->feature_dim(), config.projection_hidden),
                                          torch::nn::GELU(), torch::nn::Linear(config.projection_hidden, config.hidden_dim)));
  gru_ = register_module("gru", torch::nn::GRUCell(config.hidden_dim, config.hidden_dim));
  head_ = register_module("head",
                          torch::nn::Sequential(torch::nn::Linear(config.hidden_dim, config.head_hidden), torch::nn::GELU(),
                                                torch::nn::Linear(config.head_hidden, num_primitives)));
}

torch::Tensor AttackControllerImpl::extract_features(const torch::Tensor& x) {
  check_image_batch(x);
  return projection_->forward(backbone_->forward(x));
}

AttackControllerImpl::StepOutput AttackControllerImpl::step(const torch::Tensor& features, const torch::Tensor& hidden) {
  auto h = gru_->forward(features, hidden);
  return {h, head_->forward(h)};
}

torch::Tensor AttackControllerImpl::initial_state(std::int64_t batch, const torch::TensorOptions& opts) const {
  return torch::zeros({batch, config_.hidden_dim}, opts);
}

std::vector<torch::Tensor> AttackControllerImpl::trainable_parameters() const {
  std::vector<torch::Tensor> out;
  const std::vector<std::shared_ptr<torch::nn::Module>> parts{projection_.ptr(), gru_.ptr(), head_.ptr()};
  for (const auto& m : parts)
    for (const auto& p : m->parameters()) out.push_back(p);
  return out;
}

std::int64_t AttackControllerImpl::trainable_parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : trainable_parameters()) n += p.numel();
  return n;
}

torch::Tensor forward_as(const torch::Tensor& value, const torch::Tensor& surrogate) {
  return ForwardAsFunction::apply(value, surrogate);
}

GumbelSample gumbel_select_with_noise(const torch::Tensor& logits, double tau, const torch::Tensor& gumbel_noise) {
  if (!(tau > 0)) throw DomainError("tau must be positive");
  if (logits.dim() != 2 || gumbel_noise.sizes() != logits.sizes())
    throw ShapeMismatch("logits must be (batch, K) and noise must match");
  auto perturbed = logits + gumbel_noise.to(logits.options());
  auto soft = torch::softmax(perturbed / tau, -1);

  auto host = perturbed.detach().to(torch::kDouble).contiguous();
  auto acc = host.accessor<double, 2>();
  std::vector<std::int64_t> index(static_cast<std::size_t>(logits.size(0)));
  for (std::int64_t b = 0; b < logits.size(0); ++b) {
    std::int64_t best = 0;
    for (std::int64_t k = 1; k < logits.size(1); ++k)
      if (acc[b][k] > acc[b][best]) best = k;
    index[static_cast<std::size_t>(b)] = best;
  }
  auto idx = torch::tensor(index, torch::kLong);
  auto hard = torch::one_hot(idx, logits.size(1)).to(logits.options());
  return {forward_as(hard, soft), soft, std::move(index)};
}

GumbelSample gumbel_select(const torch::Tensor& logits, double tau, Rng& rng) {
  auto u = rng.open_unit_tensor(logits.sizes(), torch::kDouble);
  auto g = -torch::log(-torch::log(u));
  return gumbel_select_with_noise(logits, tau, g);
}

torch::Tensor policy_entropy(const torch::Tensor& logits, double tau_ent) {
  if (!(tau_ent > 0)) throw DomainError("tau_ent must be positive");
  auto logp = torch::log_softmax(logits / tau_ent, -1);
  return -(logp.exp() * logp).sum(-1);
}

torch::Tensor mixture(const torch::Tensor& x, const torch::Tensor& pi, std::span<const AttackPrimitive> primitives,
                      std::span<const AttackParams> params) {
  check_mixture_args(x, pi, primitives, params);
  torch::Tensor out;
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    auto term = pi.select(1, static_cast<std::int64_t>(i)).view({-1, 1, 1, 1}) * apply(primitives[i], x, params[i]);
    out = out.defined() ? out + term : term;
  }
  return out;
}

torch::Tensor attack_step(const torch::Tensor& x, const torch::Tensor& pi, std::span<const AttackPrimitive> primitives,
                          std::span<const AttackParams> params) {
  check_mixture_args(x, pi, primitives, params);
  if (!rows_one_hot(pi)) return mixture(x, pi, primitives, params);

  const auto batch = x.size(0);
  const auto k = static_cast<std::int64_t>(primitives.size());
  auto selected = pi.detach().argmax(1);

  std::vector<torch::Tensor> outputs;
  outputs.reserve(primitives.size());
  {
    torch::NoGradGuard no_grad;
    auto xd = x.detach();
    for (std::size_t i = 0; i < primitives.size(); ++i) outputs.push_back(apply(primitives[i], xd, params[i]));
  }
  auto stacked = torch::stack(outputs, 1);  // (B, K, C, H, W)
  auto value = stacked.index({torch::arange(batch), selected});

  torch::Tensor out = value;
  if (x.requires_grad()) {
    // Differentiate only the branch each element selected.
    std::vector<torch::Tensor> rows, branches;
    for (std::int64_t i = 0; i < k; ++i) {
      auto members = torch::nonzero(selected == i).flatten();
      if (members.numel() == 0) continue;
      rows.push_back(members);
      branches.push_back(apply(primitives[static_cast<std::size_t>(i)], x.index_select(0, members),
                               params[static_cast<std::size_t>(i)]));
    }
    auto surrogate = torch::zeros_like(x).index_copy(0, torch::cat(rows), torch::cat(branches));
    out = forward_as(value, surrogate);
  }
  if (pi.requires_grad()) {
    // Exactly zero in the forward pass; carries d/dpi_i = <grad, f_i(x)>.
    auto delta = (pi - pi.detach()).view({batch, k, 1, 1, 1});
    out = out + (delta * stacked).sum(1);
  }
  return out;
}

torch::Tensor AdversaryTrajectory::total_entropy() const {
  torch::Tensor total;
  for (const auto& s : steps) {
    auto h = s.entropy.mean();
    total = total.defined() ? total + h : h;
  }
  return total;
}

RolloutResult rollout(AttackController& controller, const torch::Tensor& x0, std::span<const AttackPrimitive> primitives,
                      Rng& rng, const RolloutOptions& options) {
  const auto& cfg = controller->config();
  if (static_cast<std::int64_t>(primitives.size()) != controller->num_primitives())
    throw ShapeMismatch("controller head size does not match the primitive library");
  const auto batch = x0.size(0);
  const auto k = static_cast<std::int64_t>(primitives.size());

  RolloutResult result;
  auto h = controller->initial_state(batch, x0.options());
  torch::Tensor x = x0;
  for (int t = 0; t < cfg.depth; ++t) {
    auto z = controller->extract_features(x.detach());
    auto out = controller->step(z, h);
    h = out.hidden;
    auto gs = gumbel_select(out.logits, cfg.tau, rng);
    auto params = sample_all_params(primitives, rng);

    const auto forced = static_cast<std::size_t>(t) < options.forced.size() ? options.forced[static_cast<std::size_t>(t)]
                                                                             : std::nullopt;
    if (forced) {
      if (*forced < 0 || *forced >= k) throw UnknownPrimitive("forced index out of range");
      gs.index.assign(static_cast<std::size_t>(batch), *forced);
      gs.pi = torch::one_hot(torch::full({batch}, *forced, torch::kLong), k).to(out.logits.options());
    }
    x = attack_step(x, gs.pi, primitives, params);

    TrajectoryStep step;
    step.logits = out.logits;
    step.pi = gs.pi;
    step.soft = gs.soft;
    step.index = std::move(gs.index);
    step.params = std::move(params);
    step.entropy = policy_entropy(out.logits, cfg.tau_ent);
    step.image = x;
    result.trajectory.steps.push_back(std::move(step));
  }
  result.image = x;
  return result;
}

}  // namespace catwm
