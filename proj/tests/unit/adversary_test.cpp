#include <cmath>
#include <map>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "catwm/adversary.hpp"
#include "catwm/error.hpp"
#include "oracles.hpp"

namespace catwm {
namespace {

std::vector<AttackPrimitive> toy_library() {
  return {find_primitive("identity"), find_primitive("brightness"), find_primitive("hflip")};
}

TEST(AdversaryConfig, RejectsBadValues) {
  AdversaryConfig c;
  EXPECT_NO_THROW(c.validate());
  c.depth = 3;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.lambda_ent = -0.1;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.tau = 0;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Controller, TrainableParameterCountMatchesLayerShapes) {
  AdversaryConfig cfg;
  AttackController ctrl(cfg, 12);
  const std::int64_t f = ctrl->backbone().feature_dim(), p = cfg.projection_hidden, d = cfg.hidden_dim,
                     m = cfg.head_hidden, k = 12;
  const std::int64_t expected = (f * p + p) + (p * d + d) + 3 * (2 * d * d + 2 * d) + (d * m + m) + (m * k + k);
  EXPECT_EQ(ctrl->trainable_parameter_count(), expected);
}

TEST(Controller, BackboneIsFrozenButPassesGradientToInput) {
  AttackController ctrl(AdversaryConfig{}, 12);
  for (const auto& p : ctrl->backbone().parameters()) EXPECT_FALSE(p.requires_grad());
  const double before = ctrl->backbone().checksum();
  auto x = testing::random_batch(1, 2, 32, 0, 1, torch::kFloat).set_requires_grad(true);
  ctrl->extract_features(x).sum().backward();
  ASSERT_TRUE(x.grad().defined());
  EXPECT_GT(x.grad().abs().sum().item<double>(), 0.0);
  EXPECT_EQ(ctrl->backbone().checksum(), before);
  for (const auto& p : ctrl->trainable_parameters()) EXPECT_TRUE(p.requires_grad());
}

TEST(Controller, SameSeedSameBackbone) {
  AttackController a(AdversaryConfig{}, 12), b(AdversaryConfig{}, 12);
  EXPECT_EQ(a->backbone().checksum(), b->backbone().checksum());
  AdversaryConfig other;
  other.backbone_seed = 99;
  AttackController c(other, 12);
  EXPECT_NE(a->backbone().checksum(), c->backbone().checksum());
}

TEST(Gumbel, ForwardIsOneHotAtPerturbedArgmax) {
  Rng rng(3);
  const auto logits = torch::randn({64, 5}, torch::kDouble);
  const auto u = rng.open_unit_tensor({64, 5}, torch::kDouble);
  const auto g = -torch::log(-torch::log(u));
  const auto s = gumbel_select_with_noise(logits, 0.7, g);
  EXPECT_TRUE(torch::equal(s.pi.sum(1), torch::ones({64}, torch::kDouble)));
  EXPECT_TRUE(torch::equal(std::get<0>(s.pi.max(1)), torch::ones({64}, torch::kDouble)));
  const auto argmax = (logits + g).argmax(1);
  for (std::int64_t b = 0; b < 64; ++b) {
    EXPECT_EQ(s.index[static_cast<std::size_t>(b)], argmax[b].item<std::int64_t>());
    EXPECT_EQ(s.pi[b][s.index[static_cast<std::size_t>(b)]].item<double>(), 1.0);
  }
  EXPECT_TRUE(torch::allclose(s.soft, torch::softmax((logits + g) / 0.7, 1)));
}

TEST(Gumbel, TiesPickLowestIndex) {
  const auto s = gumbel_select_with_noise(torch::zeros({2, 4}), 1.0, torch::zeros({2, 4}));
  EXPECT_EQ(s.index, (std::vector<std::int64_t>{0, 0}));
}

TEST(Gumbel, BackwardFollowsSoftSample) {
  Rng rng(4);
  auto logits = torch::randn({8, 6}, torch::kDouble).set_requires_grad(true);
  const auto u = rng.open_unit_tensor({8, 6}, torch::kDouble);
  const auto g = -torch::log(-torch::log(u));
  const auto w = torch::randn({8, 6}, torch::kDouble);
  const auto hard_grad = torch::autograd::grad({(gumbel_select_with_noise(logits, 0.5, g).pi * w).sum()}, {logits})[0];
  const auto soft_grad = torch::autograd::grad({(torch::softmax((logits + g) / 0.5, 1) * w).sum()}, {logits})[0];
  EXPECT_LT((hard_grad - soft_grad).abs().max().item<double>(), 1e-12);
}

TEST(Gumbel, SampleFrequenciesMatchSoftmax) {
  Rng rng(5);
  const auto logits = torch::tensor({{0.0, 1.0, 2.0}}, torch::kDouble).expand({20000, 3}).contiguous();
  const auto s = gumbel_select(logits, 1.0, rng);
  std::map<std::int64_t, int> counts;
  for (auto i : s.index) ++counts[i];
  const auto p = torch::softmax(torch::tensor({0.0, 1.0, 2.0}, torch::kDouble), 0);
  double chi2 = 0;
  for (int k = 0; k < 3; ++k) {
    const double e = 20000 * p[k].item<double>();
    chi2 += (counts[k] - e) * (counts[k] - e) / e;
  }
  EXPECT_LT(chi2, 13.82);  // 2 dof, p = 0.001
}

TEST(Gumbel, RejectsBadInput) {
  EXPECT_THROW(gumbel_select_with_noise(torch::zeros({2, 3}), 0.0, torch::zeros({2, 3})), DomainError);
  EXPECT_THROW(gumbel_select_with_noise(torch::zeros({2, 3}), 1.0, torch::zeros({2, 4})), ShapeMismatch);
}

TEST(ForwardAs, ValueForwardSurrogateBackward) {
  auto s = torch::tensor({1.0, 2.0}, torch::kDouble).set_requires_grad(true);
  const auto v = torch::tensor({5.0, 7.0}, torch::kDouble);
  auto y = forward_as(v, s * s);
  EXPECT_TRUE(torch::equal(y.detach(), v));
  y.sum().backward();
  EXPECT_TRUE(torch::allclose(s.grad(), torch::tensor({2.0, 4.0}, torch::kDouble)));
}

TEST(PolicyEntropy, MatchesOracle) {
  const std::vector<double> l{0.3, -1.2, 2.0, 0.0};
  const auto t = torch::tensor(l, torch::kDouble).unsqueeze(0);
  EXPECT_NEAR(policy_entropy(t, 1.0).item<double>(), testing::softmax_entropy(l), 1e-12);
  std::vector<double> scaled;
  for (double v : l) scaled.push_back(v / 2.5);
  EXPECT_NEAR(policy_entropy(t, 2.5).item<double>(), testing::softmax_entropy(scaled), 1e-12);
  EXPECT_NEAR(policy_entropy(torch::zeros({1, 12}), 1.0).item<double>(), std::log(12.0), 1e-6);
}

TEST(AttackStep, OneHotForwardEqualsSelectedPrimitive) {
  Rng rng(6);
  const auto x = testing::random_batch(7, 6, 16, 0, 1, torch::kFloat);
  const auto params = sample_all_params(registry(), rng);
  const std::vector<std::int64_t> idx{3, 0, 11, 11, 6, 9};
  const auto pi = torch::one_hot(torch::tensor(idx), 12).to(torch::kFloat);
  const auto y = attack_step(x, pi, registry(), params);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto ref = apply(registry()[static_cast<std::size_t>(idx[b])], x, params[static_cast<std::size_t>(idx[b])]);
    EXPECT_TRUE(torch::equal(y[static_cast<std::int64_t>(b)], ref[static_cast<std::int64_t>(b)])) << b;
  }
}

TEST(AttackStep, GradientsMatchDenseMixture) {
  Rng rng(8);
  const auto lib = toy_library();
  const auto params = sample_all_params(lib, rng);
  const auto x0 = testing::random_batch(9, 4, 8);
  const auto w = torch::randn({4, 3, 8, 8}, torch::kDouble);
  auto logits = torch::randn({4, 3}, torch::kDouble);
  const auto g = -torch::log(-torch::log(rng.open_unit_tensor({4, 3}, torch::kDouble)));

  auto run = [&](bool dense) {
    auto x = x0.clone().set_requires_grad(true);
    auto l = logits.clone().set_requires_grad(true);
    auto s = gumbel_select_with_noise(l, 1.0, g);
    auto y = dense ? mixture(x, s.pi, lib, params) : attack_step(x, s.pi, lib, params);
    auto grads = torch::autograd::grad({(y * w).sum()}, {x, l});
    return std::make_pair(grads[0], grads[1]);
  };
  const auto [gx_fast, gl_fast] = run(false);
  const auto [gx_dense, gl_dense] = run(true);
  EXPECT_LT((gx_fast - gx_dense).abs().max().item<double>(), 1e-12);
  EXPECT_LT((gl_fast - gl_dense).abs().max().item<double>(), 1e-12);
}

TEST(AttackStep, NonOneHotFallsBackToMixture) {
  Rng rng(10);
  const auto lib = toy_library();
  const auto params = sample_all_params(lib, rng);
  const auto x = testing::random_batch(11, 2, 8);
  const auto pi = torch::full({2, 3}, 1.0 / 3.0, torch::kDouble);
  EXPECT_TRUE(torch::allclose(attack_step(x, pi, lib, params), mixture(x, pi, lib, params)));
}

TEST(Rollout, DepthTwoTrajectory) {
  AdversaryConfig cfg;
  cfg.depth = 2;
  AttackController ctrl(cfg, 12);
  Rng rng(12);
  const auto x = testing::random_batch(13, 3, 32, 0, 1, torch::kFloat);
  const auto r = rollout(ctrl, x, registry(), rng);
  ASSERT_EQ(r.trajectory.steps.size(), 2u);
  for (const auto& s : r.trajectory.steps) {
    EXPECT_EQ(s.logits.sizes(), (std::vector<std::int64_t>{3, 12}));
    EXPECT_EQ(s.index.size(), 3u);
    EXPECT_EQ(s.params.size(), 12u);
    EXPECT_EQ(s.entropy.sizes(), (std::vector<std::int64_t>{3}));
  }
  EXPECT_EQ(r.image.sizes(), x.sizes());
  EXPECT_TRUE(torch::equal(r.image, r.trajectory.steps.back().image));
}

TEST(Rollout, DeterministicGivenSeed) {
  AdversaryConfig cfg;
  cfg.depth = 2;
  torch::manual_seed(1);
  AttackController ctrl(cfg, 12);
  const auto x = testing::random_batch(14, 4, 32, 0, 1, torch::kFloat);
  Rng a(15), b(15);
  const auto ra = rollout(ctrl, x, registry(), a);
  const auto rb = rollout(ctrl, x, registry(), b);
  EXPECT_TRUE(torch::equal(ra.image, rb.image));
  for (int t = 0; t < 2; ++t) EXPECT_EQ(ra.trajectory.steps[t].index, rb.trajectory.steps[t].index);
}

TEST(Rollout, ForcedIndexOverridesSelection) {
  AdversaryConfig cfg;
  cfg.depth = 2;
  AttackController ctrl(cfg, 12);
  const auto x = testing::random_batch(16, 2, 32, 0, 1, torch::kFloat);
  Rng rng(17);
  RolloutOptions opts;
  opts.forced = {std::nullopt, primitive_index("hflip")};
  const auto r = rollout(ctrl, x, registry(), rng, opts);
  EXPECT_EQ(r.trajectory.steps[1].index, (std::vector<std::int64_t>{5, 5}));
  const auto& flip = r.trajectory.steps[1].params[5];
  EXPECT_TRUE(torch::equal(r.image, apply(find_primitive("hflip"), r.trajectory.steps[0].image, flip)));
  opts.forced = {std::int64_t{12}};
  EXPECT_THROW(rollout(ctrl, x, registry(), rng, opts), UnknownPrimitive);
}

TEST(Rollout, ControllerMismatchThrows) {
  AttackController ctrl(AdversaryConfig{}, 3);
  Rng rng(18);
  EXPECT_THROW(rollout(ctrl, testing::random_batch(1, 1, 16, 0, 1, torch::kFloat), registry(), rng), ShapeMismatch);
}

TEST(Rollout, EntropyGradientReachesController) {
  AttackController ctrl(AdversaryConfig{}, 12);
  Rng rng(19);
  const auto r = rollout(ctrl, testing::random_batch(20, 2, 32, 0, 1, torch::kFloat), registry(), rng);
  r.trajectory.total_entropy().backward();
  double norm = 0.0;
  for (const auto& p : ctrl->trainable_parameters())
    if (p.grad().defined()) norm += p.grad().abs().sum().item<double>();
  EXPECT_GT(norm, 0.0);
}

}  // namespace
}  // namespace catwm
