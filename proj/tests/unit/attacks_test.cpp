#include <map>
#include <set>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "catwm/attacks.hpp"
#include "catwm/error.hpp"
#include "oracles.hpp"

namespace catwm {
namespace {

using testing::random_batch;

TEST(Registry, TwelveUniquePrimitivesIdentityFirst) {
  const auto& reg = registry();
  ASSERT_EQ(reg.size(), 12u);
  EXPECT_EQ(reg.front().id, "identity");
  std::set<std::string> ids;
  for (const auto& p : reg) ids.insert(p.id);
  EXPECT_EQ(ids.size(), reg.size());
}

TEST(Registry, FamilyCounts) {
  std::map<Family, int> counts;
  for (const auto& p : registry()) ++counts[p.family];
  EXPECT_EQ(counts[Family::Identity], 1);
  EXPECT_EQ(counts[Family::Value], 4);
  EXPECT_EQ(counts[Family::Compression], 2);
  EXPECT_EQ(counts[Family::Geometric], 5);
  EXPECT_EQ(find_primitive("rotate").family, Family::Geometric);
  EXPECT_EQ(find_primitive("resize").family, Family::Geometric);
  EXPECT_EQ(find_primitive("jpeg").family, Family::Compression);
  EXPECT_EQ(find_primitive("hue").family, Family::Value);
}

TEST(Registry, BinaryFlags) {
  for (const auto& p : registry()) EXPECT_EQ(p.is_binary, p.id == "hflip" || p.id == "grayscale") << p.id;
}

TEST(Registry, UnknownIdThrows) { EXPECT_THROW(find_primitive("sharpen"), UnknownPrimitive); }

TEST(SampleParams, IdentityIsEmpty) {
  Rng rng(1);
  EXPECT_FALSE(sample_params(find_primitive("identity"), rng).strength.has_value());
}

TEST(SampleParams, ContinuousDrawsStayInRange) {
  Rng rng(2);
  auto p = find_primitive("brightness");
  p.range = ParamRange::interval(0.5, 1.5);
  for (int i = 0; i < 1000; ++i) {
    const auto v = *sample_params(p, rng).strength;
    EXPECT_GE(v, 0.5);
    EXPECT_LE(v, 1.5);
  }
}

TEST(SampleParams, JpegQualitiesUniformWithinThreeSigma) {
  Rng rng(3);
  const auto& jpeg = find_primitive("jpeg");
  std::map<int, int> counts;
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<int>(*sample_params(jpeg, rng).strength)];
  ASSERT_EQ(counts.size(), 6u);
  const double p = 1.0 / 6.0, mean = n * p, sigma = std::sqrt(n * p * (1 - p));
  double chi2 = 0.0;
  for (auto [q, c] : counts) {
    EXPECT_TRUE(q >= 40 && q <= 90 && q % 10 == 0) << q;
    EXPECT_LE(std::abs(c - mean), 3 * sigma) << "quality " << q;
    chi2 += (c - mean) * (c - mean) / mean;
  }
  EXPECT_LT(chi2, 20.52);  // chi-square 5 dof, p = 0.001
}

TEST(SampleParams, DeterministicGivenSeed) {
  Rng a(11), b(11);
  const auto pa = sample_all_params(registry(), a);
  const auto pb = sample_all_params(registry(), b);
  EXPECT_EQ(pa, pb);
  const auto x = random_batch(5, 2, 32, 0, 1, torch::kFloat);
  for (std::size_t i = 0; i < registry().size(); ++i)
    EXPECT_TRUE(torch::equal(apply(registry()[i], x, pa[i]), apply(registry()[i], x, pb[i]))) << registry()[i].id;
}

TEST(Apply, IdentityIsExact) {
  const auto x = random_batch(1, 3, 32, 0, 1, torch::kFloat);
  EXPECT_TRUE(torch::equal(apply(find_primitive("identity"), x, AttackParams::none()), x));
}

TEST(Apply, UnitBrightnessIsExact) {
  const auto x = random_batch(2, 3, 32, 0, 1, torch::kFloat);
  EXPECT_TRUE(torch::equal(apply(find_primitive("brightness"), x, AttackParams::of(1.0)), x));
}

TEST(Apply, FlipIsAnInvolution) {
  const auto x = random_batch(3, 3, 32, 0, 1, torch::kFloat);
  const auto& flip = find_primitive("hflip");
  EXPECT_TRUE(torch::equal(apply(flip, apply(flip, x, AttackParams::of(1)), AttackParams::of(1)), x));
  EXPECT_TRUE(torch::equal(apply(flip, x, AttackParams::of(0)), x));
}

TEST(Apply, FourQuarterTurnsReturnTheImage) {
  const auto x = random_batch(4, 4, 32, 0, 1, torch::kFloat);
  const auto& rot = find_primitive("rotate");
  auto y = x;
  for (int i = 0; i < 4; ++i) y = apply(rot, y, AttackParams::of(90));
  EXPECT_LT((y - x).abs().max().item<double>(), 1e-5);
}

TEST(Apply, QuarterTurnMatchesTranspose) {
  const auto x = random_batch(5, 1, 8, 0, 1, torch::kFloat);
  const auto y = apply(find_primitive("rotate"), x, AttackParams::of(90));
  const auto ccw = torch::flip(x.transpose(2, 3), {2});
  const auto cw = torch::flip(x.transpose(2, 3), {3});
  const double err = std::min((y - ccw).abs().max().item<double>(), (y - cw).abs().max().item<double>());
  EXPECT_LT(err, 1e-5);
}

TEST(Apply, OutOfRangeParamsThrow) {
  const auto x = random_batch(6, 1, 16, 0, 1, torch::kFloat);
  EXPECT_THROW(apply(find_primitive("brightness"), x, AttackParams::of(3.0)), OutOfRangeParam);
  EXPECT_THROW(apply(find_primitive("rotate"), x, AttackParams::of(1.0)), OutOfRangeParam);
  EXPECT_THROW(apply(find_primitive("jpeg"), x, AttackParams::of(45)), OutOfRangeParam);
  EXPECT_THROW(apply(find_primitive("gaussian_blur"), x, AttackParams::of(7)), OutOfRangeParam);
  EXPECT_THROW(apply(find_primitive("brightness"), x, AttackParams::none()), OutOfRangeParam);
}

TEST(Apply, MalformedBatchThrows) {
  const auto& b = find_primitive("brightness");
  EXPECT_THROW(apply(b, torch::rand({3, 16, 16}), AttackParams::of(1.2)), ShapeMismatch);
  EXPECT_THROW(apply(b, torch::rand({1, 4, 16, 16}), AttackParams::of(1.2)), ShapeMismatch);
  auto bad = torch::rand({1, 3, 16, 16});
  bad[0][0][0][0] = std::nan("");
  EXPECT_THROW(apply(b, bad, AttackParams::of(1.2)), ShapeMismatch);
}

TEST(Apply, ShapeAndRangePreservedForEveryPrimitive) {
  Rng rng(7);
  const auto x = random_batch(8, 3, 32, 0, 1, torch::kFloat);
  for (int trial = 0; trial < 5; ++trial) {
    const auto params = sample_all_params(registry(), rng);
    for (std::size_t i = 0; i < registry().size(); ++i) {
      const auto y = apply(registry()[i], x, params[i]);
      EXPECT_EQ(y.sizes(), x.sizes()) << registry()[i].id;
      EXPECT_GE(y.min().item<double>(), 0.0) << registry()[i].id;
      EXPECT_LE(y.max().item<double>(), 1.0) << registry()[i].id;
      EXPECT_TRUE(torch::isfinite(y).all().item<bool>()) << registry()[i].id;
    }
  }
}

TEST(Apply, BatchInvariantRowByRow) {
  Rng rng(9);
  const auto x = random_batch(10, 4, 32, 0, 1, torch::kDouble);
  const auto params = sample_all_params(registry(), rng);
  for (std::size_t i = 0; i < registry().size(); ++i) {
    const auto full = apply(registry()[i], x, params[i]);
    for (int b = 0; b < 4; ++b) {
      const auto row = apply(registry()[i], x.narrow(0, b, 1), params[i]);
      EXPECT_LT((full.narrow(0, b, 1) - row).abs().max().item<double>(), 1e-10) << registry()[i].id;
    }
  }
}

TEST(Apply, GradientsMatchFiniteDifferencesSpotCheck) {
  Rng rng(12);
  const auto x = random_batch(13, 2, 32, 0.2, 0.8);
  const auto params = sample_all_params(registry(), rng);
  for (std::size_t i = 0; i < registry().size(); ++i) {
    const auto& p = registry()[i];
    auto f = [&](const torch::Tensor& in) { return apply(p, in, params[i]).mean(); };
    for (auto idx : testing::interior_pixels(x, 4, 2, rng)) {
      const auto g = testing::check_pixel(f, x, idx);
      EXPECT_LT(g.relative_error, p.id == "jpeg" ? 1e-2 : 1e-3) << p.id << " ad " << g.autodiff << " fd " << g.finite_difference;
    }
  }
}

TEST(Apply, StrongerBlurRemovesMoreDetail) {
  const auto x = random_batch(14, 2, 32, 0, 1, torch::kFloat);
  const auto& blur = find_primitive("gaussian_blur");
  const double d3 = (apply(blur, x, AttackParams::of(3)) - x).abs().mean().item<double>();
  const double d17 = (apply(blur, x, AttackParams::of(17)) - x).abs().mean().item<double>();
  EXPECT_GT(d3, 0.0);
  EXPECT_GT(d17, d3);
}

TEST(Apply, GrayscaleHasEqualChannels) {
  const auto y = apply(find_primitive("grayscale"), random_batch(15, 2, 16, 0, 1, torch::kFloat), AttackParams::of(1));
  EXPECT_LT((y.select(1, 0) - y.select(1, 1)).abs().max().item<double>(), 1e-6);
  EXPECT_LT((y.select(1, 1) - y.select(1, 2)).abs().max().item<double>(), 1e-6);
}

TEST(Apply, FullAreaCropAndUnitResizeAreNearIdentity) {
  const auto x = random_batch(16, 2, 32, 0, 1, torch::kFloat);
  EXPECT_LT((apply(find_primitive("crop"), x, AttackParams::of(1.0)) - x).abs().max().item<double>(), 1e-5);
  EXPECT_LT((apply(find_primitive("resize"), x, AttackParams::of(1.0)) - x).abs().max().item<double>(), 1e-5);
}

TEST(Apply, ZeroHueShiftIsIdentity) {
  const auto x = random_batch(17, 2, 16, 0, 1, torch::kFloat);
  EXPECT_LT((apply(find_primitive("hue"), x, AttackParams::of(0.0)) - x).abs().max().item<double>(), 1e-6);
}

TEST(Apply, ChainAppliesInOrder) {
  const auto x = random_batch(18, 2, 16, 0, 1, torch::kFloat);
  const AttackPrimitive* ops[] = {&find_primitive("hflip"), &find_primitive("brightness")};
  const AttackParams params[] = {AttackParams::of(1), AttackParams::of(0.5)};
  const auto y = apply_chain(ops, params, x);
  EXPECT_TRUE(torch::allclose(y, torch::flip(x, {3}) * 0.5));
}

TEST(ApplySelected, RowsMatchPerPrimitiveApplication) {
  Rng rng(19);
  const auto x = random_batch(20, 6, 16, 0, 1, torch::kFloat);
  const auto params = sample_all_params(registry(), rng);
  const std::vector<std::int64_t> index{0, 6, 6, 11, 5, 1};
  const auto y = apply_selected(x, index, registry(), params);
  for (std::size_t b = 0; b < index.size(); ++b) {
    const auto i = static_cast<std::size_t>(index[b]);
    const auto ref = apply(registry()[i], x.narrow(0, static_cast<std::int64_t>(b), 1), params[i]);
    EXPECT_LT((y.narrow(0, static_cast<std::int64_t>(b), 1) - ref).abs().max().item<double>(), 1e-6) << b;
  }
  EXPECT_THROW(apply_selected(x, std::vector<std::int64_t>{0, 1}, registry(), params), LengthMismatch);
}

}  // namespace
}  // namespace catwm
