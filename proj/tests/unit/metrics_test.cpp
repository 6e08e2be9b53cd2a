#include <cmath>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "catwm/error.hpp"
#include "catwm/metrics.hpp"
#include "oracles.hpp"

namespace catwm {
namespace {

TEST(Metrics, CountCorrectBitsThresholdsAtZeroLogit) {
  const auto scores = torch::tensor({{2.0, -1.0, 0.5, -0.1}});
  const auto bits = torch::tensor({{1.0, 0.0, 0.0, 1.0}});
  EXPECT_EQ(count_correct_bits(scores, bits), 2);
  EXPECT_DOUBLE_EQ(bit_accuracy(scores, bits), 0.5);
  // sigmoid(0) = 0.5 is not > 0.5, so a zero score reads as 0
  EXPECT_EQ(count_correct_bits(torch::zeros({1, 2}), torch::tensor({{0.0, 1.0}})), 1);
}

TEST(Metrics, ShapeMismatchThrows) {
  EXPECT_THROW(count_correct_bits(torch::zeros({2, 16}), torch::zeros({2, 8})), LengthMismatch);
}

TEST(Metrics, BernoulliEntropyValues) {
  EXPECT_DOUBLE_EQ(bernoulli_entropy(0.0), 0.0);
  EXPECT_DOUBLE_EQ(bernoulli_entropy(1.0), 0.0);
  EXPECT_NEAR(bernoulli_entropy(0.5), 1.0, 1e-15);
  for (double p : {0.01, 0.1, 0.3, 0.77}) EXPECT_NEAR(bernoulli_entropy(p), testing::entropy_bits(p), 1e-14);
  EXPECT_THROW(bernoulli_entropy(-0.1), DomainError);
  EXPECT_THROW(bernoulli_entropy(1.5), DomainError);
}

TEST(Metrics, CapacityEndpointsAndSymmetry) {
  EXPECT_DOUBLE_EQ(capacity(1.0, 16), 16.0);
  EXPECT_DOUBLE_EQ(capacity(0.0, 16), 16.0);
  EXPECT_NEAR(capacity(0.5, 16), 0.0, 1e-12);
  EXPECT_NEAR(capacity(0.9, 32), capacity(0.1, 32), 1e-12);
  EXPECT_NEAR(capacity(0.9, 16), 16.0 * (1.0 - testing::entropy_bits(0.9)), 1e-12);
}

TEST(Metrics, BinomialTailMatchesEnumeration) {
  for (int n = 1; n <= 20; ++n)
    for (int k = 0; k <= n; ++k) {
      const double ref = testing::binomial_tail_popcount(k, n);
      EXPECT_NEAR(binomial_pvalue(k, n), ref, 1e-12) << k << "/" << n;
      EXPECT_NEAR(testing::binomial_tail_enumeration(k, n), ref, 1e-15);
    }
}

TEST(Metrics, BinomialTailLargeN) {
  EXPECT_NEAR(binomial_pvalue(500, 1000), testing::binomial_tail_enumeration(500, 1000), 1e-10);
  EXPECT_NEAR(binomial_pvalue(540, 1000), testing::binomial_tail_enumeration(540, 1000), 1e-10);
  // normal approximation regime
  const double approx = binomial_pvalue(2100, 4000);
  EXPECT_NEAR(approx, testing::binomial_tail_enumeration(2100, 4000), 1e-3);
  EXPECT_NEAR(binomial_pvalue(2000, 4000), 0.5, 0.02);
}

TEST(Metrics, BinomialTailIsMonotone) {
  double prev = 1.0;
  for (int k = 0; k <= 64; ++k) {
    const double p = binomial_pvalue(k, 64);
    EXPECT_LE(p, prev + 1e-15);
    prev = p;
  }
  EXPECT_DOUBLE_EQ(binomial_pvalue(0, 64), 1.0);
}

TEST(Metrics, DecodeResultFields) {
  const auto r = decode_result(90, 100, 16);
  EXPECT_DOUBLE_EQ(r.bit_accuracy, 0.9);
  EXPECT_EQ(r.n_bits, 100);
  EXPECT_EQ(r.n_correct, 90);
  EXPECT_NEAR(r.capacity, capacity(0.9, 16), 1e-12);
  EXPECT_NEAR(r.p_value, testing::binomial_tail_enumeration(90, 100), 1e-12);
}

TEST(Metrics, PsnrKnownMse) {
  const auto x = torch::zeros({1, 3, 8, 8}, torch::kDouble);
  EXPECT_EQ(psnr(x, x), kInfinitePsnr);
  EXPECT_NEAR(psnr(x, x + 0.1), 20.0, 1e-9);
  EXPECT_NEAR(psnr(x, x + 0.01), 40.0, 1e-9);
}

TEST(Metrics, SsimIdentityAndDegradation) {
  const auto x = testing::random_batch(3, 2, 32);
  EXPECT_NEAR(ssim(x, x), 1.0, 1e-12);
  const double mild = ssim(x, (x + 0.02 * testing::random_batch(4, 2, 32)).clamp(0, 1));
  const double strong = ssim(x, testing::random_batch(5, 2, 32));
  EXPECT_LT(mild, 1.0);
  EXPECT_LT(strong, mild);
  EXPECT_LT(std::abs(strong), 0.1);
}

TEST(Metrics, SsimConstantOffsetOracle) {
  // Flat images: SSIM reduces to the luminance term (2 mu_x mu_y + C1) / (mu_x^2 + mu_y^2 + C1).
  const double a = 0.4, b = 0.6, c1 = 0.01 * 0.01;
  const auto x = torch::full({1, 3, 16, 16}, a, torch::kDouble);
  const auto y = torch::full({1, 3, 16, 16}, b, torch::kDouble);
  EXPECT_NEAR(ssim(x, y), (2 * a * b + c1) / (a * a + b * b + c1), 1e-9);
}

}  // namespace
}  // namespace catwm
