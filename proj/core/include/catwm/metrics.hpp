#pragma once

#include <cstdint>
#include <limits>

#include <torch/types.h>

namespace catwm {

struct DecodeResult {
  double bit_accuracy = 0.0;  // n_correct / n_bits
  std::int64_t n_bits = 0;
  std::int64_t n_correct = 0;
  double capacity = 0.0;  // payload * (1 - H(p))
  double p_value = 1.0;   // P(X >= n_correct), X ~ Binomial(n_bits, 1/2)
};

/// Number of positions where [sigmoid(score) > 0.5] matches the bit.
/// Throws LengthMismatch on shape mismatch.
std::int64_t count_correct_bits(const torch::Tensor& scores, const torch::Tensor& bits);
double bit_accuracy(const torch::Tensor& scores, const torch::Tensor& bits);

/// Binary entropy in bits; H(0) = H(1) = 0. DomainError outside [0, 1].
double bernoulli_entropy(double p);

/// Binary symmetric channel capacity times the payload.
double capacity(double p, int payload_bits);

/// One-sided binomial tail against chance. Exact up to 1000 trials, normal
/// approximation with continuity correction above.
double binomial_pvalue(std::int64_t n_correct, std::int64_t n_bits);

DecodeResult decode_result(std::int64_t n_correct, std::int64_t n_bits, int payload_bits);

/// Returned by psnr() when the images are identical.
inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

/// 10 log10(1 / MSE) for images in [0, 1].
double psnr(const torch::Tensor& x, const torch::Tensor& y);

/// Mean SSIM over valid 11x11 Gaussian (sigma 1.5) windows and channels,
/// K1 = 0.01, K2 = 0.03, L = 1. Batched input is averaged too.
double ssim(const torch::Tensor& x, const torch::Tensor& y);

}  // namespace catwm
