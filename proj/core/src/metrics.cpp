#include "catwm/metrics.hpp"

#include <cmath>

#include <torch/torch.h>

#include "catwm/error.hpp"

namespace F = torch::nn::functional;

namespace catwm {

std::int64_t count_correct_bits(const torch::Tensor& scores, const torch::Tensor& bits) {
  if (scores.sizes() != bits.sizes()) throw LengthMismatch("scores and message lengths differ");
  auto decoded = torch::sigmoid(scores.detach().to(torch::kDouble)) > 0.5;
  auto truth = bits.detach().to(torch::kDouble) > 0.5;
  return (decoded == truth).sum().item<std::int64_t>();
}

double bit_accuracy(const torch::Tensor& scores, const torch::Tensor& bits) {
  const auto n = scores.numel();
  if (n == 0) throw LengthMismatch("empty message");
  return static_cast<double>(count_correct_bits(scores, bits)) / static_cast<double>(n);
}

double bernoulli_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("probability outside [0, 1]");
  if (p == 0.0 || p == 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

double capacity(double p, int payload_bits) {
  if (payload_bits <= 0) throw DomainError("payload must be positive");
  return payload_bits * (1.0 - bernoulli_entropy(p));
}

double binomial_pvalue(std::int64_t n_correct, std::int64_t n_bits) {
  if (n_bits < 0 || n_correct < 0 || n_correct > n_bits) throw DomainError("need 0 <= n_correct <= n_bits");
  if (n_correct == 0) return 1.0;
  if (n_bits <= 1000) {
    // t_k = C(n, k) / 2^n by recurrence; 2^-1000 is still a normal double.
    double term = std::ldexp(1.0, static_cast<int>(-n_bits));
    double tail = 0.0;
    for (std::int64_t k = 0; k <= n_bits; ++k) {
      if (k >= n_correct) tail += term;
      term = term * static_cast<double>(n_bits - k) / static_cast<double>(k + 1);
    }
    return std::min(1.0, tail);
  }
  const double n = static_cast<double>(n_bits);
  const double z = (static_cast<double>(n_correct) - 0.5 - n / 2.0) / std::sqrt(n / 4.0);
  return 0.5 * std::erfc(z / std::sqrt(2.0));
}

DecodeResult decode_result(std::int64_t n_correct, std::int64_t n_bits, int payload_bits) {
  if (n_bits <= 0) throw LengthMismatch("no bits compared");
  DecodeResult r;
  r.n_bits = n_bits;
  r.n_correct = n_correct;
  r.bit_accuracy = static_cast<double>(n_correct) / static_cast<double>(n_bits);
  r.capacity = capacity(r.bit_accuracy, payload_bits);
  r.p_value = binomial_pvalue(n_correct, n_bits);
  return r;
}

double psnr(const torch::Tensor& x, const torch::Tensor& y) {
  if (x.sizes() != y.sizes()) throw ShapeMismatch("psnr needs equal shapes");
  const double mse = (x.detach().to(torch::kDouble) - y.detach().to(torch::kDouble)).pow(2).mean().item<double>();
  if (mse == 0.0) return kInfinitePsnr;
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const torch::Tensor& x, const torch::Tensor& y) {
  if (x.sizes() != y.sizes()) throw ShapeMismatch("ssim needs equal shapes");
  auto a = x.detach().to(torch::kDouble);
  auto b = y.detach().to(torch::kDouble);
  if (a.dim() == 3) {
    a = a.unsqueeze(0);
    b = b.unsqueeze(0);
  }
  if (a.dim() != 4 || a.size(2) < 11 || a.size(3) < 11) throw ShapeMismatch("ssim needs (B, C, H, W) with H, W >= 11");

  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  auto g = torch::arange(kWin, torch::kDouble) - (kWin - 1) / 2.0;
  g = torch::exp(-g.pow(2) / (2 * kSigma * kSigma));
  g = g / g.sum();
  const auto channels = a.size(1);
  auto window = torch::outer(g, g).expand({channels, 1, kWin, kWin}).contiguous();
  auto filt = [&](const torch::Tensor& t) { return F::conv2d(t, window, F::Conv2dFuncOptions().groups(channels)); };

  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  auto mu_a = filt(a), mu_b = filt(b);
  auto var_a = filt(a * a) - mu_a * mu_a;
  auto var_b = filt(b * b) - mu_b * mu_b;
  auto cov = filt(a * b) - mu_a * mu_b;
  auto map = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
  return map.mean().item<double>();
}

}  // namespace catwm
