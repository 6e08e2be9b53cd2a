#pragma once

// Reference computations shared by the unit and acceptance tests. Nothing
// here calls into the code under test except to evaluate it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include <torch/torch.h>

#include "catwm/rng.hpp"

namespace catwm::testing {

inline torch::Tensor random_batch(std::uint64_t seed, std::int64_t batch, std::int64_t size, double lo = 0.0,
                                  double hi = 1.0, torch::ScalarType dtype = torch::kDouble) {
  Rng rng(seed);
  return (lo + (hi - lo) * rng.open_unit_tensor({batch, 3, size, size}, torch::kDouble)).to(dtype);
}

inline double relative_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  if (scale < 1e-14) return 0.0;
  return std::abs(a - b) / scale;
}

struct PixelGradient {
  double autodiff = 0.0;
  double finite_difference = 0.0;
  double relative_error = 0.0;
};

/// d f(x) / d x[index] by autograd and by central differences with step h.
/// f must map a double tensor to a scalar.
inline PixelGradient check_pixel(const std::function<torch::Tensor(const torch::Tensor&)>& f, const torch::Tensor& x,
                                 std::int64_t flat_index, double h = 1e-3) {
  auto xg = x.clone().set_requires_grad(true);
  auto y = f(xg);
  auto g = torch::autograd::grad({y}, {xg}, {}, false, false, true)[0];
  PixelGradient out;
  out.autodiff = g.defined() ? g.reshape(-1)[flat_index].item<double>() : 0.0;
  torch::NoGradGuard guard;
  auto plus = x.clone();
  auto minus = x.clone();
  plus.view(-1)[flat_index] += h;
  minus.view(-1)[flat_index] -= h;
  out.finite_difference = (f(plus).item<double>() - f(minus).item<double>()) / (2.0 * h);
  out.relative_error = relative_error(out.autodiff, out.finite_difference);
  return out;
}

/// Flat indices of `count` random pixels at least `margin` away from the border.
inline std::vector<std::int64_t> interior_pixels(const torch::Tensor& x, int count, std::int64_t margin, Rng& rng) {
  const auto b = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  std::vector<std::int64_t> out;
  for (int i = 0; i < count; ++i) {
    const auto n = rng.index(b), ch = rng.index(c);
    const auto yy = margin + rng.index(h - 2 * margin), xx = margin + rng.index(w - 2 * margin);
    out.push_back(((n * c + ch) * h + yy) * w + xx);
  }
  return out;
}

/// C(n, k) / 2^n summed for k >= n_correct, accumulated term by term from
/// Pascal's triangle in long double.
inline double binomial_tail_enumeration(std::int64_t n_correct, std::int64_t n) {
  std::vector<long double> row{1.0L};
  for (std::int64_t i = 0; i < n; ++i) {
    std::vector<long double> next(row.size() + 1, 0.0L);
    for (std::size_t k = 0; k < row.size(); ++k) {
      next[k] += row[k] / 2;
      next[k + 1] += row[k] / 2;
    }
    row = std::move(next);
  }
  long double tail = 0.0L;
  for (std::int64_t k = n_correct; k <= n; ++k) tail += row[static_cast<std::size_t>(k)];
  return static_cast<double>(tail);
}

/// Same tail by counting bit patterns with popcount >= n_correct.
inline double binomial_tail_popcount(std::int64_t n_correct, int n) {
  std::uint64_t hits = 0;
  for (std::uint64_t v = 0; v < (1ULL << n); ++v)
    if (__builtin_popcountll(v) >= n_correct) ++hits;
  return static_cast<double>(hits) / static_cast<double>(1ULL << n);
}

inline double entropy_bits(double p) {
  auto term = [](double q) { return q <= 0.0 ? 0.0 : -q * std::log2(q); };
  return term(p) + term(1.0 - p);
}

inline double softmax_entropy(const std::vector<double>& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  double h = 0.0;
  for (double l : logits) {
    const double p = std::exp(l - mx) / z;
    if (p > 0) h -= p * std::log(p);
  }
  return h;
}

}  // namespace catwm::testing
