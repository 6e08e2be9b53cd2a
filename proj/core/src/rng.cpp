#include "catwm/rng.hpp"

#include <cmath>
#include <limits>

#include <torch/torch.h>

namespace catwm {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rng Rng::derive(std::uint64_t seed, std::uint64_t stream) { return Rng(mix_seed(seed, stream)); }

double Rng::uniform(double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  return dist(engine_);
}

double Rng::open_unit() {
  // 53-bit mantissa draw shifted by half an ulp so 0 is never produced.
  const std::uint64_t bits = engine_() >> 11;
  return (static_cast<double>(bits) + 0.5) * (1.0 / 9007199254740992.0);
}

std::int64_t Rng::index(std::int64_t n) {
  std::uniform_int_distribution<std::int64_t> dist(0, n - 1);
  return dist(engine_);
}

torch::Tensor Rng::open_unit_tensor(torch::IntArrayRef shape, torch::ScalarType dtype) {
  auto out = torch::empty(shape, torch::TensorOptions().dtype(torch::kDouble));
  auto* data = out.data_ptr<double>();
  for (std::int64_t i = 0; i < out.numel(); ++i) data[i] = open_unit();
  return out.to(dtype);
}

}  // namespace catwm
