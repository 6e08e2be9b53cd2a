#pragma once

#include <cstdint>
#include <random>

#include <torch/types.h>

namespace catwm {

/// Seeded random stream. Every stochastic choice in the library draws from
/// one of these so runs replay exactly given the seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream for (seed, stream) via splitmix64 mixing.
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

  double uniform(double lo, double hi);
  /// Uniform in the open interval (0, 1).
  double open_unit();
  std::int64_t index(std::int64_t n);
  std::uint64_t next_u64() { return engine_(); }

  /// Tensor of i.i.d. draws from (0, 1) in the given dtype.
  torch::Tensor open_unit_tensor(torch::IntArrayRef shape, torch::ScalarType dtype = torch::kFloat);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace catwm
