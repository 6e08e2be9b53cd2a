#pragma once

#include <cstdint>
#include <span>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/types.h>

#include "catwm/rng.hpp"

namespace catwm {

struct DatasetSource {
  enum class Kind { Synthetic, SyntheticOod, ImageDirectory };

  Kind kind = Kind::Synthetic;
  std::int64_t size = 2048;       // synthetic only
  std::int64_t resolution = 32;
  std::filesystem::path directory;  // ImageDirectory only
  double train_fraction = 0.8;
  double val_fraction = 0.1;      // test gets the remainder
};

/// (N, 3, S, S) images in [0, 1].
struct ImageSet {
  torch::Tensor images;

  std::int64_t size() const { return images.defined() ? images.size(0) : 0; }
  torch::Tensor batch(std::span<const std::int64_t> rows) const;
  /// Order-sensitive sum used to compare batches across runs.
  double checksum(std::int64_t first, std::int64_t count) const;
};

struct DatasetSplits {
  ImageSet train;
  ImageSet val;
  ImageSet test;
  std::int64_t skipped = 0;  // unreadable files in directory mode
  std::vector<std::string> warnings;
};

/// Seeded multi-scale colored noise with random rectangles and ellipses.
torch::Tensor synthetic_images(std::int64_t count, std::int64_t resolution, std::uint64_t seed);
/// Different statistics: oriented sinusoidal gratings and checkerboards.
torch::Tensor synthetic_ood_images(std::int64_t count, std::int64_t resolution, std::uint64_t seed);
/// Every decodable image in `dir` (sorted by name), resized to resolution.
torch::Tensor load_image_directory(const std::filesystem::path& dir, std::int64_t resolution, std::int64_t& skipped,
                                   std::vector<std::string>& warnings);

/// Build the dataset and split it with a seeded permutation. Throws
/// EmptyDataset when nothing usable is found.
DatasetSplits ingest(const DatasetSource& source, std::uint64_t seed);

/// Epoch-shuffled batch indices over a split, deterministic given the seed.
class BatchSampler {
 public:
  BatchSampler(std::int64_t dataset_size, std::int64_t batch_size, std::uint64_t seed);
  std::vector<std::int64_t> next();
  /// Advance as if next() had been called n times.
  void skip(std::int64_t n);
  std::int64_t epoch() const { return epoch_; }

 private:
  void reshuffle();
  std::int64_t size_;
  std::int64_t batch_;
  Rng rng_;
  std::vector<std::int64_t> order_;
  std::size_t cursor_ = 0;
  std::int64_t epoch_ = 0;
};

}  // namespace catwm
