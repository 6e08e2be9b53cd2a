#include "catwm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>
#include <numeric>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <torch/torch.h>

#include "catwm/error.hpp"

namespace F = torch::nn::functional;

namespace catwm {
namespace {

std::vector<std::int64_t> permutation(std::int64_t n, Rng& rng) {
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());
  return order;
}

torch::Tensor take(const torch::Tensor& images, std::span<const std::int64_t> rows) {
  return images.index_select(0, torch::tensor(std::vector<std::int64_t>(rows.begin(), rows.end()), torch::kLong));
}

}  // namespace

torch::Tensor ImageSet::batch(std::span<const std::int64_t> rows) const { return take(images, rows); }

double ImageSet::checksum(std::int64_t first, std::int64_t count) const {
  auto part = images.narrow(0, first, count).to(torch::kDouble).flatten();
  auto w = torch::arange(1, part.numel() + 1, torch::kDouble);
  return (part * w).sum().item<double>();
}

torch::Tensor synthetic_images(std::int64_t count, std::int64_t resolution, std::uint64_t seed) {
  Rng rng(seed);
  const auto s = resolution;
  auto out = torch::empty({count, 3, s, s}, torch::kFloat);
  const auto interp = F::InterpolateFuncOptions()
                          .mode(torch::kBilinear)
                          .align_corners(false)
                          .size(std::vector<std::int64_t>{s, s});
  auto ys = torch::arange(s, torch::kFloat).view({1, s, 1}).expand({1, s, s});
  auto xs = torch::arange(s, torch::kFloat).view({1, 1, s}).expand({1, s, s});
  for (std::int64_t n = 0; n < count; ++n) {
    // Multi-scale colored noise: coarse grids upsampled and summed.
    auto img = torch::zeros({1, 3, s, s});
    double weight_total = 0.0;
    for (std::int64_t cells : {2, 4, 8, 16}) {
      const double w = 1.0 / std::sqrt(static_cast<double>(cells));
      img += w * F::interpolate(rng.open_unit_tensor({1, 3, cells, cells}), interp);
      weight_total += w;
    }
    img = img / weight_total;
    img = (img - img.min()) / (img.max() - img.min() + 1e-6);
    img = img.squeeze(0);
    const auto shapes = 1 + rng.index(4);
    for (std::int64_t k = 0; k < shapes; ++k) {
      auto color = torch::tensor({rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)}, torch::kFloat).view({3, 1, 1});
      const double cx = rng.uniform(0, s), cy = rng.uniform(0, s);
      const double rx = rng.uniform(s / 10.0, s / 3.0), ry = rng.uniform(s / 10.0, s / 3.0);
      torch::Tensor mask;
      if (rng.index(2) == 0) {
        mask = ((xs - cx).abs() <= rx) & ((ys - cy).abs() <= ry);
      } else {
        mask = ((xs - cx) / rx).pow(2) + ((ys - cy) / ry).pow(2) <= 1.0;
      }
      const double opacity = rng.uniform(0.5, 1.0);
      auto m = mask.to(torch::kFloat) * opacity;
      img = img * (1 - m) + color * m;
    }
    out[n] = img.clamp(0.0, 1.0);
  }
  return out;
}

torch::Tensor synthetic_ood_images(std::int64_t count, std::int64_t resolution, std::uint64_t seed) {
  Rng rng(seed ^ 0x00dULL);
  const auto s = resolution;
  auto out = torch::empty({count, 3, s, s}, torch::kFloat);
  auto ys = torch::arange(s, torch::kFloat).view({1, s, 1}).expand({1, s, s});
  auto xs = torch::arange(s, torch::kFloat).view({1, 1, s}).expand({1, s, s});
  for (std::int64_t n = 0; n < count; ++n) {
    const double angle = rng.uniform(0, std::numbers::pi);
    const double freq = rng.uniform(0.05, 0.4);
    auto phase = (xs * std::cos(angle) + ys * std::sin(angle)) * freq * 2.0 * std::numbers::pi;
    auto c0 = torch::tensor({rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)}, torch::kFloat).view({3, 1, 1});
    auto c1 = torch::tensor({rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)}, torch::kFloat).view({3, 1, 1});
    torch::Tensor t;
    if (rng.index(3) == 0) {
      const double cell = std::max(2.0, std::round(rng.uniform(2, s / 4.0)));
      t = torch::remainder(torch::floor(xs / cell) + torch::floor(ys / cell), 2.0);
    } else {
      t = 0.5 + 0.5 * torch::sin(phase);
    }
    auto img = c0 * (1 - t) + c1 * t;
    img = img + 0.05 * (rng.open_unit_tensor({3, s, s}) - 0.5);
    out[n] = img.clamp(0.0, 1.0);
  }
  return out;
}

torch::Tensor load_image_directory(const std::filesystem::path& dir, std::int64_t resolution, std::int64_t& skipped,
                                   std::vector<std::string>& warnings) {
  if (!std::filesystem::is_directory(dir)) throw IOError("not a readable directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  std::vector<torch::Tensor> images;
  for (const auto& f : files) {
    cv::Mat bgr = cv::imread(f.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) {
      ++skipped;
      warnings.push_back("skipping unreadable image " + f.string());
      std::cerr << "warning: " << warnings.back() << '\n';
      continue;
    }
    cv::Mat rgb, resized;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    cv::resize(rgb, resized, cv::Size(static_cast<int>(resolution), static_cast<int>(resolution)), 0, 0, cv::INTER_AREA);
    auto t = torch::from_blob(resized.data, {resolution, resolution, 3}, torch::kUInt8).clone();
    images.push_back(t.permute({2, 0, 1}).to(torch::kFloat) / 255.0);
  }
  if (images.empty()) return torch::empty({0, 3, resolution, resolution});
  return torch::stack(images);
}

DatasetSplits ingest(const DatasetSource& source, std::uint64_t seed) {
  DatasetSplits splits;
  torch::Tensor all;
  switch (source.kind) {
    case DatasetSource::Kind::Synthetic:
      if (source.size <= 0) throw EmptyDataset("synthetic dataset size must be positive");
      all = synthetic_images(source.size, source.resolution, seed);
      break;
    case DatasetSource::Kind::SyntheticOod:
      if (source.size <= 0) throw EmptyDataset("synthetic dataset size must be positive");
      all = synthetic_ood_images(source.size, source.resolution, seed);
      break;
    case DatasetSource::Kind::ImageDirectory:
      all = load_image_directory(source.directory, source.resolution, splits.skipped, splits.warnings);
      break;
  }
  const auto n = all.size(0);
  if (n == 0) throw EmptyDataset("no usable images");
  if (source.train_fraction < 0 || source.val_fraction < 0 || source.train_fraction + source.val_fraction > 1.0)
    throw ValidationError("split fractions must be non-negative and sum to at most 1");

  Rng rng = Rng::derive(seed, 0x5b17);
  auto order = permutation(n, rng);
  const auto n_train = static_cast<std::int64_t>(std::llround(source.train_fraction * static_cast<double>(n)));
  const auto n_val = std::min(n - n_train, static_cast<std::int64_t>(std::llround(source.val_fraction * static_cast<double>(n))));
  std::span<const std::int64_t> view(order);
  splits.train.images = take(all, view.subspan(0, static_cast<std::size_t>(n_train)));
  splits.val.images = take(all, view.subspan(static_cast<std::size_t>(n_train), static_cast<std::size_t>(n_val)));
  splits.test.images = take(all, view.subspan(static_cast<std::size_t>(n_train + n_val)));
  return splits;
}

BatchSampler::BatchSampler(std::int64_t dataset_size, std::int64_t batch_size, std::uint64_t seed)
    : size_(dataset_size), batch_(batch_size), rng_(Rng::derive(seed, 0xba7c)) {
  if (size_ <= 0) throw EmptyDataset("cannot sample from an empty split");
  if (batch_ <= 0) throw ValidationError("batch size must be positive");
  reshuffle();
}

void BatchSampler::reshuffle() {
  order_ = permutation(size_, rng_);
  cursor_ = 0;
}

std::vector<std::int64_t> BatchSampler::next() {
  std::vector<std::int64_t> rows;
  rows.reserve(static_cast<std::size_t>(batch_));
  while (static_cast<std::int64_t>(rows.size()) < batch_) {
    if (cursor_ == order_.size()) {
      ++epoch_;
      reshuffle();
    }
    rows.push_back(order_[cursor_++]);
  }
  return rows;
}

void BatchSampler::skip(std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) (void)next();
}

}  // namespace catwm
