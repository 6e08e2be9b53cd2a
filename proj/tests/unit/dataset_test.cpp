#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>
#include <opencv2/imgcodecs.hpp>
#include <torch/torch.h>

#include "catwm/dataset.hpp"
#include "catwm/error.hpp"

namespace catwm {
namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("catwm_dataset_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST(Synthetic, ShapeRangeAndDeterminism) {
  const auto a = synthetic_images(5, 32, 1);
  EXPECT_EQ(a.sizes(), (std::vector<std::int64_t>{5, 3, 32, 32}));
  EXPECT_GE(a.min().item<double>(), 0.0);
  EXPECT_LE(a.max().item<double>(), 1.0);
  EXPECT_TRUE(torch::equal(a, synthetic_images(5, 32, 1)));
  EXPECT_FALSE(torch::equal(a, synthetic_images(5, 32, 2)));
  EXPECT_GT(a.std().item<double>(), 0.05);
}

TEST(Synthetic, OodDiffersFromInDistribution) {
  const auto a = synthetic_images(4, 32, 1);
  const auto b = synthetic_ood_images(4, 32, 1);
  EXPECT_EQ(b.sizes(), a.sizes());
  EXPECT_FALSE(torch::allclose(a, b));
}

TEST(Ingest, HundredImagesSplitEightyTenTen) {
  DatasetSource src;
  src.size = 100;
  const auto s = ingest(src, 3);
  EXPECT_EQ(s.train.size(), 80);
  EXPECT_EQ(s.val.size(), 10);
  EXPECT_EQ(s.test.size(), 10);
}

TEST(Ingest, SplitsAreDisjointAndSeeded) {
  DatasetSource src;
  src.size = 50;
  const auto a = ingest(src, 4), b = ingest(src, 4), c = ingest(src, 5);
  EXPECT_TRUE(torch::equal(a.train.images, b.train.images));
  EXPECT_FALSE(torch::equal(a.train.images, c.train.images));
  std::set<double> sums;
  for (const auto* split : {&a.train, &a.val, &a.test})
    for (std::int64_t i = 0; i < split->size(); ++i) sums.insert(split->images[i].sum().item<double>());
  EXPECT_EQ(sums.size(), 50u);
}

TEST(Ingest, DirectorySkipsCorruptFiles) {
  const auto dir = fresh_dir("corrupt");
  for (int i = 0; i < 9; ++i) {
    cv::Mat img(20, 24, CV_8UC3, cv::Scalar(10 * i, 100, 200 - 10 * i));
    cv::imwrite((dir / ("img_" + std::to_string(i) + ".png")).string(), img);
  }
  std::ofstream(dir / "img_9.png") << "not an image";
  DatasetSource src;
  src.kind = DatasetSource::Kind::ImageDirectory;
  src.directory = dir;
  src.resolution = 16;
  const auto s = ingest(src, 1);
  EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), 9);
  EXPECT_EQ(s.skipped, 1);
  ASSERT_EQ(s.warnings.size(), 1u);
  EXPECT_NE(s.warnings[0].find("img_9.png"), std::string::npos);
  EXPECT_EQ(s.train.images.size(2), 16);
  fs::remove_all(dir);
}

TEST(Ingest, EmptyDirectoryThrows) {
  const auto dir = fresh_dir("empty");
  DatasetSource src;
  src.kind = DatasetSource::Kind::ImageDirectory;
  src.directory = dir;
  EXPECT_THROW(ingest(src, 1), EmptyDataset);
  src.directory = dir / "missing";
  EXPECT_THROW(ingest(src, 1), IOError);
  fs::remove_all(dir);
}

TEST(BatchSampler, CoversEachEpochOnce) {
  BatchSampler s(10, 5, 7);
  std::multiset<std::int64_t> seen;
  for (int i = 0; i < 2; ++i)
    for (auto r : s.next()) seen.insert(r);
  EXPECT_EQ(seen.size(), 10u);
  EXPECT_EQ(std::set<std::int64_t>(seen.begin(), seen.end()).size(), 10u);
  (void)s.next();
  EXPECT_EQ(s.epoch(), 1);
}

TEST(BatchSampler, SkipMatchesRepeatedNext) {
  BatchSampler a(23, 4, 9), b(23, 4, 9);
  for (int i = 0; i < 13; ++i) (void)a.next();
  b.skip(13);
  EXPECT_EQ(a.next(), b.next());
}

TEST(BatchSampler, RejectsEmptySplit) { EXPECT_THROW(BatchSampler(0, 4, 1), EmptyDataset); }

TEST(ImageSet, ChecksumIsOrderSensitive) {
  ImageSet s{synthetic_images(4, 8, 1)};
  const std::vector<std::int64_t> fwd{0, 1}, rev{1, 0};
  EXPECT_TRUE(torch::equal(s.batch(fwd)[0], s.images[0]));
  EXPECT_TRUE(torch::equal(s.batch(rev)[0], s.images[1]));
  EXPECT_EQ(s.checksum(0, 2), s.checksum(0, 2));
  EXPECT_NE(s.checksum(0, 2), s.checksum(1, 2));
}

}  // namespace
}  // namespace catwm
