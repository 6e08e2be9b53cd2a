#include "catwm/jpeg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <torch/torch.h>

#include "catwm/color.hpp"
#include "catwm/error.hpp"

namespace F = torch::nn::functional;

namespace catwm {
namespace {

torch::Tensor dct_matrix(const torch::TensorOptions& opts) {
  auto m = torch::empty({8, 8}, torch::kDouble);
  auto a = m.accessor<double, 2>();
  for (int u = 0; u < 8; ++u) {
    const double scale = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
    for (int x = 0; x < 8; ++x) a[u][x] = scale * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
  }
  return m.to(opts);
}

torch::Tensor table_tensor(const QuantTable& t, const torch::TensorOptions& opts) {
  return torch::tensor(std::vector<double>(t.begin(), t.end()), torch::kDouble).view({8, 8}).to(opts);
}

// Quantize one set of planes (B, C, H, W) with H, W multiples of 8.
torch::Tensor quantize_planes(const torch::Tensor& planes, const torch::Tensor& table) {
  const auto b = planes.size(0), c = planes.size(1), h = planes.size(2), w = planes.size(3);
  const auto d = dct_matrix(planes.options());
  auto blocks = planes.reshape({b, c, h / 8, 8, w / 8, 8}).permute({0, 1, 2, 4, 3, 5});
  auto coeffs = torch::matmul(torch::matmul(d, blocks), d.t());
  auto quantized = smooth_round(coeffs / table) * table;
  auto restored = torch::matmul(torch::matmul(d.t(), quantized), d);
  return restored.permute({0, 1, 2, 4, 3, 5}).reshape({b, c, h, w});
}

}  // namespace

const QuantTable& base_luma_table() {
  static const QuantTable t{16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
                            14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
                            18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
                            49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
  return t;
}

const QuantTable& base_chroma_table() {
  static const QuantTable t{17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99, 24, 26, 56, 99, 99, 99,
                            99, 99, 47, 66, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
                            99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};
  return t;
}

QuantTable scaled_table(const QuantTable& base, int quality) {
  quality = std::clamp(quality, 1, 100);
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  QuantTable out{};
  for (std::size_t i = 0; i < 64; ++i)
    out[i] = std::clamp(std::floor((base[i] * scale + 50.0) / 100.0), 1.0, 255.0);
  return out;
}

torch::Tensor smooth_round(const torch::Tensor& x) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  return x - torch::sin(two_pi * x) / two_pi;
}

torch::Tensor jpeg_with_tables(const torch::Tensor& x, const QuantTable& luma, const QuantTable& chroma) {
  using torch::indexing::Slice;
  const auto h = x.size(2), w = x.size(3);
  const auto pad_h = (16 - h % 16) % 16, pad_w = (16 - w % 16) % 16;
  auto img = x * 255.0;
  if (pad_h || pad_w) img = F::pad(img, F::PadFuncOptions({0, pad_w, 0, pad_h}).mode(torch::kReplicate));

  auto ycc = rgb_to_yuv(img);  // JPEG's YCbCr is BT.601 full range
  auto y = ycc.index({Slice(), Slice(0, 1)}) - 128.0;
  auto chroma_planes = F::avg_pool2d(ycc.index({Slice(), Slice(1, 3)}), F::AvgPool2dFuncOptions(2));

  auto y_rec = quantize_planes(y, table_tensor(luma, x.options())) + 128.0;
  auto c_rec = quantize_planes(chroma_planes, table_tensor(chroma, x.options()));
  c_rec = F::interpolate(c_rec, F::InterpolateFuncOptions()
                                    .mode(torch::kBilinear)
                                    .align_corners(false)
                                    .size(std::vector<std::int64_t>{y_rec.size(2), y_rec.size(3)}));
  auto rgb = yuv_to_rgb(torch::cat({y_rec, c_rec}, 1)) / 255.0;
  if (pad_h || pad_w) rgb = rgb.index({Slice(), Slice(), Slice(0, h), Slice(0, w)});
  return torch::clamp(rgb, 0.0, 1.0);
}

torch::Tensor differentiable_jpeg(const torch::Tensor& x, int quality) {
  if (quality < 40 || quality > 90) throw OutOfRangeParam("jpeg quality " + std::to_string(quality) + " not in [40, 90]");
  return jpeg_with_tables(x, scaled_table(base_luma_table(), quality), scaled_table(base_chroma_table(), quality));
}

}  // namespace catwm
