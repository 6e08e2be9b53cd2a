#include "catwm/color.hpp"

#include <torch/torch.h>

namespace catwm {

// Written as per-channel weighted sums rather than a matmul so the result for
// one image never depends on the rest of the batch.
torch::Tensor apply_color_matrix(const torch::Tensor& x, const ColorMatrix& m) {
  const auto r = x.select(1, 0);
  const auto g = x.select(1, 1);
  const auto b = x.select(1, 2);
  return torch::stack({m[0] * r + m[1] * g + m[2] * b,  //
                       m[3] * r + m[4] * g + m[5] * b,  //
                       m[6] * r + m[7] * g + m[8] * b},
                      1);
}

ColorMatrix multiply(const ColorMatrix& a, const ColorMatrix& b) {
  ColorMatrix out{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) out[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
  return out;
}

ColorMatrix inverse(const ColorMatrix& m) {
  const double det = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
                     m[2] * (m[3] * m[7] - m[4] * m[6]);
  const double s = 1.0 / det;
  return {(m[4] * m[8] - m[5] * m[7]) * s, (m[2] * m[7] - m[1] * m[8]) * s, (m[1] * m[5] - m[2] * m[4]) * s,
          (m[5] * m[6] - m[3] * m[8]) * s, (m[0] * m[8] - m[2] * m[6]) * s, (m[2] * m[3] - m[0] * m[5]) * s,
          (m[3] * m[7] - m[4] * m[6]) * s, (m[1] * m[6] - m[0] * m[7]) * s, (m[0] * m[4] - m[1] * m[3]) * s};
}

const ColorMatrix& yuv_from_rgb() {
  static const ColorMatrix m{0.299, 0.587, 0.114, -0.168736, -0.331264, 0.5, 0.5, -0.418688, -0.081312};
  return m;
}

const ColorMatrix& rgb_from_yuv() {
  static const ColorMatrix m = inverse(yuv_from_rgb());
  return m;
}

torch::Tensor rgb_to_yuv(const torch::Tensor& rgb) { return apply_color_matrix(rgb, yuv_from_rgb()); }

torch::Tensor yuv_to_rgb(const torch::Tensor& yuv) { return apply_color_matrix(yuv, rgb_from_yuv()); }

torch::Tensor luma(const torch::Tensor& rgb) {
  return (0.299 * rgb.select(1, 0) + 0.587 * rgb.select(1, 1) + 0.114 * rgb.select(1, 2)).unsqueeze(1);
}

}  // namespace catwm
