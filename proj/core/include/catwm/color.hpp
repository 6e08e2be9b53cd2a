#pragma once

#include <array>

#include <torch/types.h>

namespace catwm {

// BT.601 full-range YUV (U, V centered at zero). Channel dim is 1.
torch::Tensor rgb_to_yuv(const torch::Tensor& rgb);
torch::Tensor yuv_to_rgb(const torch::Tensor& yuv);

/// Luma weights (0.299, 0.587, 0.114) applied over the channel dim; keeps dim.
torch::Tensor luma(const torch::Tensor& rgb);

/// Multiply every pixel's channel vector by a 3x3 matrix: out_c = sum_k M[c][k] in_k.
using ColorMatrix = std::array<double, 9>;

torch::Tensor apply_color_matrix(const torch::Tensor& x, const ColorMatrix& matrix);
ColorMatrix multiply(const ColorMatrix& a, const ColorMatrix& b);
ColorMatrix inverse(const ColorMatrix& m);

const ColorMatrix& yuv_from_rgb();
const ColorMatrix& rgb_from_yuv();

}  // namespace catwm
