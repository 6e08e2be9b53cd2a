#pragma once

#include <array>

#include <torch/types.h>

namespace catwm {

using QuantTable = std::array<double, 64>;

/// Standard luminance / chrominance tables (ITU T.81 Annex K), row-major.
const QuantTable& base_luma_table();
const QuantTable& base_chroma_table();

/// IJG quality scaling of a base table, entries clamped to [1, 255].
QuantTable scaled_table(const QuantTable& base, int quality);

/// x - sin(2 pi x) / (2 pi): agrees with round() to third order near
/// integers, is continuous everywhere and has a non-negative slope.
torch::Tensor smooth_round(const torch::Tensor& x);

/// Differentiable JPEG analogue: YCbCr, 4:2:0 chroma subsampling, 8x8 block
/// DCT, quantization with smooth rounding, inverse transform. quality must be
/// in [40, 90]; OutOfRangeParam otherwise.
torch::Tensor differentiable_jpeg(const torch::Tensor& x, int quality);

/// Same pipeline with explicit tables (used for the unit-table check).
torch::Tensor jpeg_with_tables(const torch::Tensor& x, const QuantTable& luma, const QuantTable& chroma);

}  // namespace catwm
