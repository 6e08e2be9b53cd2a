#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <torch/types.h>

#include "catwm/rng.hpp"

namespace catwm {

enum class Family { Identity, Value, Compression, Geometric };

std::string_view family_name(Family f);
/// Short label used in family-pair cells: Id, Val, Comp, Geom.
std::string_view family_short_name(Family f);

enum class AttackKind {
  Identity,
  Rotate,
  Resize,
  Crop,
  Perspective,
  HorizontalFlip,
  Brightness,
  Contrast,
  Hue,
  Grayscale,
  GaussianBlur,
  Jpeg,
};

/// Valid parameter set of a primitive: a closed interval or a sorted list.
struct ParamRange {
  enum class Kind { ContinuousInterval, DiscreteSet };

  Kind kind = Kind::DiscreteSet;
  double lower = 0.0;
  double upper = 0.0;
  std::vector<double> values;

  static ParamRange interval(double lo, double hi);
  static ParamRange discrete(std::vector<double> values);

  bool empty() const;
  bool contains(double v) const;
};

/// Parameters of one primitive application. `strength` is absent for the
/// identity; the offsets only matter for crop (fraction of the free margin,
/// 0.5 is centered).
struct AttackParams {
  std::optional<double> strength;
  double offset_x = 0.5;
  double offset_y = 0.5;

  static AttackParams none() { return {}; }
  static AttackParams of(double v) { return AttackParams{v, 0.5, 0.5}; }

  bool operator==(const AttackParams&) const = default;
};

struct AttackPrimitive {
  std::string id;
  AttackKind kind = AttackKind::Identity;
  Family family = Family::Identity;
  ParamRange range;
  bool is_binary = false;
  std::string unit;
};

/// The K = 12 primitives in stable order; identity first.
const std::vector<AttackPrimitive>& registry();

/// Position of `id` in the registry. Throws UnknownPrimitive.
std::size_t primitive_index(std::string_view id);
const AttackPrimitive& find_primitive(std::string_view id);

AttackParams sample_params(const AttackPrimitive& primitive, Rng& rng);
std::vector<AttackParams> sample_all_params(std::span<const AttackPrimitive> primitives, Rng& rng);

/// Throws OutOfRangeParam when `params` is outside the primitive's range.
void validate_params(const AttackPrimitive& primitive, const AttackParams& params);

/// Throws ShapeMismatch unless x is a finite (B, 3, H, W) floating tensor.
void check_image_batch(const torch::Tensor& x);

/// Apply one primitive. Output has the input's shape and lies in [0, 1].
torch::Tensor apply(const AttackPrimitive& primitive, const torch::Tensor& x, const AttackParams& params);

/// Apply a chain of (primitive, params) in order.
torch::Tensor apply_chain(std::span<const AttackPrimitive* const> primitives,
                          std::span<const AttackParams> params, const torch::Tensor& x);

/// Row b of the output is primitives[index[b]] applied to row b of x.
/// Each primitive runs once on the subset that selected it.
torch::Tensor apply_selected(const torch::Tensor& x, std::span<const std::int64_t> index,
                             std::span<const AttackPrimitive> primitives, std::span<const AttackParams> params);

// Individual transforms. All keep the input shape and clamp to [0, 1].
torch::Tensor rotate(const torch::Tensor& x, double degrees);
torch::Tensor resize_roundtrip(const torch::Tensor& x, double scale);
torch::Tensor crop_resize(const torch::Tensor& x, double area_fraction, double offset_x, double offset_y);
torch::Tensor perspective(const torch::Tensor& x, double distortion);
torch::Tensor horizontal_flip(const torch::Tensor& x);
torch::Tensor adjust_brightness(const torch::Tensor& x, double factor);
torch::Tensor adjust_contrast(const torch::Tensor& x, double factor);
torch::Tensor adjust_hue(const torch::Tensor& x, double shift);
torch::Tensor to_grayscale(const torch::Tensor& x);
torch::Tensor gaussian_blur(const torch::Tensor& x, int kernel_size);

}  // namespace catwm
