#include "catwm/attacks.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <torch/torch.h>

#include "catwm/color.hpp"
#include "catwm/error.hpp"
#include "catwm/jpeg.hpp"

namespace F = torch::nn::functional;

namespace catwm {
namespace {

constexpr double kParamTolerance = 1e-9;

std::vector<AttackPrimitive> make_registry() {
  using R = ParamRange;
  return {
      {"identity", AttackKind::Identity, Family::Identity, R::discrete({0.0}), false, ""},
      {"rotate", AttackKind::Rotate, Family::Geometric, R::interval(5.0, 90.0), false, "degrees"},
      {"resize", AttackKind::Resize, Family::Geometric, R::interval(0.32, 1.0), false, "scale"},
      {"crop", AttackKind::Crop, Family::Geometric, R::interval(0.32, 1.0), false, "area fraction"},
      {"perspective", AttackKind::Perspective, Family::Geometric, R::interval(0.1, 0.8), false, "distortion"},
      {"hflip", AttackKind::HorizontalFlip, Family::Geometric, R::discrete({0.0, 1.0}), true, "toggle"},
      {"brightness", AttackKind::Brightness, Family::Value, R::interval(0.1, 2.0), false, "factor"},
      {"contrast", AttackKind::Contrast, Family::Value, R::interval(0.1, 2.0), false, "factor"},
      {"hue", AttackKind::Hue, Family::Value, R::interval(-0.4, 0.5), false, "turns"},
      {"grayscale", AttackKind::Grayscale, Family::Value, R::discrete({0.0, 1.0}), true, "toggle"},
      {"gaussian_blur", AttackKind::GaussianBlur, Family::Compression, R::discrete({3, 5, 9, 13, 17}), false,
       "kernel px"},
      {"jpeg", AttackKind::Jpeg, Family::Compression, R::discrete({40, 50, 60, 70, 80, 90}), false, "quality"},
  };
}

torch::Tensor clamp01(const torch::Tensor& x) { return torch::clamp(x, 0.0, 1.0); }

// Normalized pixel-center coordinates (align_corners = false convention).
std::pair<torch::Tensor, torch::Tensor> normalized_mesh(std::int64_t h, std::int64_t w, const torch::TensorOptions& opts) {
  auto ys = (torch::arange(h, opts) * 2.0 + 1.0) / static_cast<double>(h) - 1.0;
  auto xs = (torch::arange(w, opts) * 2.0 + 1.0) / static_cast<double>(w) - 1.0;
  auto mesh = torch::meshgrid({ys, xs}, "ij");
  return {mesh[1], mesh[0]};
}

torch::Tensor sample_grid(const torch::Tensor& x, const torch::Tensor& grid_x, const torch::Tensor& grid_y) {
  auto grid = torch::stack({grid_x, grid_y}, -1).unsqueeze(0).expand({x.size(0), -1, -1, -1});
  return F::grid_sample(x, grid,
                        F::GridSampleFuncOptions().mode(torch::kBilinear).padding_mode(torch::kZeros).align_corners(false));
}

// Sampling grid in normalized coordinates: in = A * out + t.
torch::Tensor affine_sample(const torch::Tensor& x, const std::array<double, 6>& a) {
  auto [xn, yn] = normalized_mesh(x.size(2), x.size(3), x.options());
  return sample_grid(x, a[0] * xn + a[1] * yn + a[2], a[3] * xn + a[4] * yn + a[5]);
}

// Solve the 8 unknowns of a homography mapping src[i] -> dst[i].
std::array<double, 9> homography(const std::array<std::array<double, 2>, 4>& src,
                                 const std::array<std::array<double, 2>, 4>& dst) {
  double a[8][9] = {};
  for (int i = 0; i < 4; ++i) {
    const double x = src[i][0], y = src[i][1], u = dst[i][0], v = dst[i][1];
    double* r0 = a[2 * i];
    double* r1 = a[2 * i + 1];
    r0[0] = x, r0[1] = y, r0[2] = 1, r0[6] = -u * x, r0[7] = -u * y, r0[8] = u;
    r1[3] = x, r1[4] = y, r1[5] = 1, r1[6] = -v * x, r1[7] = -v * y, r1[8] = v;
  }
  for (int c = 0; c < 8; ++c) {
    int pivot = c;
    for (int r = c + 1; r < 8; ++r)
      if (std::abs(a[r][c]) > std::abs(a[pivot][c])) pivot = r;
    std::swap(a[c], a[pivot]);
    for (int r = 0; r < 8; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (int k = c; k < 9; ++k) a[r][k] -= f * a[c][k];
    }
  }
  std::array<double, 9> h{};
  for (int i = 0; i < 8; ++i) h[i] = a[i][8] / a[i][i];
  h[8] = 1.0;
  return h;
}

}  // namespace

std::string_view family_name(Family f) {
  switch (f) {
    case Family::Identity: return "Identity";
    case Family::Value: return "Value";
    case Family::Compression: return "Compression";
    case Family::Geometric: return "Geometric";
  }
  return "?";
}

std::string_view family_short_name(Family f) {
  switch (f) {
    case Family::Identity: return "Id";
    case Family::Value: return "Val";
    case Family::Compression: return "Comp";
    case Family::Geometric: return "Geom";
  }
  return "?";
}

ParamRange ParamRange::interval(double lo, double hi) {
  ParamRange r;
  r.kind = Kind::ContinuousInterval;
  r.lower = lo;
  r.upper = hi;
  return r;
}

ParamRange ParamRange::discrete(std::vector<double> values) {
  ParamRange r;
  r.kind = Kind::DiscreteSet;
  std::sort(values.begin(), values.end());
  r.values = std::move(values);
  return r;
}

bool ParamRange::empty() const {
  return kind == Kind::ContinuousInterval ? !(lower < upper) : values.empty();
}

bool ParamRange::contains(double v) const {
  if (!std::isfinite(v)) return false;
  if (kind == Kind::ContinuousInterval) return v >= lower - kParamTolerance && v <= upper + kParamTolerance;
  return std::any_of(values.begin(), values.end(), [v](double c) { return std::abs(c - v) <= kParamTolerance; });
}

const std::vector<AttackPrimitive>& registry() {
  static const std::vector<AttackPrimitive> primitives = make_registry();
  return primitives;
}

std::size_t primitive_index(std::string_view id) {
  const auto& reg = registry();
  for (std::size_t i = 0; i < reg.size(); ++i)
    if (reg[i].id == id) return i;
  throw UnknownPrimitive(std::string(id));
}

const AttackPrimitive& find_primitive(std::string_view id) { return registry()[primitive_index(id)]; }

AttackParams sample_params(const AttackPrimitive& primitive, Rng& rng) {
  if (primitive.kind == AttackKind::Identity) return AttackParams::none();
  AttackParams p;
  const auto& r = primitive.range;
  if (r.kind == ParamRange::Kind::ContinuousInterval) {
    p.strength = rng.uniform(r.lower, r.upper);
  } else {
    p.strength = r.values[static_cast<std::size_t>(rng.index(static_cast<std::int64_t>(r.values.size())))];
  }
  if (primitive.kind == AttackKind::Crop) {
    p.offset_x = rng.uniform(0.0, 1.0);
    p.offset_y = rng.uniform(0.0, 1.0);
  }
  return p;
}

std::vector<AttackParams> sample_all_params(std::span<const AttackPrimitive> primitives, Rng& rng) {
  std::vector<AttackParams> out;
  out.reserve(primitives.size());
  for (const auto& p : primitives) out.push_back(sample_params(p, rng));
  return out;
}

void validate_params(const AttackPrimitive& primitive, const AttackParams& params) {
  if (primitive.kind == AttackKind::Identity) {
    if (params.strength && *params.strength != 0.0)
      throw OutOfRangeParam("identity takes no parameters");
    return;
  }
  if (!params.strength) throw OutOfRangeParam(primitive.id + " requires a parameter");
  if (!primitive.range.contains(*params.strength))
    throw OutOfRangeParam(primitive.id + " parameter " + std::to_string(*params.strength) + " outside its range");
  if (primitive.kind == AttackKind::Crop &&
      (params.offset_x < 0.0 || params.offset_x > 1.0 || params.offset_y < 0.0 || params.offset_y > 1.0))
    throw OutOfRangeParam("crop offsets must lie in [0, 1]");
}

void check_image_batch(const torch::Tensor& x) {
  if (!x.defined() || x.dim() != 4 || x.size(1) != 3 || x.size(0) < 1 || x.size(2) < 1 || x.size(3) < 1)
    throw ShapeMismatch("expected (batch, 3, height, width), got " +
                        (x.defined() ? c10::str(x.sizes()) : std::string("undefined")));
  if (!x.is_floating_point()) throw ShapeMismatch("image batch must be floating point");
  if (!torch::isfinite(x).all().item<bool>()) throw ShapeMismatch("image batch contains non-finite values");
}

torch::Tensor rotate(const torch::Tensor& x, double degrees) {
  const double rad = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double h = static_cast<double>(x.size(2)), w = static_cast<double>(x.size(3));
  // Pixel-space rotation conjugated into normalized coordinates.
  return clamp01(affine_sample(x, {c, s * h / w, 0.0, -s * w / h, c, 0.0}));
}

torch::Tensor resize_roundtrip(const torch::Tensor& x, double scale) {
  const auto h = x.size(2), w = x.size(3);
  const auto sh = std::max<std::int64_t>(1, std::llround(scale * static_cast<double>(h)));
  const auto sw = std::max<std::int64_t>(1, std::llround(scale * static_cast<double>(w)));
  if (sh == h && sw == w) return clamp01(x);
  auto opts = F::InterpolateFuncOptions().mode(torch::kBilinear).align_corners(false);
  auto small = F::interpolate(x, opts.size(std::vector<std::int64_t>{sh, sw}));
  return clamp01(F::interpolate(small, F::InterpolateFuncOptions()
                                           .mode(torch::kBilinear)
                                           .align_corners(false)
                                           .size(std::vector<std::int64_t>{h, w})));
}

torch::Tensor crop_resize(const torch::Tensor& x, double area_fraction, double offset_x, double offset_y) {
  const double side = std::sqrt(area_fraction);
  const double tx = (2.0 * offset_x - 1.0) * (1.0 - side);
  const double ty = (2.0 * offset_y - 1.0) * (1.0 - side);
  return clamp01(affine_sample(x, {side, 0.0, tx, 0.0, side, ty}));
}

torch::Tensor perspective(const torch::Tensor& x, double distortion) {
  const double h = static_cast<double>(x.size(2)), w = static_cast<double>(x.size(3));
  const double dx = distortion * w / 4.0, dy = distortion * h / 8.0;
  // Keystone: the top edge is pulled inward and down, the bottom edge stays.
  const std::array<std::array<double, 2>, 4> corners{{{0, 0}, {w - 1, 0}, {w - 1, h - 1}, {0, h - 1}}};
  const std::array<std::array<double, 2>, 4> moved{{{dx, dy}, {w - 1 - dx, dy}, {w - 1, h - 1}, {0, h - 1}}};
  // Sampling maps output pixels back to the source, so solve moved -> corners.
  const auto m = homography(moved, corners);
  auto opts = x.options();
  auto ys = torch::arange(x.size(2), opts.dtype(torch::kDouble));
  auto xs = torch::arange(x.size(3), opts.dtype(torch::kDouble));
  auto mesh = torch::meshgrid({ys, xs}, "ij");
  const auto& py = mesh[0];
  const auto& px = mesh[1];
  auto denom = m[6] * px + m[7] * py + m[8];
  auto sx = (m[0] * px + m[1] * py + m[2]) / denom;
  auto sy = (m[3] * px + m[4] * py + m[5]) / denom;
  auto gx = ((sx * 2.0 + 1.0) / w - 1.0).to(opts.dtype());
  auto gy = ((sy * 2.0 + 1.0) / h - 1.0).to(opts.dtype());
  return clamp01(sample_grid(x, gx, gy));
}

torch::Tensor horizontal_flip(const torch::Tensor& x) { return x.flip({3}); }

torch::Tensor adjust_brightness(const torch::Tensor& x, double factor) { return clamp01(x * factor); }

torch::Tensor adjust_contrast(const torch::Tensor& x, double factor) {
  auto mean = luma(x).mean({1, 2, 3}, /*keepdim=*/true);
  return clamp01((x - mean) * factor + mean);
}

torch::Tensor adjust_hue(const torch::Tensor& x, double shift) {
  if (shift == 0.0) return clamp01(x);
  // Rotate chroma in YIQ; luma is untouched.
  static const ColorMatrix yiq{0.299, 0.587, 0.114, 0.595716, -0.274453, -0.321263, 0.211456, -0.522591, 0.311135};
  static const ColorMatrix rgb_from_yiq = inverse(yiq);
  const double a = 2.0 * std::numbers::pi * shift;
  const double c = std::cos(a), s = std::sin(a);
  const ColorMatrix rot{1, 0, 0, 0, c, -s, 0, s, c};
  return clamp01(apply_color_matrix(x, multiply(rgb_from_yiq, multiply(rot, yiq))));
}

torch::Tensor to_grayscale(const torch::Tensor& x) { return clamp01(luma(x).expand({-1, 3, -1, -1}).contiguous()); }

torch::Tensor gaussian_blur(const torch::Tensor& x, int kernel_size) {
  if (kernel_size < 1 || kernel_size % 2 == 0) throw OutOfRangeParam("blur kernel must be odd and positive");
  const double sigma = 0.3 * ((kernel_size - 1) * 0.5 - 1.0) + 0.8;
  const int half = kernel_size / 2;
  std::vector<double> weights(static_cast<std::size_t>(kernel_size));
  double total = 0.0;
  for (int i = 0; i < kernel_size; ++i) {
    const double d = i - half;
    weights[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += weights[static_cast<std::size_t>(i)];
  }
  for (auto& wgt : weights) wgt /= total;
  using torch::indexing::Slice;
  const auto h = x.size(2), w = x.size(3);
  auto padded = F::pad(x, F::PadFuncOptions({half, half, half, half}).mode(torch::kReplicate));
  torch::Tensor rows;
  for (int i = 0; i < kernel_size; ++i) {
    auto term = weights[static_cast<std::size_t>(i)] * padded.index({Slice(), Slice(), Slice(), Slice(i, i + w)});
    rows = rows.defined() ? rows + term : term;
  }
  torch::Tensor out;
  for (int i = 0; i < kernel_size; ++i) {
    auto term = weights[static_cast<std::size_t>(i)] * rows.index({Slice(), Slice(), Slice(i, i + h), Slice()});
    out = out.defined() ? out + term : term;
  }
  return clamp01(out);
}

torch::Tensor apply(const AttackPrimitive& primitive, const torch::Tensor& x, const AttackParams& params) {
  check_image_batch(x);
  validate_params(primitive, params);
  const double v = params.strength.value_or(0.0);
  switch (primitive.kind) {
    case AttackKind::Identity: return x;
    case AttackKind::Rotate: return rotate(x, v);
    case AttackKind::Resize: return resize_roundtrip(x, v);
    case AttackKind::Crop: return crop_resize(x, v, params.offset_x, params.offset_y);
    case AttackKind::Perspective: return perspective(x, v);
    case AttackKind::HorizontalFlip: return v > 0.5 ? horizontal_flip(x) : x;
    case AttackKind::Brightness: return adjust_brightness(x, v);
    case AttackKind::Contrast: return adjust_contrast(x, v);
    case AttackKind::Hue: return adjust_hue(x, v);
    case AttackKind::Grayscale: return v > 0.5 ? to_grayscale(x) : x;
    case AttackKind::GaussianBlur: return gaussian_blur(x, static_cast<int>(std::lround(v)));
    case AttackKind::Jpeg: return differentiable_jpeg(x, static_cast<int>(std::lround(v)));
  }
  throw UnknownPrimitive(primitive.id);
}

torch::Tensor apply_chain(std::span<const AttackPrimitive* const> primitives, std::span<const AttackParams> params,
                          const torch::Tensor& x) {
  if (primitives.size() != params.size()) throw LengthMismatch("one parameter set per primitive expected");
  torch::Tensor out = x;
  for (std::size_t i = 0; i < primitives.size(); ++i) out = apply(*primitives[i], out, params[i]);
  return out;
}

torch::Tensor apply_selected(const torch::Tensor& x, std::span<const std::int64_t> index,
                             std::span<const AttackPrimitive> primitives, std::span<const AttackParams> params) {
  check_image_batch(x);
  if (static_cast<std::int64_t>(index.size()) != x.size(0)) throw LengthMismatch("one selection per batch element expected");
  if (params.size() != primitives.size()) throw LengthMismatch("one parameter set per primitive expected");
  const auto k = static_cast<std::int64_t>(primitives.size());
  std::vector<std::vector<std::int64_t>> members(primitives.size());
  for (std::size_t b = 0; b < index.size(); ++b) {
    if (index[b] < 0 || index[b] >= k) throw UnknownPrimitive("selection index out of range");
    members[static_cast<std::size_t>(index[b])].push_back(static_cast<std::int64_t>(b));
  }
  torch::Tensor out = torch::zeros_like(x);
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    if (members[i].empty()) continue;
    if (members[i].size() == index.size()) return apply(primitives[i], x, params[i]);
    auto rows = torch::tensor(members[i], torch::kLong);
    out = out.index_copy(0, rows, apply(primitives[i], x.index_select(0, rows), params[i]));
  }
  return out;
}

}  // namespace catwm
