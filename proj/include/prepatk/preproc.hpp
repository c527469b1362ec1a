#pragma once

#include <string>
#include <utility>
#include <vector>

#include "prepatk/image.hpp"

namespace prepatk {

enum class Interp { kNearest, kBilinear, kBicubic };

std::string to_string(Interp interp);
Interp interp_from_string(const std::string& s);

/// Declarative description of one transform or a whole pipeline.
struct PreprocessorSpec {
  enum class Kind { kCenterCrop, kResize, kQuantize, kJpeg, kPipeline };

  Kind kind = Kind::kPipeline;
  int target = 0;                        // crop/resize output size
  Interp interp = Interp::kBilinear;     // resize only
  int bits = 8;                          // quantize, 1..8
  int quality = 100;                     // jpeg, 1..100
  std::vector<PreprocessorSpec> stages;  // pipeline, applied left to right

  static PreprocessorSpec center_crop(int target);
  static PreprocessorSpec resize(int target, Interp interp);
  static PreprocessorSpec quantize(int bits);
  static PreprocessorSpec jpeg(int quality);
  static PreprocessorSpec pipeline(std::vector<PreprocessorSpec> stages);
  static PreprocessorSpec identity() { return pipeline({}); }

  /// True when every stage is a crop or a resize (assumptions A1+A2).
  bool bypassable() const;
  /// Flattened stage list; a non-pipeline spec yields itself.
  std::vector<PreprocessorSpec> stage_list() const;
  bool is_identity() const { return kind == Kind::kPipeline && stages.empty(); }

  std::string describe() const;
};

bool operator==(const PreprocessorSpec& a, const PreprocessorSpec& b);

/// Spatial output size for a square input of side s_in; throws when the spec
/// cannot accept that size (crop target larger than input).
int output_size(const PreprocessorSpec& spec, int s_in);

/// The deployed transform t. Crop and resize demand square inputs; resize
/// does not clamp (it is exactly linear), JPEG decode clamps to [0,1].
Image apply(const PreprocessorSpec& spec, const Image& x);

/// Forward pass with the smooth rounding surrogate substituted for every hard
/// rounding step; identical to apply() for crop/resize. Used by the gradient
/// contracts below and never for hard-label queries.
Image apply_smooth(const PreprocessorSpec& spec, const Image& x);

/// Jacobian-vector and vector-Jacobian products of the surrogate at x.
Image jvp(const PreprocessorSpec& spec, const Image& x, const Image& v);
Image vjp(const PreprocessorSpec& spec, const Image& x, const Image& w);

/// Smooth rounding surrogate round_s(z) = round(z) + (z - round(z))^3 and its
/// almost-everywhere derivative.
double round_half_up(double z);
double round_smooth(double z);
double round_smooth_deriv(double z);

/// One-dimensional resize kernel support: per output index, the (input index,
/// weight) taps after edge clamping and duplicate merging. Shared by apply,
/// jvp/vjp and the matrix builders so they agree bit-for-bit.
std::vector<std::vector<std::pair<int, double>>> resize_taps(int s_in, int s_out, Interp interp);

/// Pixel-space JPEG round trip: per-channel 8x8 type-II DCT, luminance table
/// scaled by the IJG quality formula, no entropy coding. Non-multiple-of-8
/// sizes are reflect-padded and cropped back.
Image jpeg_roundtrip(const Image& x, int quality);

}  // namespace prepatk
