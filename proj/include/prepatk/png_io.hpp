#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "prepatk/image.hpp"

namespace prepatk {

/// 8-bit byte for a pixel value, round half up. The PNG wire format is the
/// 8-bit constraint: encoding is lossy for continuous tensors.
inline uint8_t pixel_to_byte(double v) { return static_cast<uint8_t>(std::floor(v * 255.0 + 0.5)); }

/// Lossless standard PNG, 8-bit gray (1 channel) or RGB (3 channels).
/// Values must already be in [0,1]; out-of-range input throws rather than
/// clamping silently.
std::string png_encode(const Image& x);

/// Decodes 8-bit gray or color PNGs; color maps to 3 channels.
/// Throws std::runtime_error on undecodable bytes.
Image png_decode(const std::string& bytes);

}  // namespace prepatk
