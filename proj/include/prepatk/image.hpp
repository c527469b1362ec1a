#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace prepatk {

/// Dense real-valued pixel tensor. Layout is row-major per channel with the
/// channel outermost: index = (c * height + y) * width + x, which is also the
/// flattening convention used by every linear operator in the toolkit.
/// Values are nominally in [0,1]; projection into that range only ever
/// happens through the explicit clamp01() below.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, double fill = 0.0);

  static Image from_flat(std::vector<double> flat, int height, int width, int channels);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  int size() const { return static_cast<int>(data_.size()); }
  bool is_square() const { return height_ == width_; }
  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  double& at(int c, int y, int x) { return data_[(static_cast<size_t>(c) * height_ + y) * width_ + x]; }
  double at(int c, int y, int x) const { return data_[(static_cast<size_t>(c) * height_ + y) * width_ + x]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  /// Flat view in the documented order; round-trips bit-exactly with from_flat.
  const std::vector<double>& flatten() const { return data_; }

  /// Pointer to the start of one channel plane (height*width doubles).
  double* channel(int c) { return data_.data() + static_cast<size_t>(c) * height_ * width_; }
  const double* channel(int c) const { return data_.data() + static_cast<size_t>(c) * height_ * width_; }

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// The one and only projection into [0,1].
Image clamp01(const Image& x);
bool in_unit_range(const Image& x, double slack = 0.0);

double l2_distance(const Image& a, const Image& b);
int l0_diff(const Image& a, const Image& b);
double linf_diff(const Image& a, const Image& b);

inline void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

}  // namespace prepatk
