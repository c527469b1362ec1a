#include "prepatk/image.hpp"

#include <cmath>

#include "prepatk/rng.hpp"

namespace prepatk {

Image::Image(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 1 || width < 1) throw std::invalid_argument("Image: height and width must be >= 1");
  if (channels != 1 && channels != 3) throw std::invalid_argument("Image: channels must be 1 or 3");
  data_.assign(static_cast<size_t>(height) * width * channels, fill);
}

Image Image::from_flat(std::vector<double> flat, int height, int width, int channels) {
  Image img(height, width, channels);
  if (flat.size() != img.data_.size()) throw std::invalid_argument("from_flat: size mismatch");
  img.data_ = std::move(flat);
  return img;
}

Image clamp01(const Image& x) {
  Image out = x;
  for (double& v : out.data()) v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  return out;
}

bool in_unit_range(const Image& x, double slack) {
  for (double v : x.data())
    if (!(v >= -slack && v <= 1.0 + slack)) return false;
  return true;
}

double l2_distance(const Image& a, const Image& b) {
  require_same_shape(a, b, "l2_distance");
  double acc = 0.0;
  for (size_t i = 0; i < a.data().size(); ++i) {
    double d = a.data()[i] - b.data()[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

int l0_diff(const Image& a, const Image& b) {
  require_same_shape(a, b, "l0_diff");
  int n = 0;
  for (size_t i = 0; i < a.data().size(); ++i)
    if (a.data()[i] != b.data()[i]) ++n;
  return n;
}

double linf_diff(const Image& a, const Image& b) {
  require_same_shape(a, b, "linf_diff");
  double m = 0.0;
  for (size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
  return m;
}

std::vector<std::vector<double>> unit_sphere_sample(Rng& rng, int dim, int batch) {
  if (dim < 1) throw std::invalid_argument("unit_sphere_sample: dim must be >= 1");
  if (batch < 1) throw std::invalid_argument("unit_sphere_sample: batch must be >= 1");
  std::vector<std::vector<double>> out(batch);
  for (auto& v : out) {
    v.resize(dim);
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (double& e : v) {
        e = rng.normal();
        norm2 += e * e;
      }
    } while (norm2 == 0.0);
    if (dim == 1) {
      v[0] = std::copysign(1.0, v[0]);
      continue;
    }
    double inv = 1.0 / std::sqrt(norm2);
    for (double& e : v) e *= inv;
  }
  return out;
}

}  // namespace prepatk
