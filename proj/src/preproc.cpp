#include "prepatk/preproc.hpp"

#include <array>
#include <cmath>
#include <sstream>

namespace prepatk {

std::string to_string(Interp interp) {
  switch (interp) {
    case Interp::kNearest: return "nearest";
    case Interp::kBilinear: return "bilinear";
    case Interp::kBicubic: return "bicubic";
  }
  return "?";
}

Interp interp_from_string(const std::string& s) {
  if (s == "nearest") return Interp::kNearest;
  if (s == "bilinear") return Interp::kBilinear;
  if (s == "bicubic") return Interp::kBicubic;
  throw std::invalid_argument("unknown interpolation: " + s);
}

PreprocessorSpec PreprocessorSpec::center_crop(int target) {
  if (target < 1) throw std::invalid_argument("center_crop: target must be >= 1");
  PreprocessorSpec s;
  s.kind = Kind::kCenterCrop;
  s.target = target;
  return s;
}

PreprocessorSpec PreprocessorSpec::resize(int target, Interp interp) {
  if (target < 1) throw std::invalid_argument("resize: target must be >= 1");
  PreprocessorSpec s;
  s.kind = Kind::kResize;
  s.target = target;
  s.interp = interp;
  return s;
}

PreprocessorSpec PreprocessorSpec::quantize(int bits) {
  if (bits < 1 || bits > 8) throw std::invalid_argument("quantize: bits must be in 1..8");
  PreprocessorSpec s;
  s.kind = Kind::kQuantize;
  s.bits = bits;
  return s;
}

PreprocessorSpec PreprocessorSpec::jpeg(int quality) {
  if (quality < 1 || quality > 100) throw std::invalid_argument("jpeg: quality must be in 1..100");
  PreprocessorSpec s;
  s.kind = Kind::kJpeg;
  s.quality = quality;
  return s;
}

PreprocessorSpec PreprocessorSpec::pipeline(std::vector<PreprocessorSpec> stages) {
  PreprocessorSpec s;
  s.kind = Kind::kPipeline;
  s.stages = std::move(stages);
  return s;
}

bool PreprocessorSpec::bypassable() const {
  if (kind == Kind::kPipeline) {
    for (const auto& st : stages)
      if (!st.bypassable()) return false;
    return true;
  }
  return kind == Kind::kCenterCrop || kind == Kind::kResize;
}

std::vector<PreprocessorSpec> PreprocessorSpec::stage_list() const {
  if (kind != Kind::kPipeline) return {*this};
  std::vector<PreprocessorSpec> out;
  for (const auto& st : stages)
    for (auto& sub : st.stage_list()) out.push_back(sub);
  return out;
}

std::string PreprocessorSpec::describe() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::kCenterCrop: os << "crop" << target; break;
    case Kind::kResize: os << "resize" << target << "-" << to_string(interp); break;
    case Kind::kQuantize: os << "quant" << bits; break;
    case Kind::kJpeg: os << "jpeg" << quality; break;
    case Kind::kPipeline:
      if (stages.empty()) {
        os << "identity";
      } else {
        for (size_t i = 0; i < stages.size(); ++i) os << (i ? "+" : "") << stages[i].describe();
      }
      break;
  }
  return os.str();
}

bool operator==(const PreprocessorSpec& a, const PreprocessorSpec& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case PreprocessorSpec::Kind::kCenterCrop: return a.target == b.target;
    case PreprocessorSpec::Kind::kResize: return a.target == b.target && a.interp == b.interp;
    case PreprocessorSpec::Kind::kQuantize: return a.bits == b.bits;
    case PreprocessorSpec::Kind::kJpeg: return a.quality == b.quality;
    case PreprocessorSpec::Kind::kPipeline:
      if (a.stages.size() != b.stages.size()) return false;
      for (size_t i = 0; i < a.stages.size(); ++i)
        if (!(a.stages[i] == b.stages[i])) return false;
      return true;
  }
  return false;
}

int output_size(const PreprocessorSpec& spec, int s_in) {
  switch (spec.kind) {
    case PreprocessorSpec::Kind::kCenterCrop:
      if (s_in < spec.target)
        throw std::invalid_argument("center_crop: input side " + std::to_string(s_in) +
                                    " smaller than target " + std::to_string(spec.target));
      return spec.target;
    case PreprocessorSpec::Kind::kResize: return spec.target;
    case PreprocessorSpec::Kind::kQuantize:
    case PreprocessorSpec::Kind::kJpeg: return s_in;
    case PreprocessorSpec::Kind::kPipeline: {
      int s = s_in;
      for (const auto& st : spec.stages) s = output_size(st, s);
      return s;
    }
  }
  return s_in;
}

double round_half_up(double z) { return std::floor(z + 0.5); }
double round_smooth(double z) {
  double r = round_half_up(z);
  double d = z - r;
  return r + d * d * d;
}
double round_smooth_deriv(double z) {
  double d = z - round_half_up(z);
  return 3.0 * d * d;
}

// ---------------------------------------------------------------------------
// Resize kernels. Half-pixel convention: src = (dst + 0.5) * (s_in/s_out) - 0.5
// for interpolating kernels; nearest picks floor((dst + 0.5) * scale).

namespace {

double catmull_rom(double t) {
  t = std::fabs(t);
  if (t <= 1.0) return (1.5 * t - 2.5) * t * t + 1.0;
  if (t < 2.0) return ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0;
  return 0.0;
}

int clamp_index(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

void push_tap(std::vector<std::pair<int, double>>& taps, int idx, double w) {
  if (w == 0.0) return;
  for (auto& t : taps) {
    if (t.first == idx) {
      t.second += w;
      return;
    }
  }
  taps.emplace_back(idx, w);
}

}  // namespace

std::vector<std::vector<std::pair<int, double>>> resize_taps(int s_in, int s_out, Interp interp) {
  if (s_in < 1 || s_out < 1) throw std::invalid_argument("resize_taps: sizes must be >= 1");
  double scale = static_cast<double>(s_in) / s_out;
  std::vector<std::vector<std::pair<int, double>>> all(s_out);
  for (int dst = 0; dst < s_out; ++dst) {
    auto& taps = all[dst];
    if (interp == Interp::kNearest) {
      int idx = clamp_index(static_cast<int>(std::floor((dst + 0.5) * scale)), s_in);
      taps.emplace_back(idx, 1.0);
      continue;
    }
    double src = (dst + 0.5) * scale - 0.5;
    int i0 = static_cast<int>(std::floor(src));
    double f = src - i0;
    if (interp == Interp::kBilinear) {
      push_tap(taps, clamp_index(i0, s_in), 1.0 - f);
      push_tap(taps, clamp_index(i0 + 1, s_in), f);
    } else {
      for (int k = -1; k <= 2; ++k) push_tap(taps, clamp_index(i0 + k, s_in), catmull_rom(f - k));
    }
  }
  return all;
}

// ---------------------------------------------------------------------------
// JPEG pixel-space codec.

namespace {

const std::array<std::array<double, 8>, 8>& dct8() {
  static const auto m = [] {
    std::array<std::array<double, 8>, 8> t{};
    for (int u = 0; u < 8; ++u)
      for (int x = 0; x < 8; ++x)
        t[u][x] = (u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0)) *
                  std::cos((2.0 * x + 1.0) * u * M_PI / 16.0);
    return t;
  }();
  return m;
}

constexpr std::array<int, 64> kLuminanceTable = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

std::array<double, 64> quality_table(int quality) {
  if (quality < 1 || quality > 100) throw std::invalid_argument("jpeg: quality must be in 1..100");
  int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<double, 64> q{};
  for (int i = 0; i < 64; ++i) {
    int v = (kLuminanceTable[i] * scale + 50) / 100;
    q[i] = static_cast<double>(v < 1 ? 1 : (v > 255 ? 255 : v));
  }
  return q;
}

// Symmetric (edge-inclusive) reflection of index i into [0, n).
int reflect_index(int i, int n) {
  if (n == 1) return 0;
  int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

void dct2d(const double in[64], double out[64]) {
  const auto& t = dct8();
  double tmp[64];
  for (int u = 0; u < 8; ++u)
    for (int x = 0; x < 8; ++x) {
      double acc = 0.0;
      for (int k = 0; k < 8; ++k) acc += t[u][k] * in[k * 8 + x];
      tmp[u * 8 + x] = acc;
    }
  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v) {
      double acc = 0.0;
      for (int k = 0; k < 8; ++k) acc += tmp[u * 8 + k] * t[v][k];
      out[u * 8 + v] = acc;
    }
}

void idct2d(const double in[64], double out[64]) {
  const auto& t = dct8();
  double tmp[64];
  for (int x = 0; x < 8; ++x)
    for (int v = 0; v < 8; ++v) {
      double acc = 0.0;
      for (int k = 0; k < 8; ++k) acc += t[k][x] * in[k * 8 + v];
      tmp[x * 8 + v] = acc;
    }
  for (int x = 0; x < 8; ++x)
    for (int y = 0; y < 8; ++y) {
      double acc = 0.0;
      for (int k = 0; k < 8; ++k) acc += tmp[x * 8 + k] * t[k][y];
      out[x * 8 + y] = acc;
    }
}

enum class JpegMode { kHard, kSmooth, kJvp, kVjp };

// One entry point for the round trip and its linearizations so the block/pad
// bookkeeping cannot drift apart. For kJvp/kVjp, `tan_in` carries the tangent
// (or cotangent) and the primal x supplies the rounding-derivative mask.
Image jpeg_run(const Image& x, int quality, JpegMode mode, const Image* tan_in) {
  auto q = quality_table(quality);
  int h = x.height(), w = x.width();
  int ph = (h + 7) / 8 * 8, pw = (w + 7) / 8 * 8;
  Image out(h, w, x.channels(), 0.0);

  std::vector<double> plane(static_cast<size_t>(ph) * pw), tan_plane;
  if (mode == JpegMode::kJvp || mode == JpegMode::kVjp) tan_plane.resize(plane.size());

  for (int c = 0; c < x.channels(); ++c) {
    const double* src = x.channel(c);
    for (int y = 0; y < ph; ++y)
      for (int xx = 0; xx < pw; ++xx)
        plane[static_cast<size_t>(y) * pw + xx] =
            src[static_cast<size_t>(reflect_index(y, h)) * w + reflect_index(xx, w)] * 255.0 - 128.0;
    if (mode == JpegMode::kJvp) {
      const double* tsrc = tan_in->channel(c);
      for (int y = 0; y < ph; ++y)
        for (int xx = 0; xx < pw; ++xx)
          tan_plane[static_cast<size_t>(y) * pw + xx] =
              tsrc[static_cast<size_t>(reflect_index(y, h)) * w + reflect_index(xx, w)];
    } else if (mode == JpegMode::kVjp) {
      // adjoint of the final crop: embed w at the true pixels, zero elsewhere
      std::fill(tan_plane.begin(), tan_plane.end(), 0.0);
      const double* tsrc = tan_in->channel(c);
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
          tan_plane[static_cast<size_t>(y) * pw + xx] = tsrc[static_cast<size_t>(y) * w + xx];
    }

    std::vector<double> result(plane.size());
    double blk[64], coeff[64], work[64];
    for (int by = 0; by < ph; by += 8)
      for (int bx = 0; bx < pw; bx += 8) {
        for (int y = 0; y < 8; ++y)
          for (int xx = 0; xx < 8; ++xx) blk[y * 8 + xx] = plane[static_cast<size_t>(by + y) * pw + bx + xx];
        dct2d(blk, coeff);
        if (mode == JpegMode::kHard || mode == JpegMode::kSmooth) {
          for (int i = 0; i < 64; ++i) {
            double z = coeff[i] / q[i];
            work[i] = (mode == JpegMode::kHard ? round_half_up(z) : round_smooth(z)) * q[i];
          }
          idct2d(work, blk);
        } else {
          // linearized block map: IDCT . diag(round_s'(coeff/q)) . DCT, self-adjoint
          double tblk[64], tcoeff[64];
          for (int y = 0; y < 8; ++y)
            for (int xx = 0; xx < 8; ++xx)
              tblk[y * 8 + xx] = tan_plane[static_cast<size_t>(by + y) * pw + bx + xx];
          dct2d(tblk, tcoeff);
          for (int i = 0; i < 64; ++i) work[i] = tcoeff[i] * round_smooth_deriv(coeff[i] / q[i]);
          idct2d(work, blk);
        }
        for (int y = 0; y < 8; ++y)
          for (int xx = 0; xx < 8; ++xx) result[static_cast<size_t>(by + y) * pw + bx + xx] = blk[y * 8 + xx];
      }

    double* dst = out.channel(c);
    if (mode == JpegMode::kVjp) {
      // adjoint of the reflect-pad: accumulate every padded position back
      for (int y = 0; y < ph; ++y)
        for (int xx = 0; xx < pw; ++xx)
          dst[static_cast<size_t>(reflect_index(y, h)) * w + reflect_index(xx, w)] +=
              result[static_cast<size_t>(y) * pw + xx];
    } else {
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          double v = result[static_cast<size_t>(y) * pw + xx];
          if (mode == JpegMode::kHard) {
            v = (v + 128.0) / 255.0;
            v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);  // decode clamp, part of the codec
          } else if (mode == JpegMode::kSmooth) {
            v = (v + 128.0) / 255.0;
          }
          dst[static_cast<size_t>(y) * w + xx] = v;
        }
    }
  }
  return out;
}

}  // namespace

Image jpeg_roundtrip(const Image& x, int quality) { return jpeg_run(x, quality, JpegMode::kHard, nullptr); }

// ---------------------------------------------------------------------------
// apply / apply_smooth / jvp / vjp

namespace {

void require_square(const Image& x, const char* what) {
  if (!x.is_square()) throw std::invalid_argument(std::string(what) + ": requires a square input");
}

Image apply_crop(const PreprocessorSpec& spec, const Image& x) {
  require_square(x, "center_crop");
  int s = x.height(), t = spec.target;
  if (s < t) throw std::invalid_argument("center_crop: input smaller than target");
  int off = (s - t) / 2;
  Image out(t, t, x.channels());
  for (int c = 0; c < x.channels(); ++c)
    for (int y = 0; y < t; ++y)
      for (int xx = 0; xx < t; ++xx) out.at(c, y, xx) = x.at(c, y + off, xx + off);
  return out;
}

Image apply_resize(const PreprocessorSpec& spec, const Image& x) {
  require_square(x, "resize");
  int s = x.height(), t = spec.target;
  auto taps = resize_taps(s, t, spec.interp);
  Image out(t, t, x.channels());
  for (int c = 0; c < x.channels(); ++c)
    for (int oy = 0; oy < t; ++oy)
      for (int ox = 0; ox < t; ++ox) {
        double acc = 0.0;
        for (const auto& [iy, wy] : taps[oy])
          for (const auto& [ix, wx] : taps[ox]) acc += wy * wx * x.at(c, iy, ix);
        out.at(c, oy, ox) = acc;
      }
  return out;
}

Image apply_quantize(const PreprocessorSpec& spec, const Image& x, bool smooth) {
  double levels = static_cast<double>((1 << spec.bits) - 1);
  Image out = x;
  for (double& v : out.data())
    v = (smooth ? round_smooth(v * levels) : round_half_up(v * levels)) / levels;
  return out;
}

}  // namespace

Image apply(const PreprocessorSpec& spec, const Image& x) {
  switch (spec.kind) {
    case PreprocessorSpec::Kind::kCenterCrop: return apply_crop(spec, x);
    case PreprocessorSpec::Kind::kResize: return apply_resize(spec, x);
    case PreprocessorSpec::Kind::kQuantize: return apply_quantize(spec, x, false);
    case PreprocessorSpec::Kind::kJpeg: return jpeg_roundtrip(x, spec.quality);
    case PreprocessorSpec::Kind::kPipeline: {
      Image cur = x;
      for (const auto& st : spec.stages) cur = apply(st, cur);
      return cur;
    }
  }
  throw std::logic_error("apply: unknown spec kind");
}

Image apply_smooth(const PreprocessorSpec& spec, const Image& x) {
  switch (spec.kind) {
    case PreprocessorSpec::Kind::kCenterCrop: return apply_crop(spec, x);
    case PreprocessorSpec::Kind::kResize: return apply_resize(spec, x);
    case PreprocessorSpec::Kind::kQuantize: return apply_quantize(spec, x, true);
    case PreprocessorSpec::Kind::kJpeg: return jpeg_run(x, spec.quality, JpegMode::kSmooth, nullptr);
    case PreprocessorSpec::Kind::kPipeline: {
      Image cur = x;
      for (const auto& st : spec.stages) cur = apply_smooth(st, cur);
      return cur;
    }
  }
  throw std::logic_error("apply_smooth: unknown spec kind");
}

Image jvp(const PreprocessorSpec& spec, const Image& x, const Image& v) {
  require_same_shape(x, v, "jvp");
  switch (spec.kind) {
    case PreprocessorSpec::Kind::kCenterCrop: return apply_crop(spec, v);
    case PreprocessorSpec::Kind::kResize: return apply_resize(spec, v);
    case PreprocessorSpec::Kind::kQuantize: {
      double levels = static_cast<double>((1 << spec.bits) - 1);
      Image out = v;
      for (size_t i = 0; i < out.data().size(); ++i)
        out.data()[i] *= round_smooth_deriv(x.data()[i] * levels);
      return out;
    }
    case PreprocessorSpec::Kind::kJpeg: return jpeg_run(x, spec.quality, JpegMode::kJvp, &v);
    case PreprocessorSpec::Kind::kPipeline: {
      Image cur_x = x, cur_v = v;
      for (const auto& st : spec.stages) {
        Image next_v = jvp(st, cur_x, cur_v);
        cur_x = apply_smooth(st, cur_x);
        cur_v = std::move(next_v);
      }
      return cur_v;
    }
  }
  throw std::logic_error("jvp: unknown spec kind");
}

Image vjp(const PreprocessorSpec& spec, const Image& x, const Image& w) {
  switch (spec.kind) {
    case PreprocessorSpec::Kind::kCenterCrop: {
      require_square(x, "center_crop");
      int s = x.height(), t = spec.target;
      if (s < t) throw std::invalid_argument("center_crop: input smaller than target");
      if (w.height() != t || w.width() != t || w.channels() != x.channels())
        throw std::invalid_argument("vjp: cotangent shape mismatch");
      int off = (s - t) / 2;
      Image out(s, s, x.channels(), 0.0);
      for (int c = 0; c < x.channels(); ++c)
        for (int y = 0; y < t; ++y)
          for (int xx = 0; xx < t; ++xx) out.at(c, y + off, xx + off) = w.at(c, y, xx);
      return out;
    }
    case PreprocessorSpec::Kind::kResize: {
      require_square(x, "resize");
      int s = x.height(), t = spec.target;
      if (w.height() != t || w.width() != t || w.channels() != x.channels())
        throw std::invalid_argument("vjp: cotangent shape mismatch");
      auto taps = resize_taps(s, t, spec.interp);
      Image out(s, s, x.channels(), 0.0);
      for (int c = 0; c < x.channels(); ++c)
        for (int oy = 0; oy < t; ++oy)
          for (int ox = 0; ox < t; ++ox) {
            double ww = w.at(c, oy, ox);
            for (const auto& [iy, wy] : taps[oy])
              for (const auto& [ix, wx] : taps[ox]) out.at(c, iy, ix) += wy * wx * ww;
          }
      return out;
    }
    case PreprocessorSpec::Kind::kQuantize: {
      require_same_shape(x, w, "vjp");
      double levels = static_cast<double>((1 << spec.bits) - 1);
      Image out = w;
      for (size_t i = 0; i < out.data().size(); ++i)
        out.data()[i] *= round_smooth_deriv(x.data()[i] * levels);
      return out;
    }
    case PreprocessorSpec::Kind::kJpeg: {
      require_same_shape(x, w, "vjp");
      return jpeg_run(x, spec.quality, JpegMode::kVjp, &w);
    }
    case PreprocessorSpec::Kind::kPipeline: {
      auto stages = spec.stages;
      std::vector<Image> xs;
      xs.reserve(stages.size());
      Image cur = x;
      for (const auto& st : stages) {
        xs.push_back(cur);
        cur = apply_smooth(st, cur);
      }
      Image cw = w;
      for (int i = static_cast<int>(stages.size()) - 1; i >= 0; --i) cw = vjp(stages[i], xs[i], cw);
      return cw;
    }
  }
  throw std::logic_error("vjp: unknown spec kind");
}

}  // namespace prepatk
