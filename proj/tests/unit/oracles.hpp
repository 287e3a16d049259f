#pragma once

// Reference implementations written directly from the defining formulas, without
// any of the library's kernels, for comparison in tests.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "d2a2/tensor.hpp"

namespace oracle {

using d2a2::Shape;
using d2a2::Tensor;

inline Tensor<double> random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(s);
  for (auto& v : t.vec()) v = u(rng);
  return t;
}

inline double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Keys cubic with a = -0.5, piecewise as in the textbook definition.
inline double keys(double x) {
  const double a = -0.5;
  const double t = std::fabs(x);
  if (t < 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
  if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
  return 0.0;
}

/// Direct double sum over every input pixel: out(y,x) = sum_ij ky(i) kx(j) in(clamp i, clamp j) / sum ky kx.
/// ratio = out/in; a shrinking ratio widens the kernel by 1/ratio.
inline Tensor<double> bicubic(const Tensor<double>& in, double ratio) {
  const Shape s = in.shape();
  const auto oh = static_cast<std::size_t>(std::llround(s.h * ratio));
  const auto ow = static_cast<std::size_t>(std::llround(s.w * ratio));
  const double stretch = ratio < 1.0 ? ratio : 1.0;
  const long reach = static_cast<long>(std::ceil(2.0 / stretch)) + 2;
  Tensor<double> out(Shape{s.n, s.c, oh, ow});
  auto clampi = [](long v, long hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          const double cy = (y + 0.5) / ratio - 0.5;
          const double cx = (x + 0.5) / ratio - 0.5;
          double acc = 0.0, wsum = 0.0;
          for (long i = static_cast<long>(std::floor(cy)) - reach; i <= static_cast<long>(std::floor(cy)) + reach; ++i) {
            const double wy = keys((cy - i) * stretch);
            if (wy == 0.0) continue;
            for (long j = static_cast<long>(std::floor(cx)) - reach; j <= static_cast<long>(std::floor(cx)) + reach;
                 ++j) {
              const double wx = keys((cx - j) * stretch);
              if (wx == 0.0) continue;
              acc += wy * wx *
                     in.at(n, c, static_cast<std::size_t>(clampi(i, static_cast<long>(s.h) - 1)),
                           static_cast<std::size_t>(clampi(j, static_cast<long>(s.w) - 1)));
              wsum += wy * wx;
            }
          }
          out.at(n, c, y, x) = acc / wsum;
        }
  return out;
}

/// Zero-padded cross-correlation by nested loops.
inline Tensor<double> conv(const Tensor<double>& in, const Tensor<double>& w, const Tensor<double>& b, int stride,
                           int pad) {
  const Shape s = in.shape(), k = w.shape();
  const std::size_t oh = (s.h + 2 * pad - k.h) / stride + 1;
  const std::size_t ow = (s.w + 2 * pad - k.w) / stride + 1;
  Tensor<double> out(Shape{s.n, k.n, oh, ow});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t o = 0; o < k.n; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          double acc = b.empty() ? 0.0 : b[o];
          for (std::size_t c = 0; c < k.c; ++c)
            for (std::size_t ky = 0; ky < k.h; ++ky)
              for (std::size_t kx = 0; kx < k.w; ++kx) {
                const long iy = static_cast<long>(y * stride + ky) - pad;
                const long ix = static_cast<long>(x * stride + kx) - pad;
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(s.h) || ix >= static_cast<long>(s.w)) continue;
                acc += w.at(o, c, ky, kx) * in.at(n, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
              }
          out.at(n, o, y, x) = acc;
        }
  return out;
}

/// Bilinear read with zero outside the image, from the four-corner formula.
inline double bilinear(const Tensor<double>& in, std::size_t n, std::size_t c, double y, double x) {
  const double fy = std::floor(y), fx = std::floor(x);
  double v = 0.0;
  for (int dy = 0; dy <= 1; ++dy)
    for (int dx = 0; dx <= 1; ++dx) {
      const double py = fy + dy, px = fx + dx;
      const double wgt = (1.0 - std::fabs(y - py)) * (1.0 - std::fabs(x - px));
      if (py < 0 || px < 0 || py >= static_cast<double>(in.shape().h) || px >= static_cast<double>(in.shape().w)) {
        continue;
      }
      v += wgt * in.at(n, c, static_cast<std::size_t>(py), static_cast<std::size_t>(px));
    }
  return v;
}

/// Modulated deformable 3x3 convolution by direct summation.
inline Tensor<double> deform(const Tensor<double>& in, const Tensor<double>& offsets, const Tensor<double>& mod,
                             const Tensor<double>& w, const Tensor<double>& b) {
  const Shape s = in.shape();
  const std::size_t outc = w.shape().n;
  Tensor<double> out(Shape{s.n, outc, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t o = 0; o < outc; ++o)
      for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x) {
          double acc = b[o];
          for (std::size_t k = 0; k < 9; ++k) {
            const double py = static_cast<double>(y) + static_cast<double>(k / 3) - 1.0 + offsets.at(n, 2 * k, y, x);
            const double px = static_cast<double>(x) + static_cast<double>(k % 3) - 1.0 + offsets.at(n, 2 * k + 1, y, x);
            for (std::size_t c = 0; c < s.c; ++c) {
              acc += w.at(o, c, k / 3, k % 3) * bilinear(in, n, c, py, px) * mod.at(n, k, y, x);
            }
          }
          out.at(n, o, y, x) = acc;
        }
  return out;
}

/// RMSE with a different accumulation order: mean first (reverse order, long double), then the
/// squared deviations accumulated around it.
inline double rmse_two_pass(const std::vector<double>& pred, const std::vector<double>& target) {
  const std::size_t n = pred.size();
  long double mean = 0.0L;
  for (std::size_t i = n; i-- > 0;) {
    const long double d = static_cast<long double>(pred[i]) - target[i];
    mean += d * d;
  }
  mean /= static_cast<long double>(n);
  long double corr = 0.0L;
  for (std::size_t i = n; i-- > 0;) {
    const long double d = static_cast<long double>(pred[i]) - target[i];
    corr += d * d - mean;
  }
  return static_cast<double>(std::sqrt(mean + corr / static_cast<long double>(n)));
}

/// Adam as written in the optimizer's defining algorithm.
struct ScriptedAdam {
  double lr, b1, b2, eps;
  std::vector<double> m, v;
  int t = 0;

  void step(std::vector<double>& x, const std::vector<double>& g) {
    if (m.empty()) {
      m.assign(x.size(), 0.0);
      v.assign(x.size(), 0.0);
    }
    ++t;
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(b1, t));
      const double vh = v[i] / (1 - std::pow(b2, t));
      x[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
};

}  // namespace oracle
