#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <string>

#include "d2a2/ops.hpp"
#include "d2a2/parallel.hpp"

namespace d2a2 {

namespace {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMatrix = Eigen::Map<Matrix<T>>;
template <typename T>
using ConstMapMatrix = Eigen::Map<const Matrix<T>>;

// Four-neighbour footprint of one fractional position. Corners outside the
// image are flagged invalid and read as zero.
template <typename T>
struct Footprint {
  long y0 = 0;
  long x0 = 0;
  T ly = 0;
  T lx = 0;
  bool valid[4] = {false, false, false, false};  // (y0,x0) (y0,x1) (y1,x0) (y1,x1)
  long offset[4] = {0, 0, 0, 0};

  Footprint() = default;
  Footprint(T y, T x, long h, long w) {
    if (!(y > T(-1) && y < static_cast<T>(h) && x > T(-1) && x < static_cast<T>(w))) return;
    const T fy = std::floor(y);
    const T fx = std::floor(x);
    y0 = static_cast<long>(fy);
    x0 = static_cast<long>(fx);
    ly = y - fy;
    lx = x - fx;
    const long ys[2] = {y0, y0 + 1};
    const long xs[2] = {x0, x0 + 1};
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        const int k = a * 2 + b;
        valid[k] = ys[a] >= 0 && ys[a] < h && xs[b] >= 0 && xs[b] < w;
        offset[k] = valid[k] ? ys[a] * w + xs[b] : 0;
      }
    }
  }

  T corner(const T* plane, int k) const { return valid[k] ? plane[offset[k]] : T(0); }

  T value(const T* plane) const {
    const T hy = T(1) - ly;
    const T hx = T(1) - lx;
    return hy * hx * corner(plane, 0) + hy * lx * corner(plane, 1) + ly * hx * corner(plane, 2) +
           ly * lx * corner(plane, 3);
  }

  // d(value)/dy and d(value)/dx.
  void coord_grad(const T* plane, T& dy, T& dx) const {
    const T v00 = corner(plane, 0), v01 = corner(plane, 1), v10 = corner(plane, 2), v11 = corner(plane, 3);
    const T hy = T(1) - ly;
    const T hx = T(1) - lx;
    dy = hx * (v10 - v00) + lx * (v11 - v01);
    dx = hy * (v01 - v00) + ly * (v11 - v10);
  }

  void scatter(T* plane, T g) const {
    const T hy = T(1) - ly;
    const T hx = T(1) - lx;
    const T w[4] = {hy * hx, hy * lx, ly * hx, ly * lx};
    for (int k = 0; k < 4; ++k) {
      if (valid[k]) plane[offset[k]] += g * w[k];
    }
  }
};

template <typename T>
void require_finite(const Tensor<T>& t, const char* what) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (std::isnan(t[i])) throw std::domain_error(std::string(what) + " contains NaN at element " + std::to_string(i));
  }
}

constexpr std::size_t kTaps = 9;

// Sampling footprints for every (tap, output pixel) of one batch item.
template <typename T>
std::vector<Footprint<T>> deform_footprints(const T* offsets, std::size_t h, std::size_t w) {
  const std::size_t plane = h * w;
  std::vector<Footprint<T>> fp(kTaps * plane);
  for (std::size_t k = 0; k < kTaps; ++k) {
    const long ky = static_cast<long>(k / 3) - 1;
    const long kx = static_cast<long>(k % 3) - 1;
    const T* dy = offsets + (2 * k) * plane;
    const T* dx = offsets + (2 * k + 1) * plane;
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        const std::size_t p = i * w + j;
        fp[k * plane + p] = Footprint<T>(static_cast<T>(static_cast<long>(i) + ky) + dy[p],
                                         static_cast<T>(static_cast<long>(j) + kx) + dx[p], static_cast<long>(h),
                                         static_cast<long>(w));
      }
    }
  }
  return fp;
}

// cols (C*9, H*W): modulated samples, row c*9 + k.
template <typename T>
void deform_im2col(const T* image, const T* mask, const std::vector<Footprint<T>>& fp, std::size_t channels,
                   std::size_t plane, T* cols) {
  for (std::size_t c = 0; c < channels; ++c) {
    const T* src = image + c * plane;
    for (std::size_t k = 0; k < kTaps; ++k) {
      T* dst = cols + (c * kTaps + k) * plane;
      const Footprint<T>* f = fp.data() + k * plane;
      const T* m = mask + k * plane;
      for (std::size_t p = 0; p < plane; ++p) dst[p] = f[p].value(src) * m[p];
    }
  }
}

}  // namespace

template <typename T>
Var<T> bilinear_sample(const Var<T>& input, const Var<T>& coords) {
  const Shape& si = input.shape();
  const Shape& sc = coords.shape();
  if (sc.n != si.n || sc.c != 2) {
    throw ShapeError("bilinear_sample: coords " + sc.str() + " must be (" + std::to_string(si.n) + ",2,H,W)");
  }
  require_finite(coords.value(), "bilinear_sample coords");
  const std::size_t out_plane = sc.plane();
  Tensor<T> out(Shape{si.n, si.c, sc.h, sc.w});
  for (std::size_t n = 0; n < si.n; ++n) {
    const T* cy = coords.value().plane(n, 0);
    const T* cx = coords.value().plane(n, 1);
    for (std::size_t p = 0; p < out_plane; ++p) {
      const Footprint<T> f(cy[p], cx[p], static_cast<long>(si.h), static_cast<long>(si.w));
      for (std::size_t c = 0; c < si.c; ++c) out.plane(n, c)[p] = f.value(input.value().plane(n, c));
    }
  }
  auto xn = input.node();
  auto cn = coords.node();
  return input.tape()->record(std::move(out), {&input, &coords}, [xn, cn, out_plane](const Tensor<T>& g) {
    const Shape& si = xn->value.shape();
    for (std::size_t n = 0; n < si.n; ++n) {
      const T* cy = cn->value.plane(n, 0);
      const T* cx = cn->value.plane(n, 1);
      for (std::size_t p = 0; p < out_plane; ++p) {
        const Footprint<T> f(cy[p], cx[p], static_cast<long>(si.h), static_cast<long>(si.w));
        T acc_y = T(0);
        T acc_x = T(0);
        for (std::size_t c = 0; c < si.c; ++c) {
          const T go = g.plane(n, c)[p];
          if (xn->requires_grad) f.scatter(xn->grad_buffer().plane(n, c), go);
          if (cn->requires_grad) {
            T dy, dx;
            f.coord_grad(xn->value.plane(n, c), dy, dx);
            acc_y += go * dy;
            acc_x += go * dx;
          }
        }
        if (cn->requires_grad) {
          cn->grad_buffer().plane(n, 0)[p] += acc_y;
          cn->grad_buffer().plane(n, 1)[p] += acc_x;
        }
      }
    }
  });
}

template <typename T>
Var<T> deform_conv2d(const Var<T>& input, const Var<T>& offsets, const Var<T>& modulation, const Var<T>& weight,
                     const Var<T>& bias) {
  const Shape& si = input.shape();
  const Shape& sw = weight.shape();
  if (sw.h != 3 || sw.w != 3 || sw.c != si.c) {
    throw ShapeError("deform_conv2d: weight " + sw.str() + " must be (out," + std::to_string(si.c) + ",3,3)");
  }
  const Shape want_off{si.n, 2 * kTaps, si.h, si.w};
  const Shape want_mod{si.n, kTaps, si.h, si.w};
  if (!(offsets.shape() == want_off)) {
    throw ShapeError("deform_conv2d: offsets " + offsets.shape().str() + " expected " + want_off.str());
  }
  if (!(modulation.shape() == want_mod)) {
    throw ShapeError("deform_conv2d: modulation " + modulation.shape().str() + " expected " + want_mod.str() +
                     " (K must equal 9)");
  }
  if (bias.value().size() != sw.n) {
    throw ShapeError("deform_conv2d: bias " + bias.shape().str() + " does not match " + std::to_string(sw.n) +
                     " output channels");
  }
  require_finite(offsets.value(), "deform_conv2d offsets");

  const std::size_t channels = si.c;
  const std::size_t out_c = sw.n;
  const std::size_t plane = si.plane();
  const std::size_t patch = channels * kTaps;
  Tensor<T> out(Shape{si.n, out_c, si.h, si.w});
  {
    ConstMapMatrix<T> w(weight.value().data(), out_c, patch);
    const T* b = bias.value().data();
    parallel_for(si.n, [&](std::size_t n) {
      const auto fp = deform_footprints(offsets.value().plane(n, 0), si.h, si.w);
      Matrix<T> cols(patch, plane);
      deform_im2col(input.value().plane(n, 0), modulation.value().plane(n, 0), fp, channels, plane, cols.data());
      MapMatrix<T> y(out.plane(n, 0), out_c, plane);
      y.noalias() = w * cols;
      for (std::size_t o = 0; o < out_c; ++o) y.row(o).array() += b[o];
    });
  }

  auto xn = input.node();
  auto on = offsets.node();
  auto mn = modulation.node();
  auto wn = weight.node();
  auto bn = bias.node();
  return input.tape()->record(
      std::move(out), {&input, &offsets, &modulation, &weight, &bias},
      [xn, on, mn, wn, bn, channels, out_c, plane, patch](const Tensor<T>& grad) {
        const Shape& si = xn->value.shape();
        const std::size_t batches = si.n;
        ConstMapMatrix<T> w(wn->value.data(), out_c, patch);
        std::vector<Matrix<T>> partial_w(wn->requires_grad ? batches : 0);
        const bool need_cols = xn->requires_grad || on->requires_grad || mn->requires_grad;
        T* gx = xn->requires_grad ? xn->grad_buffer().data() : nullptr;
        T* goff = on->requires_grad ? on->grad_buffer().data() : nullptr;
        T* gmod = mn->requires_grad ? mn->grad_buffer().data() : nullptr;
        parallel_for(batches, [&](std::size_t n) {
          const auto fp = deform_footprints(on->value.plane(n, 0), si.h, si.w);
          ConstMapMatrix<T> gy(grad.plane(n, 0), out_c, plane);
          const T* image = xn->value.plane(n, 0);
          const T* mask = mn->value.plane(n, 0);
          if (wn->requires_grad) {
            Matrix<T> cols(patch, plane);
            deform_im2col(image, mask, fp, channels, plane, cols.data());
            partial_w[n] = gy * cols.transpose();
          }
          if (!need_cols) return;
          const Matrix<T> gcols = w.transpose() * gy;
          for (std::size_t k = 0; k < kTaps; ++k) {
            const Footprint<T>* f = fp.data() + k * plane;
            const T* m = mask + k * plane;
            for (std::size_t p = 0; p < plane; ++p) {
              T acc_m = T(0);
              T acc_y = T(0);
              T acc_x = T(0);
              for (std::size_t c = 0; c < channels; ++c) {
                const T g = gcols(c * kTaps + k, p);
                if (g == T(0)) continue;
                const T* src = image + c * plane;
                if (gmod != nullptr) acc_m += g * f[p].value(src);
                if (goff != nullptr) {
                  T dy, dx;
                  f[p].coord_grad(src, dy, dx);
                  acc_y += g * dy;
                  acc_x += g * dx;
                }
                if (gx != nullptr) f[p].scatter(gx + (n * channels + c) * plane, g * m[p]);
              }
              if (gmod != nullptr) gmod[(n * kTaps + k) * plane + p] += acc_m;
              if (goff != nullptr) {
                goff[(n * 2 * kTaps + 2 * k) * plane + p] += acc_y * m[p];
                goff[(n * 2 * kTaps + 2 * k + 1) * plane + p] += acc_x * m[p];
              }
            }
          }
        });
        if (wn->requires_grad) {
          MapMatrix<T> gw(wn->grad_buffer().data(), out_c, patch);
          for (const auto& p : partial_w) gw += p;
        }
        if (bn->requires_grad) {
          auto& gb = bn->grad_buffer();
          for (std::size_t n = 0; n < batches; ++n) {
            for (std::size_t o = 0; o < out_c; ++o) {
              const T* row = grad.plane(n, o);
              T acc = T(0);
              for (std::size_t i = 0; i < plane; ++i) acc += row[i];
              gb[o] += acc;
            }
          }
        }
      });
}

template Var<float> bilinear_sample(const Var<float>&, const Var<float>&);
template Var<double> bilinear_sample(const Var<double>&, const Var<double>&);
template Var<float> deform_conv2d(const Var<float>&, const Var<float>&, const Var<float>&, const Var<float>&,
                                  const Var<float>&);
template Var<double> deform_conv2d(const Var<double>&, const Var<double>&, const Var<double>&, const Var<double>&,
                                   const Var<double>&);

}  // namespace d2a2
