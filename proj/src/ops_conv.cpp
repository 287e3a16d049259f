#include <Eigen/Core>
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

struct ConvGeometry {
  std::size_t in_c, in_h, in_w;
  std::size_t out_c, out_h, out_w;
  std::size_t kh, kw;
  int stride, pad;

  std::size_t patch() const { return in_c * kh * kw; }
  std::size_t out_plane() const { return out_h * out_w; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

// cols is (in_c*kh*kw, out_h*out_w), row-major.
template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* cols) {
  const auto ih = static_cast<long>(g.in_h);
  const auto iw = static_cast<long>(g.in_w);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.in_c; ++c) {
    const T* plane = image + c * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx, ++row) {
        T* dst = cols + row * g.out_plane();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long y = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ky);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long x = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kx);
            dst[oy * g.out_w + ox] = (y >= 0 && y < ih && x >= 0 && x < iw) ? plane[y * iw + x] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* image) {
  const auto ih = static_cast<long>(g.in_h);
  const auto iw = static_cast<long>(g.in_w);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.in_c; ++c) {
    T* plane = image + c * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx, ++row) {
        const T* src = cols + row * g.out_plane();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long y = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ky);
          if (y < 0 || y >= ih) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long x = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kx);
            if (x >= 0 && x < iw) plane[y * iw + x] += src[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, int stride, int padding) {
  const Shape& si = input.shape();
  const Shape& sw = weight.shape();
  if (stride < 1 || padding < 0) {
    throw ShapeError("conv2d: invalid stride " + std::to_string(stride) + " / padding " + std::to_string(padding));
  }
  if (si.c != sw.c) {
    throw ShapeError("conv2d: input has " + std::to_string(si.c) + " channels but weight " + sw.str() +
                     " expects " + std::to_string(sw.c));
  }
  if (bias.value().size() != sw.n) {
    throw ShapeError("conv2d: bias " + bias.shape().str() + " does not match " + std::to_string(sw.n) +
                     " output channels");
  }
  if (si.h + 2 * static_cast<std::size_t>(padding) < sw.h || si.w + 2 * static_cast<std::size_t>(padding) < sw.w) {
    throw ShapeError("conv2d: kernel " + sw.str() + " larger than padded input " + si.str());
  }
  ConvGeometry g{si.c,
                 si.h,
                 si.w,
                 sw.n,
                 (si.h + 2 * padding - sw.h) / stride + 1,
                 (si.w + 2 * padding - sw.w) / stride + 1,
                 sw.h,
                 sw.w,
                 stride,
                 padding};
  Tensor<T> out(Shape{si.n, g.out_c, g.out_h, g.out_w});
  {
    ConstMapMatrix<T> w(weight.value().data(), g.out_c, g.patch());
    const T* b = bias.value().data();
    parallel_for(si.n, [&](std::size_t n) {
      MapMatrix<T> y(out.plane(n, 0), g.out_c, g.out_plane());
      if (g.pointwise()) {
        y.noalias() = w * ConstMapMatrix<T>(input.value().plane(n, 0), g.in_c, g.out_plane());
      } else {
        Matrix<T> cols(g.patch(), g.out_plane());
        im2col(input.value().plane(n, 0), g, cols.data());
        y.noalias() = w * cols;
      }
      for (std::size_t o = 0; o < g.out_c; ++o) y.row(o).array() += b[o];
    });
  }
  auto xn = input.node();
  auto wn = weight.node();
  auto bn = bias.node();
  return input.tape()->record(std::move(out), {&input, &weight, &bias}, [xn, wn, bn, g](const Tensor<T>& grad) {
    const std::size_t batches = grad.shape().n;
    ConstMapMatrix<T> w(wn->value.data(), g.out_c, g.patch());
    // Per-item partial weight gradients, reduced in item order afterwards.
    std::vector<Matrix<T>> partial_w(wn->requires_grad ? batches : 0);
    T* gx = xn->requires_grad ? xn->grad_buffer().data() : nullptr;
    parallel_for(batches, [&](std::size_t n) {
      ConstMapMatrix<T> gy(grad.plane(n, 0), g.out_c, g.out_plane());
      if (wn->requires_grad) {
        if (g.pointwise()) {
          partial_w[n] = gy * ConstMapMatrix<T>(xn->value.plane(n, 0), g.in_c, g.out_plane()).transpose();
        } else {
          Matrix<T> cols(g.patch(), g.out_plane());
          im2col(xn->value.plane(n, 0), g, cols.data());
          partial_w[n] = gy * cols.transpose();
        }
      }
      if (gx != nullptr) {
        T* gx_n = gx + n * g.in_c * g.in_h * g.in_w;
        if (g.pointwise()) {
          MapMatrix<T>(gx_n, g.in_c, g.out_plane()) += w.transpose() * gy;
        } else {
          Matrix<T> gcols = w.transpose() * gy;
          col2im_add(gcols.data(), g, gx_n);
        }
      }
    });
    if (wn->requires_grad) {
      MapMatrix<T> gw(wn->grad_buffer().data(), g.out_c, g.patch());
      for (const auto& p : partial_w) gw += p;
    }
    if (bn->requires_grad) {
      auto& gb = bn->grad_buffer();
      for (std::size_t n = 0; n < batches; ++n) {
        for (std::size_t o = 0; o < g.out_c; ++o) {
          const T* row = grad.plane(n, o);
          T acc = T(0);
          for (std::size_t i = 0; i < g.out_plane(); ++i) acc += row[i];
          gb[o] += acc;
        }
      }
    }
  });
}

template Var<float> conv2d(const Var<float>&, const Var<float>&, const Var<float>&, int, int);
template Var<double> conv2d(const Var<double>&, const Var<double>&, const Var<double>&, int, int);

}  // namespace d2a2
