#include "d2a2/resample.hpp"

#include <cmath>
#include <stdexcept>

namespace d2a2 {

void Ratio::validate() const {
  const bool up = den == 1 && (num == 2 || num == 4 || num == 8 || num == 16);
  const bool down = num == 1 && (den == 2 || den == 4 || den == 8 || den == 16);
  if (!up && !down) throw std::invalid_argument("unsupported resize factor " + str());
}

std::size_t Ratio::apply(std::size_t in) const {
  validate();
  if (in % static_cast<std::size_t>(den) != 0) {
    throw ShapeError("extent " + std::to_string(in) + " is not divisible by " + std::to_string(den) +
                     " for resize factor " + str());
  }
  return in / static_cast<std::size_t>(den) * static_cast<std::size_t>(num);
}

double cubic_kernel(double x) {
  constexpr double a = -0.5;
  const double t = std::abs(x);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

namespace {

void push_tap(AxisWeights& w, std::size_t row_start, std::size_t idx, double weight) {
  // Clamped taps arrive in non-decreasing index order; merge repeats.
  if (w.index.size() > row_start && w.index.back() == idx) {
    w.weight.back() += weight;
  } else {
    w.index.push_back(idx);
    w.weight.push_back(weight);
  }
}

void normalize_row(AxisWeights& w, std::size_t row_start) {
  double sum = 0.0;
  for (std::size_t k = row_start; k < w.weight.size(); ++k) sum += w.weight[k];
  for (std::size_t k = row_start; k < w.weight.size(); ++k) w.weight[k] /= sum;
}

}  // namespace

AxisWeights cubic_axis_weights(std::size_t in_size, Ratio scale) {
  AxisWeights w;
  w.in_size = in_size;
  w.out_size = scale.apply(in_size);
  const double s = scale.value();
  const double stretch = s < 1.0 ? s : 1.0;
  const double support = 2.0 / stretch;
  const auto last = static_cast<long long>(in_size) - 1;
  w.row_begin.push_back(0);
  for (std::size_t i = 0; i < w.out_size; ++i) {
    const double centre = (static_cast<double>(i) + 0.5) / s - 0.5;
    const auto lo = static_cast<long long>(std::ceil(centre - support));
    const auto hi = static_cast<long long>(std::floor(centre + support));
    const std::size_t row_start = w.index.size();
    for (long long j = lo; j <= hi; ++j) {
      const double k = cubic_kernel((centre - static_cast<double>(j)) * stretch);
      if (k == 0.0) continue;
      const long long clamped = j < 0 ? 0 : (j > last ? last : j);
      push_tap(w, row_start, static_cast<std::size_t>(clamped), k);
    }
    normalize_row(w, row_start);
    w.row_begin.push_back(w.index.size());
  }
  return w;
}

AxisWeights linear_axis_weights(std::size_t in_size, std::size_t out_size) {
  if (in_size == 0 || out_size == 0) throw ShapeError("linear resize of an empty axis");
  AxisWeights w;
  w.in_size = in_size;
  w.out_size = out_size;
  const double s = static_cast<double>(out_size) / static_cast<double>(in_size);
  const std::size_t last = in_size - 1;
  w.row_begin.push_back(0);
  for (std::size_t i = 0; i < out_size; ++i) {
    double centre = (static_cast<double>(i) + 0.5) / s - 0.5;
    if (centre < 0.0) centre = 0.0;
    const auto base = static_cast<std::size_t>(std::floor(centre));
    const double frac = centre - static_cast<double>(base);
    const std::size_t row_start = w.index.size();
    push_tap(w, row_start, std::min(base, last), 1.0 - frac);
    if (frac > 0.0) push_tap(w, row_start, std::min(base + 1, last), frac);
    w.row_begin.push_back(w.index.size());
  }
  return w;
}

template <typename T>
Tensor<T> apply_resample(const Tensor<T>& input, const AxisWeights& rows, const AxisWeights& cols) {
  const Shape& s = input.shape();
  if (s.h != rows.in_size || s.w != cols.in_size) {
    throw ShapeError("resample weights expect " + std::to_string(rows.in_size) + "x" +
                     std::to_string(cols.in_size) + " input, got " + s.str());
  }
  const std::size_t oh = rows.out_size;
  const std::size_t ow = cols.out_size;
  Tensor<T> out(Shape{s.n, s.c, oh, ow});
  std::vector<T> tmp(s.h * ow);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const T* src = input.plane(n, c);
      for (std::size_t y = 0; y < s.h; ++y) {
        for (std::size_t j = 0; j < ow; ++j) {
          T acc = T(0);
          for (std::size_t k = cols.row_begin[j]; k < cols.row_begin[j + 1]; ++k) {
            acc += static_cast<T>(cols.weight[k]) * src[y * s.w + cols.index[k]];
          }
          tmp[y * ow + j] = acc;
        }
      }
      T* dst = out.plane(n, c);
      for (std::size_t i = 0; i < oh; ++i) {
        T* row = dst + i * ow;
        for (std::size_t k = rows.row_begin[i]; k < rows.row_begin[i + 1]; ++k) {
          const T wk = static_cast<T>(rows.weight[k]);
          const T* trow = tmp.data() + rows.index[k] * ow;
          for (std::size_t j = 0; j < ow; ++j) row[j] += wk * trow[j];
        }
      }
    }
  }
  return out;
}

template <typename T>
void apply_resample_adjoint(const Tensor<T>& grad_out, const AxisWeights& rows, const AxisWeights& cols,
                            Tensor<T>& grad_input) {
  const Shape& g = grad_out.shape();
  const Shape& s = grad_input.shape();
  const std::size_t ow = cols.out_size;
  std::vector<T> tmp(s.h * ow);
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t c = 0; c < g.c; ++c) {
      std::fill(tmp.begin(), tmp.end(), T(0));
      const T* src = grad_out.plane(n, c);
      for (std::size_t i = 0; i < rows.out_size; ++i) {
        const T* grow = src + i * ow;
        for (std::size_t k = rows.row_begin[i]; k < rows.row_begin[i + 1]; ++k) {
          const T wk = static_cast<T>(rows.weight[k]);
          T* trow = tmp.data() + rows.index[k] * ow;
          for (std::size_t j = 0; j < ow; ++j) trow[j] += wk * grow[j];
        }
      }
      T* dst = grad_input.plane(n, c);
      for (std::size_t y = 0; y < s.h; ++y) {
        for (std::size_t j = 0; j < ow; ++j) {
          const T gv = tmp[y * ow + j];
          for (std::size_t k = cols.row_begin[j]; k < cols.row_begin[j + 1]; ++k) {
            dst[y * s.w + cols.index[k]] += static_cast<T>(cols.weight[k]) * gv;
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& input, Ratio scale) {
  const auto rows = cubic_axis_weights(input.shape().h, scale);
  const auto cols = cubic_axis_weights(input.shape().w, scale);
  return apply_resample(input, rows, cols);
}

template Tensor<float> apply_resample(const Tensor<float>&, const AxisWeights&, const AxisWeights&);
template Tensor<double> apply_resample(const Tensor<double>&, const AxisWeights&, const AxisWeights&);
template void apply_resample_adjoint(const Tensor<float>&, const AxisWeights&, const AxisWeights&,
                                     Tensor<float>&);
template void apply_resample_adjoint(const Tensor<double>&, const AxisWeights&, const AxisWeights&,
                                     Tensor<double>&);
template Tensor<float> bicubic_resize(const Tensor<float>&, Ratio);
template Tensor<double> bicubic_resize(const Tensor<double>&, Ratio);

}  // namespace d2a2
