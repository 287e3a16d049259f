#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "d2a2/tensor.hpp"

namespace d2a2 {

/// Resize factor num/den. Supported: powers of two from 1/16 to 16, excluding 1.
struct Ratio {
  int num = 1;
  int den = 1;

  static Ratio up(int factor) { return {factor, 1}; }
  static Ratio down(int factor) { return {1, factor}; }

  double value() const { return static_cast<double>(num) / den; }
  std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }
  /// Throws std::invalid_argument for unsupported factors.
  void validate() const;
  /// Output length along one axis; throws ShapeError when `in` is not divisible by den.
  std::size_t apply(std::size_t in) const;
};

/// Cubic convolution kernel (Keys) with a = -0.5.
double cubic_kernel(double x);

/// Sparse resampling matrix for one axis, stored row-wise (one row per output sample).
struct AxisWeights {
  std::size_t in_size = 0;
  std::size_t out_size = 0;
  std::vector<std::size_t> row_begin;  // out_size + 1 entries
  std::vector<std::size_t> index;
  std::vector<double> weight;
};

/// Cubic weights with half-pixel centres and edge replication. When shrinking,
/// the kernel is stretched by the reduction factor (antialiasing prefilter).
AxisWeights cubic_axis_weights(std::size_t in_size, Ratio scale);
/// Linear weights with half-pixel centres, clamped at the borders.
AxisWeights linear_axis_weights(std::size_t in_size, std::size_t out_size);

/// out[n,c] = R * in[n,c] * C^T for row weights R and column weights C.
template <typename T>
Tensor<T> apply_resample(const Tensor<T>& input, const AxisWeights& rows, const AxisWeights& cols);
/// Adjoint of apply_resample: accumulates R^T * g * C into grad_input.
template <typename T>
void apply_resample_adjoint(const Tensor<T>& grad_out, const AxisWeights& rows, const AxisWeights& cols,
                            Tensor<T>& grad_input);

/// Non-differentiable bicubic resize of a plain tensor.
template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& input, Ratio scale);

}  // namespace d2a2
