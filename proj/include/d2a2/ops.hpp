#pragma once

#include <utility>

#include "d2a2/autodiff.hpp"
#include "d2a2/resample.hpp"

namespace d2a2 {

// Elementwise arithmetic. Operands broadcast per dimension when one side has
// extent 1 (per-channel (N,C,1,1) or per-pixel (N,1,H,W) operands).
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> div(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T factor);

template <typename T> Var<T> sigmoid(const Var<T>& x);
template <typename T> Var<T> leaky_relu(const Var<T>& x, T slope);
template <typename T> Var<T> tanh(const Var<T>& x);

template <typename T> Var<T> concat_channels(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> slice_channels(const Var<T>& x, std::size_t begin, std::size_t count);

/// Cross-correlation with zero padding. weight (out_c, in_c, kh, kw), bias (1, out_c, 1, 1).
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, int stride, int padding);

/// Affine map over rows: input (N, F, 1, 1) (any (c,h,w) with c*h*w = F), weight (out, F, 1, 1),
/// bias (1, out, 1, 1). Output (N, out, 1, 1).
template <typename T> Var<T> linear(const Var<T>& input, const Var<T>& weight, const Var<T>& bias);

/// Axes to reduce over, keeping extent 1.
struct ReduceAxes {
  bool n = false;
  bool c = false;
  bool h = false;
  bool w = false;

  static constexpr ReduceAxes spatial() { return {false, false, true, true}; }
  static constexpr ReduceAxes batch_spatial() { return {true, false, true, true}; }
  static constexpr ReduceAxes channels() { return {false, true, false, false}; }
};

template <typename T> Var<T> reduce_mean(const Var<T>& x, ReduceAxes axes);
/// sqrt(population variance + epsilon) over the reduced axes.
template <typename T> Var<T> reduce_std(const Var<T>& x, ReduceAxes axes, T epsilon);
template <typename T> Var<T> reduce_max(const Var<T>& x, ReduceAxes axes);

/// Per-(batch, channel) spatial mean and sqrt(spatial variance + epsilon).
template <typename T>
std::pair<Var<T>, Var<T>> channel_stats(const Var<T>& x, T epsilon);

/// Samples input at fractional (y, x) positions. coords is (N, 2, Ho, Wo) with channel 0 = y,
/// channel 1 = x; output is (N, C, Ho, Wo). Neighbours outside the image read as zero.
/// Differentiable in both the input values and the coordinates.
template <typename T> Var<T> bilinear_sample(const Var<T>& input, const Var<T>& coords);

/// Applies fixed separable per-axis weights; gradient flows to the input only.
template <typename T>
Var<T> resample(const Var<T>& input, const AxisWeights& rows, const AxisWeights& cols);

template <typename T> Var<T> bicubic_resize(const Var<T>& input, Ratio scale);
template <typename T> Var<T> bilinear_resize(const Var<T>& input, std::size_t out_h, std::size_t out_w);

/// Modulated deformable 3x3 convolution, stride 1, padding 1.
/// offsets (N, 18, H, W) as interleaved (dy, dx) per tap in row-major tap order;
/// modulation (N, 9, H, W). weight (out_c, in_c, 3, 3), bias (1, out_c, 1, 1).
template <typename T>
Var<T> deform_conv2d(const Var<T>& input, const Var<T>& offsets, const Var<T>& modulation,
                     const Var<T>& weight, const Var<T>& bias);

/// Mean absolute difference, as a (1,1,1,1) scalar. Gradient sign(pred - target) / N.
template <typename T> Var<T> l1_loss(const Var<T>& pred, const Var<T>& target);

/// Sum of elementwise product with a fixed tensor, as a scalar.
template <typename T> Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& weights);

}  // namespace d2a2
