#pragma once

#include <string>

#include "d2a2/layers.hpp"

namespace d2a2 {

/// Fusion of depth features with the (optionally gated) RGB guide.
enum class AttentionMode {
  Pixel,    // full (C, H, W) sigmoid map
  Channel,  // squeeze-excite style per-channel gate
  Spatial,  // per-pixel gate from channel mean/max
  None,     // concatenation + convolution
};

std::string to_string(AttentionMode mode);
AttentionMode parse_attention_mode(const std::string& text);

/// Feature and gate branches, both 3x3 convs mapping 2C -> C.
template <typename T>
struct GatedConvParams {
  Conv<T> feature_conv;
  Conv<T> gate_conv;
  T slope = T(0.2);
};

template <typename T>
struct PixelAttentionParams {
  Conv<T> reduce_conv;  // 1x1, 2C -> C
};

template <typename T>
struct ChannelAttentionParams {
  Mlp<T> bottleneck;  // 2C -> hidden -> C on pooled statistics
};

template <typename T>
struct SpatialAttentionParams {
  Conv<T> conv;  // 7x7, 2 -> 1
};

template <typename T>
struct GatedOutput {
  Var<T> masked;
  Var<T> gate;
};

template <typename T>
struct AttentionOutput {
  Var<T> fused;
  Var<T> map;
};

/// masked = leaky_relu(feature_conv(x)) * sigmoid(gate_conv(x)), x = [f_rgb_aligned | f_d].
template <typename T>
GatedOutput<T> gated_conv(const Var<T>& f_rgb_aligned, const Var<T>& f_d, const GatedConvParams<T>& params);

/// f_d * sigmoid(reduce_conv([f_d | guide])).
template <typename T>
AttentionOutput<T> pixel_attention(const Var<T>& f_d, const Var<T>& guide, const PixelAttentionParams<T>& params);
/// f_d * sigmoid(MLP(mean_hw([f_d | guide]))), map shape (N, C, 1, 1).
template <typename T>
AttentionOutput<T> channel_attention(const Var<T>& f_d, const Var<T>& guide, const ChannelAttentionParams<T>& params);
/// f_d * sigmoid(conv7x7([mean_c | max_c]([f_d | guide]))), map shape (N, 1, H, W).
template <typename T>
AttentionOutput<T> spatial_attention(const Var<T>& f_d, const Var<T>& guide, const SpatialAttentionParams<T>& params);

template <typename T>
struct MfaTrace {
  Var<T> gate;
  Var<T> masked;
  Var<T> attention;
};

template <typename T>
struct MfaBlock {
  bool gc_enabled = true;
  AttentionMode attention = AttentionMode::Pixel;
  bool residual = true;
  GatedConvParams<T> gc;
  PixelAttentionParams<T> pa;
  ChannelAttentionParams<T> ca;
  SpatialAttentionParams<T> sa;
  Conv<T> fusion;  // C -> C, or 2C -> C when attention is None

  static MfaBlock make(ParameterSet<T>& set, const std::string& name, std::size_t channels, bool gc_enabled,
                       AttentionMode attention, bool residual, T slope);
};

/// Gated conv, attention, then f_d + fusion(attended) (or fusion alone without the residual).
template <typename T>
Var<T> mfa_forward(const Var<T>& f_rgb_aligned, const Var<T>& f_d, const MfaBlock<T>& block,
                   MfaTrace<T>* trace = nullptr);

}  // namespace d2a2
