#include "d2a2/mfa.hpp"

#include <algorithm>
#include <stdexcept>

namespace d2a2 {

std::string to_string(AttentionMode mode) {
  switch (mode) {
    case AttentionMode::Pixel: return "pa";
    case AttentionMode::Channel: return "ca";
    case AttentionMode::Spatial: return "sa";
    case AttentionMode::None: return "none";
  }
  return "none";
}

AttentionMode parse_attention_mode(const std::string& text) {
  if (text == "pa") return AttentionMode::Pixel;
  if (text == "ca") return AttentionMode::Channel;
  if (text == "sa") return AttentionMode::Spatial;
  if (text == "none") return AttentionMode::None;
  throw std::invalid_argument("unknown attention_mode '" + text + "' (expected pa, ca, sa or none)");
}

template <typename T>
GatedOutput<T> gated_conv(const Var<T>& f_rgb_aligned, const Var<T>& f_d, const GatedConvParams<T>& params) {
  require_same_shape(f_rgb_aligned.shape(), f_d.shape(), "gated_conv");
  const Var<T> x = concat_channels(f_rgb_aligned, f_d);
  const Var<T> gate = sigmoid(params.gate_conv(x));
  const Var<T> features = leaky_relu(params.feature_conv(x), params.slope);
  return GatedOutput<T>{mul(features, gate), gate};
}

template <typename T>
AttentionOutput<T> pixel_attention(const Var<T>& f_d, const Var<T>& guide, const PixelAttentionParams<T>& params) {
  require_same_shape(f_d.shape(), guide.shape(), "pixel_attention");
  const Var<T> map = sigmoid(params.reduce_conv(concat_channels(f_d, guide)));
  return AttentionOutput<T>{mul(f_d, map), map};
}

template <typename T>
AttentionOutput<T> channel_attention(const Var<T>& f_d, const Var<T>& guide, const ChannelAttentionParams<T>& params) {
  require_same_shape(f_d.shape(), guide.shape(), "channel_attention");
  const Var<T> pooled = reduce_mean(concat_channels(f_d, guide), ReduceAxes::spatial());
  const Var<T> map = sigmoid(params.bottleneck(pooled));
  return AttentionOutput<T>{mul(f_d, map), map};
}

template <typename T>
AttentionOutput<T> spatial_attention(const Var<T>& f_d, const Var<T>& guide, const SpatialAttentionParams<T>& params) {
  require_same_shape(f_d.shape(), guide.shape(), "spatial_attention");
  const Var<T> x = concat_channels(f_d, guide);
  const Var<T> pooled = concat_channels(reduce_mean(x, ReduceAxes::channels()), reduce_max(x, ReduceAxes::channels()));
  const Var<T> map = sigmoid(params.conv(pooled));
  return AttentionOutput<T>{mul(f_d, map), map};
}

template <typename T>
MfaBlock<T> MfaBlock<T>::make(ParameterSet<T>& set, const std::string& name, std::size_t channels, bool gc_enabled,
                              AttentionMode attention, bool residual, T slope) {
  MfaBlock block;
  block.gc_enabled = gc_enabled;
  block.attention = attention;
  block.residual = residual;
  block.gc.slope = slope;
  if (gc_enabled) {
    block.gc.feature_conv = Conv<T>::make(set, name + ".gc.feature_conv", 2 * channels, channels, 3);
    block.gc.gate_conv = Conv<T>::make(set, name + ".gc.gate_conv", 2 * channels, channels, 3);
  }
  switch (attention) {
    case AttentionMode::Pixel:
      block.pa.reduce_conv = Conv<T>::make(set, name + ".pa.reduce_conv", 2 * channels, channels, 1);
      break;
    case AttentionMode::Channel:
      block.ca.bottleneck = Mlp<T>::make(set, name + ".ca", 2 * channels, std::max<std::size_t>(channels / 4, 4),
                                         channels, slope);
      break;
    case AttentionMode::Spatial: block.sa.conv = Conv<T>::make(set, name + ".sa.conv", 2, 1, 7); break;
    case AttentionMode::None: break;
  }
  const std::size_t fusion_in = attention == AttentionMode::None ? 2 * channels : channels;
  block.fusion = Conv<T>::make(set, name + ".fusion", fusion_in, channels, 3);
  return block;
}

template <typename T>
Var<T> mfa_forward(const Var<T>& f_rgb_aligned, const Var<T>& f_d, const MfaBlock<T>& block, MfaTrace<T>* trace) {
  require_same_shape(f_rgb_aligned.shape(), f_d.shape(), "mfa_forward");
  Var<T> guide = f_rgb_aligned;
  Var<T> gate;
  if (block.gc_enabled) {
    auto gated = gated_conv(f_rgb_aligned, f_d, block.gc);
    guide = gated.masked;
    gate = gated.gate;
  }
  AttentionOutput<T> att;
  switch (block.attention) {
    case AttentionMode::Pixel: att = pixel_attention(f_d, guide, block.pa); break;
    case AttentionMode::Channel: att = channel_attention(f_d, guide, block.ca); break;
    case AttentionMode::Spatial: att = spatial_attention(f_d, guide, block.sa); break;
    case AttentionMode::None: att.fused = concat_channels(f_d, guide); break;
  }
  if (trace != nullptr) *trace = MfaTrace<T>{gate, guide, att.map};
  const Var<T> fused = block.fusion(att.fused);
  return block.residual ? add(f_d, fused) : fused;
}

#define D2A2_INSTANTIATE(T)                                                                                      \
  template GatedOutput<T> gated_conv(const Var<T>&, const Var<T>&, const GatedConvParams<T>&);                  \
  template AttentionOutput<T> pixel_attention(const Var<T>&, const Var<T>&, const PixelAttentionParams<T>&);    \
  template AttentionOutput<T> channel_attention(const Var<T>&, const Var<T>&, const ChannelAttentionParams<T>&); \
  template AttentionOutput<T> spatial_attention(const Var<T>&, const Var<T>&, const SpatialAttentionParams<T>&); \
  template struct MfaBlock<T>;                                                                                   \
  template Var<T> mfa_forward(const Var<T>&, const Var<T>&, const MfaBlock<T>&, MfaTrace<T>*);

D2A2_INSTANTIATE(float)
D2A2_INSTANTIATE(double)

#undef D2A2_INSTANTIATE

}  // namespace d2a2
