#pragma once

#include <string>

#include "d2a2/layers.hpp"

namespace d2a2 {

/// Statistic alignment applied to RGB features before geometric alignment.
enum class AlignMode {
  Lda,       // learnable: normalize RGB, denormalize with MLP(depth statistics)
  Instance,  // per-(batch, channel) normalization, no denormalization
  Batch,     // per-channel normalization over batch and space
  None,      // pass RGB features through
};

std::string to_string(AlignMode mode);
AlignMode parse_align_mode(const std::string& text);

/// Two MLPs mapping depth-feature statistics to denormalization targets.
template <typename T>
struct LdaParams {
  Mlp<T> mlp_mu;
  Mlp<T> mlp_sigma;
  T epsilon = T(1e-5);

  static LdaParams make(ParameterSet<T>& set, const std::string& name, std::size_t channels, T slope, T epsilon) {
    return LdaParams{Mlp<T>::make(set, name + ".mlp_mu", channels, channels, channels, slope),
                     Mlp<T>::make(set, name + ".mlp_sigma", channels, channels, channels, slope), epsilon};
  }
};

/// Per-pixel tap displacements (N, 2K, H, W) as interleaved (dy, dx) and modulation (N, K, H, W) in [0, 1].
template <typename T>
struct OffsetField {
  Var<T> offsets;
  Var<T> modulation;

  std::size_t taps() const { return modulation.shape().c; }
};

template <typename T>
struct DeformConvParams {
  Conv<T> conv;  // (out_c, in_c, 3, 3)
};

/// Normalizes f_rgb per (batch, channel) and denormalizes it with MLP images of the depth statistics.
template <typename T>
Var<T> lda_forward(const Var<T>& f_rgb, const Var<T>& f_d, const LdaParams<T>& params);

/// Normalization-only alignment used by the Instance and Batch ablations.
template <typename T>
Var<T> normalize_features(const Var<T>& f_rgb, AlignMode mode, T epsilon);

/// 3x3 conv over [f_d | f_rgb_aligned] yielding 18 offset channels then 9 modulation logits.
/// A positive offset_bound squashes offsets to bound * tanh(raw).
template <typename T>
OffsetField<T> predict_offsets(const Var<T>& f_d, const Var<T>& f_rgb_aligned, const Conv<T>& offset_conv,
                               T offset_bound = T(0));

template <typename T>
Var<T> deform_conv2d(const Var<T>& input, const OffsetField<T>& field, const DeformConvParams<T>& params);

/// Intermediate tensors of one alignment pass, for diagnostics.
template <typename T>
struct DdaTrace {
  Var<T> rgb_in;
  Var<T> rgb_domain_aligned;
  Var<T> rgb_out;
  OffsetField<T> field;
};

/// Domain alignment followed by offset prediction and deformable convolution.
template <typename T>
struct DdaBlock {
  AlignMode align = AlignMode::Lda;
  bool dga_enabled = true;
  T offset_bound = T(0);
  T epsilon = T(1e-5);
  LdaParams<T> lda;
  Conv<T> offset_conv;
  DeformConvParams<T> deform;

  static DdaBlock make(ParameterSet<T>& set, const std::string& name, std::size_t channels, AlignMode align,
                       bool dga_enabled, T slope, T epsilon, T offset_bound);

  bool is_identity() const { return align == AlignMode::None && !dga_enabled; }
};

template <typename T>
Var<T> dda_forward(const Var<T>& f_rgb, const Var<T>& f_d, const DdaBlock<T>& block, DdaTrace<T>* trace = nullptr);

}  // namespace d2a2
