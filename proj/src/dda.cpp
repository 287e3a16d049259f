#include "d2a2/dda.hpp"

#include <stdexcept>

namespace d2a2 {

std::string to_string(AlignMode mode) {
  switch (mode) {
    case AlignMode::Lda: return "lda";
    case AlignMode::Instance: return "in";
    case AlignMode::Batch: return "bn";
    case AlignMode::None: return "none";
  }
  return "none";
}

AlignMode parse_align_mode(const std::string& text) {
  if (text == "lda") return AlignMode::Lda;
  if (text == "in") return AlignMode::Instance;
  if (text == "bn") return AlignMode::Batch;
  if (text == "none") return AlignMode::None;
  throw std::invalid_argument("unknown lda_mode '" + text + "' (expected lda, in, bn or none)");
}

template <typename T>
Var<T> lda_forward(const Var<T>& f_rgb, const Var<T>& f_d, const LdaParams<T>& params) {
  if (f_rgb.shape().c != f_d.shape().c) {
    throw ShapeError("lda_forward: channel mismatch " + f_rgb.shape().str() + " vs " + f_d.shape().str());
  }
  require_same_shape(f_rgb.shape(), f_d.shape(), "lda_forward");
  auto [mu_rgb, sigma_rgb] = channel_stats(f_rgb, params.epsilon);
  auto [mu_d, sigma_d] = channel_stats(f_d, params.epsilon);
  const Var<T> mu_target = params.mlp_mu(mu_d);
  const Var<T> sigma_target = params.mlp_sigma(sigma_d);
  const Var<T> normalized = div(sub(f_rgb, mu_rgb), sigma_rgb);
  return add(mul(normalized, sigma_target), mu_target);
}

template <typename T>
Var<T> normalize_features(const Var<T>& f_rgb, AlignMode mode, T epsilon) {
  if (f_rgb.shape().plane() == 0) throw ShapeError("normalize_features: empty spatial extent");
  const ReduceAxes axes = mode == AlignMode::Batch ? ReduceAxes::batch_spatial() : ReduceAxes::spatial();
  return div(sub(f_rgb, reduce_mean(f_rgb, axes)), reduce_std(f_rgb, axes, epsilon));
}

template <typename T>
OffsetField<T> predict_offsets(const Var<T>& f_d, const Var<T>& f_rgb_aligned, const Conv<T>& offset_conv,
                               T offset_bound) {
  const Var<T> raw = offset_conv(concat_channels(f_d, f_rgb_aligned));
  if (raw.shape().c != 27) {
    throw ShapeError("predict_offsets: offset conv must emit 27 channels, got " + raw.shape().str());
  }
  Var<T> offsets = slice_channels(raw, 0, 18);
  if (offset_bound > T(0)) offsets = scale(tanh(offsets), offset_bound);
  return OffsetField<T>{offsets, sigmoid(slice_channels(raw, 18, 9))};
}

template <typename T>
Var<T> deform_conv2d(const Var<T>& input, const OffsetField<T>& field, const DeformConvParams<T>& params) {
  if (field.taps() != 9) {
    throw ShapeError("deform_conv2d: offset field has " + std::to_string(field.taps()) + " taps, expected 9");
  }
  Tape<T>& tape = *input.tape();
  return deform_conv2d(input, field.offsets, field.modulation, tape.param(*params.conv.weight),
                       tape.param(*params.conv.bias));
}

template <typename T>
DdaBlock<T> DdaBlock<T>::make(ParameterSet<T>& set, const std::string& name, std::size_t channels, AlignMode align,
                              bool dga_enabled, T slope, T epsilon, T offset_bound) {
  DdaBlock block;
  block.align = align;
  block.dga_enabled = dga_enabled;
  block.offset_bound = offset_bound;
  block.epsilon = epsilon;
  if (align == AlignMode::Lda) block.lda = LdaParams<T>::make(set, name + ".lda", channels, slope, epsilon);
  if (dga_enabled) {
    block.offset_conv = Conv<T>::make(set, name + ".offset_conv", 2 * channels, 27, 3);
    block.deform.conv = Conv<T>::make(set, name + ".deform", channels, channels, 3);
  }
  return block;
}

template <typename T>
Var<T> dda_forward(const Var<T>& f_rgb, const Var<T>& f_d, const DdaBlock<T>& block, DdaTrace<T>* trace) {
  require_same_shape(f_rgb.shape(), f_d.shape(), "dda_forward");
  Var<T> aligned;
  switch (block.align) {
    case AlignMode::Lda: aligned = lda_forward(f_rgb, f_d, block.lda); break;
    case AlignMode::Instance:
    case AlignMode::Batch: aligned = normalize_features(f_rgb, block.align, block.epsilon); break;
    case AlignMode::None: aligned = f_rgb; break;
  }
  Var<T> out = aligned;
  OffsetField<T> field;
  if (block.dga_enabled) {
    field = predict_offsets(f_d, aligned, block.offset_conv, block.offset_bound);
    out = deform_conv2d(aligned, field, block.deform);
  }
  if (trace != nullptr) *trace = DdaTrace<T>{f_rgb, aligned, out, field};
  return out;
}

#define D2A2_INSTANTIATE(T)                                                                                 \
  template Var<T> lda_forward(const Var<T>&, const Var<T>&, const LdaParams<T>&);                           \
  template Var<T> normalize_features(const Var<T>&, AlignMode, T);                                          \
  template OffsetField<T> predict_offsets(const Var<T>&, const Var<T>&, const Conv<T>&, T);                 \
  template Var<T> deform_conv2d(const Var<T>&, const OffsetField<T>&, const DeformConvParams<T>&);          \
  template struct DdaBlock<T>;                                                                              \
  template Var<T> dda_forward(const Var<T>&, const Var<T>&, const DdaBlock<T>&, DdaTrace<T>*);

D2A2_INSTANTIATE(float)
D2A2_INSTANTIATE(double)

#undef D2A2_INSTANTIATE

}  // namespace d2a2
