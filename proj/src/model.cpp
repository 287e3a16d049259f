#include "d2a2/model.hpp"

#include <random>

namespace d2a2 {

void check_forward_shapes(const ModelConfig& config, const Shape& rgb, const Shape& depth_lr, int scale) {
  Ratio::up(scale).validate();
  if (rgb.c != 3) throw ShapeError("rgb input must have 3 channels, got " + rgb.str());
  if (depth_lr.c != 1) throw ShapeError("depth input must have 1 channel, got " + depth_lr.str());
  if (rgb.n != depth_lr.n) throw ShapeError("batch mismatch between rgb " + rgb.str() + " and depth " + depth_lr.str());
  const auto s = static_cast<std::size_t>(scale);
  if (rgb.h != depth_lr.h * s || rgb.w != depth_lr.w * s) {
    throw ShapeError("rgb " + rgb.str() + " is not x" + std::to_string(scale) + " the depth input " + depth_lr.str());
  }
  const std::size_t step = std::size_t{1} << (config.num_scales - 1);
  if (rgb.h == 0 || rgb.w == 0 || rgb.h % step != 0 || rgb.w % step != 0) {
    throw ShapeError("spatial size " + std::to_string(rgb.h) + "x" + std::to_string(rgb.w) + " must be divisible by " +
                     std::to_string(step) + " for " + std::to_string(config.num_scales) + " scales");
  }
}

template <typename T>
D2A2Model<T>::D2A2Model(const ModelConfig& config) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  const double slope = config_.activation_slope;
  const T tslope = static_cast<T>(slope);
  const T eps = static_cast<T>(config_.lda_epsilon);
  const T bound = static_cast<T>(config_.offset_bound);
  for (int i = 0; i < config_.num_scales; ++i) {
    const std::string tag = "scale" + std::to_string(i);
    const std::size_t c = config_.channels(i);
    const std::size_t c_in_rgb = i == 0 ? 3 : config_.channels(i - 1);
    const std::size_t c_in_depth = i == 0 ? 1 : config_.channels(i - 1);
    const int stride = i == 0 ? 1 : 2;
    Scale s;
    s.rgb0 = Conv<T>::make(params_, "rgb_enc." + tag + ".conv0", c_in_rgb, c, 3, stride);
    s.rgb1 = Conv<T>::make(params_, "rgb_enc." + tag + ".conv1", c, c, 3);
    s.depth0 = Conv<T>::make(params_, "depth_enc." + tag + ".conv0", c_in_depth, c, 3, stride);
    s.depth1 = Conv<T>::make(params_, "depth_enc." + tag + ".conv1", c, c, 3);
    for (const Conv<T>* conv : {&s.rgb0, &s.rgb1, &s.depth0, &s.depth1}) conv->init_he(slope, rng);

    s.dda = DdaBlock<T>::make(params_, "dda." + tag, c, config_.effective_align(), config_.effective_dga(), tslope, eps,
                              bound);
    if (s.dda.align == AlignMode::Lda) {
      s.dda.lda.mlp_mu.set_identity();
      s.dda.lda.mlp_sigma.set_identity();
    }
    if (s.dda.dga_enabled) {
      s.dda.offset_conv.zero();
      s.dda.deform.conv.init_he(slope, rng);
    }

    s.mfa = MfaBlock<T>::make(params_, "mfa." + tag, c, config_.effective_gc(), config_.effective_attention(),
                              config_.mfa_residual, tslope);
    if (s.mfa.gc_enabled) {
      s.mfa.gc.feature_conv.init_he(slope, rng);
      s.mfa.gc.gate_conv.init_he(1.0, rng);
    }
    switch (s.mfa.attention) {
      case AttentionMode::Pixel: s.mfa.pa.reduce_conv.init_he(1.0, rng); break;
      case AttentionMode::Channel:
        s.mfa.ca.bottleneck.fc0.init_he(slope, rng);
        s.mfa.ca.bottleneck.fc1.init_he(1.0, rng);
        break;
      case AttentionMode::Spatial: s.mfa.sa.conv.init_he(1.0, rng); break;
      case AttentionMode::None: break;
    }
    s.mfa.fusion.init_he(slope, rng);
    scales_.push_back(s);
  }
  for (int i = 0; i + 1 < config_.num_scales; ++i) {
    auto& s = scales_[static_cast<std::size_t>(i)];
    s.up = Conv<T>::make(params_, "decoder.scale" + std::to_string(i) + ".conv", config_.channels(i + 1),
                         config_.channels(i), 3);
    s.up.init_he(slope, rng);
  }
  head0_ = Conv<T>::make(params_, "head.conv0", config_.channels(0), config_.channels(0), 3);
  head1_ = Conv<T>::make(params_, "head.conv1", config_.channels(0), 1, 3);
  head0_.init_he(slope, rng);
  head1_.init_he(1.0, rng);
}

template <typename T>
void D2A2Model<T>::zero_head() {
  head0_.zero();
  head1_.zero();
}

template <typename T>
Var<T> D2A2Model<T>::forward(const Var<T>& rgb, const Var<T>& depth_lr, int scale, ForwardTrace<T>* trace) const {
  check_forward_shapes(config_, rgb.shape(), depth_lr.shape(), scale);
  const T slope = static_cast<T>(config_.activation_slope);
  const Var<T> depth_up = bicubic_resize(depth_lr, Ratio::up(scale));
  if (trace != nullptr) {
    trace->depth_up = depth_up;
    trace->scales.clear();
  }

  std::vector<Var<T>> fused;
  Var<T> r = rgb;
  Var<T> d = depth_up;
  for (const Scale& s : scales_) {
    r = leaky_relu(s.rgb1(leaky_relu(s.rgb0(r), slope)), slope);
    d = leaky_relu(s.depth1(leaky_relu(s.depth0(d), slope)), slope);
    ScaleTrace<T> st;
    const Var<T> aligned = dda_forward(r, d, s.dda, trace != nullptr ? &st.dda : nullptr);
    fused.push_back(mfa_forward(aligned, d, s.mfa, trace != nullptr ? &st.mfa : nullptr));
    if (trace != nullptr) {
      st.rgb_features = r;
      st.depth_features = d;
      trace->scales.push_back(st);
    }
  }

  Var<T> dec = fused.back();
  for (int i = config_.num_scales - 2; i >= 0; --i) {
    const auto idx = static_cast<std::size_t>(i);
    const Shape& target = fused[idx].shape();
    const Var<T> up = leaky_relu(scales_[idx].up(bilinear_resize(dec, target.h, target.w)), slope);
    dec = add(up, fused[idx]);
  }
  const Var<T> residual = head1_(leaky_relu(head0_(dec), slope));
  if (trace != nullptr) trace->residual = residual;
  return add(depth_up, residual);
}

template <typename T>
Tensor<T> D2A2Model<T>::predict(const Tensor<T>& rgb, const Tensor<T>& depth_lr, int scale) const {
  Tape<T> tape;
  tape.set_recording(false);
  return forward(tape.constant(rgb), tape.constant(depth_lr), scale).value();
}

template class D2A2Model<float>;
template class D2A2Model<double>;

}  // namespace d2a2
