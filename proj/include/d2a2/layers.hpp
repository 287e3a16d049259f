#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "d2a2/ops.hpp"

namespace d2a2 {

/// Portable uniform draws in [lo, hi) from a 64-bit Mersenne Twister.
/// Standard-library distributions differ across implementations; these do not.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
inline double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

template <typename T>
void he_uniform(Tensor<T>& w, std::size_t fan_in, double slope, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / ((1.0 + slope * slope) * static_cast<double>(fan_in)));
  for (auto& v : w.vec()) v = static_cast<T>(uniform(rng, -bound, bound));
}

/// 2-D convolution layer bound to two parameters of a ParameterSet.
template <typename T>
struct Conv {
  Parameter<T>* weight = nullptr;
  Parameter<T>* bias = nullptr;
  int stride = 1;
  int padding = 1;

  static Conv make(ParameterSet<T>& set, const std::string& name, std::size_t in_c, std::size_t out_c,
                   std::size_t kernel, int stride = 1) {
    Conv conv;
    conv.weight = &set.add(name + ".weight", Shape{out_c, in_c, kernel, kernel});
    conv.bias = &set.add(name + ".bias", Shape{1, out_c, 1, 1});
    conv.stride = stride;
    conv.padding = static_cast<int>(kernel / 2);
    return conv;
  }

  void init_he(double slope, std::mt19937_64& rng) const {
    const Shape& s = weight->value.shape();
    he_uniform(weight->value, s.c * s.h * s.w, slope, rng);
    bias->value.fill(T(0));
  }

  void zero() const {
    weight->value.fill(T(0));
    bias->value.fill(T(0));
  }

  Var<T> operator()(const Var<T>& x) const {
    Tape<T>& tape = *x.tape();
    return conv2d(x, tape.param(*weight), tape.param(*bias), stride, padding);
  }
};

/// Fully connected layer over (N, F, 1, 1) rows.
template <typename T>
struct Linear {
  Parameter<T>* weight = nullptr;
  Parameter<T>* bias = nullptr;

  static Linear make(ParameterSet<T>& set, const std::string& name, std::size_t in_f, std::size_t out_f) {
    Linear l;
    l.weight = &set.add(name + ".weight", Shape{out_f, in_f, 1, 1});
    l.bias = &set.add(name + ".bias", Shape{1, out_f, 1, 1});
    return l;
  }

  void init_he(double slope, std::mt19937_64& rng) const {
    he_uniform(weight->value, weight->value.shape().c, slope, rng);
    bias->value.fill(T(0));
  }

  /// weight = I, bias = shift.
  void set_identity(T shift = T(0)) const {
    const Shape& s = weight->value.shape();
    weight->value.fill(T(0));
    for (std::size_t i = 0; i < std::min(s.n, s.c); ++i) weight->value[i * s.c + i] = T(1);
    bias->value.fill(shift);
  }

  Var<T> operator()(const Var<T>& x) const {
    Tape<T>& tape = *x.tape();
    return linear(x, tape.param(*weight), tape.param(*bias));
  }
};

/// Two linear layers with a leaky-relu between.
template <typename T>
struct Mlp {
  Linear<T> fc0;
  Linear<T> fc1;
  T slope = T(0.2);

  static Mlp make(ParameterSet<T>& set, const std::string& name, std::size_t in_f, std::size_t hidden,
                  std::size_t out_f, T slope) {
    return Mlp{Linear<T>::make(set, name + ".fc0", in_f, hidden), Linear<T>::make(set, name + ".fc1", hidden, out_f),
               slope};
  }

  /// Exact identity for inputs above -shift: fc0 adds the shift, fc1 removes it.
  void set_identity(T shift = T(0)) const {
    fc0.set_identity(shift);
    fc1.set_identity(-shift);
  }

  Var<T> operator()(const Var<T>& x) const { return fc1(leaky_relu(fc0(x), slope)); }
};

}  // namespace d2a2
