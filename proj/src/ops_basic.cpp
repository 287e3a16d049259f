#include <cmath>
#include <string>

#include "d2a2/ops.hpp"

namespace d2a2 {

namespace {

struct Strides {
  std::size_t n, c, h, w;
};

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  Shape out;
  for (int d = 0; d < 4; ++d) {
    const std::size_t x = a.dim(d);
    const std::size_t y = b.dim(d);
    if (x != y && x != 1 && y != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + a.str() + " with " + b.str());
    }
    const std::size_t v = x == 1 ? y : x;
    switch (d) {
      case 0: out.n = v; break;
      case 1: out.c = v; break;
      case 2: out.h = v; break;
      default: out.w = v; break;
    }
  }
  return out;
}

// Strides of `s` when read with the extents of `out`; broadcast axes get stride 0.
Strides read_strides(const Shape& s, const Shape& out) {
  Strides st{s.c * s.h * s.w, s.h * s.w, s.w, 1};
  if (s.n == 1 && out.n != 1) st.n = 0;
  if (s.c == 1 && out.c != 1) st.c = 0;
  if (s.h == 1 && out.h != 1) st.h = 0;
  if (s.w == 1 && out.w != 1) st.w = 0;
  return st;
}

template <typename F>
void for_each_broadcast(const Shape& out, const Strides& sa, const Strides& sb, F&& f) {
  std::size_t o = 0;
  for (std::size_t n = 0; n < out.n; ++n)
    for (std::size_t c = 0; c < out.c; ++c)
      for (std::size_t y = 0; y < out.h; ++y) {
        const std::size_t ia = n * sa.n + c * sa.c + y * sa.h;
        const std::size_t ib = n * sb.n + c * sb.c + y * sb.h;
        for (std::size_t x = 0; x < out.w; ++x, ++o) f(o, ia + x * sa.w, ib + x * sb.w);
      }
}

enum class Binary { Add, Sub, Mul, Div };

template <typename T>
Var<T> binary(const Var<T>& a, const Var<T>& b, Binary kind, const char* name) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape(), name);
  const Strides sa = read_strides(a.shape(), out_shape);
  const Strides sb = read_strides(b.shape(), out_shape);
  Tensor<T> out(out_shape);
  const T* pa = a.value().data();
  const T* pb = b.value().data();
  T* po = out.data();
  if (a.shape() == b.shape()) {
    const std::size_t count = out.size();
    switch (kind) {
      case Binary::Add: for (std::size_t i = 0; i < count; ++i) po[i] = pa[i] + pb[i]; break;
      case Binary::Sub: for (std::size_t i = 0; i < count; ++i) po[i] = pa[i] - pb[i]; break;
      case Binary::Mul: for (std::size_t i = 0; i < count; ++i) po[i] = pa[i] * pb[i]; break;
      case Binary::Div: for (std::size_t i = 0; i < count; ++i) po[i] = pa[i] / pb[i]; break;
    }
  } else {
    for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      switch (kind) {
        case Binary::Add: po[o] = pa[ia] + pb[ib]; break;
        case Binary::Sub: po[o] = pa[ia] - pb[ib]; break;
        case Binary::Mul: po[o] = pa[ia] * pb[ib]; break;
        case Binary::Div: po[o] = pa[ia] / pb[ib]; break;
      }
    });
  }
  auto an = a.node();
  auto bn = b.node();
  return a.tape()->record(std::move(out), {&a, &b}, [an, bn, kind, out_shape, sa, sb](const Tensor<T>& g) {
    const T* pg = g.data();
    const T* va = an->value.data();
    const T* vb = bn->value.data();
    T* ga = an->requires_grad ? an->grad_buffer().data() : nullptr;
    T* gb = bn->requires_grad ? bn->grad_buffer().data() : nullptr;
    for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      switch (kind) {
        case Binary::Add:
          if (ga) ga[ia] += pg[o];
          if (gb) gb[ib] += pg[o];
          break;
        case Binary::Sub:
          if (ga) ga[ia] += pg[o];
          if (gb) gb[ib] -= pg[o];
          break;
        case Binary::Mul:
          if (ga) ga[ia] += pg[o] * vb[ib];
          if (gb) gb[ib] += pg[o] * va[ia];
          break;
        case Binary::Div:
          if (ga) ga[ia] += pg[o] / vb[ib];
          if (gb) gb[ib] -= pg[o] * va[ia] / (vb[ib] * vb[ib]);
          break;
      }
    });
  });
}

// Input-element -> output-element index map for a keep-dim reduction.
std::vector<std::size_t> reduction_map(const Shape& in, const Shape& out) {
  const Strides so = read_strides(out, in);
  std::vector<std::size_t> map(in.numel());
  std::size_t i = 0;
  for (std::size_t n = 0; n < in.n; ++n)
    for (std::size_t c = 0; c < in.c; ++c)
      for (std::size_t y = 0; y < in.h; ++y)
        for (std::size_t x = 0; x < in.w; ++x, ++i) map[i] = n * so.n + c * so.c + y * so.h + x * so.w;
  return map;
}

Shape reduced_shape(const Shape& s, ReduceAxes axes) {
  return Shape{axes.n ? 1 : s.n, axes.c ? 1 : s.c, axes.h ? 1 : s.h, axes.w ? 1 : s.w};
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return binary(a, b, Binary::Add, "add");
}
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return binary(a, b, Binary::Sub, "sub");
}
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return binary(a, b, Binary::Mul, "mul");
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  return binary(a, b, Binary::Div, "div");
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * factor;
  auto an = a.node();
  return a.tape()->record(std::move(out), {&a}, [an, factor](const Tensor<T>& g) {
    auto& ga = an->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const auto& v = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    // Split by sign so exp never overflows.
    if (v[i] >= T(0)) {
      out[i] = T(1) / (T(1) + std::exp(-v[i]));
    } else {
      const T e = std::exp(v[i]);
      out[i] = e / (T(1) + e);
    }
  }
  auto xn = x.node();
  Var<T> result = x.tape()->record(std::move(out), {&x}, {});
  if (result.requires_grad()) {
    std::weak_ptr<Node<T>> self = result.node();
    result.node()->backward = [xn, self](const Tensor<T>& g) {
      const auto& y = self.lock()->value;
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (T(1) - y[i]);
    };
  }
  return result;
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  Tensor<T> out(x.shape());
  const auto& v = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] > T(0) ? v[i] : slope * v[i];
  auto xn = x.node();
  return x.tape()->record(std::move(out), {&x}, [xn, slope](const Tensor<T>& g) {
    const auto& v = xn->value;
    auto& gx = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += v[i] > T(0) ? g[i] : slope * g[i];
  });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.value()[i]);
  auto xn = x.node();
  Var<T> result = x.tape()->record(std::move(out), {&x}, {});
  if (result.requires_grad()) {
    std::weak_ptr<Node<T>> self = result.node();
    result.node()->backward = [xn, self](const Tensor<T>& g) {
      const auto& y = self.lock()->value;
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (T(1) - y[i] * y[i]);
    };
  }
  return result;
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat_channels: shape mismatch " + sa.str() + " vs " + sb.str());
  }
  Tensor<T> out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t ca = sa.c * sa.plane();
  const std::size_t cb = sb.c * sb.plane();
  for (std::size_t n = 0; n < sa.n; ++n) {
    std::copy_n(a.value().data() + n * ca, ca, out.data() + n * (ca + cb));
    std::copy_n(b.value().data() + n * cb, cb, out.data() + n * (ca + cb) + ca);
  }
  auto an = a.node();
  auto bn = b.node();
  return a.tape()->record(std::move(out), {&a, &b}, [an, bn, ca, cb](const Tensor<T>& g) {
    const std::size_t batches = g.shape().n;
    for (std::size_t n = 0; n < batches; ++n) {
      const T* src = g.data() + n * (ca + cb);
      if (an->requires_grad) {
        T* dst = an->grad_buffer().data() + n * ca;
        for (std::size_t i = 0; i < ca; ++i) dst[i] += src[i];
      }
      if (bn->requires_grad) {
        T* dst = bn->grad_buffer().data() + n * cb;
        for (std::size_t i = 0; i < cb; ++i) dst[i] += src[ca + i];
      }
    }
  });
}

template <typename T>
Var<T> slice_channels(const Var<T>& x, std::size_t begin, std::size_t count) {
  const Shape& s = x.shape();
  if (begin + count > s.c) {
    throw ShapeError("slice_channels: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") exceeds " + std::to_string(s.c) + " channels");
  }
  Tensor<T> out(Shape{s.n, count, s.h, s.w});
  const std::size_t len = count * s.plane();
  for (std::size_t n = 0; n < s.n; ++n) {
    std::copy_n(x.value().plane(n, begin), len, out.plane(n, 0));
  }
  auto xn = x.node();
  return x.tape()->record(std::move(out), {&x}, [xn, begin, len](const Tensor<T>& g) {
    auto& gx = xn->grad_buffer();
    for (std::size_t n = 0; n < g.shape().n; ++n) {
      T* dst = gx.plane(n, begin);
      const T* src = g.plane(n, 0);
      for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
    }
  });
}

template <typename T>
Var<T> linear(const Var<T>& input, const Var<T>& weight, const Var<T>& bias) {
  const Shape& si = input.shape();
  const Shape& sw = weight.shape();
  const std::size_t rows = si.n;
  const std::size_t fin = si.c * si.h * si.w;
  const std::size_t fout = sw.n;
  if (sw.c * sw.h * sw.w != fin) {
    throw ShapeError("linear: input features " + std::to_string(fin) + " do not match weight " + sw.str());
  }
  if (bias.value().size() != fout) {
    throw ShapeError("linear: bias " + bias.shape().str() + " does not match " + std::to_string(fout) +
                     " outputs");
  }
  Tensor<T> out(Shape{rows, fout, 1, 1});
  const T* x = input.value().data();
  const T* w = weight.value().data();
  const T* b = bias.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < fout; ++o) {
      T acc = b[o];
      for (std::size_t f = 0; f < fin; ++f) acc += w[o * fin + f] * x[r * fin + f];
      out[r * fout + o] = acc;
    }
  }
  auto xn = input.node();
  auto wn = weight.node();
  auto bn = bias.node();
  return input.tape()->record(
      std::move(out), {&input, &weight, &bias}, [xn, wn, bn, rows, fin, fout](const Tensor<T>& g) {
        const T* x = xn->value.data();
        const T* w = wn->value.data();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t o = 0; o < fout; ++o) {
            const T go = g[r * fout + o];
            if (xn->requires_grad) {
              T* gx = xn->grad_buffer().data() + r * fin;
              for (std::size_t f = 0; f < fin; ++f) gx[f] += go * w[o * fin + f];
            }
            if (wn->requires_grad) {
              T* gw = wn->grad_buffer().data() + o * fin;
              for (std::size_t f = 0; f < fin; ++f) gw[f] += go * x[r * fin + f];
            }
            if (bn->requires_grad) bn->grad_buffer()[o] += go;
          }
        }
      });
}

template <typename T>
Var<T> reduce_mean(const Var<T>& x, ReduceAxes axes) {
  const Shape in = x.shape();
  const Shape out_shape = reduced_shape(in, axes);
  if (in.numel() == 0) throw ShapeError("reduce_mean over an empty tensor " + in.str());
  auto map = std::make_shared<std::vector<std::size_t>>(reduction_map(in, out_shape));
  const T count = static_cast<T>(in.numel() / out_shape.numel());
  Tensor<T> out(out_shape);
  for (std::size_t i = 0; i < in.numel(); ++i) out[(*map)[i]] += x.value()[i];
  for (std::size_t o = 0; o < out.size(); ++o) out[o] /= count;
  auto xn = x.node();
  return x.tape()->record(std::move(out), {&x}, [xn, map, count](const Tensor<T>& g) {
    auto& gx = xn->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[(*map)[i]] / count;
  });
}

template <typename T>
Var<T> reduce_std(const Var<T>& x, ReduceAxes axes, T epsilon) {
  const Shape in = x.shape();
  const Shape out_shape = reduced_shape(in, axes);
  if (in.numel() == 0) throw ShapeError("reduce_std over an empty tensor " + in.str());
  auto map = std::make_shared<std::vector<std::size_t>>(reduction_map(in, out_shape));
  const T count = static_cast<T>(in.numel() / out_shape.numel());
  auto mean = std::make_shared<Tensor<T>>(out_shape);
  const auto& v = x.value();
  for (std::size_t i = 0; i < in.numel(); ++i) (*mean)[(*map)[i]] += v[i];
  for (std::size_t o = 0; o < mean->size(); ++o) (*mean)[o] /= count;
  Tensor<T> out(out_shape);
  for (std::size_t i = 0; i < in.numel(); ++i) {
    const T d = v[i] - (*mean)[(*map)[i]];
    out[(*map)[i]] += d * d;
  }
  for (std::size_t o = 0; o < out.size(); ++o) out[o] = std::sqrt(out[o] / count + epsilon);
  auto xn = x.node();
  Var<T> result = x.tape()->record(std::move(out), {&x}, {});
  if (result.requires_grad()) {
    std::weak_ptr<Node<T>> self = result.node();
    result.node()->backward = [xn, self, map, mean, count](const Tensor<T>& g) {
      const auto& sigma = self.lock()->value;
      const auto& v = xn->value;
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const std::size_t o = (*map)[i];
        if (sigma[o] > T(0)) gx[i] += g[o] * (v[i] - (*mean)[o]) / (count * sigma[o]);
      }
    };
  }
  return result;
}

template <typename T>
Var<T> reduce_max(const Var<T>& x, ReduceAxes axes) {
  const Shape in = x.shape();
  const Shape out_shape = reduced_shape(in, axes);
  if (in.numel() == 0) throw ShapeError("reduce_max over an empty tensor " + in.str());
  const auto map = reduction_map(in, out_shape);
  Tensor<T> out(out_shape);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out_shape.numel(), in.numel());
  const auto& v = x.value();
  for (std::size_t i = 0; i < in.numel(); ++i) {
    std::size_t& best = (*argmax)[map[i]];
    if (best == in.numel() || v[i] > v[best]) best = i;
  }
  for (std::size_t o = 0; o < out.size(); ++o) out[o] = v[(*argmax)[o]];
  auto xn = x.node();
  return x.tape()->record(std::move(out), {&x}, [xn, argmax](const Tensor<T>& g) {
    auto& gx = xn->grad_buffer();
    for (std::size_t o = 0; o < g.size(); ++o) gx[(*argmax)[o]] += g[o];
  });
}

template <typename T>
std::pair<Var<T>, Var<T>> channel_stats(const Var<T>& x, T epsilon) {
  if (x.shape().plane() == 0) throw ShapeError("channel_stats: empty spatial extent " + x.shape().str());
  return {reduce_mean(x, ReduceAxes::spatial()), reduce_std(x, ReduceAxes::spatial(), epsilon)};
}

template <typename T>
Var<T> resample(const Var<T>& input, const AxisWeights& rows, const AxisWeights& cols) {
  Tensor<T> out = apply_resample(input.value(), rows, cols);
  auto xn = input.node();
  return input.tape()->record(std::move(out), {&input}, [xn, rows, cols](const Tensor<T>& g) {
    apply_resample_adjoint(g, rows, cols, xn->grad_buffer());
  });
}

template <typename T>
Var<T> bicubic_resize(const Var<T>& input, Ratio scale) {
  return resample(input, cubic_axis_weights(input.shape().h, scale), cubic_axis_weights(input.shape().w, scale));
}

template <typename T>
Var<T> bilinear_resize(const Var<T>& input, std::size_t out_h, std::size_t out_w) {
  return resample(input, linear_axis_weights(input.shape().h, out_h), linear_axis_weights(input.shape().w, out_w));
}

template <typename T>
Var<T> l1_loss(const Var<T>& pred, const Var<T>& target) {
  require_same_shape(pred.shape(), target.shape(), "l1_loss");
  const auto& p = pred.value();
  const auto& t = target.value();
  if (p.empty()) throw ShapeError("l1_loss over an empty tensor");
  T acc = T(0);
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - t[i]);
  const T count = static_cast<T>(p.size());
  Tensor<T> out(Shape{1, 1, 1, 1}, acc / count);
  auto pn = pred.node();
  auto tn = target.node();
  return pred.tape()->record(std::move(out), {&pred, &target}, [pn, tn, count](const Tensor<T>& g) {
    const auto& p = pn->value;
    const auto& t = tn->value;
    const T scale_g = g[0] / count;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const T d = p[i] - t[i];
      const T s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
      if (pn->requires_grad) pn->grad_buffer()[i] += s * scale_g;
      if (tn->requires_grad) tn->grad_buffer()[i] -= s * scale_g;
    }
  });
}

template <typename T>
Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& weights) {
  require_same_shape(x.shape(), weights.shape(), "weighted_sum");
  T acc = T(0);
  for (std::size_t i = 0; i < weights.size(); ++i) acc += x.value()[i] * weights[i];
  auto xn = x.node();
  return x.tape()->record(Tensor<T>(Shape{1, 1, 1, 1}, acc), {&x}, [xn, weights](const Tensor<T>& g) {
    auto& gx = xn->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0] * weights[i];
  });
}

#define D2A2_INSTANTIATE(T)                                                                   \
  template Var<T> add(const Var<T>&, const Var<T>&);                                          \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                          \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                          \
  template Var<T> div(const Var<T>&, const Var<T>&);                                          \
  template Var<T> scale(const Var<T>&, T);                                                    \
  template Var<T> sigmoid(const Var<T>&);                                                     \
  template Var<T> leaky_relu(const Var<T>&, T);                                               \
  template Var<T> tanh(const Var<T>&);                                                        \
  template Var<T> concat_channels(const Var<T>&, const Var<T>&);                              \
  template Var<T> slice_channels(const Var<T>&, std::size_t, std::size_t);                    \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                        \
  template Var<T> reduce_mean(const Var<T>&, ReduceAxes);                                     \
  template Var<T> reduce_std(const Var<T>&, ReduceAxes, T);                                   \
  template Var<T> reduce_max(const Var<T>&, ReduceAxes);                                      \
  template std::pair<Var<T>, Var<T>> channel_stats(const Var<T>&, T);                         \
  template Var<T> resample(const Var<T>&, const AxisWeights&, const AxisWeights&);            \
  template Var<T> bicubic_resize(const Var<T>&, Ratio);                                       \
  template Var<T> bilinear_resize(const Var<T>&, std::size_t, std::size_t);                   \
  template Var<T> l1_loss(const Var<T>&, const Var<T>&);                                      \
  template Var<T> weighted_sum(const Var<T>&, const Tensor<T>&);

D2A2_INSTANTIATE(float)
D2A2_INSTANTIATE(double)

#undef D2A2_INSTANTIATE

}  // namespace d2a2
