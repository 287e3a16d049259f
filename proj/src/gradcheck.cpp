#include "d2a2/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>

#include "d2a2/dda.hpp"
#include "d2a2/layers.hpp"
#include "d2a2/mfa.hpp"
#include "d2a2/model.hpp"
#include "d2a2/ops.hpp"

namespace d2a2 {

double GradErrors::max() const {
  double m = 0.0;
  for (const auto& e : items) m = std::max(m, std::isnan(e.rel_error) ? INFINITY : e.rel_error);
  return m;
}

std::string GradErrors::worst() const {
  const GradError* w = nullptr;
  for (const auto& e : items) {
    if (w == nullptr || !(e.rel_error <= w->rel_error)) w = &e;
  }
  return w == nullptr ? "" : w->name;
}

void GradErrors::append(const GradErrors& other, const std::string& prefix) {
  for (const auto& e : other.items) items.push_back({prefix + e.name, e.rel_error});
}

namespace {

double projected(const Tensor<double>& out, const Tensor<double>& weights) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * weights[i];
  return s;
}

double relative_error(const Tensor<double>& analytic, const std::vector<double>& numeric) {
  double diff = 0.0, scale = 1e-8;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  return diff / scale;
}

}  // namespace

GradErrors check_gradients(const GradFn& fn, std::vector<Tensor<double>>& inputs,
                           const std::vector<std::string>& names, ParameterSet<double>* params, std::uint64_t seed,
                           double step) {
  if (names.size() != inputs.size()) throw std::invalid_argument("check_gradients: one name per input required");

  auto evaluate = [&](const Tensor<double>& weights) {
    Tape<double> tape;
    tape.set_recording(false);
    std::vector<Var<double>> leaves;
    for (const auto& t : inputs) leaves.push_back(tape.constant(t));
    return projected(fn(tape, leaves).value(), weights);
  };

  Tape<double> tape;
  std::vector<Var<double>> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.input(t, true));
  if (params != nullptr) params->zero_grad();
  const Var<double> out = fn(tape, leaves);
  std::mt19937_64 rng(seed);
  Tensor<double> weights(out.shape());
  for (auto& v : weights.vec()) v = uniform(rng, -1.0, 1.0);
  tape.backward(weighted_sum(out, weights));

  GradErrors errors;
  auto numeric_grad = [&](Tensor<double>& target) {
    std::vector<double> g(target.size());
    for (std::size_t k = 0; k < target.size(); ++k) {
      const double saved = target[k];
      target[k] = saved + step;
      const double up = evaluate(weights);
      target[k] = saved - step;
      const double down = evaluate(weights);
      target[k] = saved;
      g[k] = (up - down) / (2.0 * step);
    }
    return g;
  };
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto numeric = numeric_grad(inputs[i]);
    errors.items.push_back({names[i], relative_error(leaves[i].grad(), numeric)});
  }
  if (params != nullptr) {
    for (std::size_t i = 0; i < params->size(); ++i) {
      Parameter<double>& p = (*params)[i];
      const Tensor<double> analytic = p.grad;
      const auto numeric = numeric_grad(p.value);
      errors.items.push_back({p.name, relative_error(analytic, numeric)});
    }
  }
  return errors;
}

namespace {

using V = Var<double>;
using Vs = std::vector<V>;
using Ts = std::vector<Tensor<double>>;

Tensor<double> random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(s);
  for (auto& v : t.vec()) v = uniform(rng, lo, hi);
  return t;
}

/// Values bounded away from zero, for ops with a kink or a pole there.
Tensor<double> away_from_zero(Shape s, std::mt19937_64& rng, double lo, double hi) {
  Tensor<double> t(s);
  for (auto& v : t.vec()) v = uniform(rng, lo, hi) * ((rng() >> 63) != 0 ? 1.0 : -1.0);
  return t;
}

/// Fractional positions kept at least 0.05 from the integer lattice.
double off_lattice(std::mt19937_64& rng, int lo, int hi) {
  const int base = lo + static_cast<int>(uniform01(rng) * (hi - lo + 1));
  return base + uniform(rng, 0.05, 0.95);
}

void randomize(ParameterSet<double>& set, std::mt19937_64& rng, double amplitude) {
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (auto& v : set[i].value.vec()) v = uniform(rng, -amplitude, amplitude);
  }
}

GradErrors run_case(const GradFn& fn, Ts inputs, const std::vector<std::string>& names,
                    ParameterSet<double>* params = nullptr) {
  return check_gradients(fn, inputs, names, params);
}

GradErrors check_conv2d() {
  std::mt19937_64 rng(11);
  GradErrors all;
  all.append(run_case([](Tape<double>&, const Vs& x) { return conv2d(x[0], x[1], x[2], 1, 1); },
                      {random_tensor({1, 2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng),
                       random_tensor({1, 3, 1, 1}, rng)},
                      {"input", "weight", "bias"}),
             "pad1.");
  all.append(run_case([](Tape<double>&, const Vs& x) { return conv2d(x[0], x[1], x[2], 2, 1); },
                      {random_tensor({2, 3, 8, 8}, rng), random_tensor({4, 3, 3, 3}, rng),
                       random_tensor({1, 4, 1, 1}, rng)},
                      {"input", "weight", "bias"}),
             "stride2.");
  all.append(run_case([](Tape<double>&, const Vs& x) { return conv2d(x[0], x[1], x[2], 1, 0); },
                      {random_tensor({2, 4, 6, 6}, rng), random_tensor({3, 4, 1, 1}, rng),
                       random_tensor({1, 3, 1, 1}, rng)},
                      {"input", "weight", "bias"}),
             "pointwise.");
  return all;
}

GradErrors check_linear() {
  std::mt19937_64 rng(12);
  return run_case([](Tape<double>&, const Vs& x) { return linear(x[0], x[1], x[2]); },
                  {random_tensor({4, 8, 1, 1}, rng), random_tensor({8, 8, 1, 1}, rng), random_tensor({1, 8, 1, 1}, rng)},
                  {"input", "weight", "bias"});
}

template <typename Op>
GradErrors check_binary(Op op, std::uint64_t seed, bool divisor) {
  std::mt19937_64 rng(seed);
  auto rhs = [&](Shape s) { return divisor ? away_from_zero(s, rng, 0.5, 2.0) : random_tensor(s, rng); };
  GradErrors all;
  const Shape full{2, 4, 8, 8};
  for (const Shape& bs : {full, Shape{2, 4, 1, 1}, Shape{2, 1, 8, 8}, Shape{1, 4, 1, 1}}) {
    all.append(run_case([op](Tape<double>&, const Vs& x) { return op(x[0], x[1]); }, {random_tensor(full, rng), rhs(bs)},
                        {"a", "b"}),
               "b" + bs.str() + ".");
  }
  return all;
}

GradErrors check_unary(const std::function<V(const V&)>& op, std::uint64_t seed, bool avoid_zero) {
  std::mt19937_64 rng(seed);
  const Shape s{2, 4, 8, 8};
  return run_case([op](Tape<double>&, const Vs& x) { return op(x[0]); },
                  {avoid_zero ? away_from_zero(s, rng, 0.01, 3.0) : random_tensor(s, rng, -3.0, 3.0)}, {"input"});
}

GradErrors check_concat_slice() {
  std::mt19937_64 rng(13);
  GradErrors all;
  all.append(run_case([](Tape<double>&, const Vs& x) { return concat_channels(x[0], x[1]); },
                      {random_tensor({2, 2, 4, 4}, rng), random_tensor({2, 3, 4, 4}, rng)}, {"a", "b"}),
             "concat.");
  all.append(run_case([](Tape<double>&, const Vs& x) { return slice_channels(x[0], 1, 3); },
                      {random_tensor({2, 5, 4, 4}, rng)}, {"input"}),
             "slice.");
  return all;
}

GradErrors check_channel_stats() {
  std::mt19937_64 rng(14);
  return run_case(
      [](Tape<double>&, const Vs& x) {
        auto [mu, sigma] = channel_stats(x[0], 1e-5);
        return concat_channels(mu, sigma);
      },
      {random_tensor({2, 4, 8, 8}, rng)}, {"input"});
}

GradErrors check_reductions() {
  std::mt19937_64 rng(15);
  GradErrors all;
  const Shape s{2, 4, 6, 6};
  for (ReduceAxes axes : {ReduceAxes::spatial(), ReduceAxes::batch_spatial(), ReduceAxes::channels()}) {
    const std::string tag = std::string(axes.n ? "n" : "") + (axes.c ? "c" : "") + (axes.h ? "hw" : "");
    all.append(run_case([axes](Tape<double>&, const Vs& x) { return reduce_mean(x[0], axes); }, {random_tensor(s, rng)},
                        {"input"}),
               "mean_" + tag + ".");
    all.append(run_case([axes](Tape<double>&, const Vs& x) { return reduce_std(x[0], axes, 1e-5); },
                        {random_tensor(s, rng)}, {"input"}),
               "std_" + tag + ".");
    all.append(run_case([axes](Tape<double>&, const Vs& x) { return reduce_max(x[0], axes); }, {random_tensor(s, rng)},
                        {"input"}),
               "max_" + tag + ".");
  }
  return all;
}

GradErrors check_bilinear_sample() {
  std::mt19937_64 rng(16);
  Tensor<double> coords({2, 2, 5, 5});
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t y = 0; y < 5; ++y)
      for (std::size_t x = 0; x < 5; ++x) {
        coords.at(n, 0, y, x) = off_lattice(rng, -2, 6);
        coords.at(n, 1, y, x) = off_lattice(rng, -2, 6);
      }
  return run_case([](Tape<double>&, const Vs& x) { return bilinear_sample(x[0], x[1]); },
                  {random_tensor({2, 3, 6, 6}, rng), coords}, {"input", "coords"});
}

GradErrors check_bicubic() {
  std::mt19937_64 rng(17);
  GradErrors all;
  all.append(run_case([](Tape<double>&, const Vs& x) { return bicubic_resize(x[0], Ratio::up(2)); },
                      {random_tensor({2, 2, 4, 4}, rng)}, {"input"}),
             "x2.");
  all.append(run_case([](Tape<double>&, const Vs& x) { return bicubic_resize(x[0], Ratio::up(4)); },
                      {random_tensor({1, 2, 3, 5}, rng)}, {"input"}),
             "x4.");
  all.append(run_case([](Tape<double>&, const Vs& x) { return bicubic_resize(x[0], Ratio::down(4)); },
                      {random_tensor({1, 2, 8, 8}, rng)}, {"input"}),
             "x1/4.");
  return all;
}

GradErrors check_bilinear_resize() {
  std::mt19937_64 rng(18);
  GradErrors all;
  all.append(run_case([](Tape<double>&, const Vs& x) { return bilinear_resize(x[0], 8, 8); },
                      {random_tensor({2, 2, 4, 4}, rng)}, {"input"}),
             "8x8.");
  all.append(run_case([](Tape<double>&, const Vs& x) { return bilinear_resize(x[0], 5, 7); },
                      {random_tensor({1, 2, 4, 3}, rng)}, {"input"}),
             "5x7.");
  return all;
}

GradErrors check_deform_conv2d() {
  std::mt19937_64 rng(19);
  const std::size_t H = 6, W = 6;
  // Offsets are chosen so every sampling position p + p_k + dp stays off the integer lattice.
  Tensor<double> offsets({2, 18, H, W});
  for (auto& v : offsets.vec()) v = off_lattice(rng, -2, 1);
  Tensor<double> modulation = random_tensor({2, 9, H, W}, rng, 0.05, 0.95);
  return run_case(
      [](Tape<double>&, const Vs& x) { return deform_conv2d(x[0], x[1], x[2], x[3], x[4]); },
      {random_tensor({2, 3, H, W}, rng), offsets, modulation, random_tensor({4, 3, 3, 3}, rng),
       random_tensor({1, 4, 1, 1}, rng)},
      {"input", "offsets", "modulation", "weight", "bias"});
}

GradErrors check_lda_forward() {
  std::mt19937_64 rng(20);
  ParameterSet<double> set;
  const auto lda = LdaParams<double>::make(set, "lda", 4, 0.2, 1e-5);
  randomize(set, rng, 0.6);
  return run_case([&lda](Tape<double>&, const Vs& x) { return lda_forward(x[0], x[1], lda); },
                  {random_tensor({2, 4, 6, 6}, rng), random_tensor({2, 4, 6, 6}, rng, 0.0, 2.0)}, {"f_rgb", "f_d"},
                  &set);
}

GradErrors check_normalize_features() {
  std::mt19937_64 rng(21);
  GradErrors all;
  for (AlignMode mode : {AlignMode::Instance, AlignMode::Batch}) {
    all.append(run_case([mode](Tape<double>&, const Vs& x) { return normalize_features(x[0], mode, 1e-5); },
                        {random_tensor({2, 3, 5, 5}, rng)}, {"input"}),
               to_string(mode) + ".");
  }
  return all;
}

GradErrors check_predict_offsets() {
  std::mt19937_64 rng(22);
  GradErrors all;
  for (double bound : {0.0, 2.0}) {
    ParameterSet<double> set;
    const auto conv = Conv<double>::make(set, "offset_conv", 6, 27, 3);
    randomize(set, rng, 0.3);
    all.append(run_case(
                   [&conv, bound](Tape<double>&, const Vs& x) {
                     const auto field = predict_offsets(x[0], x[1], conv, bound);
                     return concat_channels(field.offsets, field.modulation);
                   },
                   {random_tensor({2, 3, 5, 5}, rng), random_tensor({2, 3, 5, 5}, rng)}, {"f_d", "f_rgb_aligned"},
                   &set),
               bound > 0.0 ? "bounded." : "unbounded.");
  }
  return all;
}

GradErrors check_dda_forward() {
  std::mt19937_64 rng(23);
  ParameterSet<double> set;
  const auto block = DdaBlock<double>::make(set, "dda", 3, AlignMode::Lda, true, 0.2, 1e-5, 0.0);
  randomize(set, rng, 0.3);
  return run_case([&block](Tape<double>&, const Vs& x) { return dda_forward(x[0], x[1], block); },
                  {random_tensor({2, 3, 5, 5}, rng), random_tensor({2, 3, 5, 5}, rng)}, {"f_rgb", "f_d"}, &set);
}

GradErrors check_gated_conv() {
  std::mt19937_64 rng(24);
  ParameterSet<double> set;
  GatedConvParams<double> gc{Conv<double>::make(set, "gc.feature_conv", 6, 3, 3),
                             Conv<double>::make(set, "gc.gate_conv", 6, 3, 3), 0.2};
  randomize(set, rng, 0.4);
  return run_case(
      [&gc](Tape<double>&, const Vs& x) {
        const auto g = gated_conv(x[0], x[1], gc);
        return concat_channels(g.masked, g.gate);
      },
      {random_tensor({2, 3, 6, 6}, rng), random_tensor({2, 3, 6, 6}, rng)}, {"f_rgb_aligned", "f_d"}, &set);
}

GradErrors check_pixel_attention() {
  std::mt19937_64 rng(25);
  ParameterSet<double> set;
  PixelAttentionParams<double> pa{Conv<double>::make(set, "pa.reduce_conv", 8, 4, 1)};
  randomize(set, rng, 0.5);
  return run_case([&pa](Tape<double>&, const Vs& x) { return pixel_attention(x[0], x[1], pa).fused; },
                  {random_tensor({2, 4, 6, 6}, rng), random_tensor({2, 4, 6, 6}, rng)}, {"f_d", "f_masked"}, &set);
}

GradErrors check_channel_attention() {
  std::mt19937_64 rng(26);
  ParameterSet<double> set;
  ChannelAttentionParams<double> ca{Mlp<double>::make(set, "ca", 8, 4, 4, 0.2)};
  randomize(set, rng, 0.5);
  return run_case([&ca](Tape<double>&, const Vs& x) { return channel_attention(x[0], x[1], ca).fused; },
                  {random_tensor({2, 4, 5, 5}, rng), random_tensor({2, 4, 5, 5}, rng)}, {"f_d", "guide"}, &set);
}

GradErrors check_spatial_attention() {
  std::mt19937_64 rng(27);
  ParameterSet<double> set;
  SpatialAttentionParams<double> sa{Conv<double>::make(set, "sa.conv", 2, 1, 7)};
  randomize(set, rng, 0.3);
  return run_case([&sa](Tape<double>&, const Vs& x) { return spatial_attention(x[0], x[1], sa).fused; },
                  {random_tensor({2, 4, 5, 5}, rng), random_tensor({2, 4, 5, 5}, rng)}, {"f_d", "guide"}, &set);
}

GradErrors check_mfa_forward() {
  std::mt19937_64 rng(28);
  GradErrors all;
  for (AttentionMode mode : {AttentionMode::Pixel, AttentionMode::None}) {
    ParameterSet<double> set;
    const auto block = MfaBlock<double>::make(set, "mfa", 3, true, mode, true, 0.2);
    randomize(set, rng, 0.4);
    all.append(run_case([&block](Tape<double>&, const Vs& x) { return mfa_forward(x[0], x[1], block); },
                        {random_tensor({2, 3, 5, 5}, rng), random_tensor({2, 3, 5, 5}, rng)},
                        {"f_rgb_aligned", "f_d"}, &set),
               to_string(mode) + ".");
  }
  return all;
}

GradErrors check_model_forward() {
  std::mt19937_64 rng(29);
  ModelConfig config;
  config.num_scales = 2;
  config.base_channels = 3;
  config.seed = 5;
  D2A2Model<double> model(config);
  randomize(model.parameters(), rng, 0.3);
  return run_case([&model](Tape<double>&, const Vs& x) { return model.forward(x[0], x[1], 2); },
                  {random_tensor({1, 3, 8, 8}, rng, 0.0, 1.0), random_tensor({1, 1, 4, 4}, rng, 0.0, 1.0)},
                  {"rgb", "depth_lr"}, &model.parameters());
}

GradErrors check_l1_loss() {
  std::mt19937_64 rng(30);
  const Shape s{2, 1, 6, 6};
  Tensor<double> target = random_tensor(s, rng);
  Tensor<double> pred = target;
  const Tensor<double> gap = away_from_zero(s, rng, 0.05, 1.0);
  for (std::size_t i = 0; i < pred.size(); ++i) pred[i] += gap[i];
  return run_case([](Tape<double>&, const Vs& x) { return l1_loss(x[0], x[1]); }, {pred, target}, {"pred", "target"});
}

}  // namespace

const std::vector<GradcheckEntry>& gradcheck_registry() {
  static const std::vector<GradcheckEntry> registry = {
      {"conv2d", "tensor-autodiff", check_conv2d},
      {"linear", "tensor-autodiff", check_linear},
      {"add", "tensor-autodiff", [] { return check_binary([](const V& a, const V& b) { return add(a, b); }, 31, false); }},
      {"sub", "tensor-autodiff", [] { return check_binary([](const V& a, const V& b) { return sub(a, b); }, 32, false); }},
      {"mul", "tensor-autodiff", [] { return check_binary([](const V& a, const V& b) { return mul(a, b); }, 33, false); }},
      {"div", "tensor-autodiff", [] { return check_binary([](const V& a, const V& b) { return div(a, b); }, 34, true); }},
      {"scale", "tensor-autodiff", [] { return check_unary([](const V& x) { return scale(x, 1.7); }, 35, false); }},
      {"sigmoid", "tensor-autodiff", [] { return check_unary([](const V& x) { return sigmoid(x); }, 36, false); }},
      {"tanh", "tensor-autodiff", [] { return check_unary([](const V& x) { return tanh(x); }, 37, false); }},
      {"leaky_relu", "tensor-autodiff",
       [] { return check_unary([](const V& x) { return leaky_relu(x, 0.2); }, 38, true); }},
      {"concat_channels", "tensor-autodiff", check_concat_slice},
      {"channel_stats", "tensor-autodiff", check_channel_stats},
      {"reductions", "tensor-autodiff", check_reductions},
      {"bilinear_sample", "tensor-autodiff", check_bilinear_sample},
      {"bicubic_resize", "tensor-autodiff", check_bicubic},
      {"bilinear_resize", "tensor-autodiff", check_bilinear_resize},
      {"deform_conv2d", "blocks-dda", check_deform_conv2d},
      {"lda_forward", "blocks-dda", check_lda_forward},
      {"normalize_features", "blocks-dda", check_normalize_features},
      {"predict_offsets", "blocks-dda", check_predict_offsets},
      {"dda_forward", "blocks-dda", check_dda_forward},
      {"gated_conv", "blocks-mfa", check_gated_conv},
      {"pixel_attention", "blocks-mfa", check_pixel_attention},
      {"channel_attention", "blocks-mfa", check_channel_attention},
      {"spatial_attention", "blocks-mfa", check_spatial_attention},
      {"mfa_forward", "blocks-mfa", check_mfa_forward},
      {"model_forward", "network", check_model_forward},
      {"l1_loss", "train-eval-cli", check_l1_loss},
  };
  return registry;
}

std::vector<GradcheckResult> run_gradcheck(const std::string& scope,
                                           const std::function<void(const GradcheckResult&)>& on_result) {
  std::vector<GradcheckResult> results;
  for (const auto& entry : gradcheck_registry()) {
    if (scope != "all" && scope != entry.op && scope != entry.module) continue;
    const auto start = std::chrono::steady_clock::now();
    GradcheckResult r;
    r.op = entry.op;
    r.module = entry.module;
    const GradErrors errors = entry.run();
    r.max_rel_error = errors.max();
    r.worst = errors.worst();
    r.passed = r.max_rel_error < kGradcheckTolerance;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (on_result) on_result(r);
    results.push_back(std::move(r));
  }
  if (results.empty()) throw std::invalid_argument("no gradient check matches scope '" + scope + "'");
  return results;
}

}  // namespace d2a2
