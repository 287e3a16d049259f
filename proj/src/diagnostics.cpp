#include "d2a2/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>

#include "d2a2/image_io.hpp"

namespace d2a2 {

void FeatureHistogram::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "bin_center,rgb_before,rgb_after,depth\n" << std::setprecision(10);
  for (std::size_t i = 0; i < bin_center.size(); ++i) {
    out << bin_center[i] << "," << rgb_before[i] << "," << rgb_after[i] << "," << depth[i] << "\n";
  }
  if (!out) throw std::runtime_error("write to " + path + " failed");
}

FeatureHistogram feature_histogram(const Tensor<double>& rgb_before, const Tensor<double>& rgb_after,
                                   const Tensor<double>& depth, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("histogram needs at least one bin");
  if (rgb_before.empty() || rgb_after.empty() || depth.empty()) throw ShapeError("histogram of an empty tensor");
  double lo = INFINITY, hi = -INFINITY;
  for (const Tensor<double>* t : {&rgb_before, &rgb_after, &depth}) {
    const auto [a, b] = std::minmax_element(t->vec().begin(), t->vec().end());
    lo = std::min(lo, *a);
    hi = std::max(hi, *b);
  }
  if (!(hi > lo)) hi = lo + 1.0;
  FeatureHistogram h;
  h.bin_width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t i = 0; i < bins; ++i) h.bin_center.push_back(lo + (static_cast<double>(i) + 0.5) * h.bin_width);
  auto fill = [&](const Tensor<double>& t) {
    std::vector<double> counts(bins, 0.0);
    for (double v : t.vec()) {
      const auto k = static_cast<std::size_t>((v - lo) / h.bin_width);
      counts[std::min(k, bins - 1)] += 1.0;
    }
    for (double& c : counts) c /= static_cast<double>(t.size());
    return counts;
  };
  h.rgb_before = fill(rgb_before);
  h.rgb_after = fill(rgb_after);
  h.depth = fill(depth);
  return h;
}

double wasserstein1(const std::vector<double>& p, const std::vector<double>& q, double bin_width) {
  if (p.size() != q.size()) throw std::invalid_argument("wasserstein1: histograms differ in bin count");
  double cp = 0.0, cq = 0.0, total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    cp += p[i];
    cq += q[i];
    total += std::abs(cp - cq);
  }
  return total * bin_width;
}

Tensor<double> channel_mean(const Tensor<double>& t) {
  const Shape& s = t.shape();
  Tensor<double> out(Shape{s.n, 1, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n) {
    double* dst = out.plane(n, 0);
    for (std::size_t c = 0; c < s.c; ++c) {
      const double* src = t.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) dst[i] += src[i];
    }
    for (std::size_t i = 0; i < s.plane(); ++i) dst[i] /= static_cast<double>(s.c);
  }
  return out;
}

Tensor<double> rescale_unit(const Tensor<double>& t) {
  Tensor<double> out(t.shape());
  if (t.empty()) return out;
  const auto [a, b] = std::minmax_element(t.vec().begin(), t.vec().end());
  const double range = *b - *a;
  if (range <= 0.0) return out;
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = (t[i] - *a) / range;
  return out;
}

namespace {

/// Broadcasts a map of extent (1,C|1,H|1,W|1) to (1,1,H,W) after averaging channels.
Tensor<double> spatial_map(const Tensor<double>& map, std::size_t h, std::size_t w) {
  const Tensor<double> m = channel_mean(map);
  Tensor<double> out(Shape{1, 1, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      out.at(0, 0, y, x) = m.at(0, 0, m.shape().h == 1 ? 0 : y, m.shape().w == 1 ? 0 : x);
    }
  return out;
}

}  // namespace

template <typename T>
std::vector<ScaleDiagnostics> diagnose(const D2A2Model<T>& model, const Tensor<double>& rgb,
                                       const Tensor<double>& depth_lr, int scale, const std::string& out_dir) {
  if (rgb.shape().n != 1) throw ShapeError("diagnose expects a single sample, got " + rgb.shape().str());
  check_forward_shapes(model.config(), rgb.shape(), depth_lr.shape(), scale);
  std::filesystem::create_directories(out_dir);

  Tape<T> tape;
  tape.set_recording(false);
  ForwardTrace<T> trace;
  model.forward(tape.constant(rgb.cast<T>()), tape.constant(depth_lr.cast<T>()), scale, &trace);

  std::vector<ScaleDiagnostics> result;
  for (std::size_t i = 0; i < trace.scales.size(); ++i) {
    const ScaleTrace<T>& st = trace.scales[i];
    ScaleDiagnostics d;
    d.scale_index = static_cast<int>(i);
    const std::string prefix = out_dir + "/scale" + std::to_string(i) + "_";
    auto emit = [&](const Tensor<double>& unit, const std::string& name) {
      write_gray8(unit, prefix + name);
      d.files.push_back(prefix + name);
    };

    const Tensor<double> before = st.rgb_features.value().template cast<double>();
    const Tensor<double> aligned = st.dda.rgb_domain_aligned.value().template cast<double>();
    const Tensor<double> after = st.dda.rgb_out.value().template cast<double>();
    const Tensor<double> depth = st.depth_features.value().template cast<double>();
    const std::size_t h = before.shape().h, w = before.shape().w;

    emit(rescale_unit(channel_mean(before)), "rgb_before.pgm");
    emit(rescale_unit(channel_mean(after)), "rgb_after.pgm");
    if (st.mfa.gate) emit(spatial_map(st.mfa.gate.value().template cast<double>(), h, w), "gate.pgm");
    if (st.mfa.attention) {
      emit(spatial_map(st.mfa.attention.value().template cast<double>(), h, w), "attention.pgm");
    }

    const FeatureHistogram hist = feature_histogram(before, aligned, depth);
    hist.write_csv(prefix + "histogram.csv");
    d.files.push_back(prefix + "histogram.csv");
    d.w1_before = wasserstein1(hist.rgb_before, hist.depth, hist.bin_width);
    d.w1_after = wasserstein1(hist.rgb_after, hist.depth, hist.bin_width);
    result.push_back(std::move(d));
  }

  std::ofstream summary(out_dir + "/summary.csv");
  if (!summary) throw std::runtime_error("cannot write " + out_dir + "/summary.csv");
  summary << "scale,w1_before,w1_after\n" << std::setprecision(10);
  for (const auto& d : result) summary << d.scale_index << "," << d.w1_before << "," << d.w1_after << "\n";
  return result;
}

template std::vector<ScaleDiagnostics> diagnose(const D2A2Model<float>&, const Tensor<double>&, const Tensor<double>&,
                                                int, const std::string&);
template std::vector<ScaleDiagnostics> diagnose(const D2A2Model<double>&, const Tensor<double>&,
                                                const Tensor<double>&, int, const std::string&);

}  // namespace d2a2
