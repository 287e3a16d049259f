#pragma once

#include <string>
#include <vector>

#include "d2a2/model.hpp"

namespace d2a2 {

/// Histograms of three value sets over shared, equal-width bins; each column sums to 1.
struct FeatureHistogram {
  std::vector<double> bin_center;
  std::vector<double> rgb_before;
  std::vector<double> rgb_after;
  std::vector<double> depth;
  double bin_width = 0.0;

  void write_csv(const std::string& path) const;
};

FeatureHistogram feature_histogram(const Tensor<double>& rgb_before, const Tensor<double>& rgb_after,
                                   const Tensor<double>& depth, std::size_t bins = 64);

/// Earth mover's distance between two histograms on the same bins: sum |CDF_p - CDF_q| * width.
double wasserstein1(const std::vector<double>& p, const std::vector<double>& q, double bin_width);

/// Mean over channels, (N,C,H,W) -> (N,1,H,W).
Tensor<double> channel_mean(const Tensor<double>& t);
/// Min-max rescale to [0,1] (a constant map becomes 0).
Tensor<double> rescale_unit(const Tensor<double>& t);

struct ScaleDiagnostics {
  int scale_index = 0;
  double w1_before = 0.0;  // RGB features before domain alignment vs depth features
  double w1_after = 0.0;   // after domain alignment vs depth features
  std::vector<std::string> files;
};

/// Runs one forward pass on a single sample (rgb in [0,1], depth_lr normalized as in
/// training) and writes, per scale: rgb_before/rgb_after feature maps, the GC gate and the
/// attention map as 8-bit PGM, and the feature histogram CSV; plus summary.csv.
template <typename T>
std::vector<ScaleDiagnostics> diagnose(const D2A2Model<T>& model, const Tensor<double>& rgb,
                                       const Tensor<double>& depth_lr, int scale, const std::string& out_dir);

}  // namespace d2a2
