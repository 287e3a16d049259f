#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "d2a2/tensor.hpp"

namespace d2a2 {

enum class DepthUnits { Centimeters, Meters, Disparity, Synthetic };

std::string to_string(DepthUnits units);
DepthUnits parse_depth_units(const std::string& text);

/// One training or evaluation item. Invariant: depth_lr == degrade(depth_hr, scale).
struct SamplePair {
  Tensor<double> depth_hr;  // (1,1,H,W), native units
  Tensor<double> rgb_hr;    // (1,3,H,W), [0,1]
  Tensor<double> depth_lr;  // (1,1,H/s,W/s)
  int scale = 4;
  DepthUnits units = DepthUnits::Synthetic;
  double depth_min = 0.0;
  double depth_max = 1.0;
};

/// Per-sample min-max scaling of depth to [0,1]. Bounds come from the LR input,
/// which is all that is available at inference time.
struct NormalizationRecord {
  double depth_min = 0.0;
  double depth_max = 1.0;

  static NormalizationRecord from_depth(const Tensor<double>& depth);

  double range() const { return depth_max > depth_min ? depth_max - depth_min : 1.0; }
  double normalize(double v) const { return (v - depth_min) / range(); }
  double denormalize(double v) const { return v * range() + depth_min; }
  Tensor<double> normalize(const Tensor<double>& t) const;
  Tensor<double> denormalize(const Tensor<double>& t) const;
};

/// Bicubic downsampling by an integer factor with the library kernel.
Tensor<double> degrade(const Tensor<double>& depth_hr, int scale);

/// Builds a pair, clamping depth to [depth_min, depth_max] and deriving depth_lr.
SamplePair make_pair(Tensor<double> depth_hr, Tensor<double> rgb_hr, int scale, DepthUnits units, double depth_min,
                     double depth_max);

/// Element of the dihedral group of the square: horizontal flip, then vertical
/// flip, then `quarter_turns` counter-clockwise quarter turns.
struct Dihedral {
  bool hflip = false;
  bool vflip = false;
  int quarter_turns = 0;

  /// The transform equal to applying `first` and then `second`.
  static Dihedral compose(const Dihedral& first, const Dihedral& second);
  friend bool operator==(const Dihedral&, const Dihedral&) = default;
};

Tensor<double> apply_dihedral(const Tensor<double>& t, const Dihedral& d);
SamplePair apply_dihedral(const SamplePair& pair, const Dihedral& d);

/// Draws h-flip (p=0.5), v-flip (p=0.5) and a uniform quarter-turn count, and applies them jointly.
Dihedral draw_dihedral(std::mt19937_64& rng, bool rotations = true);
SamplePair augment(const SamplePair& pair, std::mt19937_64& rng, bool rotations = true);

/// Square crop whose origin lies on the scale grid; depth_lr is re-derived from the crop.
SamplePair random_crop(const SamplePair& pair, std::size_t size, std::mt19937_64& rng);
SamplePair crop(const SamplePair& pair, std::size_t top, std::size_t left, std::size_t height, std::size_t width);

/// Synthetic scene plus the region label map that produced both modalities.
struct SyntheticScene {
  SamplePair pair;
  std::vector<int> labels;  // H*W region ids
};

/// Piecewise-smooth depth (overlapping rectangles/ellipses at distinct levels on
/// a tilted background) and an RGB image sharing the region boundaries but
/// carrying stripe/checker texture unrelated to depth.
SyntheticScene synth_scene_with_labels(std::uint64_t seed, std::size_t size, int scale);
SamplePair synth_scene(std::uint64_t seed, std::size_t size, int scale);

/// Tab-separated lines: depth_path, rgb_path, units, depth_min, depth_max.
struct ManifestEntry {
  std::string depth_path;
  std::string rgb_path;
  DepthUnits units = DepthUnits::Synthetic;
  double depth_min = 0.0;
  double depth_max = 0.0;
};

std::vector<ManifestEntry> read_manifest(const std::string& path);
/// Loads every pair, cropping top-left to the largest extent divisible by `multiple`.
std::vector<SamplePair> load_manifest_pairs(const std::string& path, int scale, std::size_t multiple);

/// Scenes with seeds first_seed, first_seed+1, ...
std::vector<SamplePair> synthetic_set(std::size_t count, std::size_t size, int scale, std::uint64_t first_seed = 0);

/// Seed offset of synthetic evaluation scenes, disjoint from training seeds.
inline constexpr std::uint64_t kHoldoutSeedBase = 1000000;

/// "synthetic:N" (N scenes of synthetic_size pixels starting at first_seed) or a manifest path.
std::vector<SamplePair> load_dataset(const std::string& spec, int scale, std::size_t multiple,
                                     std::size_t synthetic_size, std::uint64_t first_seed = 0);
bool is_synthetic_spec(const std::string& spec);

/// Stacks (1,C,H,W) tensors into (N,C,H,W).
Tensor<double> stack(const std::vector<const Tensor<double>*>& items);

}  // namespace d2a2
