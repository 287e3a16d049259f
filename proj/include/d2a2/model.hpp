#pragma once

#include <memory>
#include <string>
#include <vector>

#include "d2a2/config.hpp"
#include "d2a2/dda.hpp"
#include "d2a2/layers.hpp"
#include "d2a2/mfa.hpp"

namespace d2a2 {

/// Per-scale intermediates captured during a forward pass.
template <typename T>
struct ScaleTrace {
  Var<T> rgb_features;
  Var<T> depth_features;
  DdaTrace<T> dda;
  MfaTrace<T> mfa;
};

template <typename T>
struct ForwardTrace {
  Var<T> depth_up;
  Var<T> residual;
  std::vector<ScaleTrace<T>> scales;
};

/// Multi-scale guided depth super-resolution network: RGB and depth encoders,
/// per-scale alignment and aggregation, a bilinear+conv decoder, a residual
/// head and a global bicubic skip.
template <typename T>
class D2A2Model {
 public:
  struct Scale {
    Conv<T> rgb0, rgb1;
    Conv<T> depth0, depth1;
    DdaBlock<T> dda;
    MfaBlock<T> mfa;
    Conv<T> up;  // C[i+1] -> C[i]; unused at the coarsest scale
  };

  /// Deterministic given config.seed.
  explicit D2A2Model(const ModelConfig& config);

  D2A2Model(const D2A2Model&) = delete;
  D2A2Model& operator=(const D2A2Model&) = delete;
  D2A2Model(D2A2Model&&) noexcept = default;
  D2A2Model& operator=(D2A2Model&&) noexcept = default;

  const ModelConfig& config() const { return config_; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }
  const std::vector<Scale>& scales() const { return scales_; }

  /// Zeroes every head parameter, so the output is exactly the bicubic upsample.
  void zero_head();

  /// rgb (N,3,H,W), depth_lr (N,1,H/s,W/s) -> (N,1,H,W). H and W must be divisible by
  /// s and by 2^(num_scales-1).
  Var<T> forward(const Var<T>& rgb, const Var<T>& depth_lr, int scale, ForwardTrace<T>* trace = nullptr) const;

  /// Inference without recording a graph.
  Tensor<T> predict(const Tensor<T>& rgb, const Tensor<T>& depth_lr, int scale) const;

 private:
  ModelConfig config_;
  ParameterSet<T> params_;
  std::vector<Scale> scales_;
  Conv<T> head0_;
  Conv<T> head1_;
};

/// Validates the model-level input contract; throws ShapeError / std::invalid_argument.
void check_forward_shapes(const ModelConfig& config, const Shape& rgb, const Shape& depth_lr, int scale);

/// Checkpoint layout (little endian):
///   "D2A2CKPT" | u8 version | u8 element bytes (4 or 8) | u32 config length | config text |
///   u32 entry count | entries { u32 name length | name | u32 n,c,h,w } | values per entry in table order.
inline constexpr std::uint8_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
void save_checkpoint(const D2A2Model<T>& model, const std::string& path);

/// Rebuilds the model from the embedded config, then fills every parameter.
template <typename T>
D2A2Model<T> load_checkpoint(const std::string& path);

/// Loads into an existing model; the embedded config must equal model.config().
template <typename T>
void load_checkpoint_into(D2A2Model<T>& model, const std::string& path);

/// Reads only the embedded configuration.
ModelConfig read_checkpoint_config(const std::string& path);

}  // namespace d2a2
