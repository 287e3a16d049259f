#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "d2a2/config.hpp"
#include "d2a2/data.hpp"
#include "d2a2/model.hpp"

namespace d2a2 {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamConfig from(const TrainConfig& c) { return {c.lr, c.beta1, c.beta2, c.adam_epsilon}; }
};

class NonFiniteGradient : public std::runtime_error {
 public:
  NonFiniteGradient(const std::string& parameter, std::size_t index)
      : std::runtime_error("non-finite gradient in parameter '" + parameter + "' at element " +
                           std::to_string(index)),
        parameter_(parameter) {}
  const std::string& parameter() const { return parameter_; }

 private:
  std::string parameter_;
};

/// One bias-corrected Adam update of every parameter from its .grad, with a fixed
/// learning rate. All gradients are checked first; on a non-finite value nothing
/// is modified and NonFiniteGradient names the offending parameter.
template <typename T>
void adam_step(ParameterSet<T>& params, const AdamConfig& config);

/// Root mean square error after denormalizing both maps with `record`.
double rmse(const Tensor<double>& pred, const Tensor<double>& target, const NormalizationRecord& record);
/// Root mean square error of maps already in native units.
double rmse_native(const Tensor<double>& pred, const Tensor<double>& target);

struct EvalReport {
  std::vector<double> sample_rmse;  // native units
  double mean_rmse = 0.0;
  int scale = 0;
  DepthUnits units = DepthUnits::Synthetic;
  std::string config_id;
  double seconds = 0.0;

  void write_csv(const std::string& path) const;
};

/// Stable short identifier of a model configuration (FNV-1a of its text form).
std::string config_id(const ModelConfig& config);

/// Full-image prediction in native depth units, normalizing with the LR input's range.
template <typename T>
Tensor<double> predict_native(const D2A2Model<T>& model, const SamplePair& pair);

template <typename T>
EvalReport evaluate(const D2A2Model<T>& model, const std::vector<SamplePair>& samples);

/// Mean full-image L1 loss in normalized units over `samples`, without augmentation.
template <typename T>
double dataset_l1(const D2A2Model<T>& model, const std::vector<SamplePair>& samples);

/// Normalized network inputs and target for one batch.
struct Batch {
  Tensor<double> rgb;
  Tensor<double> depth_lr;
  Tensor<double> depth_hr;
};

/// Draws batch_size items: uniform sample index, random crop (skipped when the
/// crop covers the image), optional dihedral augmentation, per-item normalization.
Batch draw_batch(const std::vector<SamplePair>& data, const TrainConfig& config, std::mt19937_64& rng);
/// Normalizes whole samples in order (no crop, no augmentation).
Batch make_batch(const std::vector<const SamplePair*>& items);

struct TrainOptions {
  std::string out_dir;  // empty: write nothing
  std::vector<SamplePair> holdout;
  std::function<void(int step, double loss)> on_step;
};

struct TrainResult {
  std::vector<double> losses;  // loss of each completed step, before its update
  bool halted = false;
  std::string halt_reason;
  std::string checkpoint_path;
  EvalReport holdout_report;
  bool has_holdout_report = false;
};

/// Deterministic given config.seed and a single worker. Writes loss.csv, periodic
/// checkpoints and model.ckpt to out_dir. A non-finite loss or gradient halts
/// training and restores the parameters of the last finite step.
template <typename T>
TrainResult train(D2A2Model<T>& model, const std::vector<SamplePair>& data, const TrainConfig& config,
                  const TrainOptions& options = {});

}  // namespace d2a2
