#include "d2a2/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "d2a2/layers.hpp"

namespace d2a2 {

template <typename T>
void adam_step(ParameterSet<T>& params, const AdamConfig& config) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& g = params[i].grad;
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (!std::isfinite(g[k])) throw NonFiniteGradient(params[i].name, k);
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = params[i];
    p.step += 1;
    const double t = static_cast<double>(p.step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      const double m = config.beta1 * p.moment1[k] + (1.0 - config.beta1) * g;
      const double v = config.beta2 * p.moment2[k] + (1.0 - config.beta2) * g * g;
      p.moment1[k] = static_cast<T>(m);
      p.moment2[k] = static_cast<T>(v);
      const double update = config.lr * (m / c1) / (std::sqrt(v / c2) + config.epsilon);
      p.value[k] = static_cast<T>(p.value[k] - update);
    }
  }
}

double rmse_native(const Tensor<double>& pred, const Tensor<double>& target) {
  require_same_shape(pred.shape(), target.shape(), "rmse");
  if (pred.empty()) throw ShapeError("rmse of empty maps");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(pred.size()));
}

double rmse(const Tensor<double>& pred, const Tensor<double>& target, const NormalizationRecord& record) {
  return rmse_native(record.denormalize(pred), record.denormalize(target));
}

std::string config_id(const ModelConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : config.to_text()) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void EvalReport::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "# config_id=" << config_id << "\n# scale=" << scale << "\n# units=" << to_string(units)
      << "\n# seconds=" << seconds << "\n";
  out << "sample,rmse\n" << std::setprecision(10);
  for (std::size_t i = 0; i < sample_rmse.size(); ++i) out << i << "," << sample_rmse[i] << "\n";
  out << "mean," << mean_rmse << "\n";
  if (!out) throw std::runtime_error("write to " + path + " failed");
}

Batch make_batch(const std::vector<const SamplePair*>& items) {
  std::vector<Tensor<double>> rgb, lr, hr;
  for (const SamplePair* p : items) {
    const auto rec = NormalizationRecord::from_depth(p->depth_lr);
    rgb.push_back(p->rgb_hr);
    lr.push_back(rec.normalize(p->depth_lr));
    hr.push_back(rec.normalize(p->depth_hr));
  }
  auto ptrs = [](const std::vector<Tensor<double>>& v) {
    std::vector<const Tensor<double>*> out;
    for (const auto& t : v) out.push_back(&t);
    return out;
  };
  return Batch{stack(ptrs(rgb)), stack(ptrs(lr)), stack(ptrs(hr))};
}

Batch draw_batch(const std::vector<SamplePair>& data, const TrainConfig& config, std::mt19937_64& rng) {
  if (data.empty()) throw std::invalid_argument("training set is empty");
  std::vector<SamplePair> items;
  const auto crop = static_cast<std::size_t>(config.crop_size);
  for (int b = 0; b < config.batch_size; ++b) {
    const auto idx = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(data.size()));
    const SamplePair& src = data[idx];
    const Shape& s = src.depth_hr.shape();
    SamplePair item = (crop == s.h && crop == s.w) ? src : random_crop(src, crop, rng);
    if (config.augment) item = augment(item, rng, true);
    items.push_back(std::move(item));
  }
  std::vector<const SamplePair*> ptrs;
  for (const auto& it : items) ptrs.push_back(&it);
  return make_batch(ptrs);
}

template <typename T>
Tensor<double> predict_native(const D2A2Model<T>& model, const SamplePair& pair) {
  const auto rec = NormalizationRecord::from_depth(pair.depth_lr);
  const Tensor<T> out = model.predict(pair.rgb_hr.template cast<T>(), rec.normalize(pair.depth_lr).template cast<T>(),
                                      pair.scale);
  return rec.denormalize(out.template cast<double>());
}

template <typename T>
EvalReport evaluate(const D2A2Model<T>& model, const std::vector<SamplePair>& samples) {
  const auto start = std::chrono::steady_clock::now();
  EvalReport report;
  report.config_id = config_id(model.config());
  if (!samples.empty()) {
    report.scale = samples.front().scale;
    report.units = samples.front().units;
  }
  double sum = 0.0;
  for (const auto& pair : samples) {
    const double e = rmse_native(predict_native(model, pair), pair.depth_hr);
    report.sample_rmse.push_back(e);
    sum += e;
  }
  report.mean_rmse = samples.empty() ? 0.0 : sum / static_cast<double>(samples.size());
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

template <typename T>
double dataset_l1(const D2A2Model<T>& model, const std::vector<SamplePair>& samples) {
  if (samples.empty()) throw std::invalid_argument("dataset_l1 of an empty set");
  double sum = 0.0;
  for (const auto& pair : samples) {
    const Batch b = make_batch({&pair});
    const Tensor<T> out = model.predict(b.rgb.cast<T>(), b.depth_lr.cast<T>(), pair.scale);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += std::abs(static_cast<double>(out[i]) - b.depth_hr[i]);
    sum += s / static_cast<double>(out.size());
  }
  return sum / static_cast<double>(samples.size());
}

template <typename T>
TrainResult train(D2A2Model<T>& model, const std::vector<SamplePair>& data, const TrainConfig& config,
                  const TrainOptions& options) {
  if (data.empty()) throw std::invalid_argument("training set is empty");
  const int scale = data.front().scale;
  config.validate(scale);
  for (const auto& p : data) {
    if (p.scale != scale) throw std::invalid_argument("training set mixes scale factors");
  }

  const bool write = !options.out_dir.empty();
  std::ofstream loss_csv;
  if (write) {
    std::filesystem::create_directories(options.out_dir);
    loss_csv.open(options.out_dir + "/loss.csv");
    if (!loss_csv) throw std::runtime_error("cannot write " + options.out_dir + "/loss.csv");
    loss_csv << "step,loss\n" << std::setprecision(9);
  }

  auto& params = model.parameters();
  std::vector<Tensor<T>> snapshot(params.size());
  const AdamConfig adam = AdamConfig::from(config);
  std::mt19937_64 rng(config.seed);
  TrainResult result;

  for (int step = 0; step < config.steps; ++step) {
    const Batch batch = draw_batch(data, config, rng);
    Tape<T> tape;
    const Var<T> rgb = tape.constant(batch.rgb.cast<T>());
    const Var<T> lr = tape.constant(batch.depth_lr.cast<T>());
    const Var<T> target = tape.constant(batch.depth_hr.cast<T>());
    Var<T> loss;
    std::string failure;
    try {
      loss = l1_loss(model.forward(rgb, lr, scale), target);
    } catch (const std::domain_error& e) {
      // Non-finite activations reached an op that rejects them (e.g. deformable offsets).
      failure = e.what();
    }
    const double value = loss ? static_cast<double>(loss.value()[0]) : std::numeric_limits<double>::quiet_NaN();
    if (!std::isfinite(value)) {
      if (step > 0) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i].value = snapshot[i];
      }
      result.halted = true;
      result.halt_reason = "non-finite loss at step " + std::to_string(step) + (failure.empty() ? "" : " (" + failure + ")");
      break;
    }
    params.zero_grad();
    tape.backward(loss);
    tape.clear();
    for (std::size_t i = 0; i < params.size(); ++i) snapshot[i] = params[i].value;
    try {
      adam_step(params, adam);
    } catch (const NonFiniteGradient& e) {
      result.halted = true;
      result.halt_reason = std::string(e.what()) + " at step " + std::to_string(step);
      break;
    }
    result.losses.push_back(value);
    if (write) loss_csv << step << "," << value << "\n";
    if (options.on_step) options.on_step(step, value);

    // Guard against an update that leaves non-finite parameters.
    bool finite = true;
    for (std::size_t i = 0; i < params.size() && finite; ++i) finite = params[i].value.all_finite();
    if (!finite) {
      for (std::size_t i = 0; i < params.size(); ++i) params[i].value = snapshot[i];
      result.halted = true;
      result.halt_reason = "non-finite parameters after step " + std::to_string(step);
      break;
    }
    if (write && config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0) {
      save_checkpoint(model, options.out_dir + "/step_" + std::to_string(step + 1) + ".ckpt");
    }
  }

  if (write) {
    result.checkpoint_path = options.out_dir + "/model.ckpt";
    save_checkpoint(model, result.checkpoint_path);
  }
  if (!options.holdout.empty()) {
    result.holdout_report = evaluate(model, options.holdout);
    result.has_holdout_report = true;
    if (write) result.holdout_report.write_csv(options.out_dir + "/holdout.csv");
  }
  return result;
}

template void adam_step(ParameterSet<float>&, const AdamConfig&);
template void adam_step(ParameterSet<double>&, const AdamConfig&);
template Tensor<double> predict_native(const D2A2Model<float>&, const SamplePair&);
template Tensor<double> predict_native(const D2A2Model<double>&, const SamplePair&);
template EvalReport evaluate(const D2A2Model<float>&, const std::vector<SamplePair>&);
template EvalReport evaluate(const D2A2Model<double>&, const std::vector<SamplePair>&);
template double dataset_l1(const D2A2Model<float>&, const std::vector<SamplePair>&);
template double dataset_l1(const D2A2Model<double>&, const std::vector<SamplePair>&);
template TrainResult train(D2A2Model<float>&, const std::vector<SamplePair>&, const TrainConfig&, const TrainOptions&);
template TrainResult train(D2A2Model<double>&, const std::vector<SamplePair>&, const TrainConfig&,
                           const TrainOptions&);

}  // namespace d2a2
