#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "d2a2/ablation.hpp"
#include "d2a2/diagnostics.hpp"
#include "d2a2/gradcheck.hpp"
#include "d2a2/image_io.hpp"
#include "d2a2/train.hpp"

using namespace d2a2;

namespace {

constexpr std::size_t kSyntheticEvalSize = 64;

int infer_scale(const Tensor<double>& rgb, const Tensor<double>& depth_lr) {
  const Shape& r = rgb.shape();
  const Shape& d = depth_lr.shape();
  if (d.h == 0 || d.w == 0 || r.h % d.h != 0 || r.w % d.w != 0 || r.h / d.h != r.w / d.w) {
    throw ShapeError("rgb " + r.str() + " is not an integer multiple of depth " + d.str());
  }
  return static_cast<int>(r.h / d.h);
}

void read_guided_inputs(const std::string& rgb_path, const std::string& depth_path, Tensor<double>& rgb,
                        Tensor<double>& depth_lr) {
  rgb = read_image(rgb_path);
  depth_lr = read_image(depth_path);
  if (rgb.shape().c != 3) throw ImageError(rgb_path + " is not an RGB (P6) image");
  if (depth_lr.shape().c != 1) throw ImageError(depth_path + " is not a grayscale (P5) image");
}

int cmd_train(const std::string& config_path, const std::string& data, int scale, const std::string& out,
              const std::optional<std::uint64_t>& seed, const std::optional<int>& steps,
              const std::optional<int>& crop_size) {
  ModelConfig mc;
  TrainConfig tc;
  if (!config_path.empty()) load_config_file(config_path, &mc, &tc);
  if (seed) {
    mc.seed = *seed;
    tc.seed = *seed;
  }
  if (steps) tc.steps = *steps;
  if (crop_size) tc.crop_size = *crop_size;
  tc.validate(scale);

  const std::size_t multiple = std::max<std::size_t>(static_cast<std::size_t>(scale), std::size_t{1}
                                                                                          << (mc.num_scales - 1));
  std::vector<SamplePair> train_set = load_dataset(data, scale, multiple, static_cast<std::size_t>(tc.synthetic_size));
  std::vector<SamplePair> holdout;
  if (is_synthetic_spec(data)) {
    holdout = synthetic_set(std::max<std::size_t>(1, train_set.size() / 10), static_cast<std::size_t>(tc.synthetic_size),
                            scale, kHoldoutSeedBase);
  } else if (train_set.size() >= 2) {
    const std::size_t n = (train_set.size() + 9) / 10;
    holdout.assign(train_set.end() - static_cast<std::ptrdiff_t>(n), train_set.end());
    train_set.erase(train_set.end() - static_cast<std::ptrdiff_t>(n), train_set.end());
  }

  std::filesystem::create_directories(out);
  {
    std::ofstream cfg(out + "/config.txt");
    cfg << "# model\n" << mc.to_text() << "# training (desk-scale step count, not the reference epoch budget)\n"
        << tc.to_text();
  }
  D2A2Model<float> model(mc);
  std::printf("training %zu parameters on %zu pairs (x%d), %d steps, crop %d, batch %d\n", model.parameters().numel(),
              train_set.size(), scale, tc.steps, tc.crop_size, tc.batch_size);
  TrainOptions options;
  options.out_dir = out;
  options.holdout = holdout;
  const int every = std::max(1, tc.steps / 20);
  options.on_step = [&](int step, double loss) {
    if (step % every == 0 || step + 1 == tc.steps) {
      std::printf("step %6d  loss %.6f\n", step, loss);
      std::fflush(stdout);
    }
  };
  const TrainResult result = train(model, train_set, tc, options);
  if (result.has_holdout_report) {
    std::printf("held-out mean RMSE %.6g (%s, %zu samples)\n", result.holdout_report.mean_rmse,
                to_string(result.holdout_report.units).c_str(), result.holdout_report.sample_rmse.size());
  }
  std::printf("checkpoint %s\n", result.checkpoint_path.c_str());
  if (result.halted) {
    std::fprintf(stderr, "training halted: %s (last good parameters saved)\n", result.halt_reason.c_str());
    return 2;
  }
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data, int scale, const std::string& report_path) {
  const D2A2Model<float> model = load_checkpoint<float>(checkpoint);
  const std::size_t multiple = std::max<std::size_t>(static_cast<std::size_t>(scale),
                                                     std::size_t{1} << (model.config().num_scales - 1));
  const auto samples = load_dataset(data, scale, multiple, kSyntheticEvalSize, kHoldoutSeedBase);
  const EvalReport report = evaluate(model, samples);
  report.write_csv(report_path);
  std::printf("mean RMSE %.6g over %zu samples (%s, x%d) in %.2fs\n", report.mean_rmse, report.sample_rmse.size(),
              to_string(report.units).c_str(), scale, report.seconds);
  return 0;
}

int cmd_infer(const std::string& checkpoint, const std::string& rgb_path, const std::string& depth_path, int scale,
              const std::string& out) {
  Tensor<double> rgb, depth_lr;
  read_guided_inputs(rgb_path, depth_path, rgb, depth_lr);
  if (infer_scale(rgb, depth_lr) != scale) {
    throw ShapeError("--scale " + std::to_string(scale) + " does not match the input sizes " + rgb.shape().str() +
                     " and " + depth_lr.shape().str());
  }
  const D2A2Model<float> model = load_checkpoint<float>(checkpoint);
  SamplePair pair;
  pair.rgb_hr = rgb;
  pair.depth_lr = depth_lr;
  pair.scale = scale;
  write_image(predict_native(model, pair), out);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_gradcheck(const std::string& op) {
  bool ok = true;
  double total = 0.0;
  std::printf("%-20s %-16s %-12s %-8s %s\n", "op", "module", "max_rel_err", "seconds", "status");
  run_gradcheck(op, [&](const GradcheckResult& r) {
    std::printf("%-20s %-16s %-12.3e %-8.2f %s%s\n", r.op.c_str(), r.module.c_str(), r.max_rel_error, r.seconds,
                r.passed ? "pass" : "FAIL", r.passed ? "" : ("  (worst: " + r.worst + ")").c_str());
    std::fflush(stdout);
    ok = ok && r.passed;
    total += r.seconds;
  });
  std::printf("%s in %.2fs (tolerance %.0e)\n", ok ? "all passed" : "FAILURES", total, kGradcheckTolerance);
  return ok ? 0 : 1;
}

int cmd_diagnose(const std::string& checkpoint, const std::string& rgb_path, const std::string& depth_path,
                 const std::string& out) {
  Tensor<double> rgb, depth_lr;
  read_guided_inputs(rgb_path, depth_path, rgb, depth_lr);
  const int scale = infer_scale(rgb, depth_lr);
  const D2A2Model<float> model = load_checkpoint<float>(checkpoint);
  const auto record = NormalizationRecord::from_depth(depth_lr);
  const auto scales = diagnose(model, rgb, record.normalize(depth_lr), scale, out);
  for (const auto& d : scales) {
    std::printf("scale %d: W1(rgb, depth) before alignment %.6g, after %.6g\n", d.scale_index, d.w1_before,
                d.w1_after);
  }
  return 0;
}

int cmd_ablate(int table, const std::string& out, const std::string& config_path, const std::optional<int>& steps) {
  DeskProtocol protocol = desk_protocol();
  if (!config_path.empty()) load_config_file(config_path, &protocol.model, &protocol.train);
  if (steps) protocol.train.steps = *steps;
  protocol.train.validate(protocol.scale);
  std::filesystem::create_directories(out);
  const auto rows = ablation_rows(table, protocol.model);
  std::printf("table %d: %zu rows, %d synthetic pairs, %d steps each\n", table, rows.size(), protocol.pairs,
              protocol.train.steps);
  const auto results = run_ablation(rows, protocol, [](const AblationResult& r) {
    std::printf("%-32s final L1 %.6f  tail %.6f  %.1fs\n", r.row.label.c_str(), r.final_loss, r.tail_loss, r.seconds);
    std::fflush(stdout);
  });
  const std::string path = out + "/table" + std::to_string(table) + ".csv";
  write_ablation_csv(results, path);
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Guided depth super-resolution: training, evaluation and verification tools"};
  app.require_subcommand(1);

  std::string config_path, data, out, checkpoint, report, rgb, depth_lr, op = "all";
  int scale = 4;
  int table = 2;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps, crop;

  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoints and a loss trace");
  train_cmd->add_option("--config", config_path, "key=value config file");
  train_cmd->add_option("--data", data, "manifest path or synthetic:N")->required();
  train_cmd->add_option("--scale", scale, "upsampling factor")->required()->check(CLI::IsMember({4, 8, 16}));
  train_cmd->add_option("--out", out, "output directory")->required();
  train_cmd->add_option("--seed", seed, "seed for initialization and data sampling");
  train_cmd->add_option("--steps", steps, "number of optimizer steps");
  train_cmd->add_option("--crop", crop, "training crop size");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate RMSE in native depth units");
  eval_cmd->add_option("--checkpoint", checkpoint)->required();
  eval_cmd->add_option("--data", data, "manifest path or synthetic:N")->required();
  eval_cmd->add_option("--scale", scale)->required()->check(CLI::IsMember({4, 8, 16}));
  eval_cmd->add_option("--report", report, "output CSV")->required();

  auto* infer_cmd = app.add_subcommand("infer", "Super-resolve one depth map");
  infer_cmd->add_option("--checkpoint", checkpoint)->required();
  infer_cmd->add_option("--rgb", rgb, "HR guide image (PPM)")->required();
  infer_cmd->add_option("--depth-lr", depth_lr, "LR depth map (PGM)")->required();
  infer_cmd->add_option("--scale", scale)->required();
  infer_cmd->add_option("--out", out, "output PGM (16-bit)")->required();

  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  grad_cmd->add_option("--op", op, "op name, module name or all");

  auto* diag_cmd = app.add_subcommand("diagnose", "Export alignment and attention diagnostics");
  diag_cmd->add_option("--checkpoint", checkpoint)->required();
  diag_cmd->add_option("--rgb", rgb)->required();
  diag_cmd->add_option("--depth-lr", depth_lr)->required();
  diag_cmd->add_option("--out", out, "output directory")->required();

  auto* ablate_cmd = app.add_subcommand("ablate", "Train every row of an ablation table at desk scale");
  ablate_cmd->add_option("--table", table)->required()->check(CLI::IsMember({2, 3, 4}));
  ablate_cmd->add_option("--out", out, "output directory")->required();
  ablate_cmd->add_option("--config", config_path, "overrides of the desk protocol");
  ablate_cmd->add_option("--steps", steps, "steps per row");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return cmd_train(config_path, data, scale, out, seed, steps, crop);
    if (*eval_cmd) return cmd_eval(checkpoint, data, scale, report);
    if (*infer_cmd) return cmd_infer(checkpoint, rgb, depth_lr, scale, out);
    if (*grad_cmd) return cmd_gradcheck(op);
    if (*diag_cmd) return cmd_diagnose(checkpoint, rgb, depth_lr, out);
    if (*ablate_cmd) return cmd_ablate(table, out, config_path, steps);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
