// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "d2a2/ablation.hpp"
#include "d2a2/dda.hpp"
#include "d2a2/diagnostics.hpp"
#include "d2a2/gradcheck.hpp"
#include "d2a2/image_io.hpp"
#include "d2a2/model.hpp"
#include "d2a2/train.hpp"
#include "oracles.hpp"

using namespace d2a2;
namespace fs = std::filesystem;
using oracle::random_tensor;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [violated]");
  }
};

std::vector<char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Gradient suite over every registered operation.
Outcome gradient_suite() {
  Outcome out;
  const auto start = Clock::now();
  const auto results = run_gradcheck("all");
  const double secs = seconds_since(start);
  double worst = 0.0;
  std::string worst_op;
  std::set<std::string> ops;
  for (const auto& r : results) {
    ops.insert(r.op);
    if (!(r.max_rel_error <= worst)) {
      worst = r.max_rel_error;
      worst_op = r.op;
    }
  }
  std::string missing;
  for (const char* op : {"conv2d", "linear", "add", "mul", "div", "sigmoid", "leaky_relu", "channel_stats",
                         "bilinear_sample", "bicubic_resize", "lda_forward", "predict_offsets", "deform_conv2d",
                         "gated_conv", "pixel_attention", "l1_loss"}) {
    if (!ops.count(op)) missing += std::string(missing.empty() ? "" : ",") + op;
  }
  out.require(missing.empty(), std::to_string(results.size()) + " ops" + (missing.empty() ? "" : ", missing " + missing));
  out.require(worst < 1e-4, "max rel error " + fmt(worst) + " (" + worst_op + ") < 1e-4");
  out.require(secs < 300.0, "runtime " + fmt(secs) + " s < 300 s");
  return out;
}

Tensor<double> run_deform(const Tensor<double>& x, const Tensor<double>& off, const Tensor<double>& mod,
                          const Tensor<double>& w, const Tensor<double>& b) {
  Tape<double> tape;
  tape.set_recording(false);
  return deform_conv2d(tape.constant(x), tape.constant(off), tape.constant(mod), tape.constant(w), tape.constant(b))
      .value();
}

Outcome deform_reduction() {
  Outcome out;
  double worst_plain = 0.0, worst_shift = 0.0;
  std::mt19937_64 rng(2024);
  for (std::uint64_t i = 0; i < 50; ++i) {
    const std::size_t n = 1 + rng() % 2, c = 1 + rng() % 4, oc = 1 + rng() % 4, h = 3 + rng() % 8, w = 3 + rng() % 8;
    const auto x = random_tensor({n, c, h, w}, 10 * i + 1);
    const auto wt = random_tensor({oc, c, 3, 3}, 10 * i + 2);
    const auto b = random_tensor({1, oc, 1, 1}, 10 * i + 3);
    Tensor<double> zero({n, 18, h, w});
    Tensor<double> ones({n, 9, h, w});
    for (auto& v : ones.vec()) v = 1.0;
    worst_plain = std::max(worst_plain, oracle::max_abs_diff(run_deform(x, zero, ones, wt, b), oracle::conv(x, wt, b, 1, 1)));

    Tensor<double> shift({n, 18, h, w});
    for (auto& v : shift.vec()) v = static_cast<double>(static_cast<int>(rng() % 5) - 2);
    const auto mod = random_tensor({n, 9, h, w}, 10 * i + 4, 0, 1);
    worst_shift = std::max(worst_shift, oracle::max_abs_diff(run_deform(x, shift, mod, wt, b),
                                                             oracle::deform(x, shift, mod, wt, b)));
  }
  out.require(worst_plain < 1e-6, "zero offsets vs conv2d max " + fmt(worst_plain) + " < 1e-6 over 50");
  out.require(worst_shift < 1e-6, "integer shifts vs direct sum max " + fmt(worst_shift) + " < 1e-6 over 50");
  return out;
}

double plane_mean(const Tensor<double>& t, std::size_t n, std::size_t c) {
  const double* p = t.plane(n, c);
  double s = 0.0;
  for (std::size_t i = 0; i < t.shape().plane(); ++i) s += p[i];
  return s / static_cast<double>(t.shape().plane());
}

std::vector<double> mlp_by_hand(const Mlp<double>& mlp, const std::vector<double>& x) {
  auto affine = [](const Linear<double>& l, const std::vector<double>& in) {
    const Shape& s = l.weight->value.shape();
    std::vector<double> r(s.n);
    for (std::size_t o = 0; o < s.n; ++o) {
      double acc = l.bias->value[o];
      for (std::size_t i = 0; i < s.c; ++i) acc += l.weight->value[o * s.c + i] * in[i];
      r[o] = acc;
    }
    return r;
  };
  auto h = affine(mlp.fc0, x);
  for (auto& v : h) v = v > 0 ? v : mlp.slope * v;
  return affine(mlp.fc1, h);
}

Outcome lda_contract() {
  Outcome out;
  double worst_mean = 0.0, worst_identity = 0.0;
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    const std::size_t c = 1 + trial % 6, n = 1 + trial % 3, h = 3 + trial % 5, w = 4 + trial % 7;
    ParameterSet<double> set;
    auto lda = LdaParams<double>::make(set, "lda", c, 0.2, 1e-5);
    for (std::size_t i = 0; i < set.size(); ++i) set[i].value = random_tensor(set[i].value.shape(), 500 * trial + i, -0.5, 0.5);
    const auto rgb = random_tensor({n, c, h, w}, 7000 + trial, -3, 3);
    const auto depth = random_tensor({n, c, h, w}, 8000 + trial, -1, 2);
    Tape<double> tape;
    tape.set_recording(false);
    const auto res = lda_forward(tape.constant(rgb), tape.constant(depth), lda).value();
    for (std::size_t b = 0; b < n; ++b) {
      std::vector<double> mu(c);
      for (std::size_t k = 0; k < c; ++k) mu[k] = plane_mean(depth, b, k);
      const auto target = mlp_by_hand(lda.mlp_mu, mu);
      for (std::size_t k = 0; k < c; ++k) worst_mean = std::max(worst_mean, std::abs(plane_mean(res, b, k) - target[k]));
    }

    lda.mlp_mu.set_identity(10.0);
    lda.mlp_sigma.set_identity(10.0);
    const auto f = random_tensor({n, c, h, w}, 9000 + trial, -2, 2);
    worst_identity = std::max(worst_identity,
                              oracle::max_abs_diff(lda_forward(tape.constant(f), tape.constant(f), lda).value(), f));
  }
  out.require(worst_mean < 1e-5, "mean vs mlp_mu(depth mean) max " + fmt(worst_mean) + " < 1e-5 over 50");
  out.require(worst_identity < 1e-5, "identity MLPs, equal inputs max " + fmt(worst_identity) + " < 1e-5 over 50");
  return out;
}

Outcome global_skip() {
  Outcome out;
  D2A2Model<double> model{ModelConfig{}};
  model.zero_head();
  for (int s : {4, 8, 16}) {
    const auto lr = random_tensor({1, 1, 4, 4}, 40 + s, 0, 1);
    const auto hr = static_cast<std::size_t>(4 * s);
    const auto rgb = random_tensor({1, 3, hr, hr}, 60 + s, 0, 1);
    const auto pred = model.predict(rgb, lr, s);
    const bool same = pred.vec() == bicubic_resize(lr, Ratio::up(s)).vec();
    out.require(same, "x" + std::to_string(s) + (same ? " bitwise equal" : " differs by " +
                                                      fmt(oracle::max_abs_diff(pred, bicubic_resize(lr, Ratio::up(s))))));
  }
  return out;
}

// Shared between the overfit and diagnostics criteria.
struct OverfitRun {
  D2A2Model<float> model{ModelConfig{}};
  SamplePair pair = synth_scene(0, 64, 4);
  double initial = 0.0;
  double final = 0.0;
  double head50 = 0.0;
  double tail50 = 0.0;
  double seconds = 0.0;
  bool halted = false;
};

TrainConfig overfit_config() {
  TrainConfig t;
  t.steps = 500;
  t.lr = 1e-3;
  t.batch_size = 1;
  t.crop_size = 64;
  t.seed = 0;
  t.augment = false;
  return t;
}

OverfitRun& overfit_run() {
  static std::optional<OverfitRun> run;
  if (!run) {
    run.emplace();
    const std::vector<SamplePair> data{run->pair};
    run->initial = dataset_l1(run->model, data);
    const auto start = Clock::now();
    const auto result = train(run->model, data, overfit_config());
    run->seconds = seconds_since(start);
    run->final = dataset_l1(run->model, data);
    run->halted = result.halted;
    const auto& l = result.losses;
    const std::size_t k = std::min<std::size_t>(50, l.size());
    for (std::size_t i = 0; i < k; ++i) {
      run->head50 += l[i] / static_cast<double>(k);
      run->tail50 += l[l.size() - k + i] / static_cast<double>(k);
    }
  }
  return *run;
}

Outcome overfit() {
  Outcome out;
  const auto& run = overfit_run();
  out.require(!run.halted, "500 steps completed");
  const double ratio = run.final / run.initial;
  out.require(ratio < 0.05, "L1 " + fmt(run.initial) + " -> " + fmt(run.final) + ", ratio " + fmt(ratio) + " < 0.05");
  out.detail += "; step-loss mean of first/last 50 " + fmt(run.head50) + "/" + fmt(run.tail50);
  out.require(run.seconds < 600.0, "runtime " + fmt(run.seconds) + " s < 600 s");
  return out;
}

Outcome ablation_order(const fs::path& work) {
  Outcome out;
  const auto start = Clock::now();
  const DeskProtocol protocol = desk_protocol();
  const auto results = run_ablation(ablation_rows(2, protocol.model), protocol, [](const AblationResult& r) {
    std::cout << "      " << r.row.label << ": final L1 " << r.final_loss << " (" << r.seconds << " s)" << std::endl;
  });
  const double secs = seconds_since(start);
  write_ablation_csv(results, (work / "ablation_table2.csv").string());
  // Row order: baseline, w/o MFA, w/o DDA, full.
  const double baseline = results[0].final_loss, no_mfa = results[1].final_loss, no_dda = results[2].final_loss,
               full = results[3].final_loss;
  bool halted = false;
  for (const auto& r : results) halted = halted || r.halted;
  out.require(!halted, "no row halted");
  out.require(full <= std::min(no_dda, no_mfa),
              "full " + fmt(full) + " <= min(w/o DDA " + fmt(no_dda) + ", w/o MFA " + fmt(no_mfa) + ")");
  out.require(std::max(no_dda, no_mfa) <= baseline, "max(w/o DDA, w/o MFA) <= baseline " + fmt(baseline));
  out.require(secs < 7200.0, "runtime " + fmt(secs) + " s < 7200 s");
  return out;
}

Outcome metric_io(const fs::path& work) {
  Outcome out;
  std::mt19937_64 rng(77);

  double worst_rmse = 0.0;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const std::size_t side = 4 + rng() % 60;
    const auto p = random_tensor({1, 1, side, side}, 100 + i, 0, 1000);
    const auto t = random_tensor({1, 1, side, side}, 200 + i, 0, 1000);
    const double ref = oracle::rmse_two_pass(p.vec(), t.vec());
    worst_rmse = std::max(worst_rmse, std::abs(rmse_native(p, t) - ref) / ref);
  }
  out.require(worst_rmse < 1e-9, "RMSE vs two-pass oracle rel " + fmt(worst_rmse) + " < 1e-9");

  bool lossless = true;
  for (std::uint64_t i = 0; i < 20; ++i) {
    Raster r;
    r.channels = i % 2 ? 3 : 1;
    r.maxval = r.channels == 3 ? 255u : static_cast<unsigned>(1 + rng() % 65535);
    r.width = 1 + rng() % 40;
    r.height = 1 + rng() % 40;
    r.levels.resize(r.width * r.height * r.channels);
    for (auto& v : r.levels) v = static_cast<std::uint16_t>(rng() % (r.maxval + 1));
    const fs::path path = work / (r.channels == 3 ? "rt.ppm" : "rt.pgm");
    write_netpbm(r, path.string());
    const Raster back = read_netpbm(path.string());
    lossless = lossless && back.levels == r.levels && back.width == r.width && back.height == r.height &&
               back.maxval == r.maxval && back.channels == r.channels;
    const Tensor<double> img = read_image(path.string());
    write_image(img, path.string(), r.maxval);
    lossless = lossless && read_netpbm(path.string()).levels == r.levels;
  }
  out.require(lossless, "PGM/PPM round trips lossless");

  const D2A2Model<float> model{ModelConfig{}};
  const fs::path ckpt = work / "roundtrip.ckpt";
  save_checkpoint(model, ckpt.string());
  const auto loaded = load_checkpoint<float>(ckpt.string());
  const auto pair = synth_scene(5, 64, 4);
  const auto rec = NormalizationRecord::from_depth(pair.depth_lr);
  const auto rgb = pair.rgb_hr.cast<float>();
  const auto lr = rec.normalize(pair.depth_lr).cast<float>();
  out.require(model.predict(rgb, lr, 4).vec() == loaded.predict(rgb, lr, 4).vec(), "checkpoint forward bitwise");

  ModelConfig small;
  small.num_scales = 2;
  small.base_channels = 8;
  TrainConfig tc;
  tc.steps = 20;
  tc.batch_size = 2;
  tc.crop_size = 32;
  tc.seed = 11;
  const auto data = synthetic_set(3, 48, 4);
  auto seeded = [&](const std::string& name) {
    D2A2Model<float> m(small);
    TrainOptions opt;
    opt.out_dir = (work / name).string();
    return train(m, data, tc, opt).losses;
  };
  const bool same_losses = seeded("seeded_a") == seeded("seeded_b");
  const bool same_ckpt = slurp(work / "seeded_a" / "model.ckpt") == slurp(work / "seeded_b" / "model.ckpt");
  out.require(same_losses && same_ckpt, "seeded runs bit-identical");
  return out;
}

Outcome diagnostics(const fs::path& work) {
  Outcome out;
  auto& run = overfit_run();
  const auto rec = NormalizationRecord::from_depth(run.pair.depth_lr);
  const fs::path dir = work / "diagnose";
  fs::remove_all(dir);
  const auto scales = diagnose(run.model, run.pair.rgb_hr, rec.normalize(run.pair.depth_lr), 4, dir.string());
  bool files = !scales.empty();
  for (const auto& s : scales) {
    const std::string p = "scale" + std::to_string(s.scale_index) + "_";
    for (const char* f : {"gate.pgm", "attention.pgm", "histogram.csv"}) files = files && fs::exists(dir / (p + f));
  }
  out.require(files, "gate, attention and histogram files for " + std::to_string(scales.size()) + " scales");
  for (const auto& s : scales) {
    out.require(s.w1_after <= s.w1_before, "scale" + std::to_string(s.scale_index) + " W1 after " + fmt(s.w1_after) +
                                               " <= before " + fmt(s.w1_before));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work_dir = "acceptance_out";
  std::vector<int> only;
  app.add_option("--work-dir", work_dir, "scratch directory for checkpoints and reports");
  app.add_option("--only", only, "run only these criteria")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);

  const fs::path work(work_dir);
  fs::create_directories(work);

  struct Criterion {
    int id;
    std::string title;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient suite", gradient_suite},
      {2, "deformable conv reduction", deform_reduction},
      {3, "LDA statistics contract", lda_contract},
      {4, "global skip identity", global_skip},
      {5, "overfit regression", overfit},
      {6, "ablation order", [&] { return ablation_order(work); }},
      {7, "metric and IO exactness", [&] { return metric_io(work); }},
      {8, "diagnostics", [&] { return diagnostics(work); }},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.title << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
