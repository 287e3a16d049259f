#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "d2a2/ablation.hpp"
#include "d2a2/diagnostics.hpp"
#include "d2a2/gradcheck.hpp"
#include "d2a2/image_io.hpp"
#include "d2a2/train.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace d2a2;
using oracle::random_tensor;

namespace {

ModelConfig tiny_model() {
  ModelConfig c;
  c.num_scales = 2;
  c.base_channels = 4;
  return c;
}

TrainConfig tiny_training(int steps) {
  TrainConfig t;
  t.steps = steps;
  t.batch_size = 2;
  t.crop_size = 16;
  t.synthetic_size = 32;
  return t;
}

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("d2a2_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::vector<std::string> lines_of(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("l1_loss examples") {
  Tape<double> tape;
  const auto t = random_tensor({2, 1, 4, 4}, 1);
  CHECK(l1_loss(tape.constant(t), tape.constant(t)).value()[0] == 0.0);
  auto shifted = t;
  for (auto& v : shifted.vec()) v += 2.0;
  CHECK(l1_loss(tape.constant(shifted), tape.constant(t)).value()[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_AS(l1_loss(tape.constant(t), tape.constant(Tensor<double>({2, 1, 4, 5}))), ShapeError);

  auto pred = tape.input(shifted, true);
  tape.backward(l1_loss(pred, tape.constant(t)));
  for (double g : pred.grad().vec()) CHECK(g == doctest::Approx(1.0 / 32.0));
  for (const auto& r : run_gradcheck("l1_loss")) CHECK(r.max_rel_error < kGradcheckTolerance);
}

TEST_CASE("rmse examples and the two-pass oracle") {
  const NormalizationRecord rec{100.0, 500.0};
  const auto a = random_tensor({1, 1, 8, 8}, 2, 0, 1);
  CHECK(rmse(a, a, rec) == 0.0);
  auto b = a;
  for (auto& v : b.vec()) v += 0.01;  // 0.01 normalized = 4 native units
  CHECK(rmse(b, a, rec) == doctest::Approx(4.0).epsilon(1e-9));

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = random_tensor({1, 1, 16, 16}, 10 + seed, 0, 1);
    const auto q = random_tensor({1, 1, 16, 16}, 50 + seed, 0, 1);
    std::vector<double> pn, qn;
    for (std::size_t i = 0; i < p.size(); ++i) {
      pn.push_back(rec.denormalize(p[i]));
      qn.push_back(rec.denormalize(q[i]));
    }
    const double expected = oracle::rmse_two_pass(pn, qn);
    CHECK(std::abs(rmse(p, q, rec) - expected) <= 1e-9 * expected);
  }
  CHECK_THROWS_AS(rmse(a, Tensor<double>({1, 1, 8, 7}), rec), ShapeError);
}

TEST_CASE("adam examples") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    ParameterSet<double> set;
    auto& p = set.add("p", {1, 1, 2, 2});
    p.value = random_tensor(p.value.shape(), 3);
    const auto before = p.value;
    for (int i = 0; i < 10; ++i) adam_step(set, AdamConfig{});
    CHECK(p.value.vec() == before.vec());
  }
  SUBCASE("first step has magnitude lr") {
    for (double g : {-3.0, 0.25, 40.0}) {
      ParameterSet<double> set;
      auto& p = set.add("p", {1, 1, 1, 1});
      p.value[0] = 1.0;
      p.grad[0] = g;
      adam_step(set, AdamConfig{});
      CHECK(p.value[0] - 1.0 == doctest::Approx(-1e-3 * (g > 0 ? 1 : -1)).epsilon(1e-6));
    }
  }
  SUBCASE("trajectory on a quadratic bowl matches the scripted update") {
    const auto centre = random_tensor({1, 1, 3, 3}, 4, -2, 2);
    ParameterSet<double> set;
    auto& p = set.add("p", {1, 1, 3, 3});
    p.value = random_tensor(p.value.shape(), 5, -2, 2);
    const AdamConfig cfg{0.05, 0.9, 0.999, 1e-8};
    oracle::ScriptedAdam script{0.05, 0.9, 0.999, 1e-8, {}, {}, 0};
    std::vector<double> x = p.value.vec();
    for (int t = 0; t < 100; ++t) {
      std::vector<double> g(9);
      for (std::size_t i = 0; i < 9; ++i) {
        p.grad[i] = 2.0 * (p.value[i] - centre[i]);
        g[i] = 2.0 * (x[i] - centre[i]);
      }
      adam_step(set, cfg);
      script.step(x, g);
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < 9; ++i) worst = std::max(worst, std::abs(p.value[i] - x[i]));
    CHECK(worst < 1e-10);
  }
  SUBCASE("a non-finite gradient aborts the whole step") {
    ParameterSet<double> set;
    auto& a = set.add("first", {1, 1, 1, 2});
    auto& b = set.add("second.weight", {1, 1, 1, 2});
    a.grad.fill(1.0);
    b.grad[1] = NAN;
    try {
      adam_step(set, AdamConfig{});
      FAIL("expected NonFiniteGradient");
    } catch (const NonFiniteGradient& e) {
      CHECK(e.parameter() == "second.weight");
      CHECK(std::string(e.what()).find("second.weight") != std::string::npos);
    }
    CHECK(a.value[0] == 0.0);
    CHECK(a.step == 0);
  }
}

TEST_CASE("evaluation report") {
  D2A2Model<float> model(tiny_model());
  const auto samples = synthetic_set(3, 32, 4, 7);
  const EvalReport report = evaluate(model, samples);
  REQUIRE(report.sample_rmse.size() == 3);
  CHECK(report.mean_rmse == doctest::Approx(std::accumulate(report.sample_rmse.begin(), report.sample_rmse.end(), 0.0) / 3));
  CHECK(report.units == DepthUnits::Synthetic);
  CHECK(report.scale == 4);
  CHECK(report.config_id == config_id(model.config()));
  const auto dir = temp_dir("report");
  report.write_csv((dir / "r.csv").string());
  const auto lines = lines_of(dir / "r.csv");
  std::size_t rows = 0;
  bool header = false;
  for (const auto& l : lines) {
    header = header || l == "sample,rmse";
    rows += !l.empty() && l[0] != '#' && l != "sample,rmse";
  }
  CHECK(header);
  CHECK(rows == 4);

  // Zero head: the prediction is the bicubic upsample in native units.
  model.zero_head();
  const auto pred = predict_native(model, samples[0]);
  const auto up = bicubic_resize(samples[0].depth_lr, Ratio::up(4));
  CHECK(oracle::max_abs_diff(pred, up) < 1e-4);
}

TEST_CASE("seeded training is bit-identical") {
  const auto data = synthetic_set(2, 32, 4);
  auto run = [&](const std::string& name) {
    D2A2Model<float> model(tiny_model());
    TrainOptions opt;
    opt.out_dir = temp_dir(name).string();
    opt.holdout = synthetic_set(1, 32, 4, kHoldoutSeedBase);
    return std::make_pair(train(model, data, tiny_training(6), opt), opt.out_dir);
  };
  const auto [a, dir_a] = run("train_a");
  const auto [b, dir_b] = run("train_b");
  CHECK(a.losses.size() == 6);
  CHECK(a.losses == b.losses);
  CHECK(!a.halted);
  CHECK(slurp(dir_a + "/model.ckpt") == slurp(dir_b + "/model.ckpt"));
  CHECK(slurp(dir_a + "/loss.csv") == slurp(dir_b + "/loss.csv"));
  const auto loss_lines = lines_of(dir_a + "/loss.csv");
  REQUIRE(loss_lines.size() == 7);
  CHECK(loss_lines[0] == "step,loss");
  CHECK(std::filesystem::exists(dir_a + "/holdout.csv"));
  CHECK(a.has_holdout_report);
}

TEST_CASE("periodic checkpoints") {
  D2A2Model<float> model(tiny_model());
  auto cfg = tiny_training(4);
  cfg.checkpoint_every = 2;
  TrainOptions opt;
  opt.out_dir = temp_dir("periodic").string();
  train(model, synthetic_set(1, 32, 4), cfg, opt);
  CHECK(std::filesystem::exists(opt.out_dir + "/step_2.ckpt"));
  CHECK(std::filesystem::exists(opt.out_dir + "/step_4.ckpt"));
}

TEST_CASE("the baseline row trains") {
  const auto rows = ablation_rows(2, tiny_model());
  D2A2Model<float> model(rows[0].config);
  const auto result = train(model, synthetic_set(2, 32, 4), tiny_training(5));
  CHECK(!result.halted);
  CHECK(result.losses.size() == 5);
  for (double l : result.losses) CHECK(std::isfinite(l));
}

TEST_CASE("a loss decreases on one pair") {
  D2A2Model<float> model(tiny_model());
  auto cfg = tiny_training(80);
  cfg.batch_size = 1;
  cfg.crop_size = 32;
  cfg.augment = false;
  const auto data = synthetic_set(1, 32, 4);
  const double before = dataset_l1(model, data);
  const auto result = train(model, data, cfg);
  const double after = dataset_l1(model, data);
  CHECK(after < before);
  const double head = std::accumulate(result.losses.begin(), result.losses.begin() + 10, 0.0);
  const double tail = std::accumulate(result.losses.end() - 10, result.losses.end(), 0.0);
  CHECK(tail < head);
}

TEST_CASE("a NaN loss halts and keeps the last good parameters") {
  D2A2Model<float> model(tiny_model());
  auto pair = synth_scene(0, 32, 4);
  pair.rgb_hr[5] = NAN;
  std::vector<float> initial;
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    const auto& v = model.parameters()[i].value.vec();
    initial.insert(initial.end(), v.begin(), v.end());
  }
  auto cfg = tiny_training(5);
  cfg.batch_size = 1;
  cfg.crop_size = 32;
  TrainOptions opt;
  opt.out_dir = temp_dir("nan").string();
  const auto result = train(model, {pair}, cfg, opt);
  CHECK(result.halted);
  CHECK(!result.halt_reason.empty());
  std::vector<float> now;
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    const auto& v = model.parameters()[i].value.vec();
    now.insert(now.end(), v.begin(), v.end());
  }
  CHECK(now == initial);
  const auto saved = load_checkpoint<float>(opt.out_dir + "/model.ckpt");
  CHECK(saved.parameters()[0].value.vec() == model.parameters()[0].value.vec());
}

TEST_CASE("diagnostics") {
  SUBCASE("gray maps quantize (0,1) linearly") {
    Tensor<double> ramp({1, 1, 1, 5}, std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
    const auto dir = temp_dir("gray");
    write_gray8(ramp, (dir / "g.pgm").string());
    const auto r = read_netpbm((dir / "g.pgm").string());
    CHECK(r.maxval == 255);
    CHECK(r.levels == std::vector<std::uint16_t>{0, 64, 128, 191, 255});
  }
  SUBCASE("histogram columns") {
    const auto h = feature_histogram(random_tensor({1, 2, 4, 4}, 1), random_tensor({1, 2, 4, 4}, 2, 0, 2),
                                     random_tensor({1, 2, 4, 4}, 3, -2, 0), 16);
    CHECK(h.bin_center.size() == 16);
    CHECK(h.rgb_before.size() == 16);
    CHECK(h.rgb_after.size() == 16);
    CHECK(h.depth.size() == 16);
    for (const auto* col : {&h.rgb_before, &h.rgb_after, &h.depth}) {
      CHECK(std::accumulate(col->begin(), col->end(), 0.0) == doctest::Approx(1.0));
    }
    const auto dir = temp_dir("hist");
    h.write_csv((dir / "h.csv").string());
    const auto lines = lines_of(dir / "h.csv");
    REQUIRE(lines.size() == 17);
    CHECK(lines[0] == "bin_center,rgb_before,rgb_after,depth");
    for (std::size_t i = 1; i < lines.size(); ++i) CHECK(std::count(lines[i].begin(), lines[i].end(), ',') == 3);
  }
  SUBCASE("Wasserstein-1 on shifted point masses") {
    CHECK(wasserstein1({1, 0, 0, 0}, {0, 0, 0, 1}, 0.5) == doctest::Approx(1.5));
    CHECK(wasserstein1({0.5, 0.5, 0}, {0.5, 0.5, 0}, 1.0) == 0.0);
    CHECK(wasserstein1({1, 0}, {0, 1}, 2.0) == wasserstein1({0, 1}, {1, 0}, 2.0));
  }
  SUBCASE("diagnose writes the per-scale set") {
    D2A2Model<float> model(tiny_model());
    const auto pair = synth_scene(0, 32, 4);
    const auto dir = temp_dir("diagnose");
    const auto rec = NormalizationRecord::from_depth(pair.depth_lr);
    const auto scales = diagnose(model, pair.rgb_hr, rec.normalize(pair.depth_lr), 4, dir.string());
    REQUIRE(scales.size() == 2);
    for (int i = 0; i < 2; ++i) {
      const std::string p = "scale" + std::to_string(i) + "_";
      for (const char* f : {"rgb_before.pgm", "rgb_after.pgm", "gate.pgm", "attention.pgm", "histogram.csv"}) {
        CAPTURE(f);
        CHECK(std::filesystem::exists(dir / (p + f)));
      }
    }
    CHECK(lines_of(dir / "summary.csv").size() == 3);
    const auto gate = read_netpbm((dir / "scale0_gate.pgm").string());
    CHECK(gate.width == 32);
    CHECK(gate.maxval == 255);
    CHECK_THROWS_AS(diagnose(model, pair.rgb_hr, Tensor<double>({1, 1, 7, 7}), 4, dir.string()), ShapeError);
  }
}

TEST_CASE("config files") {
  ModelConfig m;
  TrainConfig t;
  parse_config_text("# comment\nbase_channels = 8\nlr=0.0005\nattention_mode=ca\n\n", &m, &t);
  CHECK(m.base_channels == 8);
  CHECK(t.lr == 0.0005);
  CHECK(m.attention_mode == AttentionMode::Channel);
  CHECK_THROWS_AS(parse_config_text("learning_rate=1\n", &m, &t), ConfigError);
  CHECK(ModelConfig::from_text(m.to_text()) == m);
  ModelConfig scratch;
  CHECK_THROWS_AS(parse_config_text("num_scales=0\n", &scratch, nullptr), ConfigError);
  t.crop_size = 30;
  CHECK_THROWS(t.validate(4));
}
