#include <cmath>

#include "d2a2/gradcheck.hpp"
#include "d2a2/ops.hpp"
#include "d2a2/parallel.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace d2a2;
using oracle::random_tensor;

namespace {

Tensor<double> from(Shape s, std::vector<double> v) { return Tensor<double>(s, std::move(v)); }

}  // namespace

TEST_CASE("tensor shape contract") {
  Tensor<double> t(Shape{2, 3, 4, 5});
  CHECK(t.size() == 120);
  CHECK_THROWS_AS(Tensor<double>(Shape{1, 1, 2, 2}, std::vector<double>(3)), ShapeError);
}

TEST_CASE("conv2d examples") {
  Tape<double> tape;
  SUBCASE("sum of ones") {
    const auto y = conv2d(tape.constant(Tensor<double>({1, 1, 3, 3}, 1.0)), tape.constant(Tensor<double>({1, 1, 3, 3}, 1.0)),
                          tape.constant(Tensor<double>({1, 1, 1, 1})), 1, 0);
    REQUIRE(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.value()[0] == 9.0);
  }
  SUBCASE("identity kernel") {
    const auto x = random_tensor({2, 1, 5, 4}, 1);
    const auto y = conv2d(tape.constant(x), tape.constant(Tensor<double>({1, 1, 1, 1}, 1.0)),
                          tape.constant(Tensor<double>({1, 1, 1, 1})), 1, 0);
    CHECK(oracle::max_abs_diff(y.value(), x) == 0.0);
  }
  SUBCASE("matches direct summation, output size rule") {
    for (int stride : {1, 2}) {
      for (int pad : {0, 1, 2}) {
        const auto x = random_tensor({2, 3, 7, 6}, 10 + stride * 3 + pad);
        const auto w = random_tensor({4, 3, 3, 3}, 20 + pad);
        const auto b = random_tensor({1, 4, 1, 1}, 30);
        const auto y = conv2d(tape.constant(x), tape.constant(w), tape.constant(b), stride, pad);
        const auto ref = oracle::conv(x, w, b, stride, pad);
        REQUIRE(y.shape() == ref.shape());
        CHECK(y.shape().h == (7 + 2 * pad - 3) / stride + 1);
        CHECK(oracle::max_abs_diff(y.value(), ref) < 1e-12);
      }
    }
  }
  SUBCASE("shape errors") {
    CHECK_THROWS_AS(conv2d(tape.constant(Tensor<double>({1, 2, 4, 4})), tape.constant(Tensor<double>({1, 3, 3, 3})),
                           tape.constant(Tensor<double>({1, 1, 1, 1})), 1, 1),
                    ShapeError);
    CHECK_THROWS_AS(conv2d(tape.constant(Tensor<double>({1, 2, 2, 2})), tape.constant(Tensor<double>({1, 2, 5, 5})),
                           tape.constant(Tensor<double>({1, 1, 1, 1})), 1, 0),
                    ShapeError);
  }
}

TEST_CASE("conv2d gradient against finite differences") {
  std::vector<Tensor<double>> in = {random_tensor({1, 2, 5, 5}, 3), random_tensor({3, 2, 3, 3}, 4),
                                    random_tensor({1, 3, 1, 1}, 5)};
  const auto e = check_gradients([](Tape<double>&, const std::vector<Var<double>>& x) { return conv2d(x[0], x[1], x[2], 1, 1); },
                                 in, {"input", "weight", "bias"});
  CHECK(e.max() < 1e-4);
}

TEST_CASE("linear examples") {
  Tape<double> tape;
  const auto id = linear(tape.constant(from({1, 2, 1, 1}, {1, 2})), tape.constant(from({2, 2, 1, 1}, {1, 0, 0, 1})),
                         tape.constant(Tensor<double>({1, 2, 1, 1})));
  CHECK(id.value()[0] == 1.0);
  CHECK(id.value()[1] == 2.0);
  const auto y = linear(tape.constant(from({1, 2, 1, 1}, {1, 1})), tape.constant(from({1, 2, 1, 1}, {2, 3})),
                        tape.constant(from({1, 1, 1, 1}, {0.5})));
  CHECK(y.value()[0] == 5.5);
  CHECK_THROWS_AS(linear(tape.constant(Tensor<double>({1, 3, 1, 1})), tape.constant(Tensor<double>({2, 2, 1, 1})),
                         tape.constant(Tensor<double>({1, 2, 1, 1}))),
                  ShapeError);
  std::vector<Tensor<double>> in = {random_tensor({4, 8, 1, 1}, 6), random_tensor({8, 8, 1, 1}, 7),
                                    random_tensor({1, 8, 1, 1}, 8)};
  CHECK(check_gradients([](Tape<double>&, const std::vector<Var<double>>& x) { return linear(x[0], x[1], x[2]); }, in,
                        {"input", "weight", "bias"})
            .max() < 1e-4);
}

TEST_CASE("elementwise examples") {
  Tape<double> tape;
  CHECK(sigmoid(tape.constant(Tensor<double>({1, 1, 1, 1}))).value()[0] == 0.5);
  CHECK(concat_channels(tape.constant(Tensor<double>({1, 2, 4, 4})), tape.constant(Tensor<double>({1, 3, 4, 4})))
            .shape() == Shape{1, 5, 4, 4});
  CHECK(leaky_relu(tape.constant(from({1, 1, 1, 2}, {-2, 3})), 0.2).value()[0] == doctest::Approx(-0.4));
  CHECK_THROWS_AS(add(tape.constant(Tensor<double>({1, 2, 4, 4})), tape.constant(Tensor<double>({1, 3, 4, 4}))),
                  ShapeError);
  CHECK_THROWS_AS(concat_channels(tape.constant(Tensor<double>({1, 2, 4, 4})), tape.constant(Tensor<double>({1, 2, 4, 5}))),
                  ShapeError);
  std::vector<Tensor<double>> in = {random_tensor({2, 3, 4, 4}, 9), random_tensor({2, 3, 4, 4}, 10)};
  CHECK(check_gradients([](Tape<double>&, const std::vector<Var<double>>& x) { return mul(x[0], x[1]); }, in, {"a", "b"})
            .max() < 1e-4);
}

TEST_CASE("per-channel operand gradient is the spatial sum (explicit tiling)") {
  const auto a = random_tensor({2, 3, 4, 5}, 11);
  const auto b = random_tensor({2, 3, 1, 1}, 12);
  Tensor<double> tiled(a.shape());
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 20; ++i) tiled.plane(n, c)[i] = b.at(n, c, 0, 0);
  const auto seed = random_tensor(a.shape(), 13);

  Tape<double> t1;
  auto va = t1.input(a, true), vb = t1.input(b, true);
  t1.backward(mul(va, vb), seed);
  Tape<double> t2;
  auto wa = t2.input(a, true), wb = t2.input(tiled, true);
  t2.backward(mul(wa, wb), seed);

  CHECK(oracle::max_abs_diff(mul(t1.constant(a), t1.constant(b)).value(), mul(t2.constant(a), t2.constant(tiled)).value()) ==
        0.0);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c) {
      double sum = 0.0;
      for (std::size_t i = 0; i < 20; ++i) sum += wb.grad().plane(n, c)[i];
      CHECK(vb.grad().at(n, c, 0, 0) == doctest::Approx(sum).epsilon(1e-13));
    }
  CHECK(oracle::max_abs_diff(va.grad(), wa.grad()) < 1e-14);
}

TEST_CASE("tape composition equals the hand-written chain rule") {
  // f(x) = sigmoid(x * w) summed with weights r: df/dx = r * s(1-s) * w.
  const auto x = random_tensor({2, 3, 4, 4}, 14);
  const auto w = random_tensor({2, 3, 4, 4}, 15);
  const auto r = random_tensor({2, 3, 4, 4}, 16);
  Tape<double> tape;
  auto vx = tape.input(x, true);
  tape.backward(weighted_sum(sigmoid(mul(vx, tape.constant(w))), r));
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-x[i] * w[i]));
    worst = std::max(worst, std::abs(vx.grad()[i] - r[i] * s * (1 - s) * w[i]));
  }
  CHECK(worst < 1e-10);

  // g(x) = leaky_relu(x) * x: x has two consumers whose gradients must both arrive exactly once.
  Tape<double> t2;
  auto vy = t2.input(x, true);
  t2.backward(weighted_sum(mul(leaky_relu(vy, 0.2), vy), r));
  worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double expected = r[i] * (x[i] > 0 ? 2 * x[i] : 0.4 * x[i]);
    worst = std::max(worst, std::abs(vy.grad()[i] - expected));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("channel_stats examples") {
  Tape<double> tape;
  auto [mu, sigma] = channel_stats(tape.constant(Tensor<double>({1, 1, 3, 3}, 7.0)), 0.0);
  CHECK(mu.value()[0] == 7.0);
  CHECK(sigma.value()[0] == 0.0);
  auto [mu2, sigma2] = channel_stats(tape.constant(from({1, 2, 1, 2}, {1, 3, 1, 3})), 0.0);
  CHECK(mu2.value()[1] == 2.0);
  CHECK(sigma2.value()[1] == 1.0);
  CHECK_THROWS(channel_stats(tape.constant(Tensor<double>({1, 2, 0, 3})), 1e-5));
}

TEST_CASE("bilinear_sample examples") {
  Tape<double> tape;
  const auto img = from({1, 1, 2, 2}, {1, 2, 3, 4});
  const auto centre = bilinear_sample(tape.constant(img), tape.constant(from({1, 2, 1, 1}, {0.5, 0.5})));
  CHECK(centre.value()[0] == doctest::Approx(2.5));

  const auto x = random_tensor({1, 2, 4, 5}, 17);
  Tensor<double> grid({1, 2, 4, 5});
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t c = 0; c < 5; ++c) {
      grid.at(0, 0, y, c) = static_cast<double>(y);
      grid.at(0, 1, y, c) = static_cast<double>(c);
    }
  CHECK(oracle::max_abs_diff(bilinear_sample(tape.constant(x), tape.constant(grid)).value(), x) == 0.0);

  const auto outside = bilinear_sample(tape.constant(img), tape.constant(from({1, 2, 1, 2}, {-1.0, 5.0, 0.0, 0.0})));
  CHECK(outside.value()[0] == 0.0);
  CHECK(outside.value()[1] == 0.0);

  CHECK_THROWS_AS(bilinear_sample(tape.constant(img), tape.constant(from({1, 2, 1, 1}, {NAN, 0.0}))),
                  std::domain_error);
}

TEST_CASE("bicubic_resize examples") {
  SUBCASE("constant image at every supported scale") {
    const Tensor<double> c({1, 1, 16, 16}, 5.0);
    for (Ratio r : {Ratio::down(16), Ratio::down(8), Ratio::down(4), Ratio::up(2), Ratio::up(4), Ratio::up(8),
                    Ratio::up(16)}) {
      const auto out = bicubic_resize(c, r);
      for (double v : out.vec()) CHECK(v == doctest::Approx(5.0).epsilon(1e-14));
    }
  }
  SUBCASE("horizontal ramp stays linear in the interior under x2") {
    Tensor<double> ramp({1, 1, 4, 12});
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 12; ++x) ramp.at(0, 0, y, x) = 3.0 * static_cast<double>(x) - 1.0;
    const auto out = bicubic_resize(ramp, Ratio::up(2));
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 4; x < 20; ++x) {
        const double src = (x + 0.5) / 2.0 - 0.5;
        CHECK(out.at(0, 0, y, x) == doctest::Approx(3.0 * src - 1.0).epsilon(1e-12));
      }
  }
  SUBCASE("matches direct-summation oracle") {
    const auto img = random_tensor({1, 1, 8, 8}, 18);
    CHECK(oracle::max_abs_diff(bicubic_resize(img, Ratio::down(4)), oracle::bicubic(img, 0.25)) < 1e-6);
    const auto small = random_tensor({2, 2, 5, 3}, 19);
    CHECK(oracle::max_abs_diff(bicubic_resize(small, Ratio::up(4)), oracle::bicubic(small, 4.0)) < 1e-12);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(bicubic_resize(Tensor<double>({1, 1, 8, 8}), Ratio{3, 1}), std::invalid_argument);
    CHECK_THROWS_AS(bicubic_resize(Tensor<double>({1, 1, 10, 8}), Ratio::down(4)), ShapeError);
  }
}

TEST_CASE("registered gradient checks of the tensor module") {
  for (const auto& r : run_gradcheck("tensor-autodiff")) {
    CAPTURE(r.op);
    CAPTURE(r.worst);
    CHECK(r.max_rel_error < kGradcheckTolerance);
  }
}

TEST_CASE("forward and backward do not depend on the worker count") {
  const auto x = random_tensor({3, 4, 9, 9}, 20);
  const auto w = random_tensor({5, 4, 3, 3}, 21);
  const auto b = random_tensor({1, 5, 1, 1}, 22);
  auto run = [&](int workers) {
    set_worker_count(workers);
    Tape<double> tape;
    auto vx = tape.input(x, true), vw = tape.input(w, true);
    const auto y = conv2d(vx, vw, tape.constant(b), 1, 1);
    tape.backward(weighted_sum(y, random_tensor(y.shape(), 23)));
    return std::vector<Tensor<double>>{y.value(), vx.grad(), vw.grad()};
  };
  const auto one = run(1);
  const auto three = run(3);
  set_worker_count(0);
  for (std::size_t i = 0; i < one.size(); ++i) CHECK(one[i].vec() == three[i].vec());
}

TEST_CASE("finite outputs and gradients on finite inputs") {
  const auto x = random_tensor({2, 3, 6, 6}, 24, -50, 50);
  Tape<double> tape;
  auto vx = tape.input(x, true);
  auto [mu, sigma] = channel_stats(vx, 1e-5);
  const auto y = sigmoid(div(sub(vx, mu), sigma));
  tape.backward(weighted_sum(y, random_tensor(y.shape(), 25)));
  CHECK(y.value().all_finite());
  CHECK(vx.grad().all_finite());
}
