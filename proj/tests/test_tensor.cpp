#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "ebseg/gradcheck.hpp"
#include "ebseg/tape.hpp"
#include "ebseg/tensor_io.hpp"

using namespace ebseg;

namespace {

template <class T = double>
Tensor<T> randn(Shape shape, std::mt19937& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0, scale);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(d(rng));
  return t;
}

// Weighted sum so that ops whose plain sum has a trivial gradient still get probed.
Tensor<double> weighted_sum(Tape<double>& tape, const Tensor<double>& x, const Tensor<double>& weights) {
  return tape.sum(tape.mul(x, weights));
}

}  // namespace

TEST_CASE("conv2d: identity 1x1 kernel") {
  Tape<float> tape;
  Tensor<float> x({1, 1, 1, 1}, std::vector<float>{5});
  Tensor<float> w({1, 1, 1, 1}, std::vector<float>{1});
  Tensor<float> b({1}, std::vector<float>{0});
  auto y = tape.conv2d(x, w, b);
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y[0] == 5.0f);
}

TEST_CASE("conv2d: all-ones 3x3 kernel on constant input sums the window") {
  Tape<float> tape;
  Tensor<float> x({1, 1, 3, 3}, 1.0f);
  Tensor<float> w({1, 1, 3, 3}, 1.0f);
  Tensor<float> b({1}, 0.0f);
  auto y = tape.conv2d(x, w, b, {.stride = 1, .dilation = 1, .pad = 1});
  REQUIRE(y.shape() == Shape{1, 1, 3, 3});
  CHECK(y[4] == 9.0f);
  CHECK(y[0] == 4.0f);
  CHECK(y[1] == 6.0f);
}

TEST_CASE("conv2d: output size formula for stride and dilation") {
  Tape<float> tape;
  Tensor<float> x({2, 3, 11, 9});
  Tensor<float> w({4, 3, 3, 3});
  auto y = tape.conv2d(x, w, {}, {.stride = 2, .dilation = 2, .pad = 1});
  // floor((H + 2p - d(K-1) - 1)/s) + 1
  CHECK(y.shape() == Shape{2, 4, (11 + 2 - 4 - 1) / 2 + 1, (9 + 2 - 4 - 1) / 2 + 1});
}

TEST_CASE("conv2d: shape errors are descriptive") {
  Tape<float> tape;
  Tensor<float> x({1, 2, 5, 5});
  Tensor<float> w({1, 3, 3, 3});
  CHECK_THROWS_WITH_AS(tape.conv2d(x, w, {}), doctest::Contains("input channels"), std::invalid_argument);
  Tensor<float> wrect({1, 2, 3, 1});
  CHECK_THROWS_AS(tape.conv2d(x, wrect, {}), std::invalid_argument);
  Tensor<float> wok({4, 2, 3, 3});
  Tensor<float> bad_bias({3});
  CHECK_THROWS_AS(tape.conv2d(x, wok, bad_bias), std::invalid_argument);
}

TEST_CASE("conv2d: gradient of sum w.r.t. weights matches central differences") {
  std::mt19937 rng(1);
  auto x = randn({1, 2, 5, 5}, rng);
  auto w = randn({3, 2, 3, 3}, rng);
  auto b = randn({3}, rng);
  auto report = grad_check(
      [&](Tape<double>& t) { return t.sum(t.conv2d(x, w, b, {.pad = 1})); }, {w}, {.eps = 1e-3});
  CHECK(report.passed(1e-4));
}

TEST_CASE("conv2d: gradients w.r.t. input, weight and bias with stride/dilation") {
  std::mt19937 rng(2);
  auto x = randn({2, 2, 7, 6}, rng);
  auto w = randn({3, 2, 3, 3}, rng);
  auto b = randn({3}, rng);
  Tape<double> probe;
  auto shape = probe.conv2d(x, w, b, {.stride = 2, .dilation = 2, .pad = 2}).shape();
  auto r = randn(shape, rng);
  auto report = grad_check(
      [&](Tape<double>& t) { return weighted_sum(t, t.conv2d(x, w, b, {.stride = 2, .dilation = 2, .pad = 2}), r); },
      {x, w, b}, {.eps = 1e-4});
  CHECK(report.passed(1e-4));
}

TEST_CASE("bilinear resize: half-pixel sampling") {
  Tape<float> tape;
  Tensor<float> x({1, 1, 1, 2}, std::vector<float>{1, 3});
  auto y = tape.resize_bilinear(x, 1, 4);
  REQUIRE(y.shape() == Shape{1, 1, 1, 4});
  CHECK(y[0] == doctest::Approx(1.0));
  CHECK(y[1] == doctest::Approx(1.5));
  CHECK(y[2] == doctest::Approx(2.5));
  CHECK(y[3] == doctest::Approx(3.0));
}

TEST_CASE("bilinear resize: identity size and constant input") {
  std::mt19937 rng(4);
  Tape<float> tape;
  auto x = randn<float>({1, 2, 3, 5}, rng);
  auto same = tape.resize_bilinear(x, 3, 5);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(same[i] == x[i]);
  Tensor<float> c({1, 1, 3, 3}, 0.7f);
  for (auto [h, w] : {std::pair{1, 1}, std::pair{7, 2}, std::pair{12, 12}}) {
    auto y = tape.resize_bilinear(c, h, w);
    for (float v : y.data()) CHECK(v == doctest::Approx(0.7f));
  }
  CHECK_THROWS_AS(tape.resize_bilinear(c, 0, 3), std::invalid_argument);
}

TEST_CASE("bilinear resize: gradient check up and down") {
  std::mt19937 rng(5);
  auto x = randn({1, 2, 4, 3}, rng);
  for (auto [h, w] : {std::pair{9, 7}, std::pair{2, 2}, std::pair{8, 8}}) {
    Tape<double> probe;
    auto r = randn(probe.resize_bilinear(x, h, w).shape(), rng);
    auto report = grad_check([&, h = h, w = w](Tape<double>& t) { return weighted_sum(t, t.resize_bilinear(x, h, w), r); },
                             {x});
    CHECK(report.passed(1e-4));
  }
}

TEST_CASE("concat_channels: shapes, empty operand and gradient split") {
  Tape<double> tape;
  std::mt19937 rng(6);
  auto a = randn({1, 2, 4, 4}, rng);
  auto b = randn({1, 3, 4, 4}, rng);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  auto c = tape.concat_channels(a, b);
  CHECK(c.shape() == Shape{1, 5, 4, 4});
  tape.backward(tape.sum(c));
  for (double g : a.grad()) CHECK(g == 1.0);
  for (double g : b.grad()) CHECK(g == 1.0);

  Tensor<double> empty({1, 0, 4, 4});
  auto same = tape.concat_channels(a, empty);
  CHECK(same.shape() == a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(same[i] == a[i]);

  Tensor<double> wrong({1, 1, 3, 4});
  CHECK_THROWS_AS(tape.concat_channels(a, wrong), std::invalid_argument);
}

TEST_CASE("eltwise: sub, sigmoid and shape checks") {
  Tape<float> tape;
  std::mt19937 rng(7);
  auto x = randn<float>({2, 3}, rng);
  auto z = tape.sub(x, x);
  for (float v : z.data()) CHECK(v == 0.0f);
  Tensor<float> zero({1}, 0.0f);
  CHECK(tape.sigmoid(zero)[0] == 0.5f);
  Tensor<float> big({2}, std::vector<float>{100.0f, -100.0f});
  auto s = tape.sigmoid(big);
  CHECK(std::isfinite(s[0]));
  CHECK(std::isfinite(s[1]));
  Tensor<float> other({3, 2});
  CHECK_THROWS_AS(tape.add(x, other), std::invalid_argument);
}

TEST_CASE("eltwise: relu and sigmoid gradients away from the kink") {
  std::mt19937 rng(8);
  auto x = randn({3, 7}, rng);
  for (auto& v : x.data()) {
    while (std::abs(v) < 1e-3) v = std::normal_distribution<double>(0, 1)(rng);
  }
  auto r = randn({3, 7}, rng);
  auto y = randn({3, 7}, rng);
  CHECK(grad_check([&](Tape<double>& t) { return weighted_sum(t, t.relu(x), r); }, {x}, {.eps = 1e-6}).passed(1e-4));
  CHECK(grad_check([&](Tape<double>& t) { return weighted_sum(t, t.sigmoid(x), r); }, {x}, {.eps = 1e-5}).passed(1e-4));
  CHECK(grad_check([&](Tape<double>& t) { return weighted_sum(t, t.sub(x, y), r); }, {x, y}).passed(1e-4));
  CHECK(grad_check([&](Tape<double>& t) { return weighted_sum(t, t.add(x, y), r); }, {x, y}).passed(1e-4));
}

TEST_CASE("matmul: identity, hand case and naive oracle") {
  Tape<double> tape;
  Tensor<double> a({2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor<double> eye({2, 2}, std::vector<double>{1, 0, 0, 1});
  auto c = tape.matmul(a, eye);
  for (std::size_t i = 0; i < 4; ++i) CHECK(c[i] == a[i]);

  std::mt19937 rng(9);
  auto p = randn({4, 5}, rng);
  auto q = randn({5, 3}, rng);
  auto r = tape.matmul(p, q);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 5; ++k) s += p[i * 5 + k] * q[k * 3 + j];
      CHECK(std::abs(r[i * 3 + j] - s) < 1e-6);
    }
  CHECK_THROWS_AS(tape.matmul(p, p), std::invalid_argument);

  auto w = randn({4, 3}, rng);
  CHECK(grad_check([&](Tape<double>& t) { return weighted_sum(t, t.matmul(p, q), w); }, {p, q}).passed(1e-4));
}

TEST_CASE("transpose and crop2d gradients") {
  std::mt19937 rng(10);
  auto a = randn({4, 6}, rng);
  auto r1 = randn({6, 4}, rng);
  auto r2 = randn({3, 2}, rng);
  CHECK(grad_check([&](Tape<double>& t) { return weighted_sum(t, t.transpose(a), r1); }, {a}).passed(1e-4));
  CHECK(grad_check([&](Tape<double>& t) { return weighted_sum(t, t.crop2d(a, 3, 2), r2); }, {a}).passed(1e-4));
  Tape<double> tape;
  CHECK_THROWS_AS(tape.crop2d(a, 5, 2), std::invalid_argument);
}

TEST_CASE("batchnorm2d: train-mode output statistics follow gamma and beta") {
  std::mt19937 rng(12);
  auto x = randn({4, 3, 5, 5}, rng, 3.0);
  for (auto& v : x.data()) v += 2.0;
  Tensor<double> gamma({3}, std::vector<double>{1.5, -0.5, 2.0});
  Tensor<double> beta({3}, std::vector<double>{0.1, -1.0, 3.0});
  BatchNormState<double> st(3);
  Tape<double> tape;
  auto y = tape.batchnorm2d(x, gamma, beta, st, NormMode::train);
  const std::size_t hw = 25;
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0, s2 = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t j = 0; j < hw; ++j) s += y[(n * 3 + c) * hw + j];
    const double mean = s / 100;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t j = 0; j < hw; ++j) s2 += std::pow(y[(n * 3 + c) * hw + j] - mean, 2);
    CHECK(mean == doctest::Approx(beta[c]).epsilon(1e-4));
    CHECK(std::sqrt(s2 / 100) == doctest::Approx(std::abs(gamma[c])).epsilon(1e-4));
  }
  // Running statistics moved 10% towards the batch statistics.
  CHECK(st.running_mean[0] != 0.0);
  CHECK(st.running_mean[0] == doctest::Approx(0.1 * 2.0).epsilon(0.3));
}

TEST_CASE("batchnorm2d: unit gamma on standardised input is the identity") {
  std::mt19937 rng(13);
  auto x = randn({2, 2, 8, 8}, rng);
  // Standardise each channel exactly.
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0, s2 = 0;
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t j = 0; j < 64; ++j) s += x[(n * 2 + c) * 64 + j];
    const double m = s / 128;
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t j = 0; j < 64; ++j) s2 += std::pow(x[(n * 2 + c) * 64 + j] - m, 2);
    const double sd = std::sqrt(s2 / 128);
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t j = 0; j < 64; ++j) x[(n * 2 + c) * 64 + j] = (x[(n * 2 + c) * 64 + j] - m) / sd;
  }
  Tensor<double> gamma({2}, 1.0), beta({2}, 0.0);
  BatchNormState<double> st(2);
  Tape<double> tape;
  auto y = tape.batchnorm2d(x, gamma, beta, st, NormMode::train);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(std::abs(y[i] - x[i]) < 1e-4);
}

TEST_CASE("batchnorm2d: gradient check in both modes and channel validation") {
  std::mt19937 rng(14);
  auto x = randn({3, 2, 4, 4}, rng);
  auto gamma = randn({2}, rng);
  auto beta = randn({2}, rng);
  auto r = randn({3, 2, 4, 4}, rng);
  BatchNormState<double> st(2);
  st.running_mean = {0.3, -0.2};
  st.running_var = {1.7, 0.4};
  for (NormMode mode : {NormMode::train, NormMode::eval}) {
    auto report = grad_check(
        [&](Tape<double>& t) { return weighted_sum(t, t.batchnorm2d(x, gamma, beta, st, mode), r); },
        {x, gamma, beta}, {.eps = 1e-5});
    CHECK(report.passed(1e-3));
  }
  Tensor<double> g3({3}, 1.0);
  Tape<double> tape;
  CHECK_THROWS_AS(tape.batchnorm2d(x, g3, beta, st, NormMode::train), std::invalid_argument);
}

TEST_CASE("backward: sum, quadratic and accumulation") {
  std::mt19937 rng(15);
  auto x = randn({3, 4}, rng);
  x.set_requires_grad(true);
  {
    Tape<double> tape;
    tape.backward(tape.sum(x));
    for (double g : x.grad()) CHECK(g == 1.0);
  }
  x.zero_grad();
  {
    Tape<double> tape;
    auto loss = tape.scale(tape.sum(tape.mul(x, x)), 0.5);
    tape.backward(loss);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(x.grad()[i] == doctest::Approx(x[i]));
    // A second call accumulates into leaves.
    tape.backward(loss);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(x.grad()[i] == doctest::Approx(2 * x[i]));
    CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
  }
  Tape<double> empty;
  Tensor<double> s({1}, 1.0);
  CHECK_THROWS_AS(empty.backward(s), std::logic_error);
}

TEST_CASE("autodiff linearity: grad(a f + b g) = a grad f + b grad g") {
  std::mt19937 rng(16);
  auto x = randn({2, 3, 4, 4}, rng);
  auto w = randn({2, 3, 3, 3}, rng);
  x.set_requires_grad(true);
  auto f = [&](Tape<double>& t) { return t.sum(t.sigmoid(t.conv2d(x, w, {}, {.pad = 1}))); };
  auto g = [&](Tape<double>& t) { return t.sum(t.mul(x, x)); };
  auto grad_of = [&](auto fn) {
    x.zero_grad();
    Tape<double> t;
    t.backward(fn(t));
    return std::vector<double>(x.grad().begin(), x.grad().end());
  };
  const double a = 0.37, b = -1.9;
  auto gf = grad_of(f);
  auto gg = grad_of(g);
  auto gc = grad_of([&](Tape<double>& t) { return t.add(t.scale(f(t), a), t.scale(g(t), b)); });
  for (std::size_t i = 0; i < gc.size(); ++i) CHECK(std::abs(gc[i] - (a * gf[i] + b * gg[i])) < 1e-6);
}

TEST_CASE("forward ops are deterministic and replayable") {
  std::mt19937 rng(17);
  auto x = randn<float>({2, 3, 8, 8}, rng);
  auto w = randn<float>({4, 3, 3, 3}, rng);
  auto run = [&] {
    Tape<float> t;
    auto y = t.resize_bilinear(t.relu(t.conv2d(x, w, {}, {.pad = 1})), 13, 5);
    return std::vector<float>(y.data().begin(), y.data().end());
  };
  CHECK(run() == run());
}

TEST_CASE("grad_check: exact for sum and flags non-finite values") {
  std::mt19937 rng(18);
  auto x = randn({5}, rng);
  auto rep = grad_check([&](Tape<double>& t) { return t.sum(x); }, {x});
  CHECK(rep.max_rel_error < 1e-9);
  CHECK(rep.checked == 5);
  Tensor<double> y({2}, std::vector<double>{1.0, 1e308});
  auto bad = grad_check([&](Tape<double>& t) { return t.sum(t.scale(y, 1e10)); }, {y});
  CHECK_FALSE(bad.finite);
  CHECK_FALSE(bad.failure.empty());
}

TEST_CASE("dice loss gradient matches central differences") {
  std::mt19937 rng(19);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  Tensor<double> p({1, 1, 6, 6});
  for (auto& v : p.data()) v = u(rng);
  std::vector<std::uint8_t> g(36);
  for (auto& v : g) v = rng() % 2;
  auto rep = grad_check([&](Tape<double>& t) { return t.dice_loss(p, g); }, {p}, {.eps = 1e-5});
  CHECK(rep.passed(1e-4));
}

TEST_CASE("cross entropy gradient matches central differences") {
  std::mt19937 rng(20);
  auto logits = randn({2, 2, 3, 3}, rng);
  std::vector<std::uint8_t> labels(18);
  for (auto& v : labels) v = rng() % 3 == 0 ? kIgnoreLabel : static_cast<std::uint8_t>(rng() % 2);
  auto rep = grad_check([&](Tape<double>& t) { return t.cross_entropy_ignore(logits, labels); }, {logits},
                        {.eps = 1e-5});
  CHECK(rep.passed(1e-4));
}

TEST_CASE("EBLT: byte layout and round trip") {
  Tensor<float> t({2, 3}, std::vector<float>{1, -2, 3.5f, 0, 1e-20f, 7});
  std::ostringstream os;
  write_eblt(os, t);
  const std::string bytes = os.str();
  REQUIRE(bytes.size() == 4 + 1 + 2 * 4 + 6 * 4);
  CHECK(bytes.substr(0, 4) == "EBLT");
  CHECK(static_cast<unsigned char>(bytes[4]) == 2);
  CHECK(static_cast<unsigned char>(bytes[5]) == 2);
  CHECK(static_cast<unsigned char>(bytes[9]) == 3);
  // 1.0f = 0x3f800000 little-endian
  CHECK(static_cast<unsigned char>(bytes[13]) == 0x00);
  CHECK(static_cast<unsigned char>(bytes[16]) == 0x3f);
  std::istringstream is(bytes);
  auto back = read_eblt(is);
  CHECK(back.shape() == t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) CHECK(back[i] == t[i]);

  std::istringstream bad("EBLX");
  CHECK_THROWS(read_eblt(bad));
  std::istringstream trunc(bytes.substr(0, 20));
  CHECK_THROWS(read_eblt(trunc));
}
