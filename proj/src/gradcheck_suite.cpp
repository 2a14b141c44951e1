#include "ebseg/gradcheck_suite.hpp"

#include <chrono>
#include <functional>
#include <iomanip>
#include <ostream>
#include <random>

#include "ebseg/losses.hpp"
#include "ebseg/net.hpp"
#include "ebseg/pgm.hpp"
#include "ebseg/rdm.hpp"
#include "ebseg/synthglass.hpp"

namespace ebseg {

namespace {

constexpr double kOpTolerance = 1e-4;
constexpr double kModuleTolerance = 1e-3;

using Rng = std::mt19937_64;

Tensor<double> randn(Shape shape, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = d(rng);
  return t;
}

// Values bounded away from zero so that relu kinks are never crossed.
Tensor<double> rand_off_zero(Shape shape, Rng& rng) {
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = sign(rng) ? mag(rng) : -mag(rng);
  return t;
}

Tensor<double> rand_unit(Shape shape, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = d(rng);
  return t;
}

// sum(x * r) for a fixed random r: a generic scalar probe of any output.
Tensor<double> probe(Tape<double>& tape, const Tensor<double>& x, std::uint64_t seed) {
  Rng rng(seed);
  return tape.sum(tape.mul(x, randn(x.shape(), rng)));
}

struct Check {
  std::string name;
  double tolerance;
  std::function<GradCheckReport()> run;
};

GradCheckReport check_unary(std::function<Tensor<double>(Tape<double>&, const Tensor<double>&)> op,
                            Tensor<double> x) {
  return grad_check([=](Tape<double>& t) { return probe(t, op(t, x), 11); }, {x});
}

GradCheckReport check_binary(std::function<Tensor<double>(Tape<double>&, const Tensor<double>&, const Tensor<double>&)> op,
                             Tensor<double> a, Tensor<double> b) {
  return grad_check([=](Tape<double>& t) { return probe(t, op(t, a, b), 12); }, {a, b});
}

// Perturbs every parameter so that zero-initialised heads carry signal and
// no two edge confidences tie.
void jitter(ParamStore<double>& ps, Rng& rng, double scale) {
  std::normal_distribution<double> d(0.0, scale);
  for (auto& e : ps.tensors())
    for (auto& v : e.value.data()) v += d(rng);
}

std::vector<Tensor<double>> all_params(const ParamStore<double>& ps) {
  std::vector<Tensor<double>> out;
  for (const auto& e : ps.tensors()) out.push_back(e.value);
  return out;
}

GradCheckReport check_rdm() {
  Rng rng(21);
  const std::size_t c = 6, c_low = 4, c_high = 5;
  ParamStore<float> init_ps;
  ParamInit init(3);
  init_rdm_params(init_ps, init, "r", c, c_low, c_high);
  ParamStore<double> ps = init_ps.cast<double>();
  jitter(ps, rng, 0.1);
  const auto f_in = randn({1, c, 8, 8}, rng), f_low = randn({1, c_low, 16, 16}, rng), f_high = randn({1, c_high, 8, 8}, rng);
  const auto p = RdmParams<double>::bind(ps, "r");
  auto fn = [&, f_in, f_low, f_high](Tape<double>& t) {
    const auto o = rdm_forward(t, ps, p, f_in, f_low, f_high);
    return t.add(t.add(probe(t, o.f_b, 1), probe(t, o.f_r, 2)), probe(t, o.f_merge, 3));
  };
  auto inputs = all_params(ps);
  inputs.push_back(f_in);
  inputs.push_back(f_low);
  inputs.push_back(f_high);
  GradCheckOptions opts;
  opts.eps = 1e-5;
  opts.max_coords_per_input = 24;
  return grad_check(fn, inputs, opts);
}

GradCheckReport check_pgm(bool laplacian) {
  Rng rng(laplacian ? 32 : 31);
  const std::size_t c = 4, k = 5;
  const auto f_b = rand_unit({2, 1, 4, 4}, rng, 0.0, 1.0);
  const auto f_merge = rand_unit({2, c, 4, 4}, rng, 0.1, 1.0);
  const auto w_g = randn({c, c}, rng, 0.5), a_g = randn({k + 2, k + 2}, rng, 0.5);
  auto fn = [=](Tape<double>& t) { return probe(t, pgm_forward(t, f_b, f_merge, w_g, a_g, k, laplacian), 4); };
  GradCheckOptions opts;
  opts.eps = 1e-5;
  return grad_check(fn, {f_merge, w_g, a_g}, opts);
}

GradCheckReport check_network() {
  Rng rng(41);
  NetConfig cfg;
  cfg.stages = 1;
  cfg.channels = 8;
  cfg.c_low = 6;
  cfg.c_high = 8;
  cfg.points = 6;
  ParamStore<double> ps = init_params(cfg, 5).cast<double>();
  jitter(ps, rng, 0.05);
  std::vector<Sample> scenes{gen_scene(17, 32, 1), gen_scene(18, 32, 2)};
  Tensor<double> image({2, 3, 32, 32});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3 * 32 * 32; ++j) image[i * 3 * 32 * 32 + j] = scenes[i].image[j];
  std::vector<GroundTruthBundle> gts;
  for (const auto& s : scenes) gts.push_back({s.mask_m, s.mask_e, s.mask_r});
  const BatchTargets targets = make_targets(gts, 4, 4);
  auto fn = [&](Tape<double>& t) {
    const NetOutput<double> out = cascade_forward(t, ps, cfg, image, NormMode::train);
    return total_loss(t, out.stages, targets, cfg.lambdas).total;
  };
  GradCheckOptions opts;
  // Small steps keep relu kinks and the top-K selection fixed; the floor
  // absorbs biases ahead of batch norm, whose gradient is exactly zero.
  opts.eps = 1e-5;
  opts.abs_floor = 1e-6;
  opts.max_coords_per_input = 6;
  return grad_check(fn, all_params(ps), opts);
}

std::vector<Check> build_checks() {
  std::vector<Check> checks;
  auto op = [&](std::string name, std::function<GradCheckReport()> fn) {
    checks.push_back({std::move(name), kOpTolerance, std::move(fn)});
  };
  op("conv2d", [] {
    Rng rng(1);
    const auto x = randn({2, 3, 6, 5}, rng), w = randn({4, 3, 3, 3}, rng), b = randn({4}, rng);
    return grad_check([=](Tape<double>& t) { return probe(t, t.conv2d(x, w, b, {1, 1, 1}), 5); }, {x, w, b});
  });
  op("conv2d_strided_dilated", [] {
    Rng rng(2);
    const auto x = randn({1, 2, 9, 8}, rng), w = randn({3, 2, 3, 3}, rng), b = randn({3}, rng);
    return grad_check([=](Tape<double>& t) { return probe(t, t.conv2d(x, w, b, {2, 2, 2}), 6); }, {x, w, b});
  });
  op("resize_bilinear", [] {
    Rng rng(3);
    return check_unary([](Tape<double>& t, const Tensor<double>& x) { return t.resize_bilinear(x, 7, 10); },
                       randn({2, 2, 3, 4}, rng));
  });
  op("concat_channels", [] {
    Rng rng(4);
    return check_binary([](Tape<double>& t, const Tensor<double>& a, const Tensor<double>& b) { return t.concat_channels(a, b); },
                        randn({2, 2, 3, 3}, rng), randn({2, 3, 3, 3}, rng));
  });
  op("add", [] {
    Rng rng(5);
    return check_binary([](Tape<double>& t, const Tensor<double>& a, const Tensor<double>& b) { return t.add(a, b); },
                        randn({3, 4}, rng), randn({3, 4}, rng));
  });
  op("sub", [] {
    Rng rng(6);
    return check_binary([](Tape<double>& t, const Tensor<double>& a, const Tensor<double>& b) { return t.sub(a, b); },
                        randn({3, 4}, rng), randn({3, 4}, rng));
  });
  op("mul", [] {
    Rng rng(7);
    return check_binary([](Tape<double>& t, const Tensor<double>& a, const Tensor<double>& b) { return t.mul(a, b); },
                        randn({3, 4}, rng), randn({3, 4}, rng));
  });
  op("relu", [] {
    Rng rng(8);
    return check_unary([](Tape<double>& t, const Tensor<double>& x) { return t.relu(x); }, rand_off_zero({4, 5}, rng));
  });
  op("sigmoid", [] {
    Rng rng(9);
    return check_unary([](Tape<double>& t, const Tensor<double>& x) { return t.sigmoid(x); }, randn({4, 5}, rng, 3.0));
  });
  op("scale", [] {
    Rng rng(10);
    return check_unary([](Tape<double>& t, const Tensor<double>& x) { return t.scale(x, -2.5); }, randn({4, 5}, rng));
  });
  op("sum", [] {
    Rng rng(11);
    const auto x = randn({3, 3}, rng);
    return grad_check([=](Tape<double>& t) { return t.scale(t.sum(t.mul(x, x)), 0.5); }, {x});
  });
  op("matmul", [] {
    Rng rng(12);
    return check_binary([](Tape<double>& t, const Tensor<double>& a, const Tensor<double>& b) { return t.matmul(a, b); },
                        randn({3, 5}, rng), randn({5, 4}, rng));
  });
  op("transpose", [] {
    Rng rng(13);
    return check_unary([](Tape<double>& t, const Tensor<double>& x) { return t.transpose(x); }, randn({3, 5}, rng));
  });
  op("crop2d", [] {
    Rng rng(14);
    return check_unary([](Tape<double>& t, const Tensor<double>& x) { return t.crop2d(x, 2, 3); }, randn({4, 5}, rng));
  });
  op("batchnorm2d_train", [] {
    Rng rng(15);
    const auto x = randn({3, 2, 3, 4}, rng), g = randn({2}, rng), b = randn({2}, rng);
    return grad_check([=](Tape<double>& t) {
      BatchNormState<double> st(2);
      return probe(t, t.batchnorm2d(x, g, b, st, NormMode::train), 7);
    }, {x, g, b});
  });
  op("batchnorm2d_eval", [] {
    Rng rng(16);
    const auto x = randn({2, 2, 3, 3}, rng), g = randn({2}, rng), b = randn({2}, rng);
    return grad_check([=](Tape<double>& t) {
      BatchNormState<double> st(2);
      st.running_mean = {0.3, -0.2};
      st.running_var = {1.5, 0.7};
      return probe(t, t.batchnorm2d(x, g, b, st, NormMode::eval), 8);
    }, {x, g, b});
  });
  op("gather_points", [] {
    Rng rng(17);
    const std::vector<std::size_t> idx{5, 0, 7};
    return check_unary([idx](Tape<double>& t, const Tensor<double>& x) { return t.gather_points(x, 1, idx); },
                       randn({2, 3, 3, 3}, rng));
  });
  op("scatter_points", [] {
    Rng rng(18);
    const std::vector<std::size_t> idx{2, 6};
    return check_binary([idx](Tape<double>& t, const Tensor<double>& f, const Tensor<double>& g) {
      return t.scatter_points(f, 0, g, idx);
    }, randn({2, 3, 3, 3}, rng), randn({2, 3}, rng));
  });
  op("cross_entropy_ignore", [] {
    Rng rng(19);
    const auto x = randn({2, 2, 3, 3}, rng, 2.0);
    std::vector<std::uint8_t> labels(18);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 5 == 0 ? kIgnoreLabel : static_cast<std::uint8_t>(rng() % 2);
    return grad_check([=](Tape<double>& t) { return t.cross_entropy_ignore(x, labels); }, {x});
  });
  op("dice_loss", [] {
    Rng rng(20);
    const auto p = rand_unit({2, 1, 3, 3}, rng, 0.05, 0.95);
    std::vector<std::uint8_t> target(18);
    for (auto& v : target) v = static_cast<std::uint8_t>(rng() % 2);
    return grad_check([=](Tape<double>& t) { return t.dice_loss(p, target); }, {p});
  });
  op("graph_conv", [] {
    Rng rng(22);
    const auto g = randn({5, 4}, rng), w = randn({4, 4}, rng), a = randn({7, 7}, rng);
    return grad_check([=](Tape<double>& t) { return probe(t, graph_conv(t, g, w, a, false), 9); }, {g, w, a});
  });
  op("graph_conv_laplacian", [] {
    Rng rng(23);
    const auto g = randn({5, 4}, rng), w = randn({4, 4}, rng), a = randn({5, 5}, rng);
    return grad_check([=](Tape<double>& t) { return probe(t, graph_conv(t, g, w, a, true), 10); }, {g, w, a});
  });
  checks.push_back({"rdm", kModuleTolerance, check_rdm});
  checks.push_back({"pgm", kModuleTolerance, [] { return check_pgm(false); }});
  checks.push_back({"pgm_laplacian", kModuleTolerance, [] { return check_pgm(true); }});
  checks.push_back({"network", kModuleTolerance, check_network});
  return checks;
}

}  // namespace

std::vector<std::string> gradcheck_names() {
  std::vector<std::string> names;
  for (const auto& c : build_checks()) names.push_back(c.name);
  return names;
}

std::vector<GradCheckResult> run_gradchecks(const std::string& only, std::ostream& log) {
  std::vector<GradCheckResult> results;
  for (const auto& c : build_checks()) {
    if (!only.empty() && c.name != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    GradCheckResult r{c.name, c.run(), c.tolerance, false, 0};
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.passed = r.report.passed(r.tolerance);
    log << (r.passed ? "ok   " : "FAIL ") << std::left << std::setw(24) << r.name << " max rel err "
        << std::scientific << std::setprecision(2) << r.report.max_rel_error << " (tol " << r.tolerance << ", "
        << r.report.checked << " coords)" << std::defaultfloat;
    if (!r.report.finite) log << " " << r.report.failure;
    log << "\n";
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace ebseg
