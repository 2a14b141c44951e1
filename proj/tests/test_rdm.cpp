#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "ebseg/gradcheck.hpp"
#include "ebseg/rdm.hpp"

using namespace ebseg;

namespace {

template <class T = float>
Tensor<T> randn(Shape shape, std::mt19937& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0, scale);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(d(rng));
  return t;
}

struct Fixture {
  static constexpr std::size_t C = 6, CL = 4, CH = 5;
  ParamStore<float> ps;
  RdmParams<float> p;
  Fixture() {
    ParamInit init(3);
    init_rdm_params(ps, init, "m", C, CL, CH);
    p = RdmParams<float>::bind(ps, "m");
  }
};

void zero(const Tensor<float>& t) {
  auto& mut = const_cast<Tensor<float>&>(t);
  for (auto& v : mut.data()) v = 0.f;
}

}  // namespace

TEST_CASE("rdm: bind infers channel counts") {
  Fixture fx;
  CHECK(fx.p.channels == Fixture::C);
  CHECK(fx.p.c_low == Fixture::CL);
  CHECK(fx.p.c_high == Fixture::CH);
  CHECK_THROWS_AS(RdmParams<float>::bind(fx.ps, "missing"), std::out_of_range);
}

TEST_CASE("rdm: output shapes and the residual identities") {
  Fixture fx;
  std::mt19937 rng(1);
  // Non-zero heads so that every output is exercised.
  for (auto& e : fx.ps.tensors())
    if (e.name.find("head2") != std::string::npos)
      for (auto& v : e.value.data()) v = 0.1f;
  Tape<float> tape;
  const auto f_in = randn({2, Fixture::C, 8, 8}, rng);
  const auto out = rdm_forward(tape, fx.ps, fx.p, f_in, randn({2, Fixture::CL, 16, 16}, rng),
                               randn({2, Fixture::CH, 8, 8}, rng));
  CHECK(out.f_edge.shape() == Shape{2, Fixture::C, 8, 8});
  CHECK(out.f_b.shape() == Shape{2, 1, 8, 8});
  CHECK(out.f_r.shape() == Shape{2, 2, 8, 8});
  CHECK(out.f_merge.shape() == Shape{2, Fixture::C, 8, 8});
  for (std::size_t i = 0; i < f_in.numel(); ++i) {
    CHECK(out.f_residual[i] == f_in[i] - out.f_edge[i]);
    CHECK(out.f_merge[i] == out.f_residual_ref[i] + out.f_edge[i]);
    CHECK(out.f_edge[i] >= 0.f);
  }
  for (float v : out.f_b.data()) CHECK((v > 0.f && v < 1.f));
}

TEST_CASE("rdm: zero edge fusion leaves the residual equal to the input") {
  Fixture fx;
  zero(fx.ps.at("m.edge.w"));
  zero(fx.ps.at("m.edge.b"));
  std::mt19937 rng(2);
  Tape<float> tape;
  const auto f_in = randn({1, Fixture::C, 8, 8}, rng);
  const auto out = rdm_forward(tape, fx.ps, fx.p, f_in, randn({1, Fixture::CL, 16, 16}, rng),
                               randn({1, Fixture::CH, 8, 8}, rng));
  for (float v : out.f_edge.data()) CHECK(v == 0.f);
  CHECK(std::ranges::equal(out.f_residual.data(), f_in.data()));
}

TEST_CASE("rdm: zero-initialised heads give neutral edge and residual maps") {
  Fixture fx;
  std::mt19937 rng(4);
  Tape<float> tape;
  const auto out = rdm_forward(tape, fx.ps, fx.p, randn({1, Fixture::C, 8, 8}, rng),
                               randn({1, Fixture::CL, 16, 16}, rng), randn({1, Fixture::CH, 8, 8}, rng));
  for (float v : out.f_b.data()) CHECK(v == 0.5f);
  for (float v : out.f_r.data()) CHECK(v == 0.f);
}

TEST_CASE("rdm: channel mismatches name the failing step") {
  Fixture fx;
  Tape<float> tape;
  const Tensor<float> ok_in({1, Fixture::C, 8, 8}), ok_low({1, Fixture::CL, 16, 16}), ok_high({1, Fixture::CH, 8, 8});
  auto message = [&](const Tensor<float>& a, const Tensor<float>& b, const Tensor<float>& c) {
    try {
      rdm_forward(tape, fx.ps, fx.p, a, b, c);
    } catch (const std::invalid_argument& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message(Tensor<float>({1, 3, 8, 8}), ok_low, ok_high).find("edge fusion") != std::string::npos);
  CHECK(message(ok_in, Tensor<float>({1, 2, 16, 16}), ok_high).find("edge fusion") != std::string::npos);
  CHECK(message(ok_in, ok_low, Tensor<float>({1, 1, 8, 8})).find("residual refinement") != std::string::npos);
}

TEST_CASE("rdm: gradients match central differences") {
  Fixture fx;
  auto ps = fx.ps.cast<double>();
  std::mt19937 rng(5);
  for (auto& e : ps.tensors())
    for (auto& v : e.value.data()) v += 0.05 * std::normal_distribution<double>()(rng);
  const auto p = RdmParams<double>::bind(ps, "m");
  auto f_in = randn<double>({1, Fixture::C, 4, 4}, rng);
  auto f_low = randn<double>({1, Fixture::CL, 8, 8}, rng);
  auto f_high = randn<double>({1, Fixture::CH, 4, 4}, rng);
  for (auto* t : {&f_in, &f_low, &f_high}) t->set_requires_grad(true);
  const auto wsum = randn<double>({1, Fixture::C, 4, 4}, rng);
  std::vector<Tensor<double>> inputs{f_in, f_low, f_high};
  for (auto& e : ps.tensors()) inputs.push_back(e.value);
  const auto rep = grad_check(
      [&](Tape<double>& t) {
        const auto o = rdm_forward(t, ps, p, f_in, f_low, f_high);
        return t.add(t.add(t.sum(t.mul(o.f_merge, wsum)), t.sum(o.f_b)), t.sum(t.mul(o.f_r, o.f_r)));
      },
      inputs, {.eps = 1e-5, .max_coords_per_input = 12, .abs_floor = 1e-6});
  CHECK(rep.finite);
  CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("pca: eigenvalues and projections agree with an SVD of the centred data") {
  std::mt19937 rng(7);
  const std::size_t c = 5, h = 6, w = 7, hw = h * w;
  const auto f = randn({c, h, w}, rng);
  const PcaResult r = pca_components(f, 3);

  Eigen::MatrixXd x(hw, c);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t p = 0; p < hw; ++p) x(p, ch) = f[ch * hw + p];
  x.rowwise() -= x.colwise().mean();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  for (int d = 0; d < 3; ++d) {
    const double s = svd.singularValues()(d);
    CHECK(r.eigenvalues[d] == doctest::Approx(s * s / hw).epsilon(1e-10));
    // The component is defined up to sign.
    const Eigen::VectorXd ref = svd.matrixU().col(d) * s;
    double same = 0, flip = 0;
    for (std::size_t p = 0; p < hw; ++p) {
      same = std::max(same, std::abs(r.projection[d * hw + p] - ref(p)));
      flip = std::max(flip, std::abs(r.projection[d * hw + p] + ref(p)));
    }
    CHECK(std::min(same, flip) < 1e-9);
  }
}

TEST_CASE("pca: decorrelated channels come back as a signed permutation") {
  // Three uncorrelated patterns with distinct variances.
  const std::size_t h = 4, w = 4, hw = h * w;
  Tensor<float> f({3, h, w});
  const float scale[3] = {1.f, 3.f, 2.f};
  for (std::size_t p = 0; p < hw; ++p) {
    const std::size_t y = p / w, x = p % w;
    const float a = (x % 2) ? 1.f : -1.f, b = (y % 2) ? 1.f : -1.f;
    const float pat[3] = {a, b, a * b};
    for (std::size_t ch = 0; ch < 3; ++ch) f[ch * hw + p] = scale[ch] * pat[ch];
  }
  const auto out = pca_project(f, 3);
  const std::size_t expect[3] = {1, 2, 0};  // by descending variance
  for (std::size_t d = 0; d < 3; ++d) {
    const std::size_t src = expect[d];
    for (std::size_t p = 0; p < hw; ++p) {
      const float norm = (f[src * hw + p] / scale[src] + 1.f) / 2.f;
      CHECK(std::min(std::abs(out[d * hw + p] - norm), std::abs(out[d * hw + p] - (1.f - norm))) < 1e-6f);
    }
  }
}

TEST_CASE("pca: rank-one features put all variance in the first component") {
  std::mt19937 rng(9);
  const std::size_t c = 4, hw = 25;
  const double dir[4] = {0.5, -1.0, 2.0, 0.25};
  Tensor<float> f({c, 5, 5});
  std::normal_distribution<double> d;
  for (std::size_t p = 0; p < hw; ++p) {
    const double s = d(rng);
    for (std::size_t ch = 0; ch < c; ++ch) f[ch * hw + p] = static_cast<float>(s * dir[ch]);
  }
  const PcaResult r = pca_components(f, 3);
  CHECK(r.eigenvalues[0] > 0.1);
  CHECK(r.eigenvalues[1] < 1e-6 * r.eigenvalues[0]);
  const auto out = pca_project(f, 3);
  for (std::size_t k : {1, 2}) {
    const auto [lo, hi] = std::minmax_element(out.data().begin() + k * hw, out.data().begin() + (k + 1) * hw);
    CHECK(*hi - *lo < 1e-3f);
  }
  CHECK_THROWS(pca_project(f, 5));
  CHECK_THROWS(pca_project(Tensor<float>({2, 3, 3, 3}), 3));
}
