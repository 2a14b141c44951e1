#include "ebseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace ebseg {

GradCheckReport grad_check(const ScalarFn& f, std::vector<Tensor<double>> inputs, const GradCheckOptions& opts) {
  GradCheckReport report;
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.ensure_grad();
    in.zero_grad();
  }

  {
    Tape<double> tape;
    Tensor<double> loss = f(tape);
    if (!std::isfinite(loss.item())) {
      report.finite = false;
      report.failure = "non-finite loss at the unperturbed point";
      return report;
    }
    tape.backward(loss);
  }

  auto evaluate = [&f]() {
    Tape<double> tape(false);
    return f(tape).item();
  };

  std::mt19937_64 rng(opts.seed);
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Tensor<double>& in = inputs[t];
    const std::vector<double> analytic(in.grad().begin(), in.grad().end());
    std::vector<std::size_t> coords(in.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opts.max_coords_per_input != 0 && coords.size() > opts.max_coords_per_input) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.max_coords_per_input);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t idx : coords) {
      const double saved = in[idx];
      in[idx] = saved + opts.eps;
      const double up = evaluate();
      in[idx] = saved - opts.eps;
      const double down = evaluate();
      in[idx] = saved;
      if (!std::isfinite(up) || !std::isfinite(down) || !std::isfinite(analytic[idx])) {
        report.finite = false;
        report.worst_input = t;
        report.worst_index = idx;
        report.failure = "non-finite value at input " + std::to_string(t) + " coordinate " + std::to_string(idx);
        return report;
      }
      const double numeric = (up - down) / (2 * opts.eps);
      const double err = std::abs(analytic[idx] - numeric) /
                         std::max(opts.abs_floor, std::abs(analytic[idx]) + std::abs(numeric));
      ++report.checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_input = t;
        report.worst_index = idx;
      }
    }
  }
  return report;
}

}  // namespace ebseg
