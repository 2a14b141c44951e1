#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ebseg/tape.hpp"

namespace ebseg {

struct GradCheckOptions {
  double eps = 1e-3;
  /// Coordinates probed per input; 0 probes every coordinate.
  std::size_t max_coords_per_input = 0;
  std::uint64_t seed = 7;
  /// Denominator floor, so that gradients which vanish exactly (e.g. a conv
  /// bias followed by batch norm) compare against rounding noise sensibly.
  double abs_floor = 1e-8;
};

struct GradCheckReport {
  double max_rel_error = 0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  bool finite = true;
  std::string failure;  // set when a non-finite value was met

  bool passed(double tol) const { return finite && max_rel_error < tol; }
};

using ScalarFn = std::function<Tensor<double>(Tape<double>&)>;

/// Compares the tape gradient of `f` w.r.t. each input against central
/// differences. Error per coordinate is |a - n| / max(abs_floor, |a| + |n|).
/// `f` must read the inputs' current data on every call.
GradCheckReport grad_check(const ScalarFn& f, std::vector<Tensor<double>> inputs,
                           const GradCheckOptions& opts = {});

}  // namespace ebseg
