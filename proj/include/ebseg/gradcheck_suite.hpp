#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ebseg/gradcheck.hpp"

namespace ebseg {

struct GradCheckResult {
  std::string name;
  GradCheckReport report;
  double tolerance = 0;
  bool passed = false;
  double seconds = 0;
};

/// Names of the built-in checks: every differentiable op, the two modules and
/// the one-stage network under its training loss.
std::vector<std::string> gradcheck_names();

/// Runs the check called `only`, or all of them when it is empty. Prints one
/// line per check to `log`. Returns nothing for an unknown name.
std::vector<GradCheckResult> run_gradchecks(const std::string& only, std::ostream& log);

}  // namespace ebseg
