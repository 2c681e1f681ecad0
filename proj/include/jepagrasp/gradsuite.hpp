#pragma once

// Finite-difference checks of every differentiable op and of the composed
// grasp-head loss, in double precision.

#include <cstdint>
#include <string>
#include <vector>

#include "jepagrasp/tensor.hpp"

namespace jepagrasp {

struct GradSuiteRow {
  std::string name;
  std::size_t points = 0;   // random evaluation points
  std::size_t checked = 0;  // parameter elements compared
  double max_error = 0.0;
  bool passed = true;
};

// Each case is evaluated at `points` random inputs.
std::vector<GradSuiteRow> run_gradient_suite(std::uint64_t seed, std::size_t points = 5, double eps = 1e-4,
                                             double h = 1e-5);

std::vector<std::string> gradient_suite_cases();

}  // namespace jepagrasp
