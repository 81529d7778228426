#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mgt/tensor.hpp"

namespace mgt {

struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Elements probed per parameter; 0 checks every element. Sampled indices are seeded.
  std::size_t max_elements = 0;
  std::uint64_t seed = 0;
};

struct ParamCheck {
  std::string name;
  std::size_t checked = 0;
  double max_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;  // at worst_index
  double numeric = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double max_error = 0.0;
  bool passed = true;

  std::string summary() const;
};

// Relative error |a - n| / max(|a|, |n|); absolute error when both magnitudes are below 1e-8.
double gradient_error(double analytic, double numeric);

// Compares the tape gradient of scalar `f` with central differences
// (f(p + h) - f(p - h)) / 2h for each listed parameter. `f` must rebuild its
// graph from the current values of the parameters on every call.
GradCheckReport grad_check(const std::function<Tensor()>& f, const std::vector<NamedTensor>& params,
                           const GradCheckOptions& options = {});

}  // namespace mgt
