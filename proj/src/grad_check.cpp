#include "mgt/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "mgt/error.hpp"

namespace mgt {

double gradient_error(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  const double diff = std::abs(analytic - numeric);
  if (scale < 1e-8) return diff;
  return diff / scale;
}

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os.precision(3);
  for (const auto& p : params) {
    os << (p.passed ? "ok   " : "FAIL ") << p.name << "  max_err=" << std::scientific << p.max_error
       << "  checked=" << p.checked;
    if (!p.passed) os << "  index=" << p.worst_index << " analytic=" << p.analytic << " numeric=" << p.numeric;
    os << '\n';
  }
  return os.str();
}

namespace {

Tensor replaced(const Tensor& t, std::size_t index, double value) {
  std::vector<double> data(t.data().begin(), t.data().end());
  data[index] = value;
  return Tensor(t.shape(), std::move(data), t.requires_grad());
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor()>& f, const std::vector<NamedTensor>& params,
                           const GradCheckOptions& options) {
  if (!(options.step >= 1e-6 && options.step <= 1e-4)) {
    throw ConfigError("grad_check: step must lie in [1e-6, 1e-4]");
  }
  for (const auto& p : params) {
    if (!p.tensor->requires_grad()) throw ConfigError("grad_check: parameter '" + p.name + "' does not track gradients");
  }

  std::vector<Tensor> analytic;
  {
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = f();
    }
    if (loss.numel() != 1) throw ConfigError("grad_check: function must return a scalar");
    tape.backward(loss);
    for (const auto& p : params) analytic.push_back(tape.grad(*p.tensor));
  }

  NoGradScope no_grad;
  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& slot = *params[k].tensor;
    const Tensor original = slot;
    std::vector<std::size_t> indices(original.numel());
    std::iota(indices.begin(), indices.end(), 0);
    if (options.max_elements > 0 && indices.size() > options.max_elements) {
      std::shuffle(indices.begin(), indices.end(), rng);
      indices.resize(options.max_elements);
      std::sort(indices.begin(), indices.end());
    }

    ParamCheck check;
    check.name = params[k].name;
    for (std::size_t idx : indices) {
      const double x = original[idx];
      slot = replaced(original, idx, x + options.step);
      const double up = f().item();
      slot = replaced(original, idx, x - options.step);
      const double down = f().item();
      slot = original;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[k][idx];
      const double err = gradient_error(a, numeric);
      ++check.checked;
      if (err > check.max_error || check.checked == 1) {
        check.max_error = err;
        check.worst_index = idx;
        check.analytic = a;
        check.numeric = numeric;
      }
    }
    check.passed = check.max_error <= options.tolerance;
    report.max_error = std::max(report.max_error, check.max_error);
    report.passed = report.passed && check.passed;
    report.params.push_back(std::move(check));
  }
  return report;
}

}  // namespace mgt
