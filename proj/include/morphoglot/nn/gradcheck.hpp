#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "morphoglot/nn/tape.hpp"

namespace morphoglot::nn {

struct ParameterGradError {
  std::string name;
  double max_relative_error = 0.0;
  // Worst coordinate.
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<ParameterGradError> parameters;
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

using LossBuilder = std::function<Var<double>(Tape<double>&, ParameterSet<double>&)>;

// |a - n| / max(|a|, |n|, floor); the floor keeps coordinates whose true
// gradient is zero from dividing noise by noise.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares reverse-mode gradients with central differences of step `h` for
/// every scalar of every parameter. `build` must record a deterministic scalar
/// loss on a fresh tape (evaluation mode). Passes iff the largest relative
/// error is strictly below `tolerance`.
inline GradCheckReport finite_difference_check(ParameterSet<double>& params,
                                               const LossBuilder& build,
                                               double tolerance, double h = 1e-3) {
  params.zero_grad();
  {
    Tape<double> tape;
    Var<double> loss = build(tape, params);
    tape.backward(loss);
  }
  auto eval = [&] {
    Tape<double> tape;
    return build(tape, params).value()(0, 0);
  };

  GradCheckReport report;
  report.tolerance = tolerance;
  for (auto& p : params.all()) {
    ParameterGradError entry;
    entry.name = p.name;
    for (Index i = 0; i < p.value.size(); ++i) {
      double& x = p.value.data()[i];
      const double saved = x;
      x = saved + h;
      const double up = eval();
      x = saved - h;
      const double down = eval();
      x = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p.grad.data()[i];
      const double err = relative_error(analytic, numeric);
      if (err >= entry.max_relative_error) {
        entry.max_relative_error = err;
        entry.analytic = analytic;
        entry.numeric = numeric;
      }
    }
    report.max_relative_error = std::max(report.max_relative_error, entry.max_relative_error);
    report.parameters.push_back(entry);
  }
  report.passed = report.max_relative_error < tolerance;
  return report;
}

}  // namespace morphoglot::nn
