#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "morphoglot/nn/tape.hpp"

namespace morphoglot::nn {

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Decoupled; applied only to parameters flagged `decay`.
  double weight_decay = 0.01;
  // Global-norm clipping threshold; <= 0 disables clipping.
  double clip_norm = 1.0;
  int warmup_steps = 0;

  // Linear warmup to learning_rate, then constant.
  double rate_at(std::int64_t step) const {
    if (warmup_steps <= 0 || step >= warmup_steps) return learning_rate;
    return learning_rate * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
};

struct StepReport {
  double loss = 0.0;
  double grad_norm = 0.0;
  double clipped_norm = 0.0;
  double learning_rate = 0.0;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
double global_grad_norm(const ParameterSet<T>& params) {
  double sq = 0.0;
  for (const auto& p : params.all()) sq += p.grad.template cast<double>().squaredNorm();
  return std::sqrt(sq);
}

/// Clips the accumulated gradients to the global norm, then applies one
/// AdamW update and increments the step counter.
template <typename T>
StepReport adamw_update(ParameterSet<T>& params, const OptimizerConfig& cfg) {
  StepReport report;
  report.grad_norm = global_grad_norm(params);
  if (!std::isfinite(report.grad_norm))
    throw NonFiniteLoss("non-finite gradient norm; step skipped");
  double factor = 1.0;
  if (cfg.clip_norm > 0.0 && report.grad_norm > cfg.clip_norm)
    factor = cfg.clip_norm / report.grad_norm;
  report.clipped_norm = report.grad_norm * factor;
  report.learning_rate = cfg.rate_at(params.step);

  const std::int64_t t = params.step + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  const T lr = static_cast<T>(report.learning_rate);
  for (auto& p : params.all()) {
    const auto g = (p.grad.array() * static_cast<T>(factor));
    p.first_moment.array() = static_cast<T>(cfg.beta1) * p.first_moment.array() +
                             static_cast<T>(1.0 - cfg.beta1) * g;
    p.second_moment.array() = static_cast<T>(cfg.beta2) * p.second_moment.array() +
                              static_cast<T>(1.0 - cfg.beta2) * g.square();
    if (p.decay && cfg.weight_decay > 0.0)
      p.value *= static_cast<T>(1.0 - report.learning_rate * cfg.weight_decay);
    p.value.array() -= lr * (p.first_moment.array() / static_cast<T>(bc1)) /
                       ((p.second_moment.array() / static_cast<T>(bc2)).sqrt() +
                        static_cast<T>(cfg.epsilon));
  }
  params.step = t;
  return report;
}

/// Differentiates the recorded `loss` and applies one optimizer step. A
/// non-finite loss throws NonFiniteLoss with the parameters untouched.
template <typename T>
StepReport backprop_step(Tape<T>& tape, Var<T> loss, ParameterSet<T>& params,
                         const OptimizerConfig& cfg) {
  const double value = static_cast<double>(loss.value()(0, 0));
  if (!std::isfinite(value)) {
    std::ostringstream msg;
    msg << "non-finite loss " << value << " at step " << params.step;
    throw NonFiniteLoss(msg.str());
  }
  params.zero_grad();
  tape.backward(loss);
  StepReport report = adamw_update(params, cfg);
  report.loss = value;
  return report;
}

}  // namespace morphoglot::nn
