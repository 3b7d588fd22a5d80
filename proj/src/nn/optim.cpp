// SPDX-License-Identifier: Apache-2.0
#include "moodpipe/nn/optim.hpp"

#include <cmath>

namespace moodpipe::nn {

void adam_update(std::span<double> values, std::span<const double> grads,
                 AdamMoments& moments, std::uint64_t step,
                 const AdamConfig& cfg) {
  if (values.size() != grads.size()) {
    throw ShapeError("adam_update: " + std::to_string(values.size()) +
                     " values vs " + std::to_string(grads.size()) + " grads");
  }
  if (moments.first.size() != values.size()) {
    moments.first.assign(values.size(), 0.0);
    moments.second.assign(values.size(), 0.0);
  }
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double g = grads[i];
    double& m = moments.first[i];
    double& v = moments.second[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
    values[i] -= cfg.lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps);
  }
}

Adam::Adam(ParamList params, AdamConfig cfg)
    : params_(std::move(params)), moments_(params_.size()), cfg_(cfg) {}

void Adam::step() {
  ++step_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    if (!p.trainable) continue;
    adam_update(p.value.values(), p.grad.values(), moments_[i], step_, cfg_);
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

}  // namespace moodpipe::nn
