// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "moodpipe/nn/layers.hpp"

namespace moodpipe::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  std::vector<double> first;
  std::vector<double> second;
};

/// One bias-corrected Adam update of `values` in place. `step` is the
/// 1-based update count.
void adam_update(std::span<double> values, std::span<const double> grads,
                 AdamMoments& moments, std::uint64_t step,
                 const AdamConfig& cfg);

/// Adam over a fixed parameter list; frozen parameters are skipped.
class Adam {
 public:
  Adam(ParamList params, AdamConfig cfg = {});

  void step();
  void zero_grad();
  std::uint64_t steps() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  ParamList params_;
  std::vector<AdamMoments> moments_;
  AdamConfig cfg_;
  std::uint64_t step_ = 0;
};

}  // namespace moodpipe::nn
