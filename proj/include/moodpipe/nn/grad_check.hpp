// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>

#include "moodpipe/nn/layers.hpp"

namespace moodpipe::nn {

/// Builds a scalar loss on a fresh tape. Must be deterministic.
using LossBuilder = std::function<Var(Tape&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

/// Compares tape gradients against central differences for every
/// coordinate of every trainable parameter. The per-coordinate error is
/// |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
GradCheckResult grad_check(const LossBuilder& loss, const ParamList& params,
                           double h = 1e-5);

}  // namespace moodpipe::nn
