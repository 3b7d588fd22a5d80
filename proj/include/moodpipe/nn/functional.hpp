// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

#include "moodpipe/nn/tensor.hpp"

namespace moodpipe::nn {

/// Row-wise softmax, max-subtracted.
Tensor softmax(const Tensor& x);

/// -(1/n) sum[y log x + (1 - y) log(1 - x)] with x clamped to
/// [1e-7, 1 - 1e-7].
double cross_entropy(std::span<const double> probs, std::span<const int> labels);

}  // namespace moodpipe::nn
