// SPDX-License-Identifier: Apache-2.0
#include "moodpipe/nn/functional.hpp"

#include "moodpipe/nn/tape.hpp"

namespace moodpipe::nn {

Tensor softmax(const Tensor& x) {
  Tape tape;
  return tape.value(softmax_rows(tape.constant(x)));
}

double cross_entropy(std::span<const double> probs,
                     std::span<const int> labels) {
  Tape tape;
  Tensor p({probs.size()}, std::vector<double>(probs.begin(), probs.end()));
  return tape.value(binary_cross_entropy(tape.constant(std::move(p)), labels))[0];
}

}  // namespace moodpipe::nn
