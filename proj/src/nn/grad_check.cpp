// SPDX-License-Identifier: Apache-2.0
#include "moodpipe/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace moodpipe::nn {

namespace {

double evaluate(const LossBuilder& loss) {
  Tape tape;
  return tape.value(loss(tape))[0];
}

}  // namespace

GradCheckResult grad_check(const LossBuilder& loss, const ParamList& params,
                           double h) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    if (!p.trainable) continue;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + h;
      const double up = evaluate(loss);
      p.value[i] = saved - h;
      const double down = evaluate(loss);
      p.value[i] = saved;

      const double fd = (up - down) / (2.0 * h);
      const double ad = analytic[k][i];
      const double err = std::abs(ad - fd) /
                         std::max({1.0, std::abs(ad), std::abs(fd)});
      ++result.coordinates;
      if (result.worst_parameter.empty() || err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_parameter = p.name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace moodpipe::nn
