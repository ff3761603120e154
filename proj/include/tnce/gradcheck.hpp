#pragma once

#include <functional>

#include "tnce/tape.hpp"

namespace tnce {

struct GradCheckResult {
  double max_rel_error = 0.0;
  int worst_param = -1;     // registry index of the worst coordinate
  std::size_t worst_coord = 0;
  double loss = 0.0;
};

// Central-difference verification of the analytic gradient. `loss_fn` must
// rebuild the forward pass from the store's current values and return the
// scalar loss; when `compute_grad` is set it must also run the backward sweep
// so the store's accumulators hold the analytic gradient. Relative error per
// coordinate is |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
GradCheckResult finite_difference_check(
    ParameterStore& store,
    const std::function<double(bool compute_grad)>& loss_fn, double step);

}  // namespace tnce
