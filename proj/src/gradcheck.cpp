#include "tnce/gradcheck.hpp"

#include <cmath>

#include "tnce/error.hpp"

namespace tnce {

GradCheckResult finite_difference_check(
    ParameterStore& store,
    const std::function<double(bool compute_grad)>& loss_fn, double step) {
  require(step > 0.0, "finite_difference_check: step must be positive, got ",
          step);

  GradCheckResult result;
  result.loss = loss_fn(/*compute_grad=*/true);
  require(std::isfinite(result.loss),
          "finite_difference_check: loss is not finite (", result.loss, ")");

  // Copy the analytic gradient out before perturbing.
  std::vector<Matrix> analytic;
  analytic.reserve(store.count());
  for (int p = 0; p < store.count(); ++p) analytic.push_back(store.entry(p).grad);

  for (int p = 0; p < store.count(); ++p) {
    Matrix& values = store.entry(p).value;
    for (std::size_t c = 0; c < values.size(); ++c) {
      const double saved = values.data()[c];
      values.data()[c] = saved + step;
      const double up = loss_fn(false);
      values.data()[c] = saved - step;
      const double down = loss_fn(false);
      values.data()[c] = saved;
      require(std::isfinite(up) && std::isfinite(down),
              "finite_difference_check: non-finite loss while perturbing '",
              store.entry(p).name, "'");
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[p].data()[c];
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = p;
        result.worst_coord = c;
      }
    }
  }
  return result;
}

}  // namespace tnce
