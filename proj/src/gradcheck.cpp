#include "scatterfusion/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "scatterfusion/errors.hpp"

namespace scatterfusion {

GradCheckResult finite_diff_check(const std::function<double(const std::vector<Tensor>&)>& f,
                                  std::vector<Tensor> params,
                                  const std::vector<Tensor>& analytic, double h) {
  if (h <= 0.0) throw ContractError("finite_diff_check: h must be positive");
  if (params.size() != analytic.size())
    throw ContractError("finite_diff_check: " + std::to_string(params.size()) + " parameters but " +
                        std::to_string(analytic.size()) + " gradient tensors");
  GradCheckResult res;
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params[p].same_shape(analytic[p]))
      throw DimensionError("finite_diff_check: parameter " + std::to_string(p) + " has shape " +
                           params[p].shape_str() + " but gradient has " + analytic[p].shape_str());
    for (std::size_t i = 0; i < params[p].data.size(); ++i) {
      const double orig = params[p].data[i];
      params[p].data[i] = orig + h;
      const double fp = f(params);
      params[p].data[i] = orig - h;
      const double fm = f(params);
      params[p].data[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericError("finite_diff_check: non-finite function value at parameter " +
                           std::to_string(p) + " index " + std::to_string(i));
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[p].data[i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      const double rel = std::fabs(a - numeric) / denom;
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_param = p;
        res.worst_index = i;
        res.analytic_at_worst = a;
        res.numeric_at_worst = numeric;
      }
    }
  }
  return res;
}

}  // namespace scatterfusion
