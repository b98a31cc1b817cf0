#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "scatterfusion/tensor.hpp"

namespace scatterfusion {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Central-difference check of analytic gradients against a scalar function of
// a parameter list. Relative error per coordinate uses the denominator
// max(|analytic|, |numeric|, 1e-8).
GradCheckResult finite_diff_check(const std::function<double(const std::vector<Tensor>&)>& f,
                                  std::vector<Tensor> params,
                                  const std::vector<Tensor>& analytic, double h = 1e-5);

}  // namespace scatterfusion
