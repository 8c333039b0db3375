#pragma once

#include <functional>
#include <vector>

#include "vslr/tensor.hpp"

namespace vslr {

// Compares reverse-mode gradients of a scalar function against central finite
// differences. Returns the max over coordinates of
//   |analytic - numeric| / max(1, |analytic|, |numeric|).
double grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                  const Tensor<double>& x, double step = 1e-5);

// Same check over every coordinate of several parameters captured by `f`.
// Parameters are perturbed in place and restored; their grads are reset.
double grad_check(const std::function<Tensor<double>()>& f, std::vector<Tensor<double>> params,
                  double step = 1e-5);

}  // namespace vslr
