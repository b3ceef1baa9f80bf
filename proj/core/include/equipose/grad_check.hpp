#pragma once

#include <functional>

#include "equipose/tensor.hpp"

namespace equipose::mt {

// Compares the reverse-mode gradient of a scalar-valued function against
// central finite differences, componentwise. Returns
//   max_i |g_ad[i] - g_fd[i]| / max(1e-8, |g_ad[i]| + |g_fd[i]|).
//
// The probe values x +- h are rounded to 32-bit storage first and the divisor
// uses the realized step, so the check is not limited by storage quantization.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double h = 1e-3);

}  // namespace equipose::mt
