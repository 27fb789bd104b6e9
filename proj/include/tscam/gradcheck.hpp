#pragma once

#include <functional>
#include <vector>

#include "tscam/tensor.hpp"

namespace tscam {

// A scalar-valued computation over a parameter list. When grads is non-null
// the callee must also write one analytic gradient tensor per parameter,
// shape-matched, in order. Runs in double precision only.
using ScalarFn =
    std::function<double(const std::vector<Tensor<double>>&, std::vector<Tensor<double>>*)>;

// Certifies analytic gradients against central differences. Returns the
// maximum over all parameter entries of
//   |analytic - cd| / max(|analytic|, |cd|, 1e-8).
double grad_check(const ScalarFn& f, const std::vector<Tensor<double>>& params,
                  double step = 1e-4);

}  // namespace tscam
