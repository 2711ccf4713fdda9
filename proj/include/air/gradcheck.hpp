#pragma once

#include <functional>
#include <vector>

#include "air/tensor.hpp"

namespace air {

// Scalar objective over a set of live parameters. Called with with_grad=true
// exactly once to collect analytic gradients; all other calls are value-only
// probes used for central differences. The callable must rebuild its graph
// from the parameters' current values on every invocation.
using LossFn = std::function<double(bool with_grad)>;

// Max over all parameter coordinates of
//   |analytic - central_difference| / max(1, |central_difference|).
double finite_difference_max_rel_err(const LossFn& loss, const std::vector<Tensor*>& params,
                                     double eps = 1e-5);

}  // namespace air
