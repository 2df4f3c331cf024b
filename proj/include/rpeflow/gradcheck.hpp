#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rpeflow/ops.hpp"
#include "rpeflow/tensor.hpp"

namespace rpeflow {

struct GradcheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
  std::string worst_location;  // element description of the worst error
  std::size_t checked = 0;
};

// Compares the tape gradient of a scalar-valued function against central
// differences. Relative error per element is
//   |analytic - numeric| / max(1, |analytic|, |numeric|).
template <typename T>
GradcheckReport gradcheck(
    const std::function<Tensor<T>(const Tensor<T>&)>& f, const Tensor<T>& x,
    T h, double tol);

// Same check applied to a random subset of entries drawn from a parameter
// list; `loss` re-evaluates the model from the current parameter values.
template <typename T>
GradcheckReport gradcheck_params(
    const std::function<Tensor<T>()>& loss,
    const std::vector<std::pair<std::string, Tensor<T>>>& params,
    std::size_t sample_count, std::uint64_t seed, T h, double tol);

}  // namespace rpeflow
