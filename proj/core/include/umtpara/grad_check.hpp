#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "umtpara/autodiff.hpp"

namespace umtpara::nn {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
};

// Compares backward() against central finite differences. `build` must
// rebuild the loss from scratch on the given tape, registering `params`
// through Tape::parameter. Checks every coordinate when there are at most
// `max_coordinates`, otherwise an evenly strided sample.
//
// Relative error per coordinate: |a - n| / max(1e-8, |a| + |n|).
template <typename T>
GradCheckResult grad_check(const std::function<Var(Tape<T>&)>& build,
                           const std::vector<Parameter<T>*>& params, double eps = 1e-6,
                           std::size_t max_coordinates = 1000);

}  // namespace umtpara::nn
