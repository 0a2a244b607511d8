#include "umtpara/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "umtpara/error.hpp"

namespace umtpara::nn {

namespace {

template <typename T>
double evaluate(const std::function<Var(Tape<T>&)>& build) {
  Tape<T> tape(false);
  const Var loss = build(tape);
  const double v = static_cast<double>(tape.value(loss).scalar());
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss");
  return v;
}

}  // namespace

template <typename T>
GradCheckResult grad_check(const std::function<Var(Tape<T>&)>& build,
                           const std::vector<Parameter<T>*>& params, double eps,
                           std::size_t max_coordinates) {
  if (eps < 1e-6 || eps > 1e-3) throw InputError("grad_check: eps must lie in [1e-6, 1e-3]");
  for (auto* p : params) std::fill(p->grad.data.begin(), p->grad.data.end(), T(0));
  {
    Tape<T> tape;
    const Var loss = build(tape);
    if (!std::isfinite(static_cast<double>(tape.value(loss).scalar()))) {
      throw NumericError("grad_check: non-finite loss");
    }
    tape.backward(loss);
  }

  std::size_t total = 0;
  for (auto* p : params) total += p->value.size();
  GradCheckResult result;
  if (total == 0) return result;
  const std::size_t stride = total <= max_coordinates ? 1 : (total + max_coordinates - 1) / max_coordinates;

  std::size_t flat = 0;
  for (auto* p : params) {
    for (std::size_t j = 0; j < p->value.size(); ++j, ++flat) {
      if (flat % stride != 0) continue;
      const T saved = p->value.data[j];
      p->value.data[j] = static_cast<T>(saved + eps);
      const double up = evaluate(build);
      p->value.data[j] = static_cast<T>(saved - eps);
      const double down = evaluate(build);
      p->value.data[j] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = static_cast<double>(p->grad.data[j]);
      const double err =
          std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      result.max_relative_error = std::max(result.max_relative_error, err);
      ++result.coordinates;
    }
  }
  return result;
}

template GradCheckResult grad_check<float>(const std::function<Var(Tape<float>&)>&,
                                           const std::vector<Parameter<float>*>&, double,
                                           std::size_t);
template GradCheckResult grad_check<double>(const std::function<Var(Tape<double>&)>&,
                                            const std::vector<Parameter<double>*>&, double,
                                            std::size_t);

}  // namespace umtpara::nn
