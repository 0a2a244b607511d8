#include "umtpara/optim.hpp"

#include <algorithm>
#include <cmath>

#include "umtpara/error.hpp"

namespace umtpara::nn {

template <typename T>
Adam<T>::Adam(AdamConfig config, std::vector<Parameter<T>*> params)
    : config_(config), params_(std::move(params)) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.size(), 0.0);
    v_.emplace_back(p->value.size(), 0.0);
  }
}

template <typename T>
double Adam<T>::learning_rate(std::size_t step) const {
  if (config_.warmup == 0) return config_.lr;
  return config_.lr * std::min(1.0, static_cast<double>(step) / static_cast<double>(config_.warmup));
}

template <typename T>
void Adam<T>::step() {
  double sq = 0.0;
  for (auto* p : params_) {
    for (T g : p->grad.data) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericError("non-finite gradient in parameter " + p->name);
      }
      sq += static_cast<double>(g) * static_cast<double>(g);
    }
  }
  double clip = 1.0;
  if (config_.clip_norm > 0.0) {
    const double norm = std::sqrt(sq);
    if (norm > config_.clip_norm) clip = config_.clip_norm / norm;
  }

  ++step_;
  const double lr = learning_rate(step_);
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& value = params_[i]->value.data;
    const auto& grad = params_[i]->grad.data;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = static_cast<double>(grad[j]) * clip;
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      value[j] = static_cast<T>(static_cast<double>(value[j]) - lr * mhat / (std::sqrt(vhat) + config_.eps));
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace umtpara::nn
