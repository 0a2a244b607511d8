#pragma once

#include <cstddef>
#include <vector>

#include "umtpara/autodiff.hpp"

namespace umtpara::nn {

struct AdamConfig {
  double lr = 0.00025;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Linear warmup from 0 to lr over this many steps; 0 disables it.
  std::size_t warmup = 0;
  // Global gradient-norm clipping threshold; 0 disables it.
  double clip_norm = 0.0;
};

// Adam with bias-corrected moments. Moments live beside each parameter.
template <typename T>
class Adam {
 public:
  Adam(AdamConfig config, std::vector<Parameter<T>*> params);

  // Applies one update from the gradients currently held by the parameters.
  // Throws NumericError on a non-finite gradient before touching anything.
  void step();

  std::size_t steps() const { return step_; }
  // Learning rate the next (or given 1-based) step uses.
  double learning_rate(std::size_t step) const;
  const AdamConfig& config() const { return config_; }
  const std::vector<Parameter<T>*>& params() const { return params_; }

 private:
  AdamConfig config_;
  std::vector<Parameter<T>*> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t step_ = 0;
};

}  // namespace umtpara::nn
