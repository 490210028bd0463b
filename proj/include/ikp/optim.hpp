#pragma once

#include <cstdint>

#include "ikp/tape.hpp"

namespace ikp::ad {

// Adaptive-moment first-order optimizer (Adam). Accumulator shapes follow the
// ParamStore; step count increments by exactly 1 per call.
class Adam {
 public:
  Adam(const ParamStore& params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(params), v_(params) {}

  // Throws TrainingError on non-finite gradients.
  void step(ParamStore& params, const GradStore& grads);

  int64_t step_count() const { return t_; }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_;
  GradStore m_, v_;
  int64_t t_ = 0;
};

}  // namespace ikp::ad
