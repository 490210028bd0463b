#include "ikp/optim.hpp"

#include <cmath>

namespace ikp::ad {

void Adam::step(ParamStore& params, const GradStore& grads) {
  if (!grads.all_finite())
    throw TrainingError("optimizer_step: non-finite gradient");
  t_ += 1;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (int id = 0; id < params.count(); ++id) {
    auto& p = params.array(id).data;
    auto& m = m_.slot(id);
    auto& v = v_.slot(id);
    const auto& g = grads.slot(id);
    for (size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace ikp::ad
