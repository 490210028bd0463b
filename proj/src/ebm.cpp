#include "ikp/ebm.hpp"

#include <cmath>

namespace ikp::ebm {

void ActionBounds::validate() const {
  if (lo.size() != hi.size() || lo.size() < 1)
    throw ConfigError("bounds: lo/hi dimension mismatch");
  for (int i = 0; i < dim(); ++i)
    if (!(lo[i] < hi[i])) throw ConfigError("bounds: need lo < hi elementwise");
}

ActionBounds ActionBounds::from_chain(const kin::KinematicChain& chain, double shrink) {
  ActionBounds b;
  const VectorXd mid = 0.5 * (chain.joint_min + chain.joint_max);
  const VectorXd half = 0.5 * (chain.joint_max - chain.joint_min) * (1.0 - shrink);
  b.lo = mid - half;
  b.hi = mid + half;
  b.validate();
  return b;
}

ActionBounds ActionBounds::box(const Eigen::Vector2d& lo, const Eigen::Vector2d& hi) {
  ActionBounds b;
  b.lo = lo;
  b.hi = hi;
  b.validate();
  return b;
}

MatrixXd sample_negatives(const ActionBounds& bounds, int n, Rng& rng) {
  if (n < 1) throw ConfigError("sample_negatives: need n >= 1");
  if (bounds.lo.size() != bounds.hi.size() || bounds.lo.size() < 1)
    throw ConfigError("sample_negatives: bad bounds");
  const int d = bounds.dim();
  MatrixXd out(d, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < d; ++i) out(i, j) = rng.uniform(bounds.lo[i], bounds.hi[i]);
  return out;
}

double infonce_loss(double e_pos, const VectorXd& e_negs) {
  if (e_negs.size() < 1) throw ConfigError("infonce_loss: need at least one negative");
  if (!std::isfinite(e_pos)) throw TrainingError("infonce_loss: non-finite energy");
  double m = -e_pos;
  for (int i = 0; i < e_negs.size(); ++i) {
    if (!std::isfinite(e_negs[i])) throw TrainingError("infonce_loss: non-finite energy");
    m = std::max(m, -e_negs[i]);
  }
  double s = std::exp(-e_pos - m);
  for (int i = 0; i < e_negs.size(); ++i) s += std::exp(-e_negs[i] - m);
  return e_pos + m + std::log(s);
}

void softmax_neg_energy(const VectorXd& e, double temperature, VectorXd& w) {
  const double m = (-e / temperature).maxCoeff();
  w = ((-e / temperature).array() - m).exp();
  w /= w.sum();
}

}  // namespace ikp::ebm
