#pragma once

#include <Eigen/Dense>

#include "ikp/common.hpp"
#include "ikp/kinematics.hpp"
#include "ikp/rng.hpp"

namespace ikp::ebm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct ActionBounds {
  VectorXd lo, hi;

  int dim() const { return static_cast<int>(lo.size()); }
  VectorXd width() const { return hi - lo; }
  VectorXd mid() const { return 0.5 * (lo + hi); }
  void validate() const;

  ActionBounds slice(int i) const {
    ActionBounds b;
    b.lo = lo.segment(i, 1);
    b.hi = hi.segment(i, 1);
    return b;
  }

  // Joint limits shrunk toward the midpoint to keep negatives in-distribution.
  static ActionBounds from_chain(const kin::KinematicChain& chain, double shrink = 0.05);
  static ActionBounds box(const Eigen::Vector2d& lo, const Eigen::Vector2d& hi);
};

// i.i.d. uniform per dimension within bounds; columns are samples. Degenerate
// zero-width bounds collapse to the midpoint.
MatrixXd sample_negatives(const ActionBounds& bounds, int n, Rng& rng);

// -log( exp(-e_pos) / (exp(-e_pos) + sum_j exp(-e_neg_j)) ), log-sum-exp
// stable. Throws TrainingError on non-finite inputs.
double infonce_loss(double e_pos, const VectorXd& e_negs);

// Softmax of -e / temperature with max subtraction; w sums to 1.
void softmax_neg_energy(const VectorXd& e, double temperature, VectorXd& w);

}  // namespace ikp::ebm
