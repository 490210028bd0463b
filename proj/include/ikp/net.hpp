#pragma once

#include <array>
#include <string>
#include <vector>

#include "ikp/rng.hpp"
#include "ikp/tape.hpp"

namespace ikp::ad {

// Dense residual network: input affine, block_count residual blocks
// y = x + W2*tanh(W1*x + b1) + b2, linear output head. Two dense layers per
// block. Parameters live in a ParamStore under `prefix`.
struct DenseResNet {
  int input_dim = 0;
  int hidden_dim = 0;
  int block_count = 0;
  int output_dim = 0;

  int w_in = -1, b_in = -1;
  std::vector<std::array<int, 4>> blocks;  // w1, b1, w2, b2
  int w_out = -1, b_out = -1;

  static DenseResNet create(ParamStore& params, const std::string& prefix,
                            int input_dim, int hidden_dim, int block_count,
                            int output_dim);

  // Uniform fan-in init for weights, zero biases. Draw order is fixed.
  void init(ParamStore& params, Rng& rng) const;

  // Graph forward for one input vector.
  NodeId forward(Tape& tape, NodeId input) const;

  // Fast forward without a graph. X is input_dim x n, Y is output_dim x n.
  void eval_batch(const ParamStore& params, const Eigen::Ref<const MatrixXd>& X,
                  Eigen::Ref<MatrixXd> Y) const;
  VectorXd eval(const ParamStore& params, const VectorXd& x) const;
};

}  // namespace ikp::ad
