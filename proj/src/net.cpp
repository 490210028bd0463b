#include "ikp/net.hpp"

#include <cmath>

namespace ikp::ad {

DenseResNet DenseResNet::create(ParamStore& params, const std::string& prefix,
                                int input_dim, int hidden_dim, int block_count,
                                int output_dim) {
  if (input_dim < 1 || hidden_dim < 1 || block_count < 0 || output_dim < 1)
    throw ConfigError("DenseResNet: bad dimensions for " + prefix);
  DenseResNet net;
  net.input_dim = input_dim;
  net.hidden_dim = hidden_dim;
  net.block_count = block_count;
  net.output_dim = output_dim;
  net.w_in = params.add(prefix + ".w_in", hidden_dim, input_dim);
  net.b_in = params.add(prefix + ".b_in", hidden_dim);
  for (int b = 0; b < block_count; ++b) {
    const std::string bp = prefix + ".block" + std::to_string(b);
    net.blocks.push_back({params.add(bp + ".w1", hidden_dim, hidden_dim),
                          params.add(bp + ".b1", hidden_dim),
                          params.add(bp + ".w2", hidden_dim, hidden_dim),
                          params.add(bp + ".b2", hidden_dim)});
  }
  net.w_out = params.add(prefix + ".w_out", output_dim, hidden_dim);
  net.b_out = params.add(prefix + ".b_out", output_dim);
  return net;
}

namespace {
void init_weight(ParamStore& params, int id, Rng& rng) {
  ParamArray& a = params.array(id);
  const double bound = 1.0 / std::sqrt(static_cast<double>(a.cols));
  for (double& w : a.data) w = rng.uniform(-bound, bound);
}
}  // namespace

void DenseResNet::init(ParamStore& params, Rng& rng) const {
  init_weight(params, w_in, rng);
  for (const auto& blk : blocks) {
    init_weight(params, blk[0], rng);
    init_weight(params, blk[2], rng);
  }
  init_weight(params, w_out, rng);
  // biases stay zero
}

NodeId DenseResNet::forward(Tape& tape, NodeId input) const {
  if (tape.size(input) != input_dim)
    throw ConfigError("DenseResNet::forward: input dimension mismatch");
  NodeId h = tape.affine(tape.param(w_in), input, tape.param(b_in));
  for (const auto& blk : blocks) {
    NodeId t = tape.tanh(tape.affine(tape.param(blk[0]), h, tape.param(blk[1])));
    NodeId f = tape.affine(tape.param(blk[2]), t, tape.param(blk[3]));
    h = tape.add(h, f);
  }
  return tape.affine(tape.param(w_out), h, tape.param(b_out));
}

void DenseResNet::eval_batch(const ParamStore& params,
                             const Eigen::Ref<const MatrixXd>& X,
                             Eigen::Ref<MatrixXd> Y) const {
  if (X.rows() != input_dim)
    throw ConfigError("DenseResNet::eval_batch: input dimension mismatch");
  const int n = static_cast<int>(X.cols());
  MatrixXd h(hidden_dim, n), t(hidden_dim, n);
  h.noalias() = params.mat(w_in) * X;
  h.colwise() += params.vec(b_in);
  for (const auto& blk : blocks) {
    t.noalias() = params.mat(blk[0]) * h;
    t.colwise() += params.vec(blk[1]);
    // std::tanh per element, matching the graph path bit for bit
    double* td = t.data();
    const int64_t sz = static_cast<int64_t>(hidden_dim) * n;
    for (int64_t i = 0; i < sz; ++i) td[i] = std::tanh(td[i]);
    h.noalias() += params.mat(blk[2]) * t;
    h.colwise() += params.vec(blk[3]);
  }
  Y.noalias() = params.mat(w_out) * h;
  Y.colwise() += params.vec(b_out);
}

VectorXd DenseResNet::eval(const ParamStore& params, const VectorXd& x) const {
  MatrixXd y(output_dim, 1);
  eval_batch(params, x, y);
  return y.col(0);
}

}  // namespace ikp::ad
