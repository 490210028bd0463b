#pragma once

#include <functional>

#include "ikp/net.hpp"

namespace ikp::kernels {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Candidate columns are processed in fixed-size chunks so the serial
// reference and the OpenMP path produce bit-identical results (each chunk is
// an independent unit of work; outputs go to disjoint slots).
inline constexpr int kChunk = 64;

int max_threads();
void set_max_threads(int n);  // 0 restores the OpenMP default
bool in_parallel_region();

// Scores candidate columns X (input_dim x n) through a scalar-output net.
// The OpenMP variant parallelizes over chunks; falls back to serial when
// already inside a parallel region.
void eval_energies_serial(const ad::DenseResNet& net, const ad::ParamStore& params,
                          const MatrixXd& X, VectorXd& out);
void eval_energies(const ad::DenseResNet& net, const ad::ParamStore& params,
                   const MatrixXd& X, VectorXd& out);

// Runs fn(i) for i in [0, n). Each item must write only to its own slots;
// callers aggregate by index, which keeps results independent of the
// schedule and thread count.
void parallel_for(int n, bool parallel, const std::function<void(int)>& fn);

}  // namespace ikp::kernels
