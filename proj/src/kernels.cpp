#include "ikp/kernels.hpp"

#include <omp.h>

#include <exception>
#include <vector>

namespace ikp::kernels {

namespace {
int g_max_threads = 0;
}

int max_threads() {
  return g_max_threads > 0 ? g_max_threads : omp_get_max_threads();
}

void set_max_threads(int n) { g_max_threads = n; }

bool in_parallel_region() { return omp_in_parallel() != 0; }

namespace {
void eval_chunk(const ad::DenseResNet& net, const ad::ParamStore& params,
                const MatrixXd& X, VectorXd& out, int begin, int end) {
  MatrixXd y(1, end - begin);
  net.eval_batch(params, X.middleCols(begin, end - begin), y);
  out.segment(begin, end - begin) = y.row(0).transpose();
}
}  // namespace

void eval_energies_serial(const ad::DenseResNet& net, const ad::ParamStore& params,
                          const MatrixXd& X, VectorXd& out) {
  const int n = static_cast<int>(X.cols());
  out.resize(n);
  for (int begin = 0; begin < n; begin += kChunk)
    eval_chunk(net, params, X, out, begin, std::min(n, begin + kChunk));
}

void eval_energies(const ad::DenseResNet& net, const ad::ParamStore& params,
                   const MatrixXd& X, VectorXd& out) {
  if (in_parallel_region()) {
    eval_energies_serial(net, params, X, out);
    return;
  }
  const int n = static_cast<int>(X.cols());
  out.resize(n);
  const int chunks = (n + kChunk - 1) / kChunk;
#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (int c = 0; c < chunks; ++c) {
    const int begin = c * kChunk;
    eval_chunk(net, params, X, out, begin, std::min(n, begin + kChunk));
  }
}

void parallel_for(int n, bool parallel, const std::function<void(int)>& fn) {
  if (!parallel || in_parallel_region()) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  // exceptions cannot cross the parallel region; capture per index and
  // rethrow the lowest one so the error path stays deterministic
  std::vector<std::exception_ptr> errs(static_cast<size_t>(n));
#pragma omp parallel for schedule(dynamic, 1) num_threads(max_threads())
  for (int i = 0; i < n; ++i) {
    try {
      fn(i);
    } catch (...) {
      errs[i] = std::current_exception();
    }
  }
  for (int i = 0; i < n; ++i)
    if (errs[i]) std::rethrow_exception(errs[i]);
}

}  // namespace ikp::kernels
