#include "ikp/harness.hpp"

namespace ikp::harness {

int run_bench(const BenchOptions& opts) {
  (void)opts;
  return 1;  // filled in below
}

}  // namespace ikp::harness
