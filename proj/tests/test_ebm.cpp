#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ikp/ebm.hpp"
#include "ikp/kernels.hpp"

using namespace ikp;
using namespace ikp::ebm;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("infonce: uniform energies give ln(N+1)") {
  VectorXd negs = VectorXd::Zero(255);
  const double loss = infonce_loss(0.0, negs);
  CHECK(std::abs(loss - 5.545177444479562) < 1e-10);  // ln 256
  // invariant to the common energy level
  CHECK(std::abs(infonce_loss(3.7, VectorXd::Constant(255, 3.7)) - loss) < 1e-10);
}

TEST_CASE("infonce: saturated case is ~0") {
  VectorXd negs = VectorXd::Constant(4, 20.0);
  CHECK(std::abs(infonce_loss(-20.0, negs)) < 1e-12);
  CHECK(infonce_loss(-20.0, negs) >= 0.0);
}

TEST_CASE("infonce: hand-computed value for E_pos=1, negs=(2,3)") {
  VectorXd negs(2);
  negs << 2.0, 3.0;
  CHECK(std::abs(infonce_loss(1.0, negs) - 0.4076059644443803) < 1e-12);
}

TEST_CASE("infonce: shift invariance to 1e-10") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    VectorXd negs(8);
    for (int i = 0; i < 8; ++i) negs[i] = rng.uniform(-30, 30);
    const double e = rng.uniform(-30, 30);
    const double c = rng.uniform(-100, 100);
    const double a = infonce_loss(e, negs);
    const double b = infonce_loss(e + c, negs.array() + c);
    CHECK(std::abs(a - b) < 1e-10);
  }
}

TEST_CASE("infonce: decreasing the positive energy strictly decreases the loss") {
  Rng rng(5);
  VectorXd negs(16);
  for (int i = 0; i < 16; ++i) negs[i] = rng.uniform(-3, 3);
  double prev = infonce_loss(3.0, negs);
  for (double e = 2.5; e >= -3.0; e -= 0.5) {
    const double cur = infonce_loss(e, negs);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("infonce: bounds and non-finite rejection") {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    VectorXd negs(5);
    for (int i = 0; i < 5; ++i) negs[i] = rng.uniform(-50, 50);
    const double loss = infonce_loss(rng.uniform(-50, 50), negs);
    CHECK(loss >= 0.0);
    CHECK(std::isfinite(loss));
  }
  VectorXd bad(2);
  bad << 1.0, std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(infonce_loss(0.0, bad), TrainingError);
  CHECK_THROWS_AS(infonce_loss(std::numeric_limits<double>::quiet_NaN(), VectorXd::Zero(2)),
                  TrainingError);
}

TEST_CASE("infonce gradient matches finite differences") {
  Rng rng(12);
  for (int probe = 0; probe < 10; ++probe) {
    VectorXd e(6);
    for (int i = 0; i < 6; ++i) e[i] = rng.uniform(-4, 4);
    ad::Tape tape;
    ad::NodeId en = tape.input(e);
    tape.backward(tape.infonce(en));
    VectorXd grad = tape.adjoint(en);
    for (int i = 0; i < 6; ++i) {
      const double h = 1e-5;
      VectorXd ep = e, em = e;
      ep[i] += h;
      em[i] -= h;
      const double fd = (infonce_loss(ep[0], ep.tail(5)) - infonce_loss(em[0], em.tail(5))) /
                        (2 * h);
      CHECK(std::abs(grad[i] - fd) / std::max({std::abs(fd), std::abs(grad[i]), 1e-6}) <
            1e-4);
    }
  }
}

TEST_CASE("negative sampling: bounds, midpoint, and seeded reproducibility") {
  ActionBounds b;
  b.lo = VectorXd::Constant(2, -1.5);
  b.hi = VectorXd::Constant(2, 2.5);
  Rng rng(9);
  MatrixXd s = sample_negatives(b, 10000, rng);
  CHECK((s.array() >= -1.5).all());
  CHECK((s.array() < 2.5).all());

  Rng r2(9);
  MatrixXd s2 = sample_negatives(b, 10000, r2);
  CHECK((s - s2).cwiseAbs().maxCoeff() == 0.0);

  // zero-width bounds collapse to the midpoint
  ActionBounds degenerate;
  degenerate.lo = VectorXd::Constant(1, 0.7);
  degenerate.hi = VectorXd::Constant(1, 0.7);
  Rng r3(1);
  CHECK(sample_negatives(degenerate, 1, r3)(0, 0) == 0.7);

  CHECK_THROWS_AS(sample_negatives(b, 0, rng), ConfigError);
}

TEST_CASE("negative sampling: per-dimension mean within 3 sigma at n=1e5") {
  ActionBounds b;
  b.lo = VectorXd(2);
  b.hi = VectorXd(2);
  b.lo << -2.0, 0.5;
  b.hi << 1.0, 3.5;
  Rng rng(123);
  const int n = 100000;
  MatrixXd s = sample_negatives(b, n, rng);
  for (int dim = 0; dim < 2; ++dim) {
    const double width = b.hi[dim] - b.lo[dim];
    const double want = 0.5 * (b.lo[dim] + b.hi[dim]);
    const double sigma = width / std::sqrt(12.0) / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(s.row(dim).mean() - want) < 3.0 * sigma);
  }
}

TEST_CASE("bounds validation") {
  ActionBounds b;
  b.lo = VectorXd::Constant(2, 1.0);
  b.hi = VectorXd::Constant(2, -1.0);
  CHECK_THROWS_AS(b.validate(), ConfigError);
}

TEST_CASE("batch energy kernel: OpenMP path is bit-identical to the serial reference") {
  ad::ParamStore params;
  ad::DenseResNet net = ad::DenseResNet::create(params, "n", 12, 16, 3, 1);
  Rng init(55);
  net.init(params, init);
  MatrixXd X(12, 1000);
  Rng rng(56);
  for (int j = 0; j < X.cols(); ++j)
    for (int i = 0; i < X.rows(); ++i) X(i, j) = rng.uniform(-1, 1);
  VectorXd a, b;
  kernels::eval_energies_serial(net, params, X, a);
  kernels::eval_energies(net, params, X, b);
  REQUIRE(a.size() == b.size());
  for (int i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("batch energy kernel matches the graph forward to 1e-12") {
  ad::ParamStore params;
  ad::DenseResNet net = ad::DenseResNet::create(params, "n", 7, 12, 2, 1);
  Rng init(77);
  net.init(params, init);
  MatrixXd X(7, 37);
  Rng rng(78);
  for (int j = 0; j < X.cols(); ++j)
    for (int i = 0; i < X.rows(); ++i) X(i, j) = rng.uniform(-1, 1);
  VectorXd fast;
  kernels::eval_energies(net, params, X, fast);
  for (int j = 0; j < X.cols(); ++j) {
    ad::Tape tape(&params);
    const double want = tape.value_scalar(net.forward(tape, tape.input(X.col(j))));
    CHECK(std::abs(fast[j] - want) < 1e-12);
  }
}
