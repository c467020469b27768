#include <Eigen/Dense>
#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "mmdflow/flow.hpp"
#include "mmdflow/targets.hpp"
#include "test_util.hpp"

using mmdflow::BoundPolicy;
using mmdflow::CounterRng;
using mmdflow::Entropy;
using mmdflow::EntropyKind;
using mmdflow::FlowConfig;
using mmdflow::KernelFamily;
using mmdflow::RadialKernel;
using mmdflow::RegularizedProblem;
using mmdflow::SolverConfig;

namespace {

const RadialKernel kGauss = RadialKernel::make(KernelFamily::gaussian, 1.0, 2);

SolverConfig accurate() {
  SolverConfig cfg;
  cfg.gap_tol = 1e-12;
  cfg.max_iters = 200000;
  cfg.gap_check_every = 5;
  return cfg;
}

}  // namespace

TEST_CASE("euler step identities") {
  const auto ts2 = Entropy::make(EntropyKind::tsallis, 2.0);
  const CounterRng rng(1);
  const Eigen::MatrixXd X = testutil::random_points(rng.stream(0), 5, 2);
  const Eigen::MatrixXd Y = testutil::random_points(rng.stream(1), 6, 2);
  const double lam = 0.4, tau = 0.05;
  const auto p = RegularizedProblem::make(ts2, kGauss, lam, X, Y);
  const auto sol = mmdflow::fista_infinite(p, accurate());
  const Eigen::MatrixXd stepped = mmdflow::euler_step(p, sol, tau);

  // x - tau * nabla p_hat(x), witness evaluated pointwise
  for (int i = 0; i < 5; ++i) {
    const Eigen::RowVectorXd expect = p.X.row(i) - tau * mmdflow::witness_grad(p, sol, p.X.row(i));
    CHECK((stepped.row(i) - expect).norm() <= 1e-12);
  }

  // the q-coefficient form x + tau/(lam M) sum_k q_k grad K(., z_k)(x)
  const int M = 6, N = 5;
  for (int i = 0; i < N; ++i) {
    Eigen::RowVectorXd vel = Eigen::RowVectorXd::Zero(2);
    for (int k = 0; k < M; ++k)
      vel += sol.q[k] * kernel_grad(kGauss, p.X.row(i), p.Y.row(k));
    for (int l = 0; l < N; ++l)
      vel += (-double(M) / N) * kernel_grad(kGauss, p.X.row(i), p.X.row(l));
    const Eigen::RowVectorXd expect = p.X.row(i) + tau / (lam * M) * vel;
    CHECK((stepped.row(i) - expect).norm() <= 1e-12);
  }
}

TEST_CASE("one-particle euler step closed form") {
  const auto ts2 = Entropy::make(EntropyKind::tsallis, 2.0);
  Eigen::MatrixXd X(1, 2), Y(1, 2);
  X << 1, 0;
  Y << 0, 0;
  const double lam = 0.1, tau = 0.1;
  const auto p = RegularizedProblem::make(ts2, kGauss, lam, X, Y);
  const auto sol = mmdflow::fista_infinite(p, accurate());
  const double k = std::exp(-0.5);
  const double qhat = (2.0 * lam + k) / (2.0 * lam + 1.0);
  CHECK(sol.q[0] == Catch::Approx(qhat).margin(1e-10));
  const Eigen::MatrixXd stepped = mmdflow::euler_step(p, sol, tau);
  // self-term gradient vanishes; the target term gives x - qhat * e^{-1/2} * x
  CHECK(stepped(0, 0) == Catch::Approx(1.0 - qhat * k).margin(1e-8));
  CHECK(stepped(0, 1) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("stationarity at the target") {
  const auto ts2 = Entropy::make(EntropyKind::tsallis, 2.0);
  const CounterRng rng(2);
  const Eigen::MatrixXd pts = testutil::random_points(rng.stream(0), 6, 2);
  const auto p = RegularizedProblem::make(ts2, kGauss, 0.3, pts, pts);
  const auto sol = mmdflow::fista_infinite(p, accurate());
  CHECK((mmdflow::euler_step(p, sol, 0.1) - pts).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(mmdflow::kinetic_energy(p, sol) < 1e-14);

  FlowConfig cfg;
  cfg.tau = 0.1;
  cfg.steps = 50;
  cfg.stop_kinetic = 1e-12;
  cfg.solver = accurate();
  const auto trace = mmdflow::run_flow(pts, pts, ts2, kGauss, 0.3, cfg);
  CHECK(trace.stopped_by_kinetic);
  CHECK(trace.records.size() == 1);
  CHECK(trace.records[0].kinetic < 1e-12);
}

TEST_CASE("kinetic energy matches the decay rate of the optimal value") {
  const auto ts2 = Entropy::make(EntropyKind::tsallis, 2.0);
  const CounterRng rng(3);
  const Eigen::MatrixXd X = testutil::random_points(rng.stream(0), 5, 2);
  const Eigen::MatrixXd Y = 0.5 * testutil::random_points(rng.stream(1), 5, 2);
  const auto p = RegularizedProblem::make(ts2, kGauss, 0.5, X, Y);
  const auto sol = mmdflow::fista_infinite(p, accurate());
  const double kin = mmdflow::kinetic_energy(p, sol);
  CHECK(kin >= 0.0);

  const double tau = 1e-5;
  const auto p2 = p.with_moved_particles(mmdflow::euler_step(p, sol, tau));
  const auto sol2 = mmdflow::fista_infinite(p2, accurate());
  const double rate = (sol.primal_value - sol2.primal_value) / tau;
  CHECK(rate == Catch::Approx(kin).epsilon(0.1));
}

TEST_CASE("one-step descent under time-step halving") {
  const auto kl = Entropy::make(EntropyKind::kl);
  const CounterRng rng(4);
  for (int rep = 0; rep < 5; ++rep) {
    const Eigen::MatrixXd X = testutil::random_points(rng.stream(2 * rep), 4, 2);
    const Eigen::MatrixXd Y = testutil::random_points(rng.stream(2 * rep + 1), 5, 2);
    const auto p = RegularizedProblem::make(kl, kGauss, 0.5, X, Y);
    const auto sol = mmdflow::fista_infinite(p, accurate());
    const double before = sol.primal_value;
    double tau = 0.5;
    bool descended = false;
    for (int halving = 0; halving <= 10; ++halving) {
      const auto pn = p.with_moved_particles(mmdflow::euler_step(p, sol, tau));
      const auto soln = mmdflow::fista_infinite(pn, accurate());
      if (soln.primal_value <= before + 1e-12) {
        descended = true;
        break;
      }
      tau *= 0.5;
    }
    CHECK(descended);
  }
}

TEST_CASE("permutation and translation equivariance") {
  const auto ts2 = Entropy::make(EntropyKind::tsallis, 2.0);
  const CounterRng rng(5);
  const Eigen::MatrixXd X = testutil::random_points(rng.stream(0), 6, 2);
  const Eigen::MatrixXd Y = testutil::random_points(rng.stream(1), 6, 2);

  FlowConfig cfg;
  cfg.tau = 0.05;
  cfg.steps = 5;
  cfg.solver = accurate();

  const auto base = mmdflow::run_flow(X, Y, ts2, kGauss, 0.4, cfg);

  // permute particles: the trajectory permutes with them
  Eigen::MatrixXd Xp(6, 2);
  const int perm[6] = {3, 0, 5, 1, 4, 2};
  for (int i = 0; i < 6; ++i) Xp.row(i) = X.row(perm[i]);
  const auto permuted = mmdflow::run_flow(Xp, Y, ts2, kGauss, 0.4, cfg);
  for (int i = 0; i < 6; ++i)
    CHECK((permuted.final_positions.row(i) - base.final_positions.row(perm[i])).norm() <= 1e-12);

  // translate everything: the flow translates
  Eigen::RowVectorXd shift(2);
  shift << 11.25, -3.5;
  const auto shifted = mmdflow::run_flow(X.rowwise() + shift, Y.rowwise() + shift, ts2, kGauss, 0.4, cfg);
  CHECK((shifted.final_positions - (base.final_positions.rowwise() + shift)).cwiseAbs().maxCoeff() <=
        1e-8);
}

TEST_CASE("annealing timeline") {
  const auto ts2 = Entropy::make(EntropyKind::tsallis, 2.0);
  const CounterRng rng(6);
  const Eigen::MatrixXd X = testutil::random_points(rng.stream(0), 4, 2);
  const Eigen::MatrixXd Y = testutil::random_points(rng.stream(1), 4, 2);

  FlowConfig cfg;
  cfg.tau = 1.0;
  cfg.steps = 8;
  cfg.snapshot_every = 4;
  cfg.anneal = {{2.0, 5.0}, {4.0, 5.0}, {6.0, 5.0}};
  const double lam0 = 1.0;
  const auto trace = mmdflow::run_flow(X, Y, ts2, kGauss, lam0, cfg);

  REQUIRE(trace.records.size() == 9);
  for (const auto& r : trace.records) {
    const double expected = lam0 / std::pow(5.0, std::min(3.0, std::floor(r.time / 2.0)));
    CHECK(r.lambda == Catch::Approx(expected).epsilon(1e-15));
  }
  // lambda non-increasing, time strictly increasing
  for (std::size_t i = 1; i < trace.records.size(); ++i) {
    CHECK(trace.records[i].lambda <= trace.records[i - 1].lambda);
    CHECK(trace.records[i].time > trace.records[i - 1].time);
  }
  // W2 present exactly at snapshot cadence
  for (const auto& r : trace.records) {
    if (r.step % 4 == 0 || r.step == 8)
      CHECK(std::isfinite(r.w2));
    else
      CHECK(std::isnan(r.w2));
  }
}

TEST_CASE("flow config validation") {
  FlowConfig cfg;
  cfg.tau = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.tau = 0.1;
  cfg.anneal = {{1.0, 0.5}};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.anneal = {{2.0, 5.0}, {1.0, 5.0}};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.anneal = {{1.0, 5.0}, {2.0, 5.0}};
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("recession bound policy") {
  const auto tv = Entropy::make(EntropyKind::total_variation);
  const CounterRng rng(8);
  const Eigen::MatrixXd X = testutil::random_points(rng.stream(0), 5, 2);
  const Eigen::MatrixXd Y = testutil::random_points(rng.stream(1), 5, 2).rowwise() +
                            Eigen::RowVector2d(6.0, 0.0);

  FlowConfig cfg;
  cfg.tau = 0.01;
  cfg.steps = 2;
  cfg.solver.gap_tol = 1e-8;

  // lambda far below 2 d_K sqrt(phi(0)) / f'_inf
  cfg.bound_policy = BoundPolicy::enforce;
  CHECK_THROWS_AS(mmdflow::run_flow(X, Y, tv, kGauss, 1e-4, cfg), std::invalid_argument);

  cfg.bound_policy = BoundPolicy::warn;
  const auto trace = mmdflow::run_flow(X, Y, tv, kGauss, 1e-4, cfg);
  CHECK(!trace.warnings.empty());
}

TEST_CASE("tight flow requires infinite recession") {
  const auto tv = Entropy::make(EntropyKind::total_variation);
  const CounterRng rng(9);
  const Eigen::MatrixXd X = testutil::random_points(rng.stream(0), 4, 2);
  FlowConfig cfg;
  cfg.tight = true;
  CHECK_THROWS_AS(mmdflow::run_flow(X, X, tv, kGauss, 1.0, cfg), std::invalid_argument);
}

TEST_CASE("matern kernel flow runs and descends") {
  const auto ts2 = Entropy::make(EntropyKind::tsallis, 2.0);
  const auto matern = RadialKernel::make(KernelFamily::matern_3_2, 1.0, 2);
  const CounterRng rng(12);
  const Eigen::MatrixXd X = testutil::random_points(rng.stream(0), 30, 2).rowwise() +
                            Eigen::RowVector2d(2.0, 0.0);
  const Eigen::MatrixXd Y = testutil::random_points(rng.stream(1), 30, 2);
  FlowConfig cfg;
  cfg.tau = 1e-2;
  cfg.steps = 100;
  cfg.snapshot_every = 50;
  cfg.solver.gap_tol = 1e-8;
  const auto trace = mmdflow::run_flow(X, Y, ts2, matern, 0.05, cfg);
  CHECK(trace.records.back().mmd2 < 0.3 * trace.records.front().mmd2);
}

TEST_CASE("small three-rings flow decreases the squared mmd") {
  const auto ts3 = Entropy::make(EntropyKind::tsallis, 3.0);
  const auto imq = RadialKernel::make(KernelFamily::inverse_multiquadric, 0.05, 2);

  mmdflow::SampleSpec target_spec;
  target_spec.name = "three_rings";
  target_spec.count = 60;
  target_spec.seed = 5;
  mmdflow::SampleSpec init_spec;
  init_spec.name = "gaussian_init";
  init_spec.count = 60;
  init_spec.seed = 6;

  FlowConfig cfg;
  cfg.tau = 1e-3;
  cfg.steps = 300;
  cfg.snapshot_every = 100;
  cfg.solver.gap_tol = 1e-7;
  cfg.solver.max_iters = 50000;

  const auto trace = mmdflow::run_flow(mmdflow::sample(init_spec), mmdflow::sample(target_spec),
                                       ts3, imq, 1e-2, cfg);
  REQUIRE(trace.records.size() == 301);
  CHECK(trace.records.back().mmd2 < 0.5 * trace.records.front().mmd2);
}
