#include <Eigen/Dense>
#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "mmdflow/objective.hpp"
#include "mmdflow/solvers.hpp"
#include "test_util.hpp"

using mmdflow::CounterRng;
using mmdflow::DiscreteMeasure;
using mmdflow::Entropy;
using mmdflow::EntropyKind;
using mmdflow::KernelFamily;
using mmdflow::kInf;
using mmdflow::RadialKernel;
using mmdflow::RegularizedProblem;
using mmdflow::SolverConfig;

namespace {

const RadialKernel kGauss = RadialKernel::make(KernelFamily::gaussian, 1.0, 2);

RegularizedProblem random_problem(const Entropy& e, double lam, int n, int m, std::uint64_t seed) {
  const CounterRng rng(seed);
  return RegularizedProblem::make(e, kGauss, lam, testutil::random_points(rng.stream(1), n, 2),
                                  testutil::random_points(rng.stream(2), m, 2));
}

SolverConfig tight_tolerance_config() {
  SolverConfig cfg;
  cfg.gap_tol = 1e-12;
  cfg.max_iters = 200000;
  cfg.gap_check_every = 5;
  return cfg;
}

}  // namespace

TEST_CASE("primal objective special values") {
  // zero entropy, q = 0 full: every term vanishes
  const auto zero = Entropy::make(EntropyKind::zero);
  const auto pz = random_problem(zero, 0.7, 3, 4, 42);
  CHECK(mmdflow::primal_objective(pz, Eigen::VectorXd::Zero(7)) == Catch::Approx(0.0).margin(1e-15));

  // reduced case at q = 1 (sigma-hat = nu): J = d_K(nu, mu)^2 / (2 lam)
  const auto kl = Entropy::make(EntropyKind::kl);
  const auto p = random_problem(kl, 0.31, 5, 6, 43);
  const double got = mmdflow::primal_objective(p, Eigen::VectorXd::Ones(6));
  const double via_mmd = mmd_squared(kGauss, DiscreteMeasure::uniform(p.Y),
                                     DiscreteMeasure::uniform(p.X)) / (2.0 * 0.31);
  CHECK(got == Catch::Approx(via_mmd).epsilon(1e-12));
  CHECK(got == Catch::Approx(p.mmd2() / (2.0 * 0.31)).epsilon(1e-12));

  CHECK_THROWS_AS(mmdflow::primal_objective(p, Eigen::VectorXd::Ones(4)), std::invalid_argument);
}

TEST_CASE("one-particle tsallis-2 closed form") {
  const auto ts2 = Entropy::make(EntropyKind::tsallis, 2.0);
  const CounterRng rng(7);
  for (int rep = 0; rep < 5; ++rep) {
    const Eigen::MatrixXd X = testutil::random_points(rng.stream(2 * rep), 1, 2);
    const Eigen::MatrixXd Y = testutil::random_points(rng.stream(2 * rep + 1), 1, 2);
    const double lam = 0.05 + rng.uniform(rep);
    const auto p = RegularizedProblem::make(ts2, kGauss, lam, X, Y);
    const double kxy = p.Kxy(0, 0);
    const double qstar = (2.0 * lam + kxy) / (2.0 * lam + 1.0);  // K(y,y) = 1 for gaussian
    // stationarity of J at the closed-form minimizer
    const double h = 1e-6;
    Eigen::VectorXd qp(1), qm(1);
    qp << qstar + h;
    qm << qstar - h;
    const double deriv =
        (mmdflow::primal_objective(p, qp) - mmdflow::primal_objective(p, qm)) / (2.0 * h);
    CHECK(deriv == Catch::Approx(0.0).margin(1e-8));
    // and the optimal value matches the closed form
    Eigen::VectorXd q(1);
    q << qstar;
    const double want = (1.0 - kxy) / lam * (kxy + 4.0 * lam + 1.0) / (2.0 * (2.0 * lam + 1.0));
    CHECK(mmdflow::primal_objective(p, q) == Catch::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("smooth gradient") {
  const auto kl = Entropy::make(EntropyKind::kl);
  const auto p = random_problem(kl, 0.6, 4, 5, 44);
  const int M = 5, N = 4;

  // at q = 0 the reduced gradient is the constant term
  const Eigen::VectorXd g0 = mmdflow::primal_smooth_gradient(p, Eigen::VectorXd::Zero(M));
  const Eigen::VectorXd want0 = -p.kxy_t_one / (0.6 * M * N);
  CHECK((g0 - want0).cwiseAbs().maxCoeff() < 1e-14);

  // finite differences of the smooth part, rebuilt here from the blocks
  auto smooth = [&](const Eigen::VectorXd& q) {
    return q.dot(p.Kyy * q) / (2.0 * 0.6 * M * M) - p.kxy_t_one.dot(q) / (0.6 * M * N);
  };
  const CounterRng rng(3);
  Eigen::VectorXd q(M);
  for (int i = 0; i < M; ++i) q[i] = rng.uniform(i, 0.2, 2.0);
  const Eigen::VectorXd g = mmdflow::primal_smooth_gradient(p, q);
  for (int i = 0; i < M; ++i) {
    Eigen::VectorXd qp = q, qm = q;
    qp[i] += 1e-6;
    qm[i] -= 1e-6;
    const double fd = (smooth(qp) - smooth(qm)) / 2e-6;
    CHECK(g[i] == Catch::Approx(fd).epsilon(1e-6));
  }

  // zero entropy, full q = 0: recession 0 kills the linear term
  const auto zero = Entropy::make(EntropyKind::zero);
  const auto pz = random_problem(zero, 0.6, 4, 5, 45);
  CHECK(mmdflow::primal_smooth_gradient(pz, Eigen::VectorXd::Zero(9)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("witness at the optimum") {
  const auto ts2 = Entropy::make(EntropyKind::tsallis, 2.0);

  // mu = nu: the witness vanishes identically
  const CounterRng rng(19);
  const Eigen::MatrixXd pts = testutil::random_points(rng.stream(0), 6, 2);
  const auto p_eq = RegularizedProblem::make(ts2, kGauss, 0.5, pts, pts);
  const auto sol_eq = mmdflow::fista_infinite(p_eq, tight_tolerance_config());
  CHECK(std::sqrt(mmdflow::witness_norm2(p_eq, sol_eq)) < 1e-6);
  Eigen::RowVectorXd probe(2);
  probe << 0.2, -0.7;
  CHECK(mmdflow::witness_eval(p_eq, sol_eq, probe) == Catch::Approx(0.0).margin(1e-6));

  // Cor. 3.8 bounds on random instances
  for (int rep = 0; rep < 6; ++rep) {
    const double lam = 0.2 + 0.3 * rep;
    const auto p = random_problem(ts2, lam, 5, 7, 100 + rep);
    const auto sol = mmdflow::fista_infinite(p, tight_tolerance_config());
    const double pnorm = std::sqrt(mmdflow::witness_norm2(p, sol));
    const double dk = std::sqrt(p.mmd2());
    const double dval = sol.primal_value;
    CHECK(pnorm <= 2.0 / lam * dk + 1e-9);
    CHECK(0.5 * lam * pnorm * pnorm <= dval + 1e-9);
    CHECK(dval <= pnorm * dk + 1e-9);
  }
}

TEST_CASE("witness gradient matches the envelope derivative") {
  const auto ts2 = Entropy::make(EntropyKind::tsallis, 2.0);
  const auto p = random_problem(ts2, 0.4, 4, 5, 77);
  const auto cfg = tight_tolerance_config();
  const auto sol = mmdflow::fista_infinite(p, cfg);
  const int N = 4;

  // N * d/dx_i of the optimal value against nabla p_hat(x_i)
  const double h = 1e-5;
  for (int i = 0; i < 2; ++i) {
    const Eigen::RowVectorXd g = mmdflow::witness_grad(p, sol, p.X.row(i));
    for (int j = 0; j < 2; ++j) {
      Eigen::MatrixXd xp = p.X, xm = p.X;
      xp(i, j) += h;
      xm(i, j) -= h;
      const auto solp = mmdflow::fista_infinite(p.with_moved_particles(xp), cfg);
      const auto solm = mmdflow::fista_infinite(p.with_moved_particles(xm), cfg);
      const double fd = N * (solp.primal_value - solm.primal_value) / (2.0 * h);
      CHECK(g[j] == Catch::Approx(fd).epsilon(1e-4).margin(1e-7));
    }
  }
}

TEST_CASE("stale solutions are rejected") {
  const auto ts2 = Entropy::make(EntropyKind::tsallis, 2.0);
  const auto p = random_problem(ts2, 0.5, 3, 4, 55);
  const auto sol = mmdflow::fista_infinite(p, SolverConfig{});
  const auto moved = p.with_moved_particles(p.X * 1.01);
  Eigen::RowVectorXd probe(2);
  probe << 0, 0;
  CHECK_THROWS_AS(mmdflow::witness_eval(moved, sol, probe), std::invalid_argument);
  CHECK_NOTHROW(mmdflow::witness_eval(p, sol, probe));
}

TEST_CASE("dual objective") {
  const auto kl = Entropy::make(EntropyKind::kl);
  const auto p = random_problem(kl, 0.5, 4, 5, 66);

  // b = 0 has value 0 because f*(0) = 0
  CHECK(mmdflow::dual_objective(p, Eigen::VectorXd::Zero(9)) == Catch::Approx(0.0).margin(1e-15));

  // strong duality at the optimum
  const auto sol = mmdflow::fista_infinite(p, tight_tolerance_config());
  CHECK(sol.dual_value == Catch::Approx(sol.primal_value).epsilon(1e-8));

  // weak duality for arbitrary coefficient vectors
  const CounterRng rng(91);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::VectorXd b(9);
    for (int i = 0; i < 9; ++i) b[i] = 0.3 * rng.stream(rep).normal(i);
    CHECK(mmdflow::dual_objective(p, b) <= sol.primal_value + 1e-9);
  }
}

TEST_CASE("pseudo-duality gap") {
  const auto ts2 = Entropy::make(EntropyKind::tsallis, 2.0);
  const auto p = random_problem(ts2, 0.8, 10, 10, 88);

  const auto sol = mmdflow::fista_infinite(p, tight_tolerance_config());
  const auto at_opt = mmdflow::pseudo_duality_gap(p, sol.q);
  CHECK(at_opt.rel_gap <= 1e-6);

  // q = 1 (sigma-hat = nu): both sides evaluated consistently
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(10);
  const auto rep = mmdflow::pseudo_duality_gap(p, ones);
  const double primal = mmdflow::primal_objective(p, ones);
  const double dual = mmdflow::dual_objective(p, mmdflow::witness_coeffs(p, ones));
  CHECK(rep.primal == Catch::Approx(primal));
  CHECK(rep.dual == Catch::Approx(dual));
  CHECK(rep.gap == Catch::Approx(std::abs(primal - dual)));
}

TEST_CASE("tight conjugate") {
  const auto kl = Entropy::make(EntropyKind::kl);
  const CounterRng rng(123);
  const int m = 7;
  const Eigen::VectorXd nu_w = Eigen::VectorXd::Constant(m, 1.0 / m);

  // g = 0 for a probability target: log(1) = 0
  CHECK(mmdflow::tight_conjugate(kl, nu_w, Eigen::VectorXd::Zero(m)) ==
        Catch::Approx(0.0).margin(1e-10));

  // matches log-sum-exp in closed form
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::VectorXd g(m);
    for (int i = 0; i < m; ++i) g[i] = 2.0 * rng.stream(rep).normal(i);
    const double want = std::log((g.array().exp() * nu_w.array()).sum());
    CHECK(mmdflow::tight_conjugate(kl, nu_w, g) == Catch::Approx(want).margin(1e-10));
  }
}

TEST_CASE("tight primal objective") {
  const auto ts2 = Entropy::make(EntropyKind::tsallis, 2.0);
  const auto p = random_problem(ts2, 0.45, 5, 6, 99);

  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(6);
  CHECK(mmdflow::tight_primal_objective(p, ones) ==
        Catch::Approx(p.mmd2() / (2.0 * 0.45)).epsilon(1e-12));

  Eigen::VectorXd bad = ones;
  bad[0] += 1e-6;
  CHECK_THROWS_AS(mmdflow::tight_primal_objective(p, bad), std::invalid_argument);
  CHECK_THROWS_AS(mmdflow::tight_primal_objective(p, Eigen::VectorXd::Ones(5)),
                  std::invalid_argument);

  // one-particle case: the simplex pins sigma-hat = nu
  const CounterRng rng(31);
  const Eigen::MatrixXd X = testutil::random_points(rng.stream(0), 1, 2);
  const Eigen::MatrixXd Y = testutil::random_points(rng.stream(1), 1, 2);
  const auto p1 = RegularizedProblem::make(ts2, kGauss, 0.3, X, Y);
  const double want = (p1.Kxx(0, 0) + p1.Kyy(0, 0) - 2.0 * p1.Kxy(0, 0)) / (2.0 * 0.3);
  CHECK(mmdflow::tight_primal_objective(p1, Eigen::VectorXd::Ones(1)) ==
        Catch::Approx(want).epsilon(1e-12));
}

TEST_CASE("monotone in lambda and the divergence property") {
  const auto kl = Entropy::make(EntropyKind::kl);
  const auto cfg = tight_tolerance_config();
  const CounterRng rng(555);
  const Eigen::MatrixXd X = testutil::random_points(rng.stream(0), 6, 2);
  const Eigen::MatrixXd Y = testutil::random_points(rng.stream(1), 6, 2);

  double prev = kInf;
  for (double lam : {0.05, 0.2, 1.0, 5.0}) {
    const auto p = RegularizedProblem::make(kl, kGauss, lam, X, Y);
    const double v = mmdflow::fista_infinite(p, cfg).primal_value;
    CHECK(v <= prev + 1e-10);
    CHECK(v > 0.0);  // mu != nu
    prev = v;
  }

  const auto p_eq = RegularizedProblem::make(kl, kGauss, 0.5, Y, Y);
  CHECK(mmdflow::fista_infinite(p_eq, cfg).primal_value <= 1e-10);
}

TEST_CASE("lambda limits on a mu << nu instance") {
  const auto kl = Entropy::make(EntropyKind::kl);
  const CounterRng rng(777);
  // fixed 10-atom target on a coarse grid; the wide separation keeps the
  // gram matrix well conditioned so the lambda -> 0 limit is tight
  Eigen::MatrixXd Y(10, 2);
  for (int i = 0; i < 10; ++i) Y.row(i) << 4.0 * (i % 5), 4.0 * (i / 5);
  Eigen::MatrixXd X(10, 2);
  // a multiset of target atoms: densities (2, 1, ..., 1, 0)
  X.row(0) = Y.row(0);
  for (int i = 1; i < 10; ++i) X.row(i) = Y.row(i - 1);
  const auto mu = DiscreteMeasure::uniform(X);
  const auto nu = DiscreteMeasure::uniform(Y);
  const double df = discrete_f_divergence(kl, mu, nu);
  CHECK(df == Catch::Approx((kl.value(2.0) + kl.value(0.0)) / 10.0).epsilon(1e-12));

  SolverConfig cfg = tight_tolerance_config();
  cfg.max_iters = 500000;

  // lambda -> 0 recovers the plain divergence
  const auto p_small = RegularizedProblem::make(kl, kGauss, 1e-6, X, Y);
  const double d_small = mmdflow::fista_infinite(p_small, cfg).primal_value;
  CHECK(std::abs(d_small - df) <= 1e-3);

  // lambda -> inf: (1 + lambda) D^lambda approaches d_K^2 / 2
  const Eigen::MatrixXd X2 = testutil::random_points(rng.stream(5), 10, 2);
  const auto p_big = RegularizedProblem::make(kl, kGauss, 1e4, X2, Y);
  const double d_big = mmdflow::fista_infinite(p_big, cfg).primal_value;
  const double half_dk2 = 0.5 * p_big.mmd2();
  CHECK(std::abs((1.0 + 1e4) * d_big - half_dk2) / half_dk2 <= 1e-2);
}
