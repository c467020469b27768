#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mmdflow/measures.hpp"
#include "mmdflow/objective.hpp"
#include "mmdflow/solvers.hpp"

namespace mmdflow {

// What to do when a finite-recession run sits below the representer
// threshold lam > 2 d_K sqrt(phi(0)) / f'_inf.  The finite-dimensional
// problem stays well posed either way, only the reduction to it is unproven,
// so the default records a warning instead of refusing runs like the
// paper-scale total-variation flow.
enum class BoundPolicy { warn, enforce };

struct AnnealEvent {
  double time = 0.0;
  double divisor = 5.0;
};

struct FlowConfig {
  double tau = 1e-3;
  long steps = 1000;
  long snapshot_every = 100;
  std::vector<AnnealEvent> anneal;
  double stop_kinetic = 0.0;  // 0 disables the kinetic-energy stop
  std::uint64_t seed = 0;
  SolverConfig solver;
  bool tight = false;
  BoundPolicy bound_policy = BoundPolicy::warn;

  void validate() const {
    if (!(tau > 0.0)) throw std::invalid_argument("FlowConfig: tau must be positive");
    if (steps < 0) throw std::invalid_argument("FlowConfig: steps must be >= 0");
    if (snapshot_every < 1) throw std::invalid_argument("FlowConfig: snapshot_every must be >= 1");
    if (stop_kinetic < 0.0) throw std::invalid_argument("FlowConfig: stop_kinetic must be >= 0");
    double prev = -kInf;
    for (const auto& ev : anneal) {
      if (!(ev.divisor > 1.0)) throw std::invalid_argument("FlowConfig: anneal divisor must be > 1");
      if (!(ev.time > prev)) throw std::invalid_argument("FlowConfig: anneal times must increase");
      prev = ev.time;
    }
    solver.validate();
  }
};

struct FlowRecord {
  long step = 0;
  double time = 0.0;
  double mmd2 = 0.0;
  double w2 = std::numeric_limits<double>::quiet_NaN();  // filled at snapshot cadence
  double kinetic = 0.0;
  double rel_gap = 0.0;
  double lambda = 0.0;
};

struct FlowTrace {
  std::vector<FlowRecord> records;
  std::vector<std::pair<long, Eigen::MatrixXd>> snapshots;
  std::vector<std::string> warnings;
  bool stopped_by_kinetic = false;
  long steps_run = 0;
  Eigen::MatrixXd final_positions;
};

// (1/N) sum_i ||nabla p_hat(x_i)||^2, the termination monitor of the flow.
inline double kinetic_energy(const RegularizedProblem& p, const DualSolution& sol) {
  return witness_grads_at_particles(p, sol).rowwise().squaredNorm().mean();
}

// One forward-Euler step x_i <- x_i - tau * nabla p_hat(x_i); equivalently
// x_i + (tau/(lam M)) sum_k q_k grad K(., z_k)(x_i) through the coefficient
// identities.
inline Eigen::MatrixXd euler_step(const RegularizedProblem& p, const DualSolution& sol, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("euler_step: tau must be positive");
  return p.X - tau * witness_grads_at_particles(p, sol);
}

struct SolverAbort : std::runtime_error {
  long step;
  explicit SolverAbort(long step_, const std::string& what)
      : std::runtime_error("solver aborted at step " + std::to_string(step_) + ": " + what),
        step(step_) {}
};

// Forward-Euler particle flow with annealing and the kinetic-energy stop.
// Each recorded row reflects the state (and its solve) before the update of
// that step; the final state gets a closing row and snapshot.
inline FlowTrace run_flow(const Eigen::MatrixXd& init, const Eigen::MatrixXd& target,
                          const Entropy& entropy, const RadialKernel& kernel, double lam0,
                          const FlowConfig& cfg) {
  cfg.validate();
  if (!(lam0 > 0.0)) throw std::invalid_argument("run_flow: lam0 must be positive");
  if (init.cols() != target.cols()) throw std::invalid_argument("run_flow: dimension mismatch");
  if (cfg.tight && std::isfinite(entropy.recession()))
    throw std::invalid_argument("run_flow: tight flow requires an entropy with f'_inf = inf");

  FlowTrace trace;
  RegularizedProblem problem = RegularizedProblem::make(entropy, kernel, lam0, init, target);
  double lambda = lam0;
  std::size_t next_anneal = 0;
  SolverConfig scfg = cfg.solver;
  bool warned_bound = false;

  for (long step = 0;; ++step) {
    if (problem.finite_recession()) {
      const double bound = problem.recession_lambda_bound();
      if (lambda <= bound) {
        const std::string msg = "step " + std::to_string(step) + ": lambda " +
                                std::to_string(lambda) +
                                " at or below the representer threshold 2 d_K sqrt(phi(0))/f'_inf = " +
                                std::to_string(bound);
        if (cfg.bound_policy == BoundPolicy::enforce)
          throw std::invalid_argument("run_flow: " + msg);
        if (!warned_bound) {
          trace.warnings.push_back(msg);
          warned_bound = true;
        }
      }
    }

    DualSolution sol;
    try {
      sol = solve_regularized(problem, scfg, cfg.tight);
    } catch (const std::exception& e) {
      throw SolverAbort(step, e.what());
    }
    if (!std::isfinite(sol.primal_value)) throw SolverAbort(step, "non-finite objective");
    scfg.warm_start = sol.q;

    const Eigen::MatrixXd grads = witness_grads_at_particles(problem, sol);
    const double kin = grads.rowwise().squaredNorm().mean();

    FlowRecord rec;
    rec.step = step;
    rec.time = static_cast<double>(step) * cfg.tau;
    rec.mmd2 = problem.mmd2();
    rec.kinetic = kin;
    rec.rel_gap = sol.rel_gap;
    rec.lambda = lambda;
    const bool snapshot_step = (step % cfg.snapshot_every == 0) || step == cfg.steps;
    if (snapshot_step) {
      rec.w2 = wasserstein2_empirical(problem.X, problem.Y);
      trace.snapshots.emplace_back(step, problem.X);
    }
    trace.records.push_back(rec);

    if (step == cfg.steps) break;
    if (cfg.stop_kinetic > 0.0 && kin < cfg.stop_kinetic) {
      trace.stopped_by_kinetic = true;
      if (!snapshot_step) trace.snapshots.emplace_back(step, problem.X);
      break;
    }

    Eigen::MatrixXd x_next = problem.X - cfg.tau * grads;

    // annealing schedule: divide lambda once per event when its time is
    // reached, re-checking the representer threshold first.
    const double t_next = static_cast<double>(step + 1) * cfg.tau;
    double lambda_next = lambda;
    while (next_anneal < cfg.anneal.size() && t_next >= cfg.anneal[next_anneal].time) {
      const double candidate = lambda_next / cfg.anneal[next_anneal].divisor;
      bool apply = true;
      if (problem.finite_recession()) {
        const double bound = problem.recession_lambda_bound();
        if (candidate <= bound) {
          trace.warnings.push_back("step " + std::to_string(step + 1) +
                                   ": skipped lambda division (would cross the representer threshold " +
                                   std::to_string(bound) + ")");
          apply = false;
        }
      }
      if (apply) lambda_next = candidate;
      ++next_anneal;
    }

    problem = problem.with_moved_particles(std::move(x_next));
    if (lambda_next != lambda) {
      lambda = lambda_next;
      problem = problem.with_lambda(lambda);
    }
  }

  trace.steps_run = trace.records.empty() ? 0 : trace.records.back().step;
  trace.final_positions = problem.X;
  return trace;
}

}  // namespace mmdflow
