#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include "mmdflow/objective.hpp"

namespace mmdflow {

enum class StepRule { fixed_lipschitz, armijo, polyak };

inline StepRule step_rule_from_name(const std::string& name) {
  if (name == "fixed_lipschitz") return StepRule::fixed_lipschitz;
  if (name == "armijo") return StepRule::armijo;
  if (name == "polyak") return StepRule::polyak;
  throw std::invalid_argument("unknown step rule: " + name);
}

struct SolverConfig {
  int max_iters = 20000;
  double gap_tol = 1e-8;  // relative pseudo-duality gap
  StepRule step_rule = StepRule::fixed_lipschitz;
  std::optional<Eigen::VectorXd> warm_start;
  int gap_check_every = 10;
  bool record_history = false;

  void validate() const {
    if (max_iters < 1) throw std::invalid_argument("SolverConfig: max_iters must be >= 1");
    if (!(gap_tol > 0.0)) throw std::invalid_argument("SolverConfig: gap_tol must be positive");
    if (gap_check_every < 1) throw std::invalid_argument("SolverConfig: gap_check_every must be >= 1");
  }
};

inline double fista_momentum_next(double t) { return 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t)); }

namespace detail {

// Converged when the relative gap meets the tolerance, or absolutely when
// both objective values already agree to machine precision.
inline bool gap_converged(const GapReport& r, double tol) {
  if (!std::isfinite(r.dual)) return false;
  if (r.rel_gap <= tol) return true;
  return r.gap <= 1e-15 * std::max({1.0, std::abs(r.primal), std::abs(r.dual)});
}

}  // namespace detail

// FISTA on the reduced objective (f'_inf = inf): monotone variant, fixed
// 1/L step with L = ||K_yy||_2 / (lam M^2).  The momentum sequence is
// t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2.  The gradient-step constant follows
// the standard z - (1/L) grad derivation.
inline DualSolution fista_infinite(const RegularizedProblem& p, const SolverConfig& cfg) {
  cfg.validate();
  if (p.finite_recession())
    throw std::invalid_argument("fista_infinite requires an entropy with f'_inf = inf");
  const Eigen::Index M = p.m(), N = p.n();
  const double Md = static_cast<double>(M), Nd = static_cast<double>(N);

  double L = p.norm_kyy / (p.lam * Md * Md);
  const Eigen::VectorXd grad_const = p.kxy_t_one / (p.lam * Md * Nd);
  auto grad = [&](const Eigen::VectorXd& z) -> Eigen::VectorXd {
    return (p.Kyy * z) / (p.lam * Md * Md) - grad_const;
  };
  auto smooth_part = [&](const Eigen::VectorXd& z) {
    return z.dot(p.Kyy * z) / (2.0 * p.lam * Md * Md) - grad_const.dot(z) +
           p.kxx_total / (2.0 * p.lam * Nd * Nd);
  };

  Eigen::VectorXd x = Eigen::VectorXd::Ones(M);
  if (cfg.warm_start && cfg.warm_start->size() == M) x = *cfg.warm_start;
  if (!std::isfinite(primal_objective(p, x))) x = Eigen::VectorXd::Ones(M);

  DualSolution sol;
  sol.revision = p.revision;
  double Jx = primal_objective(p, x);
  Eigen::VectorXd y = x;
  double t = 1.0;
  if (cfg.record_history) sol.objective_history.push_back(Jx);

  GapReport last_gap = pseudo_duality_gap(p, x);
  int k = 0;
  for (; k < cfg.max_iters; ++k) {
    if (detail::gap_converged(last_gap, cfg.gap_tol)) break;
    Eigen::VectorXd g = grad(y);
    Eigen::VectorXd u(M);
    for (int bt = 0;; ++bt) {
      const Eigen::VectorXd w = y - g / L;
      const double prox_scale = 1.0 / (L * Md);  // = lam M / ||K||
      for (Eigen::Index j = 0; j < M; ++j) u[j] = p.entropy.prox(prox_scale, w[j]);
      if (cfg.step_rule != StepRule::armijo || bt >= 60) break;
      const double lhs = smooth_part(u);
      const double rhs = smooth_part(y) + g.dot(u - y) + 0.5 * L * (u - y).squaredNorm();
      if (lhs <= rhs + 1e-15 * std::max(1.0, std::abs(rhs))) break;
      L *= 2.0;
    }
    const double Ju = primal_objective(p, u);
    const double t_next = fista_momentum_next(t);
    Eigen::VectorXd x_new;
    double Jx_new;
    if (Ju <= Jx) {
      x_new = u;
      Jx_new = Ju;
    } else {  // monotone step: keep the incumbent
      x_new = x;
      Jx_new = Jx;
    }
    y = x_new + (t / t_next) * (u - x_new) + ((t - 1.0) / t_next) * (x_new - x);
    x = x_new;
    Jx = Jx_new;
    t = t_next;
    if (cfg.record_history) sol.objective_history.push_back(Jx);
    if ((k + 1) % cfg.gap_check_every == 0 || k + 1 == cfg.max_iters)
      last_gap = pseudo_duality_gap(p, x);
  }

  sol.q = x;
  sol.primal_value = last_gap.primal;
  sol.dual_value = last_gap.dual;
  sol.gap = last_gap.gap;
  sol.rel_gap = last_gap.rel_gap;
  sol.iterations = k;
  sol.lipschitz = L;
  return sol;
}

// FISTA on the full (M+N)-dimensional objective for finite f'_inf:
// coordinatewise prox on the first M entries, shifted clamp
// max(-M/N, . - f'_inf lam M / ||K||) on the tail.
inline DualSolution fista_finite(const RegularizedProblem& p, const SolverConfig& cfg) {
  cfg.validate();
  if (!p.finite_recession())
    throw std::invalid_argument("fista_finite requires an entropy with finite f'_inf");
  const Eigen::Index M = p.m(), N = p.n();
  const double Md = static_cast<double>(M), Nd = static_cast<double>(N);
  const double rec = p.entropy.recession();
  const double box_lo = -Md / Nd;

  double L = p.norm_kfull / (p.lam * Md * Md);
  auto grad = [&](const Eigen::VectorXd& z) -> Eigen::VectorXd {
    Eigen::VectorXd g = (p.Kfull * z) / (p.lam * Md * Md);
    g.tail(N).array() += rec / Md;
    return g;
  };
  auto smooth_part = [&](const Eigen::VectorXd& z) {
    return z.dot(p.Kfull * z) / (2.0 * p.lam * Md * Md) + rec / Md * (Md + z.tail(N).sum());
  };

  Eigen::VectorXd x(M + N);
  x.head(M).setOnes();
  x.tail(N).setConstant(box_lo);
  if (cfg.warm_start && cfg.warm_start->size() == M + N) x = *cfg.warm_start;
  if (!std::isfinite(primal_objective(p, x))) {
    x.head(M).setOnes();
    x.tail(N).setConstant(box_lo);
  }

  DualSolution sol;
  sol.revision = p.revision;
  double Jx = primal_objective(p, x);
  Eigen::VectorXd y = x;
  double t = 1.0;
  if (cfg.record_history) sol.objective_history.push_back(Jx);

  GapReport last_gap = pseudo_duality_gap(p, x);
  int k = 0;
  for (; k < cfg.max_iters; ++k) {
    if (detail::gap_converged(last_gap, cfg.gap_tol)) break;
    Eigen::VectorXd g = grad(y);
    Eigen::VectorXd u(M + N);
    for (int bt = 0;; ++bt) {
      const Eigen::VectorXd w = y - g / L;
      const double prox_scale = 1.0 / (L * Md);
      for (Eigen::Index j = 0; j < M; ++j) u[j] = p.entropy.prox(prox_scale, w[j]);
      for (Eigen::Index j = 0; j < N; ++j) u[M + j] = std::max(box_lo, w[M + j]);
      if (cfg.step_rule != StepRule::armijo || bt >= 60) break;
      const double lhs = smooth_part(u);
      const double rhs = smooth_part(y) + g.dot(u - y) + 0.5 * L * (u - y).squaredNorm();
      if (lhs <= rhs + 1e-15 * std::max(1.0, std::abs(rhs))) break;
      L *= 2.0;
    }
    const double Ju = primal_objective(p, u);
    const double t_next = fista_momentum_next(t);
    Eigen::VectorXd x_new;
    double Jx_new;
    if (Ju <= Jx) {
      x_new = u;
      Jx_new = Ju;
    } else {
      x_new = x;
      Jx_new = Jx;
    }
    y = x_new + (t / t_next) * (u - x_new) + ((t - 1.0) / t_next) * (x_new - x);
    x = x_new;
    Jx = Jx_new;
    t = t_next;
    if (cfg.record_history) sol.objective_history.push_back(Jx);
    if ((k + 1) % cfg.gap_check_every == 0 || k + 1 == cfg.max_iters)
      last_gap = pseudo_duality_gap(p, x);
  }

  sol.q = x;
  sol.primal_value = last_gap.primal;
  sol.dual_value = last_gap.dual;
  sol.gap = last_gap.gap;
  sol.rel_gap = last_gap.rel_gap;
  sol.iterations = k;
  sol.lipschitz = L;
  return sol;
}

// Gap for the tight problem: the dual certificate is the same representer
// function, but its conjugate term is the shifted one-dimensional problem.
inline GapReport tight_gap_report(const RegularizedProblem& p,
                                  const Eigen::Ref<const Eigen::VectorXd>& q) {
  GapReport r;
  r.primal = primal_objective(p, q);
  const WitnessCoeffs c = witness_coeffs(p, q);
  const WitnessAtAtoms w = witness_at_atoms(p, c);
  const Eigen::VectorXd nu_w = Eigen::VectorXd::Constant(p.m(), 1.0 / static_cast<double>(p.m()));
  r.dual = w.at_x.mean() - tight_conjugate(p.entropy, nu_w, w.at_y) - 0.5 * p.lam * w.norm2;
  r.gap = std::abs(r.primal - r.dual);
  r.rel_gap = r.gap / std::max(std::min(std::abs(r.primal), std::abs(r.dual)), 1e-12);
  return r;
}

// Exponentiated gradient descent on the scaled simplex {q >= 0, sum q = M}
// for the tight formulation.  Multiplicative update in log space with a
// coordinate floor at 1e-300, renormalised after every step; Armijo
// backtracking (default) keeps the objective non-increasing, the Polyak rule
// uses the best dual value seen as the lower bound.
inline DualSolution mirror_descent_tight(const RegularizedProblem& p, const SolverConfig& cfg) {
  cfg.validate();
  if (p.finite_recession())
    throw std::invalid_argument("mirror_descent_tight requires an entropy with f'_inf = inf");
  const Eigen::Index M = p.m(), N = p.n();
  const double Md = static_cast<double>(M), Nd = static_cast<double>(N);

  const Eigen::VectorXd grad_const = p.kxy_t_one / (p.lam * Md * Nd);
  auto grad = [&](const Eigen::VectorXd& q) -> Eigen::VectorXd {
    Eigen::VectorXd g = (p.Kyy * q) / (p.lam * Md * Md) - grad_const;
    for (Eigen::Index j = 0; j < M; ++j)
      g[j] += p.entropy.derivative(std::max(q[j], 1e-300)) / Md;
    return g;
  };
  auto renorm = [&](Eigen::VectorXd& q) {
    q = q.cwiseMax(0.0);
    const double s = q.sum();
    if (!(s > 0.0)) q.setConstant(1.0);
    q *= Md / q.sum();
  };
  auto eg_step = [&](const Eigen::VectorXd& q, const Eigen::VectorXd& g, double eta) {
    Eigen::VectorXd w(M);
    for (Eigen::Index j = 0; j < M; ++j) w[j] = std::log(std::max(q[j], 1e-300)) - eta * g[j];
    const double wmax = w.maxCoeff();
    Eigen::VectorXd qn = (w.array() - wmax).exp();
    qn *= Md / qn.sum();
    return qn;
  };

  Eigen::VectorXd q = Eigen::VectorXd::Ones(M);
  if (cfg.warm_start && cfg.warm_start->size() == M) {
    q = *cfg.warm_start;
    renorm(q);
  }

  DualSolution sol;
  sol.revision = p.revision;
  double Jq = primal_objective(p, q);
  if (!std::isfinite(Jq)) {
    q.setOnes();
    Jq = primal_objective(p, q);
  }
  if (cfg.record_history) sol.objective_history.push_back(Jq);

  GapReport last_gap = tight_gap_report(p, q);
  double best_dual = last_gap.dual;
  double eta = p.lam * Md * Md / std::max(p.norm_kyy, 1e-300);
  double max_residual = std::abs(q.sum() - Md);

  int k = 0;
  for (; k < cfg.max_iters; ++k) {
    if (detail::gap_converged(last_gap, cfg.gap_tol)) break;
    const Eigen::VectorXd g = grad(q);
    Eigen::VectorXd qn;
    double Jn;
    if (cfg.step_rule == StepRule::polyak) {
      const double denom = std::max(g.squaredNorm(), 1e-300);
      double step = (std::isfinite(best_dual) ? (Jq - best_dual) : 1.0) / denom;
      if (!(step > 0.0)) step = eta;
      qn = eg_step(q, g, step);
      Jn = primal_objective(p, qn);
      if (Jn > Jq) {  // fall back to a safe shrinking step
        qn = eg_step(q, g, eta);
        Jn = primal_objective(p, qn);
      }
    } else {
      // Armijo backtracking: factor 0.5, sufficient decrease 1e-4.
      bool accepted = false;
      qn = q;
      Jn = Jq;
      for (int bt = 0; bt < 60; ++bt) {
        Eigen::VectorXd cand = eg_step(q, g, eta);
        const double Jc = primal_objective(p, cand);
        const double margin = 1e-4 * g.dot(q - cand);
        if (std::isfinite(Jc) && Jc <= Jq - margin) {
          qn = cand;
          Jn = Jc;
          accepted = true;
          break;
        }
        eta *= 0.5;
      }
      if (!accepted) break;  // stalled at numerical resolution
      eta = std::min(eta * 2.0, 1e6);
    }
    q = qn;
    Jq = Jn;
    max_residual = std::max(max_residual, std::abs(q.sum() - Md));
    if (cfg.record_history) sol.objective_history.push_back(Jq);
    if ((k + 1) % cfg.gap_check_every == 0 || k + 1 == cfg.max_iters) {
      last_gap = tight_gap_report(p, q);
      best_dual = std::max(best_dual, last_gap.dual);
    }
  }

  last_gap = tight_gap_report(p, q);
  sol.q = q;
  sol.primal_value = last_gap.primal;
  sol.dual_value = last_gap.dual;
  sol.gap = last_gap.gap;
  sol.rel_gap = last_gap.rel_gap;
  sol.iterations = k;
  sol.lipschitz = p.norm_kyy / (p.lam * Md * Md);
  sol.simplex_residual = max_residual;
  return sol;
}

// Entropy-recession dispatch used by the flow engine.
inline DualSolution solve_regularized(const RegularizedProblem& p, const SolverConfig& cfg,
                                      bool tight = false) {
  if (tight) return mirror_descent_tight(p, cfg);
  return p.finite_recession() ? fista_finite(p, cfg) : fista_infinite(p, cfg);
}

}  // namespace mmdflow
