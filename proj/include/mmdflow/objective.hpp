#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mmdflow/entropy.hpp"
#include "mmdflow/kernels.hpp"
#include "mmdflow/measures.hpp"

namespace mmdflow {

namespace detail {
inline std::uint64_t next_revision() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}
}  // namespace detail

// One Euler step's finite-dimensional problem: minimise over the coefficient
// vector q the objective
//   J(q) = (1/M) sum_{k<=M} f(q_k) + (f'_inf / M)(M + sum_{k>M} q_k)
//        + (1/(2 lam M^2)) q^T K q
// over the representer atoms z = (y_1..y_M, x_1..x_N).  For f'_inf = inf the
// tail is pinned to -M/N and everything reduces to the y-blocks.  Gram
// blocks are cached; a revision counter guards against evaluating a stale
// solution after the particles moved.
struct RegularizedProblem {
  Entropy entropy = Entropy::make(EntropyKind::kl);
  RadialKernel kernel;
  double lam = 1.0;
  Eigen::MatrixXd X;  // N x d flowing particles (mu)
  Eigen::MatrixXd Y;  // M x d target atoms (nu)

  Eigen::MatrixXd Kyy;     // M x M
  Eigen::MatrixXd Kxy;     // N x M
  Eigen::MatrixXd Kxx;     // N x N
  Eigen::MatrixXd Kfull;   // (M+N)^2, finite-recession case only
  Eigen::VectorXd kxy_t_one;     // Kxy^T 1_N
  Eigen::VectorXd kxx_row_sum;   // Kxx 1_N
  double kyy_total = 0.0;        // 1^T Kyy 1
  double kxx_total = 0.0;        // 1^T Kxx 1
  double norm_kyy = 0.0;
  double norm_kfull = 0.0;  // 0 unless assembled
  std::uint64_t revision = 0;

  static RegularizedProblem make(const Entropy& e, const RadialKernel& k, double lam,
                                 Eigen::MatrixXd particles_x, Eigen::MatrixXd particles_y) {
    if (!(lam > 0.0)) throw std::invalid_argument("RegularizedProblem: lam must be positive");
    if (particles_x.cols() != k.dim || particles_y.cols() != k.dim)
      throw std::invalid_argument("RegularizedProblem: dimension mismatch");
    if (particles_x.rows() == 0 || particles_y.rows() == 0)
      throw std::invalid_argument("RegularizedProblem: empty ensemble");
    RegularizedProblem p;
    p.entropy = e;
    p.kernel = k;
    p.lam = lam;
    p.X = std::move(particles_x);
    p.Y = std::move(particles_y);
    p.Kyy = gram(k, p.Y, p.Y);
    p.norm_kyy = spectral_norm(p.Kyy);
    p.refresh_x_blocks();
    return p;
  }

  // Rebuild the x-dependent blocks for moved particles; the target blocks
  // and their spectral norm are reused.  Optionally retargets lam (annealing).
  RegularizedProblem with_moved_particles(Eigen::MatrixXd x_new) const {
    RegularizedProblem p = *this;
    if (x_new.cols() != kernel.dim) throw std::invalid_argument("with_moved_particles: dimension mismatch");
    p.X = std::move(x_new);
    p.refresh_x_blocks();
    return p;
  }

  RegularizedProblem with_lambda(double lam_new) const {
    if (!(lam_new > 0.0)) throw std::invalid_argument("with_lambda: lam must be positive");
    RegularizedProblem p = *this;
    p.lam = lam_new;
    p.revision = detail::next_revision();
    return p;
  }

  int n() const { return static_cast<int>(X.rows()); }
  int m() const { return static_cast<int>(Y.rows()); }
  bool finite_recession() const { return std::isfinite(entropy.recession()); }

  // d_K(mu, nu)^2 for the uniform ensembles, from the cached blocks.
  double mmd2() const {
    const double nn = static_cast<double>(n()), mm = static_cast<double>(m());
    const double v = kxx_total / (nn * nn) + kyy_total / (mm * mm) -
                     2.0 * kxy_t_one.sum() / (nn * mm);
    return std::max(0.0, v);
  }

  // Threshold 2 d_K(mu, nu) sqrt(phi(0)) / f'_inf below which the
  // finite-recession representer reduction is unproven; 0 when f'_inf = inf.
  double recession_lambda_bound() const {
    const double rec = entropy.recession();
    if (std::isinf(rec)) return 0.0;
    if (rec <= 0.0) return kInf;
    return 2.0 * std::sqrt(mmd2()) * std::sqrt(kernel.phi(0.0)) / rec;
  }

  Eigen::Index q_size() const { return finite_recession() ? m() + n() : m(); }

 private:
  void refresh_x_blocks() {
    Kxy = gram(kernel, X, Y);
    Kxx = gram(kernel, X, X);
    kxy_t_one = Kxy.colwise().sum().transpose();
    kxx_row_sum = Kxx.rowwise().sum();
    kyy_total = Kyy.sum();
    kxx_total = Kxx.sum();
    if (finite_recession()) {
      const Eigen::Index M = Y.rows(), N = X.rows();
      Kfull.resize(M + N, M + N);
      Kfull.topLeftCorner(M, M) = Kyy;
      Kfull.topRightCorner(M, N) = Kxy.transpose();
      Kfull.bottomLeftCorner(N, M) = Kxy;
      Kfull.bottomRightCorner(N, N) = Kxx;
      norm_kfull = spectral_norm(Kfull);
    } else {
      Kfull.resize(0, 0);
      norm_kfull = 0.0;
    }
    revision = detail::next_revision();
  }
};

// Representer coefficients of the witness p_hat = sum_k b_k K(., z_k)
// derived from q: b = -q/(lam M) on target atoms; the particle tail is
// 1/(lam N) when pinned (f'_inf = inf and tight runs) and -q_tail/(lam M)
// otherwise.
struct WitnessCoeffs {
  Eigen::VectorXd b_y;  // M
  Eigen::VectorXd b_x;  // N
};

inline WitnessCoeffs witness_coeffs(const RegularizedProblem& p,
                                    const Eigen::Ref<const Eigen::VectorXd>& q) {
  const Eigen::Index M = p.m(), N = p.n();
  WitnessCoeffs c;
  if (q.size() == M) {
    c.b_y = -q / (p.lam * static_cast<double>(M));
    c.b_x = Eigen::VectorXd::Constant(N, 1.0 / (p.lam * static_cast<double>(N)));
  } else if (q.size() == M + N) {
    c.b_y = -q.head(M) / (p.lam * static_cast<double>(M));
    c.b_x = -q.tail(N) / (p.lam * static_cast<double>(M));
  } else {
    throw std::invalid_argument("witness_coeffs: coefficient length mismatch");
  }
  return c;
}

// p_hat evaluated at the representer atoms themselves.
struct WitnessAtAtoms {
  Eigen::VectorXd at_y;  // M
  Eigen::VectorXd at_x;  // N
  double norm2 = 0.0;    // b^T K b
};

inline WitnessAtAtoms witness_at_atoms(const RegularizedProblem& p, const WitnessCoeffs& c) {
  WitnessAtAtoms w;
  w.at_y = p.Kyy * c.b_y + p.Kxy.transpose() * c.b_x;
  w.at_x = p.Kxy * c.b_y + p.Kxx * c.b_x;
  w.norm2 = std::max(0.0, c.b_y.dot(w.at_y) + c.b_x.dot(w.at_x));
  return w;
}

// Primal objective J(q); accepts the reduced (length M) or the full
// (length M+N) coefficient vector.
inline double primal_objective(const RegularizedProblem& p,
                               const Eigen::Ref<const Eigen::VectorXd>& q) {
  const Eigen::Index M = p.m(), N = p.n();
  const double Md = static_cast<double>(M), Nd = static_cast<double>(N);
  const double rec = p.entropy.recession();
  if (q.size() == M) {
    double ent = 0.0;
    for (Eigen::Index k = 0; k < M; ++k) {
      const double f = p.entropy.value(q[k]);
      if (std::isinf(f)) return kInf;
      ent += f;
    }
    const double quad = q.dot(p.Kyy * q) / (2.0 * p.lam * Md * Md) -
                        p.kxy_t_one.dot(q) / (p.lam * Md * Nd) +
                        p.kxx_total / (2.0 * p.lam * Nd * Nd);
    return ent / Md + quad;
  }
  if (q.size() != M + N) throw std::invalid_argument("primal_objective: length mismatch");
  double ent = 0.0;
  for (Eigen::Index k = 0; k < M; ++k) {
    const double f = p.entropy.value(q[k]);
    if (std::isinf(f)) return kInf;
    ent += f;
  }
  const double tail_sum = q.tail(N).sum();
  for (Eigen::Index k = 0; k < N; ++k)
    if (q[M + k] < -Md / Nd - 1e-12) return kInf;  // box constraint
  double rec_term;
  if (std::isinf(rec)) {
    // hidden coordinates pinned to -M/N: the singular mass is exactly zero
    if (std::abs(Md + tail_sum) > 1e-9 * Md)
      throw std::invalid_argument("primal_objective: tail must be -M/N when f'_inf = inf");
    rec_term = 0.0;
  } else {
    rec_term = rec / Md * (Md + tail_sum);
  }
  const auto qh = q.head(M);
  const auto qt = q.tail(N);
  const double quad = qh.dot(p.Kyy * qh) + 2.0 * qt.dot(p.Kxy * qh) + qt.dot(p.Kxx * qt);
  return ent / Md + rec_term + quad / (2.0 * p.lam * Md * Md);
}

// Gradient of the smooth part h2 (or reduced ~h2).
inline Eigen::VectorXd primal_smooth_gradient(const RegularizedProblem& p,
                                              const Eigen::Ref<const Eigen::VectorXd>& q) {
  const Eigen::Index M = p.m(), N = p.n();
  const double Md = static_cast<double>(M), Nd = static_cast<double>(N);
  if (q.size() == M)
    return (p.Kyy * q) / (p.lam * Md * Md) - p.kxy_t_one / (p.lam * Md * Nd);
  if (q.size() != M + N) throw std::invalid_argument("primal_smooth_gradient: length mismatch");
  const double rec = p.entropy.recession();
  const auto qh = q.head(M);
  const auto qt = q.tail(N);
  Eigen::VectorXd g(M + N);
  g.head(M) = p.Kyy * qh + p.Kxy.transpose() * qt;
  g.tail(N) = p.Kxy * qh + p.Kxx * qt;
  g /= p.lam * Md * Md;
  if (std::isfinite(rec))
    g.tail(N).array() += rec / Md;
  return g;
}

inline void check_revision(const RegularizedProblem& p, std::uint64_t solution_revision) {
  if (solution_revision != p.revision)
    throw std::invalid_argument("stale solution: particle positions changed since the solve");
}

// Solver output.  q is reduced (M) when f'_inf = inf, full (M+N) otherwise.
struct DualSolution {
  Eigen::VectorXd q;
  double primal_value = 0.0;
  double dual_value = 0.0;
  double gap = 0.0;
  double rel_gap = 0.0;
  int iterations = 0;
  double lipschitz = 0.0;
  double simplex_residual = 0.0;  // mirror descent only
  std::uint64_t revision = 0;
  std::vector<double> objective_history;
};

inline double witness_eval(const RegularizedProblem& p, const DualSolution& sol,
                           const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  check_revision(p, sol.revision);
  const WitnessCoeffs c = witness_coeffs(p, sol.q);
  double acc = 0.0;
  for (Eigen::Index j = 0; j < p.Y.rows(); ++j)
    acc += c.b_y[j] * p.kernel.phi((x - p.Y.row(j)).squaredNorm());
  for (Eigen::Index i = 0; i < p.X.rows(); ++i)
    acc += c.b_x[i] * p.kernel.phi((x - p.X.row(i)).squaredNorm());
  return acc;
}

inline Eigen::RowVectorXd witness_grad(const RegularizedProblem& p, const DualSolution& sol,
                                       const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  check_revision(p, sol.revision);
  const WitnessCoeffs c = witness_coeffs(p, sol.q);
  Eigen::RowVectorXd g = Eigen::RowVectorXd::Zero(p.kernel.dim);
  for (Eigen::Index j = 0; j < p.Y.rows(); ++j) {
    const Eigen::RowVectorXd diff = x - p.Y.row(j);
    g += c.b_y[j] * 2.0 * p.kernel.dphi(diff.squaredNorm()) * diff;
  }
  for (Eigen::Index i = 0; i < p.X.rows(); ++i) {
    const Eigen::RowVectorXd diff = x - p.X.row(i);
    g += c.b_x[i] * 2.0 * p.kernel.dphi(diff.squaredNorm()) * diff;
  }
  return g;
}

// nabla p_hat at every flowing particle, one row per particle.
inline Eigen::MatrixXd witness_grads_at_particles(const RegularizedProblem& p,
                                                  const DualSolution& sol) {
  check_revision(p, sol.revision);
  const WitnessCoeffs c = witness_coeffs(p, sol.q);
  const Eigen::Index N = p.X.rows(), M = p.Y.rows();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(N, p.kernel.dim);
  for (Eigen::Index i = 0; i < N; ++i) {
    Eigen::RowVectorXd gi = Eigen::RowVectorXd::Zero(p.kernel.dim);
    for (Eigen::Index j = 0; j < M; ++j) {
      const Eigen::RowVectorXd diff = p.X.row(i) - p.Y.row(j);
      gi += (c.b_y[j] * 2.0 * p.kernel.dphi(diff.squaredNorm())) * diff;
    }
    for (Eigen::Index l = 0; l < N; ++l) {
      const Eigen::RowVectorXd diff = p.X.row(i) - p.X.row(l);
      gi += (c.b_x[l] * 2.0 * p.kernel.dphi(diff.squaredNorm())) * diff;
    }
    g.row(i) = gi;
  }
  return g;
}

inline double witness_norm2(const RegularizedProblem& p, const DualSolution& sol) {
  check_revision(p, sol.revision);
  return witness_at_atoms(p, witness_coeffs(p, sol.q)).norm2;
}

// Dual objective (1/N) sum p_hat(x_i) - (1/M) sum f*(p_hat(y_j)) - lam/2 b'Kb.
// For finite f'_inf the optimum can sit exactly on the boundary of dom(f*),
// so values within a small relative tolerance above it are evaluated at the
// boundary; anything further out is an infeasible dual point (-inf).
inline double dual_objective(const RegularizedProblem& p, const WitnessCoeffs& c) {
  const WitnessAtAtoms w = witness_at_atoms(p, c);
  const double rec = p.entropy.recession();
  const double feas_tol = 1e-7 * std::max(1.0, std::isfinite(rec) ? std::abs(rec) : 1.0);
  double conj_sum = 0.0;
  for (Eigen::Index j = 0; j < w.at_y.size(); ++j) {
    double y = w.at_y[j];
    if (std::isfinite(rec) && y > rec) {
      if (y > rec + feas_tol) return -kInf;
      y = rec;
    }
    const double fs = p.entropy.conjugate(y);
    if (std::isinf(fs)) return -kInf;
    conj_sum += fs;
  }
  return w.at_x.mean() - conj_sum / static_cast<double>(p.m()) - 0.5 * p.lam * w.norm2;
}

inline double dual_objective(const RegularizedProblem& p,
                             const Eigen::Ref<const Eigen::VectorXd>& b_full) {
  if (b_full.size() != p.m() + p.n()) throw std::invalid_argument("dual_objective: length mismatch");
  WitnessCoeffs c{b_full.head(p.m()), b_full.tail(p.n())};
  return dual_objective(p, c);
}

struct GapReport {
  double primal = 0.0;
  double dual = 0.0;
  double gap = 0.0;
  double rel_gap = 0.0;
};

// Primal pseudo-duality gap |J(q) - D(b(q))| with the dual certificate
// induced by q, plus its relative counterpart (divided by the smaller
// summand magnitude).
inline GapReport pseudo_duality_gap(const RegularizedProblem& p,
                                    const Eigen::Ref<const Eigen::VectorXd>& q) {
  GapReport r;
  r.primal = primal_objective(p, q);
  r.dual = dual_objective(p, witness_coeffs(p, q));
  r.gap = std::abs(r.primal - r.dual);
  const double denom = std::min(std::abs(r.primal), std::abs(r.dual));
  r.rel_gap = r.gap / std::max(denom, 1e-12);
  return r;
}

// Conjugate of the tight (probability-constrained) divergence at the vector
// of witness values g on supp(nu): inf over the scalar shift s of
// sum_j nu_j f*(g_j + s) - s subject to s + max(g) <= f'_inf.
inline double tight_conjugate(const Entropy& e, const Eigen::Ref<const Eigen::VectorXd>& nu_weights,
                              const Eigen::Ref<const Eigen::VectorXd>& g) {
  if (nu_weights.size() != g.size()) throw std::invalid_argument("tight_conjugate: length mismatch");
  const double rec = e.recession();
  auto phi = [&](double s) {
    double acc = -s;
    for (Eigen::Index j = 0; j < g.size(); ++j) {
      const double fs = e.conjugate(g[j] + s);
      if (std::isinf(fs)) return kInf;
      acc += nu_weights[j] * fs;
    }
    return acc;
  };
  double hi;
  if (std::isfinite(rec)) {
    hi = rec - g.maxCoeff();
  } else {
    hi = 1.0;
    while (phi(2.0 * hi) < phi(hi)) hi *= 2.0;
    hi *= 2.0;
  }
  double lo = std::min(0.0, hi - 1.0);
  while (phi(lo - std::max(1.0, std::abs(lo))) < phi(lo)) lo -= std::max(1.0, std::abs(lo));
  lo -= std::max(1.0, std::abs(lo));
  const double s_star = detail::golden_min(phi, lo, hi, 1e-13 * std::max(1.0, std::abs(hi) + std::abs(lo)));
  return std::min(phi(s_star), std::min(phi(lo), phi(hi)));
}

// Primal objective restricted to the tight simplex: q >= 0, sum q = M, tail
// pinned.  The recession term vanishes because sigma-hat is a probability
// measure.
inline double tight_primal_objective(const RegularizedProblem& p,
                                     const Eigen::Ref<const Eigen::VectorXd>& q) {
  if (q.size() != p.m()) throw std::invalid_argument("tight_primal_objective: length mismatch");
  if ((q.array() < -1e-10).any())
    throw std::invalid_argument("tight_primal_objective: negative simplex coordinate");
  if (std::abs(q.sum() - static_cast<double>(p.m())) > 1e-10)
    throw std::invalid_argument("tight_primal_objective: simplex constraint violated");
  return primal_objective(p, q);
}

}  // namespace mmdflow
