#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "mmdflow/assignment.hpp"
#include "mmdflow/entropy.hpp"
#include "mmdflow/kernels.hpp"

namespace mmdflow {

// Weighted finite point set; a particle ensemble is the uniform special case.
struct DiscreteMeasure {
  Eigen::MatrixXd points;   // n x d, one point per row
  Eigen::VectorXd weights;  // n, non-negative

  static DiscreteMeasure uniform(Eigen::MatrixXd pts) {
    const Eigen::Index n = pts.rows();
    if (n == 0) throw std::invalid_argument("DiscreteMeasure: empty point set");
    return DiscreteMeasure{std::move(pts), Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n))};
  }

  static DiscreteMeasure weighted(Eigen::MatrixXd pts, Eigen::VectorXd w) {
    if (pts.rows() != w.size()) throw std::invalid_argument("DiscreteMeasure: length mismatch");
    if ((w.array() < 0.0).any()) throw std::invalid_argument("DiscreteMeasure: negative weight");
    return DiscreteMeasure{std::move(pts), std::move(w)};
  }

  Eigen::Index size() const { return points.rows(); }
  int dim() const { return static_cast<int>(points.cols()); }
  double mass() const { return weights.sum(); }
};

// m_mu(x) = sum_i w_i K(x, p_i).
inline double kme_eval(const RadialKernel& k, const DiscreteMeasure& mu,
                       const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  if (mu.dim() != k.dim || x.size() != k.dim)
    throw std::invalid_argument("kme_eval: dimension mismatch");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i)
    acc += mu.weights[i] * k.phi((x - mu.points.row(i)).squaredNorm());
  return acc;
}

// Squared MMD via the double-sum expansion, clamped at zero.
inline double mmd_squared(const RadialKernel& k, const DiscreteMeasure& mu,
                          const DiscreteMeasure& nu) {
  if (mu.dim() != nu.dim() || mu.dim() != k.dim)
    throw std::invalid_argument("mmd_squared: dimension mismatch");
  const double aa = mu.weights.dot(gram(k, mu.points, mu.points) * mu.weights);
  const double bb = nu.weights.dot(gram(k, nu.points, nu.points) * nu.weights);
  const double ab = mu.weights.dot(gram(k, mu.points, nu.points) * nu.weights);
  return std::max(0.0, aa + bb - 2.0 * ab);
}

namespace detail {

// Canonical byte key of a point row; -0.0 is normalised to +0.0 so that the
// atom decomposition is a pure bit-pattern match.
inline std::string point_key(const Eigen::Ref<const Eigen::RowVectorXd>& p) {
  std::string key(static_cast<std::size_t>(p.size()) * sizeof(double), '\0');
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    double v = p[j];
    if (v == 0.0) v = 0.0;
    std::memcpy(key.data() + static_cast<std::size_t>(j) * sizeof(double), &v, sizeof(double));
  }
  return key;
}

}  // namespace detail

// D_f(mu | nu) for finite supports: the density part runs over supp(nu),
// the remaining mu-mass is singular and is charged f'_inf per unit (with
// the 0 * inf = 0 convention).
inline double discrete_f_divergence(const Entropy& e, const DiscreteMeasure& mu,
                                    const DiscreteMeasure& nu) {
  if (mu.dim() != nu.dim()) throw std::invalid_argument("discrete_f_divergence: dimension mismatch");
  std::unordered_map<std::string, Eigen::Index> support;
  support.reserve(static_cast<std::size_t>(nu.size()));
  for (Eigen::Index j = 0; j < nu.size(); ++j)
    if (nu.weights[j] > 0.0) support.emplace(detail::point_key(nu.points.row(j)), j);

  Eigen::VectorXd mu_on_support = Eigen::VectorXd::Zero(nu.size());
  double singular_mass = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    if (mu.weights[i] == 0.0) continue;
    const auto it = support.find(detail::point_key(mu.points.row(i)));
    if (it == support.end())
      singular_mass += mu.weights[i];
    else
      mu_on_support[it->second] += mu.weights[i];
  }

  double total = 0.0;
  for (const auto& [key, j] : support) {
    (void)key;
    const double fv = e.value(mu_on_support[j] / nu.weights[j]);
    if (std::isinf(fv)) return kInf;
    total += fv * nu.weights[j];
  }
  if (singular_mass > 0.0) {
    const double rec = e.recession();
    if (std::isinf(rec)) return kInf;
    total += rec * singular_mass;
  }
  return total;
}

// W_2 between equal-size uniform ensembles through an exact assignment.
inline double wasserstein2_empirical(const Eigen::Ref<const Eigen::MatrixXd>& a,
                                     const Eigen::Ref<const Eigen::MatrixXd>& b) {
  if (a.rows() != b.rows())
    throw std::invalid_argument("wasserstein2_empirical: particle counts differ");
  if (a.cols() != b.cols())
    throw std::invalid_argument("wasserstein2_empirical: dimension mismatch");
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd cost(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    cost.row(i) = (b.rowwise() - a.row(i)).rowwise().squaredNorm().transpose();
  const double total = solve_assignment(cost);
  return std::sqrt(std::max(0.0, total / static_cast<double>(n)));
}

}  // namespace mmdflow
