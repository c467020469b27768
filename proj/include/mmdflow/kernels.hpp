#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mmdflow {

enum class KernelFamily {
  gaussian,
  inverse_multiquadric,
  matern_3_2,
  spline_compact,
};

// Radial kernel K(x, y) = phi(||x - y||^2).  Profiles:
//   gaussian              phi(r) = exp(-r / (2 sigma2))
//   inverse_multiquadric  phi(r) = (sigma2 + r)^(-1/2)
//   matern_3_2            phi(r) = (1 + c sqrt(r)) exp(-c sqrt(r)),  c = sqrt(3)/sigma2
//   spline_compact        phi(r) = (1 - sqrt(r))_+^3 (3 sqrt(r) + 1)
// The spline profile has no second derivative at r = 0, so it is excluded
// from the geodesic-convexity constant.
struct RadialKernel {
  KernelFamily family = KernelFamily::gaussian;
  double sigma2 = 1.0;
  int dim = 2;

  static RadialKernel make(KernelFamily family, double sigma2, int dim) {
    if (!(sigma2 > 0.0)) throw std::invalid_argument("kernel sigma2 must be positive");
    if (dim < 1) throw std::invalid_argument("kernel dimension must be >= 1");
    return RadialKernel{family, sigma2, dim};
  }

  static RadialKernel from_name(const std::string& name, double sigma2, int dim) {
    if (name == "gaussian") return make(KernelFamily::gaussian, sigma2, dim);
    if (name == "inverse_multiquadric" || name == "imq")
      return make(KernelFamily::inverse_multiquadric, sigma2, dim);
    if (name == "matern_3_2") return make(KernelFamily::matern_3_2, sigma2, dim);
    if (name == "spline_compact") return make(KernelFamily::spline_compact, sigma2, dim);
    throw std::invalid_argument("unknown kernel family: " + name);
  }

  std::string name() const {
    switch (family) {
      case KernelFamily::gaussian: return "gaussian";
      case KernelFamily::inverse_multiquadric: return "inverse_multiquadric";
      case KernelFamily::matern_3_2: return "matern_3_2";
      case KernelFamily::spline_compact: return "spline_compact";
    }
    return "?";
  }

  double phi(double r) const {
    switch (family) {
      case KernelFamily::gaussian:
        return std::exp(-r / (2.0 * sigma2));
      case KernelFamily::inverse_multiquadric:
        return 1.0 / std::sqrt(sigma2 + r);
      case KernelFamily::matern_3_2: {
        const double cs = std::sqrt(3.0 * r) / sigma2;
        return (1.0 + cs) * std::exp(-cs);
      }
      case KernelFamily::spline_compact: {
        const double s = std::sqrt(r);
        if (s >= 1.0) return 0.0;
        const double m = 1.0 - s;
        return m * m * m * (3.0 * s + 1.0);
      }
    }
    return 0.0;
  }

  // dphi/dr; one-sided at r = 0 (and at the spline support boundary).
  double dphi(double r) const {
    switch (family) {
      case KernelFamily::gaussian:
        return -phi(r) / (2.0 * sigma2);
      case KernelFamily::inverse_multiquadric: {
        const double u = sigma2 + r;
        return -0.5 / (u * std::sqrt(u));
      }
      case KernelFamily::matern_3_2: {
        const double c = std::sqrt(3.0) / sigma2;
        return -0.5 * c * c * std::exp(-c * std::sqrt(r));
      }
      case KernelFamily::spline_compact: {
        const double s = std::sqrt(r);
        if (s >= 1.0) return 0.0;
        return -6.0 * (1.0 - s) * (1.0 - s);
      }
    }
    return 0.0;
  }

  // d^2 phi / dr^2 at r = 0 where it exists.
  double ddphi0() const {
    switch (family) {
      case KernelFamily::gaussian:
        return 1.0 / (4.0 * sigma2 * sigma2);
      case KernelFamily::inverse_multiquadric:
        return 0.75 * std::pow(sigma2, -2.5);
      default:
        throw std::invalid_argument("phi''(0) unavailable for kernel family " + name());
    }
  }
};

inline double squared_distance(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                               const Eigen::Ref<const Eigen::RowVectorXd>& y) {
  return (x - y).squaredNorm();
}

inline double kernel_eval(const RadialKernel& k, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                          const Eigen::Ref<const Eigen::RowVectorXd>& y) {
  if (x.size() != k.dim || y.size() != k.dim)
    throw std::invalid_argument("kernel_eval: dimension mismatch");
  return k.phi(squared_distance(x, y));
}

// grad_x K(x, z) = 2 phi'(||x - z||^2) (x - z); the velocity-field building
// block of the particle update.
inline Eigen::RowVectorXd kernel_grad(const RadialKernel& k,
                                      const Eigen::Ref<const Eigen::RowVectorXd>& x,
                                      const Eigen::Ref<const Eigen::RowVectorXd>& z) {
  if (x.size() != k.dim || z.size() != k.dim)
    throw std::invalid_argument("kernel_grad: dimension mismatch");
  const Eigen::RowVectorXd diff = x - z;
  return 2.0 * k.dphi(diff.squaredNorm()) * diff;
}

// Gram matrix K(a_i, b_j).  Squared distances come from the expanded inner
// product with a clamp at zero against round-off on near-duplicate points.
inline Eigen::MatrixXd gram(const RadialKernel& k, const Eigen::Ref<const Eigen::MatrixXd>& pts_a,
                            const Eigen::Ref<const Eigen::MatrixXd>& pts_b) {
  if (pts_a.rows() == 0 || pts_b.rows() == 0)
    throw std::invalid_argument("gram: empty point set");
  if (pts_a.cols() != k.dim || pts_b.cols() != k.dim)
    throw std::invalid_argument("gram: dimension mismatch");
  const Eigen::VectorXd na = pts_a.rowwise().squaredNorm();
  const Eigen::VectorXd nb = pts_b.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = na.replicate(1, pts_b.rows()) + nb.transpose().replicate(pts_a.rows(), 1) -
                       2.0 * pts_a * pts_b.transpose();
  return d2.unaryExpr([&](double r) { return k.phi(std::max(0.0, r)); });
}

// C_emb = sqrt(-2 phi'(0)); satisfies d_K <= C_emb * W_2.
inline double embedding_constant(const RadialKernel& k) {
  const double d0 = k.dphi(0.0);
  if (!(d0 < 0.0) || !std::isfinite(d0))
    throw std::invalid_argument("embedding_constant: phi'(0) not finite negative");
  return std::sqrt(-2.0 * d0);
}

// M = (8/lam) sqrt((d+2) phi''(0) phi(0)), the modulus of convexity along
// generalized geodesics of the regularized divergence.
inline double convexity_constant(const RadialKernel& k, double lam) {
  if (!(lam > 0.0)) throw std::invalid_argument("convexity_constant: lam must be positive");
  return 8.0 / lam * std::sqrt((k.dim + 2.0) * k.ddphi0() * k.phi(0.0));
}

// Largest eigenvalue magnitude of a symmetric matrix by power iteration.
// A 1e-6 inflation keeps the result on the safe side for step sizes; FISTA
// only needs some L >= ||K||_2.
inline double spectral_norm(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("spectral_norm: matrix not square");
  const Eigen::Index n = m.rows();
  if (n == 0) return 0.0;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::uint64_t z = static_cast<std::uint64_t>(i) + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    v[i] = 0.5 + static_cast<double>((z ^ (z >> 31)) >> 11) * 0x1.0p-53;
  }
  v.normalize();
  double theta = 0.0;
  for (int it = 0; it < 100000; ++it) {
    Eigen::VectorXd w = m * v;
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    theta = v.dot(w);
    // |theta - lambda| <= ||Av - theta v|| for symmetric m, so the residual
    // certifies the relative tolerance.
    if ((w - theta * v).norm() <= 1e-8 * std::abs(theta)) break;
    v = w / nw;
  }
  return std::abs(theta) * (1.0 + 1e-7);
}

}  // namespace mmdflow
