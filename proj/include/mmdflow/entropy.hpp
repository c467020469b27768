#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

namespace mmdflow {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class EntropyKind {
  tsallis,
  power,
  kl,
  burg,
  jeffreys,
  jensen_shannon,
  total_variation,
  marton,
  hockey_stick,
  equality_indicator,
  zero,
  matusita,
  lindsay,
};

namespace detail {

// Derivative-free minimizer for the prox fallback.  The objectives are
// strongly convex in 1-D, so a plain golden-section bracket shrink is enough
// and avoids the non-smooth corners (total variation, Marton, hockey stick).
template <typename F>
double golden_min(F&& f, double a, double b, double tol = 1e-12) {
  constexpr double invphi = 0.6180339887498949;
  double x1 = b - invphi * (b - a);
  double x2 = a + invphi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > tol) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - invphi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + invphi * (b - a);
      f2 = f(x2);
    }
  }
  return 0.5 * (a + b);
}

// Principal Lambert W on [0, inf).  Newton iteration with initial guess
// log1p(z); when z would overflow we solve w + log w = log z instead.
inline double lambert_w0(double z) {
  if (z == 0.0) return 0.0;
  if (std::isinf(z)) return kInf;
  double w = std::log1p(z);
  for (int it = 0; it < 50; ++it) {
    const double e = std::exp(w);
    const double g = w * e - z;
    const double step = g / (e * (w + 1.0) - 0.5 * (w + 2.0) * g / (w + 1.0));
    w -= step;
    if (std::abs(step) <= 1e-14 * std::max(1.0, std::abs(w))) break;
  }
  return w;
}

// Lambert W of exp(u), stable for large u where exp(u) overflows.
inline double lambert_w0_of_exp(double u) {
  if (u < 700.0) return lambert_w0(std::exp(u));
  double w = u - std::log(u);
  for (int it = 0; it < 50; ++it) {
    const double g = w + std::log(w) - u;
    const double step = g / (1.0 + 1.0 / w);
    w -= step;
    if (std::abs(step) <= 1e-14 * std::max(1.0, std::abs(w))) break;
  }
  return w;
}

}  // namespace detail

// An entropy function f: convex, lsc, f(1) = 0, f(t) = inf for t < 0,
// together with its conjugate f*, recession constant f'_inf and proximal
// map.  Families with an alpha parameter validate it at construction;
// tsallis alpha -> 1 degenerates to the KL entry (the continuous limit),
// while power alpha in {0, 1} is rejected outright.
class Entropy {
 public:
  static Entropy make(EntropyKind kind, double alpha = std::numeric_limits<double>::quiet_NaN()) {
    switch (kind) {
      case EntropyKind::tsallis:
        if (!(alpha > 0.0)) throw std::invalid_argument("tsallis entropy requires alpha > 0");
        if (alpha == 1.0) return Entropy(EntropyKind::kl, std::numeric_limits<double>::quiet_NaN());
        break;
      case EntropyKind::power:
        if (!std::isfinite(alpha) || alpha == 0.0 || alpha == 1.0)
          throw std::invalid_argument("power entropy requires alpha outside {0, 1}");
        break;
      case EntropyKind::matusita:
        if (!(alpha > 0.0 && alpha < 1.0))
          throw std::invalid_argument("matusita entropy requires alpha in (0, 1)");
        break;
      case EntropyKind::lindsay:
        if (!(alpha >= 0.0 && alpha < 1.0))
          throw std::invalid_argument("lindsay entropy requires alpha in [0, 1)");
        break;
      default:
        alpha = std::numeric_limits<double>::quiet_NaN();
        break;
    }
    return Entropy(kind, alpha);
  }

  static Entropy from_name(const std::string& name,
                           double alpha = std::numeric_limits<double>::quiet_NaN()) {
    for (const auto& [kind, kname] : kNames)
      if (name == kname) return make(kind, alpha);
    throw std::invalid_argument("unknown entropy name: " + name);
  }

  EntropyKind kind() const { return kind_; }
  double alpha() const { return alpha_; }

  std::string name() const {
    for (const auto& [kind, kname] : kNames)
      if (kind == kind_) return kname;
    return "?";
  }

  // f has a unique minimizer at 1 for every catalog entry except the
  // Marton, hockey stick and zero entropies.
  bool unique_minimizer() const {
    return kind_ != EntropyKind::marton && kind_ != EntropyKind::hockey_stick &&
           kind_ != EntropyKind::zero;
  }

  bool has_closed_prox() const {
    switch (kind_) {
      case EntropyKind::kl:
      case EntropyKind::burg:
      case EntropyKind::total_variation:
      case EntropyKind::marton:
      case EntropyKind::equality_indicator:
      case EntropyKind::zero:
        return true;
      case EntropyKind::tsallis:
        return alpha_ == 2.0;
      default:
        return false;
    }
  }

  // f(t); +inf outside dom(f).
  double value(double t) const {
    if (t < 0.0) return kInf;
    switch (kind_) {
      case EntropyKind::tsallis:
        return (std::pow(t, alpha_) - alpha_ * t + alpha_ - 1.0) / (alpha_ - 1.0);
      case EntropyKind::power:
        return (std::pow(t, alpha_) - alpha_ * t + alpha_ - 1.0) / (alpha_ * (alpha_ - 1.0));
      case EntropyKind::kl:
        return t == 0.0 ? 1.0 : t * std::log(t) - t + 1.0;
      case EntropyKind::burg:
        return t == 0.0 ? kInf : -std::log(t) + t - 1.0;
      case EntropyKind::jeffreys:
        return t == 0.0 ? kInf : (t - 1.0) * std::log(t);
      case EntropyKind::jensen_shannon:
        if (t == 0.0) return std::log(2.0);
        return t * std::log(t) - (t + 1.0) * std::log(0.5 * (t + 1.0));
      case EntropyKind::total_variation:
        return std::abs(t - 1.0);
      case EntropyKind::marton: {
        const double m = std::max(0.0, 1.0 - t);
        return m * m;
      }
      case EntropyKind::hockey_stick:
        return std::max(0.0, 1.0 - t);
      case EntropyKind::equality_indicator:
        return t == 1.0 ? 0.0 : kInf;
      case EntropyKind::zero:
        return 0.0;
      case EntropyKind::matusita:
        return std::pow(std::abs(1.0 - std::pow(t, alpha_)), 1.0 / alpha_);
      case EntropyKind::lindsay: {
        const double den = alpha_ + (1.0 - alpha_) * t;
        if (den <= 0.0) return kInf;
        return (t - 1.0) * (t - 1.0) / den;
      }
    }
    return kInf;
  }

  // Recession constant f'_inf = lim f(t)/t.
  double recession() const {
    switch (kind_) {
      case EntropyKind::tsallis:
        return alpha_ > 1.0 ? kInf : alpha_ / (1.0 - alpha_);
      case EntropyKind::power:
        return alpha_ > 1.0 ? kInf : 1.0 / (1.0 - alpha_);
      case EntropyKind::kl:
      case EntropyKind::jeffreys:
      case EntropyKind::equality_indicator:
        return kInf;
      case EntropyKind::jensen_shannon:
        return std::log(2.0);
      case EntropyKind::burg:
      case EntropyKind::total_variation:
      case EntropyKind::matusita:
        return 1.0;
      case EntropyKind::lindsay:
        return 1.0 / (1.0 - alpha_);
      case EntropyKind::marton:
      case EntropyKind::hockey_stick:
      case EntropyKind::zero:
        return 0.0;
    }
    return kInf;
  }

  // f*(y) = sup_t { ty - f(t) }; +inf outside dom(f*).  The Jeffreys and
  // Matusita rows have no usable closed form, so they fall back to a
  // numeric supremum (log-spaced scan plus golden-section refinement).
  double conjugate(double y) const {
    switch (kind_) {
      case EntropyKind::tsallis:
        if (alpha_ > 1.0) {
          const double base = std::max(0.0, (alpha_ - 1.0) / alpha_ * y + 1.0);
          return std::pow(base, alpha_ / (alpha_ - 1.0)) - 1.0;
        } else {
          if (y >= alpha_ / (1.0 - alpha_)) return kInf;
          const double base = (alpha_ - 1.0) / alpha_ * y + 1.0;
          return std::pow(base, alpha_ / (alpha_ - 1.0)) - 1.0;
        }
      case EntropyKind::power: {
        const double expo = alpha_ / (alpha_ - 1.0);
        if (alpha_ > 1.0) {
          const double base = std::max(0.0, (alpha_ - 1.0) * y + 1.0);
          return (std::pow(base, expo) - 1.0) / alpha_;
        }
        const double bound = 1.0 / (1.0 - alpha_);
        if (alpha_ > 0.0 ? y >= bound : y > bound) return kInf;
        const double base = std::max(0.0, (alpha_ - 1.0) * y + 1.0);
        return (std::pow(base, expo) - 1.0) / alpha_;
      }
      case EntropyKind::kl:
        return std::expm1(y);
      case EntropyKind::burg:
        return y < 1.0 ? -std::log1p(-y) : kInf;
      case EntropyKind::jeffreys:
        return numeric_conjugate(y);
      case EntropyKind::jensen_shannon:
        return y < std::log(2.0) ? -std::log(2.0 - std::exp(y)) : kInf;
      case EntropyKind::total_variation:
        return y <= 1.0 ? std::max(-1.0, y) : kInf;
      case EntropyKind::marton:
        if (y > 0.0) return kInf;
        if (y >= -2.0) return 0.25 * y * y + y;
        return -1.0;
      case EntropyKind::hockey_stick:
        return y <= 0.0 ? std::max(-1.0, y) : kInf;
      case EntropyKind::equality_indicator:
        return y;
      case EntropyKind::zero:
        return y <= 0.0 ? 0.0 : kInf;
      case EntropyKind::matusita:
        if (y >= 1.0) return kInf;
        return numeric_conjugate(y);
      case EntropyKind::lindsay: {
        if (y > 1.0 / (1.0 - alpha_)) return kInf;
        const double root = std::sqrt(std::max(0.0, (alpha_ - 1.0) * y + 1.0));
        const double d = alpha_ - 1.0;
        return (alpha_ * d * y - 2.0 * root + 2.0) / (d * d);
      }
    }
    return kInf;
  }

  // f'(t) on the interior of dom(f) for the families that are smooth there;
  // this is what exponentiated gradient descent needs.
  double derivative(double t) const {
    switch (kind_) {
      case EntropyKind::tsallis:
        return alpha_ * (std::pow(t, alpha_ - 1.0) - 1.0) / (alpha_ - 1.0);
      case EntropyKind::power:
        return (std::pow(t, alpha_ - 1.0) - 1.0) / (alpha_ - 1.0);
      case EntropyKind::kl:
        return std::log(t);
      case EntropyKind::burg:
        return 1.0 - 1.0 / t;
      case EntropyKind::jeffreys:
        return std::log(t) + 1.0 - 1.0 / t;
      case EntropyKind::jensen_shannon:
        return std::log(t) - std::log(0.5 * (t + 1.0));
      case EntropyKind::lindsay: {
        const double den = alpha_ + (1.0 - alpha_) * t;
        return ((t - 1.0) * (2.0 * den - (1.0 - alpha_) * (t - 1.0))) / (den * den);
      }
      case EntropyKind::marton:
        return -2.0 * std::max(0.0, 1.0 - t);
      case EntropyKind::zero:
        return 0.0;
      default:
        throw std::invalid_argument("entropy " + name() + " has no smooth derivative");
    }
  }

  // prox_{lam f}(x) = argmin_t f(t) + (t - x)^2 / (2 lam).  Closed forms
  // where the catalog supplies one, a safeguarded Newton solve for the
  // smooth Tsallis family, golden-section on the bracketed domain otherwise.
  double prox(double lam, double x) const {
    if (!(lam > 0.0)) throw std::invalid_argument("prox requires lam > 0");
    switch (kind_) {
      case EntropyKind::kl: {
        // FOC lam*log t + t = x, i.e. t = lam * W(exp(x/lam) / lam).
        return lam * detail::lambert_w0_of_exp(x / lam - std::log(lam));
      }
      case EntropyKind::tsallis:
        if (alpha_ == 2.0) return std::max(0.0, 2.0 * lam + x) / (2.0 * lam + 1.0);
        return prox_newton_smooth(lam, x, alpha_ > 1.0 ? -alpha_ / (alpha_ - 1.0) : -kInf);
      case EntropyKind::power:
        return prox_newton_smooth(lam, x, alpha_ > 1.0 ? -1.0 / (alpha_ - 1.0) : -kInf);
      case EntropyKind::jeffreys:
      case EntropyKind::jensen_shannon:
        return prox_newton_smooth(lam, x, -kInf);
      case EntropyKind::burg:
        return 0.5 * (x - lam + std::sqrt((x - lam) * (x - lam) + 4.0 * lam));
      case EntropyKind::total_variation:
        // Piecewise solution of |t-1| + (t-x)^2/(2 lam) over t >= 0.
        if (x <= -lam) return 0.0;
        if (x <= 1.0 - lam) return x + lam;
        if (x <= 1.0 + lam) return 1.0;
        return x - lam;
      case EntropyKind::marton:
        return x > 1.0 ? x : std::max(0.0, x + 2.0 * lam) / (1.0 + 2.0 * lam);
      case EntropyKind::equality_indicator:
        return 1.0;
      case EntropyKind::zero:
        return std::max(0.0, x);
      default: {
        // Remaining families (matusita, lindsay, hockey stick) have kinks,
        // so use the derivative-free solve.  The minimizer lies between x
        // and the minimizer 1 of f, clamped to dom(f).
        const double lo = std::max(0.0, std::min(x, 1.0));
        const double hi = std::max(x, 1.0);
        auto obj = [&](double t) { return value(t) + (t - x) * (t - x) / (2.0 * lam); };
        return detail::golden_min(obj, lo, hi, 1e-12);
      }
    }
  }

 private:
  Entropy(EntropyKind kind, double alpha) : kind_(kind), alpha_(alpha) {}

  // Second derivative on the interior, for the Newton prox of the smooth
  // families only.
  double second_derivative(double t) const {
    switch (kind_) {
      case EntropyKind::tsallis:
        return alpha_ * std::pow(t, alpha_ - 2.0);
      case EntropyKind::power:
        return std::pow(t, alpha_ - 2.0);
      case EntropyKind::jeffreys:
        return 1.0 / t + 1.0 / (t * t);
      case EntropyKind::jensen_shannon:
        return 1.0 / t - 1.0 / (t + 1.0);
      default:
        throw std::invalid_argument("entropy " + name() + " has no smooth second derivative");
    }
  }

  // Bisection-safeguarded Newton on the increasing FOC
  //   F(t) = lam f'(t) + t - x = 0
  // for entropies smooth on the interior of their domain.  boundary_slope
  // is f'(0+): when finite, the prox can sit exactly at 0.
  double prox_newton_smooth(double lam, double x, double boundary_slope) const {
    auto F = [&](double t) { return lam * derivative(t) + t - x; };
    if (std::isfinite(boundary_slope) && lam * boundary_slope - x >= 0.0) return 0.0;
    double lo = std::max(1e-300, std::min(x, 1.0));
    double hi = std::max(x, 1.0);
    while (F(lo) > 0.0) lo *= 0.5;  // the root is interior but may be tiny
    double t = 0.5 * (lo + hi);
    for (int it = 0; it < 500; ++it) {
      const double g = F(t);
      if (g > 0.0) hi = t; else lo = t;
      if (hi - lo <= 4e-16 * hi) { t = 0.5 * (lo + hi); break; }
      const double dg = lam * second_derivative(t) + 1.0;
      double tn = t - g / dg;
      if (!(tn > lo && tn < hi)) tn = 0.5 * (lo + hi);
      // relative step test only: near the domain boundary F' blows up and
      // Newton creeps geometrically, so an absolute test would stop too early
      if (std::abs(tn - t) <= 1e-15 * std::abs(tn)) { t = tn; break; }
      t = tn;
    }
    return t;
  }

  double numeric_conjugate(double y) const {
    // sup_{t >= 0} ty - f(t); the objective is concave on dom(f).
    auto h = [&](double t) { return t * y - value(t); };
    double best_t = 0.0, best = h(0.0);
    double prev_t = 0.0;
    double lo = 0.0, hi = 0.0;
    bool found = false;
    for (int i = 0; i <= 240; ++i) {
      const double t = std::pow(10.0, -12.0 + 0.1 * i);
      const double v = h(t);
      if (v > best) {
        best = v;
        lo = prev_t;
        best_t = t;
        hi = (i == 240) ? t : std::pow(10.0, -12.0 + 0.1 * (i + 1));
        found = true;
      }
      prev_t = t;
    }
    if (!found) return best;  // supremum attained at t = 0
    // Expand upward if the scan ended while still increasing.
    while (best_t == hi || h(2.0 * hi) > h(hi)) hi *= 2.0;
    const double t_star =
        detail::golden_min([&](double t) { return -h(t); }, lo, hi, 1e-13 * std::max(1.0, hi));
    return std::max(best, h(t_star));
  }

  static constexpr std::pair<EntropyKind, const char*> kNames[] = {
      {EntropyKind::tsallis, "tsallis"},
      {EntropyKind::power, "power"},
      {EntropyKind::kl, "kl"},
      {EntropyKind::burg, "burg"},
      {EntropyKind::jeffreys, "jeffreys"},
      {EntropyKind::jensen_shannon, "jensen_shannon"},
      {EntropyKind::total_variation, "total_variation"},
      {EntropyKind::marton, "marton"},
      {EntropyKind::hockey_stick, "hockey_stick"},
      {EntropyKind::equality_indicator, "equality_indicator"},
      {EntropyKind::zero, "zero"},
      {EntropyKind::matusita, "matusita"},
      {EntropyKind::lindsay, "lindsay"},
  };

  EntropyKind kind_;
  double alpha_;
};

}  // namespace mmdflow
