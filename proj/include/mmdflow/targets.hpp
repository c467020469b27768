#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "mmdflow/rng.hpp"

namespace mmdflow {

// Seeded samplers for the benchmark targets and the concentrated start.
// All targets live in the plane.  The ring geometry is configurable; the
// default scale is matched to the benchmark kernel width 5e-2 so that the
// flows recover the rings within a few thousand Euler steps.
struct SampleSpec {
  std::string name;  // three_rings | neals_cross | bananas | two_lines | gaussian_init
  long count = 0;
  std::uint64_t seed = 0;

  // gaussian_init: by default centred on the leftmost point of the
  // rightmost ring.
  double center_x = 0.45;
  double center_y = 0.0;
  double variance = 2e-3;

  // three_rings geometry
  double ring_radius = 0.3;
  double ring_spacing = 0.75;
  bool randomize_angles = true;
};

namespace detail {

inline Eigen::MatrixXd sample_three_rings(const SampleSpec& spec) {
  Eigen::MatrixXd pts(spec.count, 2);
  const long base = spec.count / 3;
  const long rem = spec.count % 3;
  long row = 0;
  for (int ring = 0; ring < 3; ++ring) {
    const long n = base + (ring < rem ? 1 : 0);
    const double cx = (ring - 1) * spec.ring_spacing;
    const CounterRng rng = CounterRng(spec.seed).stream(100 + ring);
    const double offset = spec.randomize_angles ? rng.uniform(0) : 0.0;
    for (long j = 0; j < n; ++j, ++row) {
      const double theta = 2.0 * M_PI * (static_cast<double>(j) + offset) / static_cast<double>(n);
      pts(row, 0) = cx + spec.ring_radius * std::cos(theta);
      pts(row, 1) = spec.ring_radius * std::sin(theta);
    }
  }
  return pts;
}

// Four copies of Neal's funnel, one per quadrant rotation: x2 ~ N(7.5, 2),
// x1 ~ N(0, exp(x2 / 3)).
inline Eigen::MatrixXd sample_neals_cross(const SampleSpec& spec) {
  Eigen::MatrixXd pts(spec.count, 2);
  const CounterRng rng = CounterRng(spec.seed).stream(200);
  for (long i = 0; i < spec.count; ++i) {
    const double x2 = 7.5 + std::sqrt(2.0) * rng.normal(2 * i);
    const double x1 = std::exp(x2 / 6.0) * rng.normal(2 * i + 1);
    const int rot = static_cast<int>(i % 4);
    switch (rot) {
      case 0: pts.row(i) << x1, x2; break;
      case 1: pts.row(i) << -x2, x1; break;
      case 2: pts.row(i) << -x1, -x2; break;
      default: pts.row(i) << x2, -x1; break;
    }
  }
  return pts;
}

// Two parabolic clusters with far-apart supports, the second one flipped.
inline Eigen::MatrixXd sample_bananas(const SampleSpec& spec) {
  Eigen::MatrixXd pts(spec.count, 2);
  const CounterRng rng = CounterRng(spec.seed).stream(300);
  for (long i = 0; i < spec.count; ++i) {
    const double u = rng.normal(2 * i);
    const double noise = 0.1 * rng.normal(2 * i + 1);
    if (i % 2 == 0)
      pts.row(i) << -4.0 + u, 0.25 * u * u + noise;
    else
      pts.row(i) << 4.0 + u, -0.25 * u * u - noise;
  }
  return pts;
}

inline Eigen::MatrixXd sample_two_lines(const SampleSpec& spec) {
  Eigen::MatrixXd pts(spec.count, 2);
  const CounterRng rng = CounterRng(spec.seed).stream(400);
  for (long i = 0; i < spec.count; ++i) {
    pts(i, 0) = rng.uniform(i, -2.0, 2.0);
    pts(i, 1) = (i % 2 == 0) ? 0.5 : -0.5;
  }
  return pts;
}

inline Eigen::MatrixXd sample_gaussian_init(const SampleSpec& spec) {
  Eigen::MatrixXd pts(spec.count, 2);
  const CounterRng rng = CounterRng(spec.seed).stream(500);
  const double s = std::sqrt(spec.variance);
  for (long i = 0; i < spec.count; ++i) {
    pts(i, 0) = spec.center_x + s * rng.normal(2 * i);
    pts(i, 1) = spec.center_y + s * rng.normal(2 * i + 1);
  }
  return pts;
}

}  // namespace detail

inline Eigen::MatrixXd sample(const SampleSpec& spec) {
  if (spec.count < 1) throw std::invalid_argument("sample: count must be >= 1");
  if (spec.name == "three_rings") return detail::sample_three_rings(spec);
  if (spec.name == "neals_cross") return detail::sample_neals_cross(spec);
  if (spec.name == "bananas") return detail::sample_bananas(spec);
  if (spec.name == "two_lines") return detail::sample_two_lines(spec);
  if (spec.name == "gaussian_init") return detail::sample_gaussian_init(spec);
  throw std::invalid_argument("unknown target name: " + spec.name);
}

}  // namespace mmdflow
