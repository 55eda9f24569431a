#pragma once

#include <cmath>
#include <vector>

#include "htsim/core.hpp"

namespace htsim {

/// Gauss-Legendre rule on [0,1]. Exact for polynomials of degree 2n-1.
struct GaussRule {
  std::vector<double> points;
  std::vector<double> weights;
};

inline GaussRule gauss_rule(int n) {
  HTSIM_REQUIRE(n >= 1 && n <= 30, PreconditionError, "gauss_rule: n out of range");
  GaussRule rule;
  rule.points.resize(n);
  rule.weights.resize(n);
  // Roots of P_n on [-1,1] by Newton iteration, then mapped to [0,1].
  for (int i = 0; i < n; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= n; ++j) {
        double p2 = ((2 * j - 1) * x * p1 - (j - 1) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    rule.points[i] = 0.5 * (1.0 - x); // cos ordering gives descending roots
    rule.weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
  }
  return rule;
}

/// Shifted Legendre polynomial P_i(2x-1) on [0,1] and its derivative.
inline double legendre01(int i, double x) {
  double t = 2.0 * x - 1.0;
  double p0 = 1.0, p1 = t;
  if (i == 0) return p0;
  if (i == 1) return p1;
  for (int j = 2; j <= i; ++j) {
    double p2 = ((2 * j - 1) * t * p1 - (j - 1) * p0) / j;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

inline double legendre01_deriv(int i, double x) {
  if (i == 0) return 0.0;
  double t = 2.0 * x - 1.0;
  double p0 = 1.0, p1 = t, d0 = 0.0, d1 = 1.0;
  for (int j = 2; j <= i; ++j) {
    double p2 = ((2 * j - 1) * t * p1 - (j - 1) * p0) / j;
    double d2 = ((2 * j - 1) * (p1 + t * d1) - (j - 1) * d0) / j;
    p0 = p1; p1 = p2;
    d0 = d1; d1 = d2;
  }
  return 2.0 * d1; // chain rule for t = 2x-1
}

} // namespace htsim
