#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace tiltlab {

// log(sigmoid(z)), branch split at 0 so the linear regime stays exact and
// nothing overflows for |z| <= 700.
inline double log_sigmoid(double z) {
  return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("logit: argument must be in (0,1)");
  return std::log(p) - std::log1p(-p);
}

// Standard normal inverse CDF, accurate to close to machine precision.
double inverse_normal_cdf(double p);

// Linear-interpolated sample quantile at position q*(n-1) over the sorted
// values (the numpy default). Input need not be sorted.
double sample_quantile(std::vector<double> values, double q);

// Quantile of a discrete distribution given (value, probability) atoms:
// piecewise-linear inverse of the CDF through the anchor points (F_i, v_i),
// constant at the smallest value below F_1. Probabilities must be
// nonnegative with positive total; they are normalized internally.
double weighted_quantile(std::vector<std::pair<double, double>> atoms, double q);

inline double square(double x) { return x * x; }

}  // namespace tiltlab
