#include "tiltlab/mathutil.hpp"

#include <algorithm>
#include <cmath>

namespace tiltlab {

namespace {

// Acklam's rational approximation for the probit function; worst-case
// relative error ~1.15e-9 before refinement.
double probit_approx(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  if (p < p_low) {
    double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p <= 1.0 - p_low) {
    double q = p - 0.5;
    double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  double q = std::sqrt(-2.0 * std::log1p(-p));
  return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
         ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
}

}  // namespace

double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("inverse_normal_cdf: argument must be in (0,1)");
  double x = probit_approx(p);
  // One Halley step against erfc brings the result to full double precision.
  static const double sqrt2 = std::sqrt(2.0);
  static const double sqrt_2pi = std::sqrt(8.0 * std::atan(1.0));
  double e = 0.5 * std::erfc(-x / sqrt2) - p;
  double u = e * sqrt_2pi * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

double sample_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("sample_quantile: empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw std::domain_error("sample_quantile: q must be in [0,1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= values.size()) return values.back();
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

double weighted_quantile(std::vector<std::pair<double, double>> atoms, double q) {
  if (atoms.empty()) throw std::invalid_argument("weighted_quantile: no atoms");
  if (!(q >= 0.0 && q <= 1.0)) throw std::domain_error("weighted_quantile: q must be in [0,1]");
  double total = 0.0;
  for (const auto& [value, weight] : atoms) {
    (void)value;
    if (weight < 0.0) throw std::invalid_argument("weighted_quantile: negative weight");
    total += weight;
  }
  if (total <= 0.0) throw std::invalid_argument("weighted_quantile: zero total weight");
  std::sort(atoms.begin(), atoms.end());

  double cum = 0.0;
  double prev_f = 0.0;
  double prev_v = atoms.front().first;
  for (const auto& [value, weight] : atoms) {
    cum += weight;
    const double f = cum / total;
    if (q <= f) {
      if (f == prev_f) return value;
      if (q <= prev_f) return prev_v;
      return prev_v + (q - prev_f) / (f - prev_f) * (value - prev_v);
    }
    prev_f = f;
    prev_v = value;
  }
  return atoms.back().first;
}

}  // namespace tiltlab
