#include "tiltlab/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "tiltlab/mathutil.hpp"

namespace tiltlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_congruent(const Table& a, const Table& b, const char* what) {
  if (a.size() != b.size()) throw std::invalid_argument(std::string(what) + ": prompt count mismatch");
  for (std::size_t p = 0; p < a.size(); ++p)
    if (a[p].size() != b[p].size())
      throw std::invalid_argument(std::string(what) + ": candidate set mismatch at prompt " +
                                  std::to_string(p));
}

void check_weights(const std::vector<double>& weights, std::size_t prompts, const char* what) {
  if (weights.size() != prompts)
    throw std::invalid_argument(std::string(what) + ": weight count does not match prompt count");
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument(std::string(what) + ": negative prompt weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument(std::string(what) + ": prompt weights sum to " +
                                std::to_string(total));
}

// Normalizes per-prompt log weights in place into probabilities.
void normalize_log_row(std::vector<double>& row, std::size_t prompt, const char* what) {
  double shift = -kInf;
  for (double w : row) shift = std::max(shift, w);
  if (shift == -kInf)
    throw std::runtime_error(std::string(what) + ": prompt " + std::to_string(prompt) +
                             " has no admissible response mass");
  double total = 0.0;
  for (double& w : row) {
    w = std::exp(w - shift);
    total += w;
  }
  if (!(total > 0.0) || !std::isfinite(total))
    throw std::runtime_error(std::string(what) + ": prompt " + std::to_string(prompt) +
                             " normalization failed");
  for (double& w : row) w /= total;
}

}  // namespace

TiltSpec TiltSpec::from_gamma(double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("TiltSpec: gamma must be positive");
  return TiltSpec{gamma, gamma / (1.0 + gamma)};
}

TiltSpec TiltSpec::from_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("TiltSpec: alpha must be in (0,1)");
  return TiltSpec{alpha / (1.0 - alpha), alpha};
}

Policy tilt(const Policy& base, const Utility& utility, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("tilt: gamma must be positive");
  check_congruent(base.probs, utility.values, "tilt");

  Policy tilted;
  tilted.label = base.label + " tilted(" + to_string(utility.kind) + ", gamma=" +
                 std::to_string(gamma) + ")";
  tilted.probs.resize(base.probs.size());
  for (std::size_t p = 0; p < base.probs.size(); ++p) {
    auto& row = tilted.probs[p];
    row.assign(base.probs[p].size(), -kInf);
    for (std::size_t r = 0; r < row.size(); ++r) {
      const double prob = base.probs[p][r];
      if (prob > 0.0) row[r] = std::log(prob) + utility.values[p][r] / gamma;
    }
    normalize_log_row(row, p, "tilt");
  }
  return tilted;
}

Policy target_posterior(const Policy& base, const Table& goodness, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("target_posterior: gamma must be positive");
  check_congruent(base.probs, goodness, "target_posterior");

  Policy target;
  target.label = base.label + " posterior(gamma=" + std::to_string(gamma) + ")";
  target.probs.resize(base.probs.size());
  const double exponent = 1.0 / gamma;
  for (std::size_t p = 0; p < base.probs.size(); ++p) {
    auto& row = target.probs[p];
    row.assign(base.probs[p].size(), 0.0);
    double total = 0.0;
    for (std::size_t r = 0; r < row.size(); ++r) {
      const double g = goodness[p][r];
      if (!(g > 0.0 && g <= 1.0))
        throw std::invalid_argument("target_posterior: goodness must be in (0,1], got " +
                                    std::to_string(g));
      row[r] = base.probs[p][r] * std::pow(g, exponent);
      total += row[r];
    }
    if (!(total > 0.0))
      throw std::runtime_error("target_posterior: prompt " + std::to_string(p) +
                               " has zero posterior mass");
    for (double& v : row) v /= total;
  }
  return target;
}

double kl_divergence(const Policy& p, const Policy& q, const std::vector<double>& prompt_weights) {
  check_congruent(p.probs, q.probs, "kl_divergence");
  check_weights(prompt_weights, p.probs.size(), "kl_divergence");
  double kl = 0.0;
  for (std::size_t x = 0; x < p.probs.size(); ++x) {
    double prompt_kl = 0.0;
    for (std::size_t y = 0; y < p.probs[x].size(); ++y) {
      const double pp = p.probs[x][y];
      if (pp == 0.0) continue;
      const double qq = q.probs[x][y];
      if (qq == 0.0)
        throw std::invalid_argument("kl_divergence: support violation at prompt " +
                                    std::to_string(x) + ", response " + std::to_string(y));
      prompt_kl += pp * std::log(pp / qq);
    }
    kl += prompt_weights[x] * prompt_kl;
  }
  return kl;
}

double objective_value(const Policy& policy, const Policy& base, const Utility& utility,
                       double gamma, const std::vector<double>& prompt_weights) {
  if (!(gamma > 0.0)) throw std::invalid_argument("objective_value: gamma must be positive");
  check_congruent(policy.probs, utility.values, "objective_value");
  check_weights(prompt_weights, policy.probs.size(), "objective_value");
  double expected = 0.0;
  for (std::size_t x = 0; x < policy.probs.size(); ++x) {
    double prompt_utility = 0.0;
    for (std::size_t y = 0; y < policy.probs[x].size(); ++y)
      if (policy.probs[x][y] > 0.0) prompt_utility += policy.probs[x][y] * utility.values[x][y];
    expected += prompt_weights[x] * prompt_utility;
  }
  return expected - gamma * kl_divergence(policy, base, prompt_weights);
}

Policy simplex_oracle(const Policy& base, const Utility& utility, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("simplex_oracle: gamma must be positive");
  check_congruent(base.probs, utility.values, "simplex_oracle");
  constexpr double kKktTolerance = 1e-10;
  constexpr int kMaxIterations = 5000;
  // Relative step; each iteration contracts the log-space error by this factor.
  constexpr double kContraction = 0.5;

  Policy result;
  result.label = base.label + " oracle(gamma=" + std::to_string(gamma) + ")";
  result.probs.resize(base.probs.size());
  for (std::size_t x = 0; x < base.probs.size(); ++x) {
    const auto& base_row = base.probs[x];
    const auto& u = utility.values[x];
    const std::size_t n = base_row.size();

    std::vector<int> support;
    for (std::size_t y = 0; y < n; ++y)
      if (base_row[y] > 0.0) support.push_back(static_cast<int>(y));
    if (support.empty())
      throw std::runtime_error("simplex_oracle: prompt " + std::to_string(x) + " has empty base support");

    // Uniform start over the support, iterated in log space.
    std::vector<double> log_pi(support.size(), -std::log(static_cast<double>(support.size())));
    std::vector<double> grad(support.size());
    bool converged = false;
    double residual = kInf;
    for (int iter = 0; iter < kMaxIterations; ++iter) {
      // Gradient of the objective w.r.t. pi: u - gamma*(log pi - log pi0 + 1).
      double mean_grad = 0.0;
      for (std::size_t i = 0; i < support.size(); ++i) {
        const int y = support[i];
        grad[i] = u[y] - gamma * (log_pi[i] - std::log(base_row[y]) + 1.0);
        mean_grad += std::exp(log_pi[i]) * grad[i];
      }
      // KKT: the gradient must be constant across the support.
      residual = 0.0;
      for (std::size_t i = 0; i < support.size(); ++i)
        residual = std::max(residual, std::abs(grad[i] - mean_grad));
      if (residual <= kKktTolerance) {
        converged = true;
        break;
      }
      const double step = kContraction / gamma;
      double shift = -kInf;
      for (std::size_t i = 0; i < support.size(); ++i) {
        log_pi[i] += step * grad[i];
        shift = std::max(shift, log_pi[i]);
      }
      double total = 0.0;
      for (double& lp : log_pi) total += std::exp(lp - shift);
      const double log_z = shift + std::log(total);
      for (double& lp : log_pi) lp -= log_z;
    }
    if (!converged)
      throw std::runtime_error("simplex_oracle: prompt " + std::to_string(x) +
                               " did not reach KKT residual " + std::to_string(kKktTolerance) +
                               " (final " + std::to_string(residual) + ")");
    result.probs[x].assign(n, 0.0);
    for (std::size_t i = 0; i < support.size(); ++i)
      result.probs[x][support[i]] = std::exp(log_pi[i]);
    // Remove the last normalization's rounding.
    double total = std::accumulate(result.probs[x].begin(), result.probs[x].end(), 0.0);
    for (double& v : result.probs[x]) v /= total;
  }
  return result;
}

Policy best_of_k(const Policy& base, const Utility& utility, int k) {
  if (k < 1) throw std::invalid_argument("best_of_k: k must be >= 1");
  check_congruent(base.probs, utility.values, "best_of_k");

  Policy selected;
  selected.label = base.label + " best_of_" + std::to_string(k);
  selected.probs.resize(base.probs.size());
  for (std::size_t x = 0; x < base.probs.size(); ++x) {
    const auto& base_row = base.probs[x];
    const auto& u = utility.values[x];
    const std::size_t n = base_row.size();

    // Worst-to-best order; ties resolved so that the lower index wins.
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&u](int a, int b) {
      return u[a] != u[b] ? u[a] < u[b] : a > b;
    });

    selected.probs[x].assign(n, 0.0);
    double cdf = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const int y = order[i];
      const double prev = cdf;
      cdf = i + 1 == n ? 1.0 : cdf + base_row[y];
      // P(best of k lands on y) = cdf^k - prev^k, evaluated stably.
      double mass;
      if (prev == 0.0) {
        mass = std::pow(cdf, static_cast<double>(k));
      } else {
        mass = -std::pow(cdf, static_cast<double>(k)) *
               std::expm1(static_cast<double>(k) * std::log(prev / cdf));
      }
      selected.probs[x][y] = mass;
    }
  }
  return selected;
}

double max_total_variation(const Policy& a, const Policy& b) {
  check_congruent(a.probs, b.probs, "max_total_variation");
  double worst = 0.0;
  for (std::size_t x = 0; x < a.probs.size(); ++x) {
    double tv = 0.0;
    for (std::size_t y = 0; y < a.probs[x].size(); ++y)
      tv += std::abs(a.probs[x][y] - b.probs[x][y]);
    worst = std::max(worst, 0.5 * tv);
  }
  return worst;
}

}  // namespace tiltlab
