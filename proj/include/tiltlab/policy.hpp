#pragma once

#include <vector>

#include "tiltlab/types.hpp"

namespace tiltlab {

// KL trade-off knob. alpha = gamma / (1 + gamma) is the sweep
// parameterization used in configs; internal math uses gamma only.
struct TiltSpec {
  double gamma = 1.0;
  double alpha = 0.5;

  static TiltSpec from_gamma(double gamma);
  static TiltSpec from_alpha(double alpha);
};

// Closed-form optimum of the KL-regularized expected-utility objective:
// pi*(y|x) proportional to pi0(y|x) * exp(u(x,y)/gamma). Computed with a
// per-prompt max shift; zero-probability base entries stay zero.
Policy tilt(const Policy& base, const Utility& utility, double gamma);

// Bayes-style reweighting pi(y|x) proportional to pi0(y|x) * g(x,y)^(1/gamma).
// With gamma = 1 this conditions exactly on the good event.
Policy target_posterior(const Policy& base, const Table& goodness, double gamma);

// sum_x w(x) sum_y p(y|x) log(p(y|x)/q(y|x)). Requires support(p) within
// support(q); violations name the offending (prompt,response).
double kl_divergence(const Policy& p, const Policy& q, const std::vector<double>& prompt_weights);

// E_pi[u] - gamma * KL(pi || base), averaged over prompts with the given weights.
double objective_value(const Policy& policy, const Policy& base, const Utility& utility,
                       double gamma, const std::vector<double>& prompt_weights);

// Brute-force per-prompt maximizer of the same objective by exponentiated-
// gradient iteration from the uniform start, run to KKT residual 1e-10.
// Certifies that tilt() is the optimum; intended for small candidate sets.
Policy simplex_oracle(const Policy& base, const Utility& utility, double gamma);

// Exact distribution of "draw k, keep the best by utility". Ties are broken
// by ascending response index (lower index wins); the same rule must be used
// by any sampler this is checked against.
Policy best_of_k(const Policy& base, const Utility& utility, int k);

// Largest per-prompt total variation distance between two policies.
double max_total_variation(const Policy& a, const Policy& b);

}  // namespace tiltlab
