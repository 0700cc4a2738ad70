#include "tiltlab/reward.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <unordered_map>

#include "tiltlab/mathutil.hpp"

namespace tiltlab {

namespace {

// Flat indexing over the ragged (prompt,response) tables.
struct FlatIndex {
  std::vector<int> offsets;
  int size = 0;

  explicit FlatIndex(const WorldShape& shape) {
    offsets.reserve(shape.num_prompts() + 1);
    offsets.push_back(0);
    for (int p = 0; p < shape.num_prompts(); ++p)
      offsets.push_back(offsets.back() + shape.num_responses(p));
    size = offsets.back();
  }
  int at(int prompt, int response) const { return offsets[prompt] + response; }

  Table unflatten(const WorldShape& shape, const std::vector<double>& flat) const {
    Table table(shape.num_prompts());
    for (int p = 0; p < shape.num_prompts(); ++p)
      table[p].assign(flat.begin() + offsets[p], flat.begin() + offsets[p + 1]);
    return table;
  }
};

struct PairTerm {
  int winner = 0;
  int loser = 0;
  double count = 0.0;
};

struct CellTerm {
  int index = 0;
  double positives = 0.0;
  double negatives = 0.0;
};

void check_pair(const PreferencePair& pair, const WorldShape& shape, std::size_t position) {
  if (pair.prompt < 0 || pair.prompt >= shape.num_prompts())
    throw std::invalid_argument("pair " + std::to_string(position) + ": prompt index out of range");
  const int count = shape.num_responses(pair.prompt);
  if (pair.winner < 0 || pair.winner >= count || pair.loser < 0 || pair.loser >= count)
    throw std::invalid_argument("pair " + std::to_string(position) +
                                ": response index out of range");
  if (pair.winner == pair.loser)
    throw std::invalid_argument("pair " + std::to_string(position) + ": winner equals loser");
}

std::vector<PairTerm> aggregate_pairs(const std::vector<PreferencePair>& pairs,
                                      const WorldShape& shape, const FlatIndex& index) {
  std::unordered_map<std::uint64_t, double> counts;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    check_pair(pairs[i], shape, i);
    const auto w = static_cast<std::uint64_t>(index.at(pairs[i].prompt, pairs[i].winner));
    const auto l = static_cast<std::uint64_t>(index.at(pairs[i].prompt, pairs[i].loser));
    counts[(w << 32) | l] += 1.0;
  }
  std::vector<PairTerm> terms;
  terms.reserve(counts.size());
  for (const auto& [key, count] : counts)
    terms.push_back({static_cast<int>(key >> 32), static_cast<int>(key & 0xFFFFFFFFu), count});
  std::sort(terms.begin(), terms.end(), [](const PairTerm& a, const PairTerm& b) {
    return a.winner != b.winner ? a.winner < b.winner : a.loser < b.loser;
  });
  return terms;
}

// Objective split into per-observation-averaged data term and l2 penalty.
// `l2_sum` is the penalty weight on the summed objective; internally both are
// divided by the observation count so step sizes stay O(1).
struct FitProblem {
  std::vector<PairTerm> pairwise;
  std::vector<CellTerm> cells;
  double l2_sum = 0.0;
  double observations = 0.0;
  int dim = 0;

  double value(const std::vector<double>& theta) const {
    double nll = data_nll(theta);
    double penalty = 0.0;
    for (double t : theta) penalty += t * t;
    return (nll + 0.5 * l2_sum * penalty) / observations;
  }

  double data_nll(const std::vector<double>& theta) const {
    double nll = 0.0;
    for (const auto& term : pairwise)
      nll -= term.count * log_sigmoid(theta[term.winner] - theta[term.loser]);
    for (const auto& cell : cells) {
      const double t = theta[cell.index];
      nll -= cell.positives * log_sigmoid(t) + cell.negatives * log_sigmoid(-t);
    }
    return nll;
  }

  void gradient(const std::vector<double>& theta, std::vector<double>& grad) const {
    grad.assign(dim, 0.0);
    for (const auto& term : pairwise) {
      // d/dg of -log sigmoid(g) is -sigmoid(-g).
      const double slack = sigmoid(theta[term.loser] - theta[term.winner]);
      grad[term.winner] -= term.count * slack;
      grad[term.loser] += term.count * slack;
    }
    for (const auto& cell : cells) {
      const double s = sigmoid(theta[cell.index]);
      grad[cell.index] += (cell.positives + cell.negatives) * s - cell.positives;
    }
    for (int i = 0; i < dim; ++i) grad[i] = (grad[i] + l2_sum * theta[i]) / observations;
  }
};

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<double> minimize(const FitProblem& problem, const FitConfig& config,
                             FitDiagnostics& diag) {
  std::vector<double> theta(problem.dim, 0.0);
  if (!config.initial_values.empty()) {
    if (static_cast<int>(config.initial_values.size()) != problem.dim)
      throw std::invalid_argument("fit: initial_values size mismatch");
    theta = config.initial_values;
  }
  std::vector<double> grad(problem.dim), trial(problem.dim);
  double step = config.step_size;
  double value = problem.value(theta);
  double grad_norm = 0.0;
  int iter = 0;
  for (; iter < config.max_iterations; ++iter) {
    problem.gradient(theta, grad);
    grad_norm = norm2(grad);
    if (grad_norm <= config.tolerance) break;
    if (config.step_rule == FitConfig::StepRule::kFixed) {
      for (int i = 0; i < problem.dim; ++i) theta[i] -= config.step_size * grad[i];
      value = problem.value(theta);
      continue;
    }
    // Armijo backtracking; the trial step warm-starts from the last accepted one.
    double t = std::min(config.step_size, 2.0 * step);
    const double slope = grad_norm * grad_norm;
    bool accepted = false;
    for (int shrink = 0; shrink < 60; ++shrink) {
      for (int i = 0; i < problem.dim; ++i) trial[i] = theta[i] - t * grad[i];
      const double trial_value = problem.value(trial);
      if (trial_value <= value - 0.5 * t * slope) {
        theta.swap(trial);
        value = trial_value;
        step = t;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted)
      throw ConvergenceError("fit: line search failed at gradient norm " +
                                 std::to_string(grad_norm),
                             grad_norm);
  }
  if (grad_norm > config.tolerance)
    throw ConvergenceError("fit: no convergence after " + std::to_string(config.max_iterations) +
                               " iterations, gradient norm " + std::to_string(grad_norm),
                           grad_norm);
  diag.final_nll = problem.data_nll(theta);
  diag.iterations = iter;
  diag.gradient_norm = grad_norm;
  return theta;
}

}  // namespace

RewardModel fit_bt(const std::vector<PreferencePair>& pairs, const WorldShape& shape,
                   const FitConfig& config) {
  if (!(config.l2_weight > 0.0))
    throw std::invalid_argument("fit_bt: l2_weight must be positive (rewards are unidentified "
                                "up to per-prompt shifts without it)");
  std::string property;
  for (const auto& pair : pairs) {
    if (property.empty())
      property = pair.property;
    else if (pair.property != property)
      throw std::invalid_argument("fit_bt: pairs mix properties '" + property + "' and '" +
                                  pair.property + "'");
  }

  FlatIndex index(shape);
  FitProblem problem;
  problem.dim = index.size;
  problem.pairwise = aggregate_pairs(pairs, shape, index);
  problem.l2_sum = config.l2_weight;
  problem.observations = std::max<double>(1.0, static_cast<double>(pairs.size()));

  RewardModel model;
  model.property = property;
  model.gauge = Gauge::kRaw;
  model.diagnostics.l2_weight = config.l2_weight;
  model.values = index.unflatten(shape, minimize(problem, config, model.diagnostics));
  return model;
}

RewardModel fit_pointwise(const std::vector<GoodnessLabel>& labels, const WorldShape& shape,
                          const FitConfig& config, const std::string& property) {
  if (config.l2_weight < 0.0) throw std::invalid_argument("fit_pointwise: l2_weight must be >= 0");
  FlatIndex index(shape);
  std::vector<double> positives(index.size, 0.0), negatives(index.size, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& label = labels[i];
    if (label.prompt < 0 || label.prompt >= shape.num_prompts() || label.response < 0 ||
        label.response >= shape.num_responses(label.prompt))
      throw std::invalid_argument("label " + std::to_string(i) + ": index out of range");
    (label.good ? positives : negatives)[index.at(label.prompt, label.response)] += 1.0;
  }
  if (config.l2_weight == 0.0) {
    for (int i = 0; i < index.size; ++i)
      if (positives[i] == 0.0 || negatives[i] == 0.0)
        throw std::invalid_argument(
            "fit_pointwise: l2_weight = 0 requires both label outcomes for every "
            "(prompt,response); cell " +
            std::to_string(i) + " is one-sided");
  }

  FitProblem problem;
  problem.dim = index.size;
  problem.l2_sum = config.l2_weight;
  problem.observations = std::max<double>(1.0, static_cast<double>(labels.size()));
  for (int i = 0; i < index.size; ++i)
    if (positives[i] > 0.0 || negatives[i] > 0.0)
      problem.cells.push_back({i, positives[i], negatives[i]});

  RewardModel model;
  model.property = property;
  model.gauge = Gauge::kRaw;
  model.diagnostics.l2_weight = config.l2_weight;
  model.values = index.unflatten(shape, minimize(problem, config, model.diagnostics));
  return model;
}

RewardModel center_per_prompt(const RewardModel& model) {
  RewardModel centered = model;
  for (auto& row : centered.values) {
    if (row.empty()) continue;
    const double mean = std::accumulate(row.begin(), row.end(), 0.0) / row.size();
    for (double& v : row) v -= mean;
  }
  centered.gauge = Gauge::kPromptCentered;
  return centered;
}

double bt_objective(const std::vector<PreferencePair>& pairs, const WorldShape& shape,
                    const Table& values, double l2_weight) {
  if (!shape.congruent(values)) throw std::invalid_argument("bt_objective: shape mismatch");
  double nll = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    check_pair(pairs[i], shape, i);
    nll -= log_sigmoid(values[pairs[i].prompt][pairs[i].winner] -
                       values[pairs[i].prompt][pairs[i].loser]);
  }
  double penalty = 0.0;
  for (const auto& row : values)
    for (double v : row) penalty += v * v;
  return nll + 0.5 * l2_weight * penalty;
}

Table bt_gradient(const std::vector<PreferencePair>& pairs, const WorldShape& shape,
                  const Table& values, double l2_weight) {
  if (!shape.congruent(values)) throw std::invalid_argument("bt_gradient: shape mismatch");
  Table grad = shape.zero_table();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    check_pair(pairs[i], shape, i);
    const auto& pair = pairs[i];
    const double slack =
        sigmoid(values[pair.prompt][pair.loser] - values[pair.prompt][pair.winner]);
    grad[pair.prompt][pair.winner] -= slack;
    grad[pair.prompt][pair.loser] += slack;
  }
  for (std::size_t p = 0; p < grad.size(); ++p)
    for (std::size_t r = 0; r < grad[p].size(); ++r) grad[p][r] += l2_weight * values[p][r];
  return grad;
}

}  // namespace tiltlab
