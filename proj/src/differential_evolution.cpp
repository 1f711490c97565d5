#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <thread>

#include "ctxscale/errors.hpp"
#include "ctxscale/optimize.hpp"

namespace ctxscale {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double uniform01(std::mt19937_64& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

double into_box(double v, const Interval& b) {
  if (v < b.lower) {
    v = b.lower + (b.lower - v);
  } else if (v > b.upper) {
    v = b.upper - (v - b.upper);
  }
  return std::clamp(v, b.lower, b.upper);
}

double safe_eval(const Objective& objective, std::span<const double> x) {
  const double f = objective(x);
  return std::isfinite(f) ? f : kInf;
}

// Evaluates every candidate; with several workers, candidates are split into
// contiguous blocks. Each slot is written by exactly one thread.
void evaluate_all(const Objective& objective, const std::vector<std::vector<double>>& candidates,
                  std::vector<double>& losses, unsigned workers) {
  const std::size_t n = candidates.size();
  losses.resize(n);
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) {
      losses[i] = safe_eval(objective, candidates[i]);
    }
    return;
  }
  const std::size_t threads = std::min<std::size_t>(workers, n);
  const std::size_t block = (n + threads - 1) / threads;
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t lo = t * block;
    const std::size_t hi = std::min(n, lo + block);
    pool.emplace_back([&, lo, hi] {
      for (std::size_t i = lo; i < hi; ++i) {
        losses[i] = safe_eval(objective, candidates[i]);
      }
    });
  }
}

void check_config(std::span<const Interval> bounds, const DEConfig& cfg) {
  if (bounds.empty()) {
    throw ValidationError("differential_evolution: no bounds given");
  }
  for (const auto& b : bounds) {
    if (!std::isfinite(b.lower) || !std::isfinite(b.upper) || !(b.lower < b.upper)) {
      throw ValidationError("differential_evolution: every bound must be finite with lower < upper");
    }
  }
  if (cfg.population_size < 4) {
    throw ValidationError("differential_evolution: population_size must be >= 4");
  }
  if (!(cfg.mutation_min >= 0 && cfg.mutation_min <= cfg.mutation_max && cfg.mutation_max <= 2)) {
    throw ValidationError("differential_evolution: mutation range must lie within [0,2]");
  }
  if (!(cfg.crossover_rate >= 0 && cfg.crossover_rate <= 1)) {
    throw ValidationError("differential_evolution: crossover_rate must lie within [0,1]");
  }
  if (!(cfg.convergence_tol > 0)) {
    throw ValidationError("differential_evolution: convergence_tol must be > 0");
  }
}

}  // namespace

DEResult differential_evolution(const Objective& objective, std::span<const Interval> bounds,
                                const DEConfig& cfg, std::uint64_t seed) {
  check_config(bounds, cfg);
  const std::size_t dim = bounds.size();
  const std::size_t np = cfg.population_size;
  std::mt19937_64 rng(seed);

  // Latin hypercube initialisation: one sample per stratum in every dimension.
  std::vector<std::vector<double>> population(np, std::vector<double>(dim));
  std::vector<std::size_t> strata(np);
  for (std::size_t j = 0; j < dim; ++j) {
    std::iota(strata.begin(), strata.end(), std::size_t{0});
    std::shuffle(strata.begin(), strata.end(), rng);
    const double width = bounds[j].upper - bounds[j].lower;
    for (std::size_t i = 0; i < np; ++i) {
      const double u = (static_cast<double>(strata[i]) + uniform01(rng)) / static_cast<double>(np);
      population[i][j] = std::clamp(bounds[j].lower + u * width, bounds[j].lower, bounds[j].upper);
    }
  }

  std::vector<double> losses;
  evaluate_all(objective, population, losses, cfg.workers);

  DEResult result;
  result.evaluations = np;
  auto champion = [&] {
    return static_cast<std::size_t>(std::min_element(losses.begin(), losses.end()) -
                                    losses.begin());
  };
  auto converged = [&] {
    const auto [lo, hi] = std::minmax_element(losses.begin(), losses.end());
    if (!std::isfinite(*hi)) {
      return false;
    }
    return (*hi - *lo) <= cfg.convergence_tol * std::max(1.0, std::abs(*lo));
  };
  result.best_history.push_back(losses[champion()]);

  std::vector<std::vector<double>> trials(np, std::vector<double>(dim));
  std::vector<double> trial_losses;
  while (!converged() && result.generations < cfg.max_generations) {
    const double weight =
        cfg.mutation_min + (cfg.mutation_max - cfg.mutation_min) * uniform01(rng);
    for (std::size_t i = 0; i < np; ++i) {
      std::size_t r1, r2, r3;
      do {
        r1 = pick(rng, np);
      } while (r1 == i);
      do {
        r2 = pick(rng, np);
      } while (r2 == i || r2 == r1);
      do {
        r3 = pick(rng, np);
      } while (r3 == i || r3 == r1 || r3 == r2);
      const std::size_t forced = pick(rng, dim);
      for (std::size_t j = 0; j < dim; ++j) {
        if (j == forced || uniform01(rng) < cfg.crossover_rate) {
          const double v =
              population[r1][j] + weight * (population[r2][j] - population[r3][j]);
          trials[i][j] = into_box(v, bounds[j]);
        } else {
          trials[i][j] = population[i][j];
        }
      }
    }
    evaluate_all(objective, trials, trial_losses, cfg.workers);
    result.evaluations += np;
    for (std::size_t i = 0; i < np; ++i) {
      if (trial_losses[i] < losses[i]) {
        population[i].swap(trials[i]);
        losses[i] = trial_losses[i];
      }
    }
    ++result.generations;
    result.best_history.push_back(losses[champion()]);
  }

  const std::size_t best = champion();
  result.best = population[best];
  result.best_loss = losses[best];
  result.converged = converged();
  return result;
}

}  // namespace ctxscale
