#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ctxscale/data.hpp"
#include "ctxscale/model.hpp"

namespace ctxscale {

struct Interval {
  double lower = 0;
  double upper = 0;

  bool contains(double x) const { return x >= lower && x <= upper; }
  bool operator==(const Interval&) const = default;
};

/// Closed box for the six coefficients, in linear units.
///
/// The default box follows the published bounds, with the zero lower bounds
/// lifted to 1e-6 (1 FLOP for C_c) so that (x / scale)^exponent stays finite.
struct ParamBounds {
  std::array<Interval, ScalingParams::kCount> box = {{
      {1e-6, 100.0},   // A
      {1.0, 1e30},     // C_c
      {1e-6, 10.0},    // alpha
      {1e-6, 100.0},   // B
      {1e-6, 131072},  // n_pmt_c
      {1e-6, 10.0},    // beta
  }};

  bool contains(const ScalingParams& p) const;
  bool operator==(const ParamBounds&) const = default;
};

struct DEConfig {
  std::size_t population_size = 15 * ScalingParams::kCount;
  std::size_t max_generations = 1000;
  // The differential weight is redrawn uniformly from this range every generation.
  double mutation_min = 0.5;
  double mutation_max = 1.0;
  double crossover_rate = 0.7;
  // Stop once max - min of the population losses <= tol * max(1, |best|).
  double convergence_tol = 1e-10;
  // Threads used to evaluate trial vectors; results do not depend on it.
  unsigned workers = 1;

  bool operator==(const DEConfig&) const = default;
};

struct LocalConfig {
  std::size_t max_iterations = 500;
  double step_tol = 1e-12;
  double gradient_tol = 1e-14;

  bool operator==(const LocalConfig&) const = default;
};

struct FitConfig {
  ParamBounds bounds;
  PenaltyConfig penalty;
  DEConfig de;
  LocalConfig local;
  std::uint64_t seed = 0;
  // Search C_c and n_pmt_c on a log10 scale.
  bool log_space_scales = true;

  bool operator==(const FitConfig&) const = default;
};

// Throws ValidationError when bounds are empty, tolerances non-positive, etc.
void validate(const FitConfig& config);

/// Bijection between ScalingParams and the vector the optimizers work on.
/// With log scaling, components 1 (C_c) and 4 (n_pmt_c) hold log10 values.
/// Decoded parameters are clamped to the linear bounds.
class SearchSpace {
 public:
  SearchSpace(const ParamBounds& bounds, bool log_scales);

  std::vector<double> encode(const ScalingParams& p) const;
  ScalingParams decode(std::span<const double> x) const;
  std::span<const Interval> bounds() const { return bounds_; }
  std::size_t dimension() const { return bounds_.size(); }

 private:
  bool log_scales_;
  ParamBounds linear_;
  std::vector<Interval> bounds_;
};

// ---------------------------------------------------------------------------
// Global stage

using Objective = std::function<double(std::span<const double>)>;

struct DEResult {
  std::vector<double> best;
  double best_loss = 0;
  std::size_t generations = 0;  // generations run after initialisation
  bool converged = false;
  std::size_t evaluations = 0;
  // Champion loss after initialisation and after every generation.
  std::vector<double> best_history;
};

/// Classic rand/1/bin differential evolution with synchronous (generation-wise)
/// replacement. Trial components leaving the box are reflected back, then
/// clipped, so the objective is only ever called inside the bounds. Non-finite
/// objective values rank as +inf. Ties keep the incumbent. The result is a pure
/// function of (objective, bounds, config, seed).
DEResult differential_evolution(const Objective& objective, std::span<const Interval> bounds,
                                const DEConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Local stage

using ResidualFunction = std::function<void(std::span<const double> x, std::span<double> out)>;

struct LeastSquaresResult {
  std::vector<double> x;
  double sse = 0;
  std::size_t iterations = 0;
  bool converged = false;
  // SSE at the start and after every accepted step.
  std::vector<double> sse_history;
};

/// Box-constrained Levenberg-Marquardt on a residual vector of length
/// `residual_count`. The Jacobian uses central differences with relative step
/// 1e-6, one-sided next to a bound. Steps are projected onto the box; if the
/// damped normal equations cannot be solved a scaled gradient step is used.
LeastSquaresResult bounded_least_squares(const ResidualFunction& residuals,
                                         std::size_t residual_count, std::vector<double> start,
                                         std::span<const Interval> bounds,
                                         const LocalConfig& config);

// ---------------------------------------------------------------------------
// Scaling-law fit

/// Unweighted sum of squared residuals (metric - prediction).
double sse_objective(const ScalingParams& params, std::span<const AggregatedPoint> points,
                     const PenaltyConfig& penalty);

struct LocalRefineResult {
  ScalingParams params;
  double sse = 0;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> sse_history;
};

LocalRefineResult local_refine(std::span<const AggregatedPoint> points, const ScalingParams& start,
                               const ParamBounds& bounds, const LocalConfig& config,
                               const PenaltyConfig& penalty, bool log_space_scales = true);

struct FitResult {
  ScalingParams params;
  double sse = 0;
  double mae = 0;
  std::vector<double> residuals;  // observed - predicted, in input order
  std::size_t de_generations_used = 0;
  bool de_converged = false;
  double de_sse = 0;  // champion of the global stage
  bool local_converged = false;
  std::size_t local_iterations = 0;
  std::vector<std::string> warnings;
  FitConfig config;
};

/// Differential evolution on the SSE followed by bounded least-squares
/// refinement from the DE champion. Requires more points than parameters.
FitResult fit(std::span<const AggregatedPoint> points, const FitConfig& config);

}  // namespace ctxscale
