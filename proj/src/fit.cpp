#include <algorithm>
#include <cmath>
#include <string>

#include "ctxscale/errors.hpp"
#include "ctxscale/optimize.hpp"

namespace ctxscale {
namespace {

constexpr std::size_t kComputeScale = 1;
constexpr std::size_t kContextScale = 4;

bool is_scale(std::size_t i) { return i == kComputeScale || i == kContextScale; }

}  // namespace

bool ParamBounds::contains(const ScalingParams& p) const {
  const auto v = p.to_array();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!box[i].contains(v[i])) {
      return false;
    }
  }
  return true;
}

void validate(const FitConfig& config) {
  for (std::size_t i = 0; i < ScalingParams::kCount; ++i) {
    const auto& b = config.bounds.box[i];
    const std::string name(ScalingParams::kNames[i]);
    if (!std::isfinite(b.lower) || !std::isfinite(b.upper) || !(b.lower < b.upper)) {
      throw ValidationError("bounds." + name + ": need finite lower < upper");
    }
    if (!(b.lower > 0)) {
      throw ValidationError("bounds." + name + ": lower bound must be > 0");
    }
  }
  if (!(config.penalty.sharpness > 0) || !std::isfinite(config.penalty.sharpness)) {
    throw ValidationError("penalty.sharpness must be > 0");
  }
  if (config.de.population_size < 4) {
    throw ValidationError("de.population_size must be >= 4");
  }
  if (!(config.de.mutation_min >= 0 && config.de.mutation_min <= config.de.mutation_max &&
        config.de.mutation_max <= 2)) {
    throw ValidationError("de.mutation must be an interval within [0,2]");
  }
  if (!(config.de.crossover_rate >= 0 && config.de.crossover_rate <= 1)) {
    throw ValidationError("de.crossover_rate must lie within [0,1]");
  }
  if (!(config.de.convergence_tol > 0)) {
    throw ValidationError("de.convergence_tol must be > 0");
  }
  if (!(config.local.step_tol > 0) || !(config.local.gradient_tol > 0)) {
    throw ValidationError("local tolerances must be > 0");
  }
}

SearchSpace::SearchSpace(const ParamBounds& bounds, bool log_scales)
    : log_scales_(log_scales), linear_(bounds) {
  bounds_.assign(bounds.box.begin(), bounds.box.end());
  if (log_scales_) {
    for (std::size_t i : {kComputeScale, kContextScale}) {
      bounds_[i] = {std::log10(bounds_[i].lower), std::log10(bounds_[i].upper)};
    }
  }
}

std::vector<double> SearchSpace::encode(const ScalingParams& p) const {
  const auto v = p.to_array();
  std::vector<double> x(v.begin(), v.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (log_scales_ && is_scale(i)) {
      x[i] = std::log10(x[i]);
    }
    x[i] = std::clamp(x[i], bounds_[i].lower, bounds_[i].upper);
  }
  return x;
}

ScalingParams SearchSpace::decode(std::span<const double> x) const {
  std::array<double, ScalingParams::kCount> v{};
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double raw = (log_scales_ && is_scale(i)) ? std::pow(10.0, x[i]) : x[i];
    v[i] = std::clamp(raw, linear_.box[i].lower, linear_.box[i].upper);
  }
  return ScalingParams::from_array(v);
}

double sse_objective(const ScalingParams& params, std::span<const AggregatedPoint> points,
                     const PenaltyConfig& penalty) {
  if (points.empty()) {
    throw DomainError("sse_objective: no points");
  }
  double sse = 0;
  for (const auto& p : points) {
    const double r = p.metric - eval_scaling_law(params, penalty, p.C, p.n_pmt, p.n_ctx);
    sse += r * r;
  }
  return sse;
}

namespace {

LocalRefineResult refine_in(const SearchSpace& space, std::span<const AggregatedPoint> points,
                            const ScalingParams& start, const LocalConfig& config,
                            const PenaltyConfig& penalty) {
  const ResidualFunction residuals = [&](std::span<const double> x, std::span<double> out) {
    const ScalingParams p = space.decode(x);
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto& pt = points[i];
      out[i] = pt.metric - eval_scaling_law(p, penalty, pt.C, pt.n_pmt, pt.n_ctx);
    }
  };
  auto ls = bounded_least_squares(residuals, points.size(), space.encode(start), space.bounds(),
                                  config);
  LocalRefineResult out;
  out.params = space.decode(ls.x);
  out.sse = ls.sse;
  out.iterations = ls.iterations;
  out.converged = ls.converged;
  out.sse_history = std::move(ls.sse_history);
  // Decoding 10^log10(x) may not reproduce x bit-for-bit; never report a worse point.
  const double start_sse = sse_objective(start, points, penalty);
  if (sse_objective(out.params, points, penalty) > start_sse) {
    out.params = start;
    out.sse = start_sse;
  } else {
    out.sse = sse_objective(out.params, points, penalty);
  }
  return out;
}

}  // namespace

LocalRefineResult local_refine(std::span<const AggregatedPoint> points, const ScalingParams& start,
                               const ParamBounds& bounds, const LocalConfig& config,
                               const PenaltyConfig& penalty, bool log_space_scales) {
  if (points.empty()) {
    throw DomainError("local_refine: no points");
  }
  validate(start);
  if (!bounds.contains(start)) {
    throw DomainError("local_refine: start lies outside the bounds");
  }
  return refine_in(SearchSpace(bounds, log_space_scales), points, start, config, penalty);
}

FitResult fit(std::span<const AggregatedPoint> points, const FitConfig& config) {
  validate(config);
  if (points.size() <= ScalingParams::kCount) {
    throw UnderdeterminedFitError("fit: need more than " + std::to_string(ScalingParams::kCount) +
                                  " points, got " + std::to_string(points.size()));
  }
  for (const auto& p : points) {
    validate(p);
  }

  const SearchSpace space(config.bounds, config.log_space_scales);
  const Objective objective = [&](std::span<const double> x) {
    return sse_objective(space.decode(x), points, config.penalty);
  };
  const DEResult global = differential_evolution(objective, space.bounds(), config.de, config.seed);

  const ScalingParams de_params = space.decode(global.best);
  const LocalRefineResult local =
      refine_in(space, points, de_params, config.local, config.penalty);

  FitResult result;
  result.params = local.params;
  result.sse = local.sse;
  result.de_generations_used = global.generations;
  result.de_converged = global.converged;
  result.de_sse = sse_objective(de_params, points, config.penalty);
  result.local_converged = local.converged;
  result.local_iterations = local.iterations;
  result.config = config;

  result.residuals.reserve(points.size());
  double abs_sum = 0;
  for (const auto& p : points) {
    const double r =
        p.metric - eval_scaling_law(result.params, config.penalty, p.C, p.n_pmt, p.n_ctx);
    result.residuals.push_back(r);
    abs_sum += std::abs(r);
  }
  result.mae = abs_sum / static_cast<double>(points.size());

  const bool constant = std::all_of(points.begin(), points.end(), [&](const auto& p) {
    return p.metric == points.front().metric;
  });
  if (constant) {
    result.warnings.emplace_back(
        "degenerate data: every observed metric is identical; parameters are not identifiable");
  }
  if (!global.converged) {
    result.warnings.emplace_back("differential evolution stopped at max_generations");
  }
  return result;
}

}  // namespace ctxscale
