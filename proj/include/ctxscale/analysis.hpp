#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ctxscale/data.hpp"
#include "ctxscale/model.hpp"
#include "ctxscale/optimize.hpp"

namespace ctxscale {

/// Mean |observed - predicted|. Throws DomainError on an empty point set.
double mean_abs_error(const ScalingParams& params, std::span<const AggregatedPoint> points,
                      const PenaltyConfig& penalty);
double mean_abs_error(const FitResult& result, std::span<const AggregatedPoint> points);

struct HoldoutSplit {
  std::vector<AggregatedPoint> train;     // n_pmt <= threshold
  std::vector<AggregatedPoint> held_out;  // n_pmt >  threshold
};

HoldoutSplit holdout_split(std::span<const AggregatedPoint> points, double max_n_pmt);

struct ContextGeneralization {
  FitResult train_fit;
  double held_out_mae = 0;
  std::size_t train_count = 0;
  std::size_t held_out_count = 0;
  double threshold = 0;
};

/// Fits on points with n_pmt <= threshold only and scores the rest.
/// Throws DomainError if nothing is held out.
ContextGeneralization context_generalization_study(std::span<const AggregatedPoint> points,
                                                   double threshold, const FitConfig& config);

struct SubsetErrors {
  double in_limit = 0;    // n_pmt <= n_ctx
  double over_limit = 0;  // n_pmt >  n_ctx
  double overall = 0;
};

struct AblationReport {
  SubsetErrors penalty_on;
  SubsetErrors penalty_off;
  std::size_t in_limit_count = 0;
  std::size_t over_limit_count = 0;
  ScalingParams params_on;
  ScalingParams params_off;
  FitConfig config;  // the penalty-on configuration; the off fit differs only in penalty.enabled
};

/// Errors of a given parameter set split at the context limit.
SubsetErrors split_errors(const ScalingParams& params, const PenaltyConfig& penalty,
                          std::span<const AggregatedPoint> points);

/// Two full fits, with and without the penalty, same seed. Throws DomainError
/// unless both in-limit and over-limit points are present.
AblationReport penalty_ablation(std::span<const AggregatedPoint> points, const FitConfig& config);

struct GeneralizationRow {
  std::string model_id;
  double C = 0;
  double n_ctx = 0;
  std::map<std::string, double> residuals;  // task -> observed - predicted
};

/// Residuals of external observations against fixed parameters (no refit).
/// Rows follow first appearance of each model_id.
std::vector<GeneralizationRow> generalization_report(
    const std::map<std::string, ScalingParams>& params_by_task, const PenaltyConfig& penalty,
    std::span<const AggregatedPoint> external);

/// Same, with one parameter set for every task.
std::vector<GeneralizationRow> generalization_report(const ScalingParams& params,
                                                     const PenaltyConfig& penalty,
                                                     std::span<const AggregatedPoint> external);

struct ContourGrid {
  std::vector<double> C_values;
  double n_ctx = 0;
  std::vector<double> n_pmt_axis;
  std::vector<std::vector<double>> values;  // [C index][n_pmt index]
};

inline constexpr double kDefaultContourMin = 32;
inline constexpr double kDefaultContourMax = 262144;

/// Predictions on a log-spaced prompt-length axis, one row per compute value.
ContourGrid contour_grid(const ScalingParams& params, const PenaltyConfig& penalty,
                         std::span<const double> C_values, double n_ctx,
                         double n_pmt_min = kDefaultContourMin,
                         double n_pmt_max = kDefaultContourMax, std::size_t resolution = 100);

struct DesignPoint {
  double C = 0;
  double n_pmt = 0;
  double n_ctx = 0;
  std::string model_id = "synthetic";
  int shots = 0;
};

std::vector<DesignPoint> design_of(std::span<const AggregatedPoint> points);

/// metric = clamp(prediction + N(0, noise_sd), 0, 1), deterministic in seed.
std::vector<AggregatedPoint> synthetic_generate(const ScalingParams& params,
                                                const PenaltyConfig& penalty,
                                                std::span<const DesignPoint> design,
                                                double noise_sd, std::uint64_t seed,
                                                const std::string& task = "synthetic");

// ---------------------------------------------------------------------------
// Published reference values

/// Coefficients reported for the full fit of each builtin task.
ScalingParams published_params(Task task);

/// Shot count at which external models are placed on the prompt-length axis
/// when their observations are reconstructed from published residuals.
inline constexpr int kExternalShots = 15;

struct ExternalResidual {
  std::string model_id;
  double C = 0;
  double n_ctx = 0;
  std::string study;  // "compute" or "extension"
  std::string task;
  double residual = 0;
};

const std::vector<ExternalResidual>& published_external_residuals();

/// Reconstructs external observations as prediction + published residual, at
/// n_pmt = reconstructed prompt length for kExternalShots. These are not
/// measurements; they exist to round-trip the residual tables.
std::vector<AggregatedPoint> reconstruct_external_points(
    std::span<const ExternalResidual> rows,
    const std::map<std::string, ScalingParams>& params_by_task, const PenaltyConfig& penalty);

}  // namespace ctxscale
