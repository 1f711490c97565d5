#include "ctxscale/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "csv.hpp"
#include "ctxscale/errors.hpp"

namespace ctxscale {

double mean_abs_error(const ScalingParams& params, std::span<const AggregatedPoint> points,
                      const PenaltyConfig& penalty) {
  if (points.empty()) {
    throw DomainError("mean_abs_error: no points");
  }
  double sum = 0;
  for (const auto& p : points) {
    sum += std::abs(p.metric - eval_scaling_law(params, penalty, p.C, p.n_pmt, p.n_ctx));
  }
  return sum / static_cast<double>(points.size());
}

double mean_abs_error(const FitResult& result, std::span<const AggregatedPoint> points) {
  return mean_abs_error(result.params, points, result.config.penalty);
}

HoldoutSplit holdout_split(std::span<const AggregatedPoint> points, double max_n_pmt) {
  HoldoutSplit split;
  for (const auto& p : points) {
    (p.n_pmt <= max_n_pmt ? split.train : split.held_out).push_back(p);
  }
  return split;
}

ContextGeneralization context_generalization_study(std::span<const AggregatedPoint> points,
                                                   double threshold, const FitConfig& config) {
  auto split = holdout_split(points, threshold);
  if (split.held_out.empty()) {
    throw DomainError("context_generalization_study: no point has n_pmt above " +
                      csv::format_double(threshold));
  }
  ContextGeneralization out;
  out.train_fit = fit(split.train, config);
  out.held_out_mae = mean_abs_error(out.train_fit, split.held_out);
  out.train_count = split.train.size();
  out.held_out_count = split.held_out.size();
  out.threshold = threshold;
  return out;
}

SubsetErrors split_errors(const ScalingParams& params, const PenaltyConfig& penalty,
                          std::span<const AggregatedPoint> points) {
  double in_sum = 0, over_sum = 0;
  std::size_t in_n = 0, over_n = 0;
  for (const auto& p : points) {
    const double e = std::abs(p.metric - eval_scaling_law(params, penalty, p.C, p.n_pmt, p.n_ctx));
    if (p.n_pmt > p.n_ctx) {
      over_sum += e;
      ++over_n;
    } else {
      in_sum += e;
      ++in_n;
    }
  }
  SubsetErrors s;
  s.in_limit = in_n ? in_sum / static_cast<double>(in_n) : 0.0;
  s.over_limit = over_n ? over_sum / static_cast<double>(over_n) : 0.0;
  s.overall = (in_sum + over_sum) / static_cast<double>(std::max<std::size_t>(1, in_n + over_n));
  return s;
}

AblationReport penalty_ablation(std::span<const AggregatedPoint> points, const FitConfig& config) {
  const auto over = std::count_if(points.begin(), points.end(),
                                  [](const auto& p) { return p.n_pmt > p.n_ctx; });
  if (over == 0 || static_cast<std::size_t>(over) == points.size()) {
    throw DomainError(
        "penalty_ablation: need observations both within and beyond the context limit");
  }
  FitConfig on = config;
  on.penalty.enabled = true;
  FitConfig off = config;
  off.penalty.enabled = false;

  const FitResult fit_on = fit(points, on);
  const FitResult fit_off = fit(points, off);

  AblationReport report;
  report.penalty_on = split_errors(fit_on.params, on.penalty, points);
  report.penalty_off = split_errors(fit_off.params, off.penalty, points);
  report.over_limit_count = static_cast<std::size_t>(over);
  report.in_limit_count = points.size() - report.over_limit_count;
  report.params_on = fit_on.params;
  report.params_off = fit_off.params;
  report.config = on;
  return report;
}

std::vector<GeneralizationRow> generalization_report(
    const std::map<std::string, ScalingParams>& params_by_task, const PenaltyConfig& penalty,
    std::span<const AggregatedPoint> external) {
  std::vector<GeneralizationRow> rows;
  for (const auto& p : external) {
    const auto it = params_by_task.find(p.task);
    if (it == params_by_task.end()) {
      throw ValidationError("generalization_report: no parameters for task '" + p.task + "'");
    }
    auto row = std::find_if(rows.begin(), rows.end(),
                            [&](const auto& r) { return r.model_id == p.model_id; });
    if (row == rows.end()) {
      rows.push_back({p.model_id, p.C, p.n_ctx, {}});
      row = rows.end() - 1;
    }
    row->residuals[p.task] =
        p.metric - eval_scaling_law(it->second, penalty, p.C, p.n_pmt, p.n_ctx);
  }
  return rows;
}

std::vector<GeneralizationRow> generalization_report(const ScalingParams& params,
                                                     const PenaltyConfig& penalty,
                                                     std::span<const AggregatedPoint> external) {
  std::map<std::string, ScalingParams> by_task;
  for (const auto& p : external) {
    by_task.emplace(p.task, params);
  }
  return generalization_report(by_task, penalty, external);
}

ContourGrid contour_grid(const ScalingParams& params, const PenaltyConfig& penalty,
                         std::span<const double> C_values, double n_ctx, double n_pmt_min,
                         double n_pmt_max, std::size_t resolution) {
  if (resolution < 2) {
    throw DomainError("contour_grid: resolution must be >= 2");
  }
  if (!(n_pmt_min > 0) || !(n_pmt_max > n_pmt_min) || !std::isfinite(n_pmt_max)) {
    throw DomainError("contour_grid: need 0 < n_pmt_min < n_pmt_max");
  }
  ContourGrid grid;
  grid.C_values.assign(C_values.begin(), C_values.end());
  grid.n_ctx = n_ctx;
  grid.n_pmt_axis.resize(resolution);
  const double lo = std::log10(n_pmt_min);
  const double hi = std::log10(n_pmt_max);
  for (std::size_t i = 0; i < resolution; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(resolution - 1);
    grid.n_pmt_axis[i] = std::pow(10.0, lo + t * (hi - lo));
  }
  // Pin the ends so the axis spans the requested range exactly.
  grid.n_pmt_axis.front() = n_pmt_min;
  grid.n_pmt_axis.back() = n_pmt_max;

  grid.values.reserve(grid.C_values.size());
  for (const double C : grid.C_values) {
    std::vector<double> row;
    row.reserve(resolution);
    for (const double n : grid.n_pmt_axis) {
      row.push_back(eval_scaling_law(params, penalty, C, n, n_ctx));
    }
    grid.values.push_back(std::move(row));
  }
  return grid;
}

std::vector<DesignPoint> design_of(std::span<const AggregatedPoint> points) {
  std::vector<DesignPoint> design;
  design.reserve(points.size());
  for (const auto& p : points) {
    design.push_back({p.C, p.n_pmt, p.n_ctx, p.model_id, p.shots});
  }
  return design;
}

std::vector<AggregatedPoint> synthetic_generate(const ScalingParams& params,
                                                const PenaltyConfig& penalty,
                                                std::span<const DesignPoint> design,
                                                double noise_sd, std::uint64_t seed,
                                                const std::string& task) {
  if (!(noise_sd >= 0) || !std::isfinite(noise_sd)) {
    throw DomainError("synthetic_generate: noise_sd must be >= 0");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<AggregatedPoint> points;
  points.reserve(design.size());
  for (const auto& d : design) {
    double metric = eval_scaling_law(params, penalty, d.C, d.n_pmt, d.n_ctx);
    if (noise_sd > 0) {
      metric = std::clamp(metric + noise_sd * noise(rng), 0.0, 1.0);
    }
    points.push_back({task, d.model_id, d.C, d.n_pmt, d.n_ctx, d.shots, metric, 1});
  }
  return points;
}

ScalingParams published_params(Task task) {
  switch (task) {
    case Task::arithmetic:
      return {9.96, 9.7e29, 0.26, 62.24, 1.3e5, 0.56};
    case Task::commonsense:
      return {99.39, 1.5e28, 0.40, 96.31, 3.5e3, 1.12};
    case Task::translation:
      return {5.55, 5.4e29, 0.23, 31.82, 3.0e2, 2.97};
  }
  return {};
}

const std::vector<ExternalResidual>& published_external_residuals() {
  static const std::vector<ExternalResidual> rows = [] {
    std::istringstream in{std::string(embedded_fixture("external.csv"))};
    std::vector<ExternalResidual> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      if (++line_no == 1 || line.empty()) {
        continue;
      }
      const auto f = csv::split_line(line, line_no);
      out.push_back({f.at(0), csv::parse_double(f.at(1), "C", line_no),
                     csv::parse_double(f.at(2), "n_ctx", line_no), f.at(3), f.at(4),
                     csv::parse_double(f.at(5), "residual", line_no)});
    }
    return out;
  }();
  return rows;
}

std::vector<AggregatedPoint> reconstruct_external_points(
    std::span<const ExternalResidual> rows,
    const std::map<std::string, ScalingParams>& params_by_task, const PenaltyConfig& penalty) {
  std::vector<AggregatedPoint> points;
  points.reserve(rows.size());
  for (const auto& r : rows) {
    const auto it = params_by_task.find(r.task);
    if (it == params_by_task.end()) {
      throw ValidationError("reconstruct_external_points: no parameters for task '" + r.task +
                            "'");
    }
    const double n_pmt = reconstruct_prompt_length(task_profile(parse_task(r.task)), kExternalShots);
    const double observed =
        eval_scaling_law(it->second, penalty, r.C, n_pmt, r.n_ctx) + r.residual;
    if (observed < 0 || observed > 1) {
      throw DomainError("reconstruct_external_points: " + r.model_id + "/" + r.task +
                        " reconstructs outside [0,1]");
    }
    points.push_back({r.task, r.model_id, r.C, n_pmt, r.n_ctx, kExternalShots, observed, 1});
  }
  return points;
}

}  // namespace ctxscale
