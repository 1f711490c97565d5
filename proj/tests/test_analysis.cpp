#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ctxscale/analysis.hpp"
#include "ctxscale/errors.hpp"

using namespace ctxscale;

namespace {

AggregatedPoint at(double n_pmt, double metric = 0.1, double n_ctx = 16384) {
  return {"t", "m", 1e23, n_pmt, n_ctx, 0, metric, 1};
}

std::map<std::string, ScalingParams> published_by_task() {
  std::map<std::string, ScalingParams> out;
  for (const Task task : kBuiltinTasks) {
    out.emplace(std::string(to_string(task)), published_params(task));
  }
  return out;
}

}  // namespace

TEST_SUITE("analysis") {

TEST_CASE("mean absolute error") {
  const ScalingParams p = published_params(Task::arithmetic);
  const PenaltyConfig on;
  const double pred1 = eval_scaling_law(p, on, 1e23, 1000, 16384);
  const double pred2 = eval_scaling_law(p, on, 1e23, 3000, 16384);
  const std::vector<AggregatedPoint> exact = {at(1000, pred1), at(3000, pred2)};
  CHECK(mean_abs_error(p, exact, on) == 0.0);
  const std::vector<AggregatedPoint> mixed = {at(1000, pred1 + 0.1), at(3000, pred2 - 0.3)};
  CHECK(mean_abs_error(p, mixed, on) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK_THROWS_AS(mean_abs_error(p, std::vector<AggregatedPoint>{}, on), DomainError);

  // Published commonsense coefficients against the embedded table.
  const double common = mean_abs_error(published_params(Task::commonsense),
                                       builtin_dataset(Task::commonsense), on);
  CHECK(common == doctest::Approx(0.040406127252699153).epsilon(1e-10));
  CHECK(std::abs(common - 0.037) <= 0.03);
  CHECK(mean_abs_error(p, builtin_dataset(Task::arithmetic), on) ==
        doctest::Approx(0.013001280572049539).epsilon(1e-10));
}

TEST_CASE("holdout split") {
  const std::vector<AggregatedPoint> two = {at(5000), at(12000)};
  const auto split = holdout_split(two, 10000);
  REQUIRE(split.train.size() == 1);
  REQUIRE(split.held_out.size() == 1);
  CHECK(split.train[0].n_pmt == 5000);
  CHECK(split.held_out[0].n_pmt == 12000);

  const auto below = holdout_split(two, 10);
  CHECK(below.train.empty());
  CHECK(below.held_out == two);

  const auto exact = holdout_split(two, 5000);
  CHECK(exact.train.size() == 1);

  const auto arith = builtin_dataset(Task::arithmetic);
  const auto long_cells = holdout_split(arith, 10000);
  CHECK(long_cells.held_out.size() == 24);
  for (const auto& p : long_cells.held_out) {
    CHECK((p.shots == 255 || p.shots == 511));
  }

  for (const double threshold : {0.0, 100.0, 1000.0, 9697.0, 9698.0, 1e6}) {
    const auto s = holdout_split(arith, threshold);
    CHECK(s.train.size() + s.held_out.size() == arith.size());
    for (const auto& p : s.train) {
      CHECK(p.n_pmt <= threshold);
    }
    for (const auto& p : s.held_out) {
      CHECK(p.n_pmt > threshold);
    }
    CHECK(std::is_sorted(s.train.begin(), s.train.end(), [&](const auto& x, const auto& y) {
      return std::find(arith.begin(), arith.end(), x) < std::find(arith.begin(), arith.end(), y);
    }));
  }
}

TEST_CASE("context generalization study") {
  const auto points = builtin_dataset(Task::translation);
  FitConfig cfg;
  const auto study = context_generalization_study(points, 10000, cfg);
  CHECK(study.held_out_count == 24);
  CHECK(study.train_count == 96);
  CHECK(study.train_fit.residuals.size() == 96);
  CHECK(study.held_out_mae <= 0.03);
  CHECK(study.threshold == 10000);
  CHECK_THROWS_AS(context_generalization_study(points, 1e9, cfg), DomainError);
}

TEST_CASE("split errors are count-weighted") {
  const auto points = builtin_dataset(Task::arithmetic);
  const ScalingParams p = published_params(Task::arithmetic);
  const SubsetErrors e = split_errors(p, PenaltyConfig{}, points);
  std::size_t over = 0;
  for (const auto& q : points) {
    over += q.n_pmt > q.n_ctx ? 1 : 0;
  }
  const double n = static_cast<double>(points.size());
  const double weighted = (e.in_limit * (n - over) + e.over_limit * over) / n;
  CHECK(std::abs(e.overall - weighted) <= 1e-12);
  CHECK(e.overall >= std::min(e.in_limit, e.over_limit));
  CHECK(e.overall <= std::max(e.in_limit, e.over_limit));

  // n_pmt == n_ctx counts as in-limit.
  const std::vector<AggregatedPoint> boundary = {at(4096, 0.0, 4096), at(4097, 0.0, 4096)};
  const SubsetErrors b = split_errors(p, PenaltyConfig{}, boundary);
  CHECK(b.in_limit > b.over_limit);
}

TEST_CASE("penalty ablation on a synthetic surface") {
  const auto design = design_of(builtin_dataset(Task::arithmetic));
  const auto points =
      synthetic_generate(published_params(Task::arithmetic), PenaltyConfig{}, design, 0.0, 0);
  FitConfig cfg;
  cfg.de.max_generations = 300;
  const auto report = penalty_ablation(points, cfg);
  CHECK(report.over_limit_count > 0);
  CHECK(report.in_limit_count + report.over_limit_count == points.size());
  CHECK(report.penalty_on.overall < report.penalty_off.overall);
  CHECK(report.penalty_off.over_limit >= 3 * report.penalty_on.over_limit);
  for (const auto* e : {&report.penalty_on, &report.penalty_off}) {
    const double n = static_cast<double>(points.size());
    const double weighted = (e->in_limit * report.in_limit_count +
                             e->over_limit * report.over_limit_count) / n;
    CHECK(std::abs(e->overall - weighted) <= 1e-12);
  }

  std::vector<AggregatedPoint> short_only;
  for (const auto& p : points) {
    if (p.n_pmt <= p.n_ctx) {
      short_only.push_back(p);
    }
  }
  CHECK_THROWS_AS(penalty_ablation(short_only, cfg), DomainError);
}

TEST_CASE("generalization report") {
  const ScalingParams p = published_params(Task::arithmetic);
  const PenaltyConfig on;
  AggregatedPoint exact = at(1000);
  exact.task = "arithmetic";
  exact.metric = eval_scaling_law(p, on, exact.C, exact.n_pmt, exact.n_ctx);
  const std::vector<AggregatedPoint> one = {exact};
  const auto rows = generalization_report(p, on, one);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].residuals.at("arithmetic") == 0.0);

  const auto params = published_by_task();
  const auto& published = published_external_residuals();
  const auto external = reconstruct_external_points(published, params, on);
  const auto report = generalization_report(params, on, external);
  const auto again = generalization_report(params, on, external);
  CHECK(report.size() == again.size());

  const auto row_for = [&](const std::string& id) {
    const auto it = std::find_if(report.begin(), report.end(),
                                 [&](const auto& r) { return r.model_id == id; });
    REQUIRE(it != report.end());
    return *it;
  };
  const auto llama70 = row_for("Llama-2-70B");
  CHECK(std::abs(llama70.residuals.at("arithmetic") + 0.002) <= 1e-6);
  CHECK(std::abs(llama70.residuals.at("commonsense") + 0.031) <= 1e-6);
  CHECK(std::abs(llama70.residuals.at("translation") + 0.025) <= 1e-6);

  const auto qwen = row_for("Qwen-2.5-0.5B");
  CHECK(qwen.C == 3.8e22);
  CHECK(qwen.n_ctx == 32768);
  CHECK(qwen.residuals.at("arithmetic") > 0);
  CHECK(qwen.residuals.at("commonsense") > 0);
  CHECK(qwen.residuals.at("translation") < 0);

  for (const auto& row : report) {
    for (const auto& [task, r] : row.residuals) {
      CHECK(std::abs(r) <= 1.0);
    }
  }
  for (std::size_t i = 0; i < report.size(); ++i) {
    CHECK(report[i].residuals == again[i].residuals);
  }
}

TEST_CASE("contour grid") {
  const ScalingParams p = published_params(Task::arithmetic);
  const PenaltyConfig on;
  const std::vector<double> Cs = {7.8e22, 1.5e23};
  const auto grid = contour_grid(p, on, Cs, 8192);
  CHECK(grid.values.size() == 2);
  CHECK(grid.values[0].size() == 100);
  CHECK(grid.n_pmt_axis.front() == 32);
  CHECK(grid.n_pmt_axis.back() == 262144);
  for (std::size_t i = 1; i < grid.n_pmt_axis.size(); ++i) {
    CHECK(grid.n_pmt_axis[i] / grid.n_pmt_axis[i - 1] ==
          doctest::Approx(std::pow(262144.0 / 32.0, 1.0 / 99.0)).epsilon(1e-12));
  }
  for (const auto& row : grid.values) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      CHECK(std::isfinite(row[j]));
      CHECK(row[j] >= 0.0);
      CHECK(row[j] < 1.0);
      if (j > 0 && grid.n_pmt_axis[j] <= 8192 - 20) {
        CHECK(row[j] >= row[j - 1]);
      }
    }
  }

  // Plateau just before the limit, collapse just after it.
  const std::vector<double> one = {7.8e22};
  const auto edge = contour_grid(p, on, one, 8192, 8000, 8212, 213);
  const double plateau = edge.values[0][172];  // n_pmt = 8172
  CHECK(edge.n_pmt_axis[172] == doctest::Approx(8172).epsilon(1e-3));
  CHECK(plateau == doctest::Approx(0.133).epsilon(0.01));
  CHECK(edge.values[0].back() < 0.5 * plateau);

  CHECK_THROWS_AS(contour_grid(p, on, one, 8192, 32, 1000, 1), DomainError);
  CHECK_THROWS_AS(contour_grid(p, on, one, 8192, 0, 1000, 10), DomainError);
}

TEST_CASE("synthetic generation") {
  const ScalingParams p = published_params(Task::translation);
  const PenaltyConfig on;
  const auto design = design_of(builtin_dataset(Task::translation));
  CHECK(design.size() == 120);
  const auto exact = synthetic_generate(p, on, design, 0.0, 3);
  for (std::size_t i = 0; i < design.size(); ++i) {
    CHECK(exact[i].metric == eval_scaling_law(p, on, design[i].C, design[i].n_pmt, design[i].n_ctx));
    CHECK(exact[i].task == "synthetic");
  }
  const auto noisy_a = synthetic_generate(p, on, design, 0.05, 3);
  const auto noisy_b = synthetic_generate(p, on, design, 0.05, 3);
  const auto noisy_c = synthetic_generate(p, on, design, 0.05, 4);
  CHECK(noisy_a == noisy_b);
  CHECK(noisy_a != noisy_c);
  for (const auto& q : noisy_a) {
    CHECK(q.metric >= 0.0);
    CHECK(q.metric <= 1.0);
  }
  CHECK_THROWS_AS(synthetic_generate(p, on, design, -0.1, 3), DomainError);
}

TEST_CASE("predictions depend on A and C_c only through A / C_c^alpha") {
  const ScalingParams p = published_params(Task::arithmetic);
  ScalingParams q = p;
  q.C_c = p.C_c / 10.0;
  q.A = p.A / std::pow(10.0, p.alpha);
  const PenaltyConfig on;
  for (const auto& point : builtin_dataset(Task::arithmetic)) {
    CHECK(eval_scaling_law(q, on, point.C, point.n_pmt, point.n_ctx) ==
          doctest::Approx(eval_scaling_law(p, on, point.C, point.n_pmt, point.n_ctx))
              .epsilon(1e-12));
  }
}

}  // TEST_SUITE
