#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>

#include "ctxscale/analysis.hpp"
#include "ctxscale/errors.hpp"
#include "ctxscale/optimize.hpp"

using namespace ctxscale;

namespace {

std::vector<Interval> cube(std::size_t dim, double lo, double hi) {
  return std::vector<Interval>(dim, Interval{lo, hi});
}

double sphere(std::span<const double> x) {
  double s = 0;
  for (const double v : x) {
    s += v * v;
  }
  return s;
}

std::vector<AggregatedPoint> noiseless_arithmetic() {
  const auto design = design_of(builtin_dataset(Task::arithmetic));
  return synthetic_generate(published_params(Task::arithmetic), PenaltyConfig{}, design, 0.0, 0);
}

ScalingParams perturbed(const ScalingParams& p, double rel) {
  auto v = p.to_array();
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] *= 1.0 + (i % 2 == 0 ? -rel : rel);
  }
  return ScalingParams::from_array(v);
}

}  // namespace

TEST_SUITE("optimize") {

TEST_CASE("search space round trip and bounds") {
  const ParamBounds bounds;
  for (const bool log_scales : {true, false}) {
    const SearchSpace space(bounds, log_scales);
    CHECK(space.dimension() == 6);
    const ScalingParams p = published_params(Task::commonsense);
    const auto x = space.encode(p);
    const auto back = space.decode(x);
    const auto a = p.to_array();
    const auto b = back.to_array();
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-14));
    }
    // Corners of the search box decode inside the linear bounds.
    std::vector<double> lo, hi;
    for (const auto& iv : space.bounds()) {
      lo.push_back(iv.lower);
      hi.push_back(iv.upper);
    }
    CHECK(bounds.contains(space.decode(lo)));
    CHECK(bounds.contains(space.decode(hi)));
  }
  const SearchSpace logspace(bounds, true);
  CHECK(logspace.bounds()[1].upper == doctest::Approx(30.0));
  CHECK(logspace.bounds()[4].lower == doctest::Approx(-6.0));
}

TEST_CASE("differential evolution solves the sphere") {
  DEConfig cfg;
  cfg.population_size = 30;
  cfg.max_generations = 200;
  const auto result = differential_evolution(sphere, cube(3, -5, 5), cfg, 1);
  CHECK(result.best_loss < 1e-6);
  CHECK(result.generations <= 200);
  CHECK(result.best.size() == 3);
  CHECK(result.best_history.size() == result.generations + 1);
}

TEST_CASE("differential evolution only evaluates inside the box") {
  // An off-centre optimum pushes mutants out of bounds on the upper side.
  const auto bounds = cube(4, -1, 2);
  std::size_t calls = 0;
  bool inside = true;
  const Objective shifted = [&](std::span<const double> x) {
    ++calls;
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      inside = inside && bounds[i].contains(x[i]);
      s += (x[i] - 5.0) * (x[i] - 5.0);
    }
    return s;
  };
  DEConfig cfg;
  cfg.population_size = 20;
  cfg.max_generations = 100;
  cfg.mutation_min = 1.5;
  cfg.mutation_max = 2.0;
  const auto result = differential_evolution(shifted, bounds, cfg, 3);
  CHECK(inside);
  CHECK(calls == result.evaluations);
  for (const double v : result.best) {
    CHECK(v <= 2.0);
    CHECK(v > 1.95);
  }
}

TEST_CASE("differential evolution is deterministic and monotone") {
  const Objective rastrigin = [](std::span<const double> x) {
    double s = 10.0 * static_cast<double>(x.size());
    for (const double v : x) {
      s += v * v - 10.0 * std::cos(2 * M_PI * v);
    }
    return s;
  };
  DEConfig cfg;
  cfg.max_generations = 150;
  const auto a = differential_evolution(rastrigin, cube(5, -5.12, 5.12), cfg, 99);
  const auto b = differential_evolution(rastrigin, cube(5, -5.12, 5.12), cfg, 99);
  CHECK(a.best == b.best);
  CHECK(a.best_history == b.best_history);
  CHECK(a.best_loss == b.best_loss);
  const auto c = differential_evolution(rastrigin, cube(5, -5.12, 5.12), cfg, 100);
  CHECK(c.best_history != a.best_history);

  for (std::size_t i = 1; i < a.best_history.size(); ++i) {
    CHECK(a.best_history[i] <= a.best_history[i - 1]);
  }

  cfg.workers = 4;
  const auto threaded = differential_evolution(rastrigin, cube(5, -5.12, 5.12), cfg, 99);
  CHECK(threaded.best == a.best);
  CHECK(threaded.best_history == a.best_history);
}

TEST_CASE("differential evolution on a flat landscape converges immediately") {
  const auto result = differential_evolution([](std::span<const double>) { return 3.5; },
                                             cube(2, 0, 1), DEConfig{}, 5);
  CHECK(result.converged);
  CHECK(result.best_loss == 3.5);
  CHECK(result.generations == 0);
  CHECK(cube(2, 0, 1)[0].contains(result.best[0]));
}

TEST_CASE("non-finite objective values never win") {
  const Objective holes = [](std::span<const double> x) {
    if (x[0] < 0) {
      return std::numeric_limits<double>::quiet_NaN();
    }
    if (x[1] < 0) {
      return std::numeric_limits<double>::infinity();
    }
    return sphere(x);
  };
  DEConfig cfg;
  cfg.max_generations = 300;
  const auto result = differential_evolution(holes, cube(2, -1, 1), cfg, 8);
  CHECK(std::isfinite(result.best_loss));
  CHECK(result.best[0] >= 0);
  CHECK(result.best[1] >= 0);
  CHECK(result.best_loss < 1e-6);
}

TEST_CASE("bounded least squares") {
  // Rosenbrock as residuals, with the optimum on the box.
  const ResidualFunction rosen = [](std::span<const double> x, std::span<double> r) {
    r[0] = 10.0 * (x[1] - x[0] * x[0]);
    r[1] = 1.0 - x[0];
  };
  const auto free = bounded_least_squares(rosen, 2, {-1.2, 1.0}, cube(2, -2, 2), LocalConfig{});
  CHECK(free.sse < 1e-20);
  CHECK(free.x[0] == doctest::Approx(1.0));
  CHECK(free.converged);

  const auto boxed = bounded_least_squares(rosen, 2, {0.2, 0.1}, cube(2, 0, 0.5), LocalConfig{});
  CHECK(boxed.x[0] <= 0.5);
  CHECK(boxed.x[1] <= 0.5);
  CHECK(boxed.x[0] == doctest::Approx(0.5).epsilon(1e-6));
  for (std::size_t i = 1; i < boxed.sse_history.size(); ++i) {
    CHECK(boxed.sse_history[i] <= boxed.sse_history[i - 1]);
  }

  // A rank-deficient Jacobian must not derail the solve.
  const ResidualFunction flat = [](std::span<const double> x, std::span<double> r) {
    r[0] = x[0] + x[1] - 1.0;
    r[1] = 2.0 * (x[0] + x[1] - 1.0);
  };
  const auto singular = bounded_least_squares(flat, 2, {0.0, 0.0}, cube(2, -3, 3), LocalConfig{});
  CHECK(singular.sse < 1e-20);
  CHECK(singular.x[0] + singular.x[1] == doctest::Approx(1.0));
}

TEST_CASE("sse objective") {
  const ScalingParams p = published_params(Task::arithmetic);
  const PenaltyConfig on;
  const double pred = eval_scaling_law(p, on, 1e23, 500, 4096);
  const std::vector<AggregatedPoint> exact = {{"t", "m", 1e23, 500, 4096, 3, pred, 1}};
  CHECK(sse_objective(p, exact, on) == 0.0);
  const std::vector<AggregatedPoint> off = {{"t", "m", 1e23, 500, 4096, 3, pred + 0.1, 1}};
  CHECK(sse_objective(p, off, on) == doctest::Approx(0.01).epsilon(1e-12));
  // Extended-precision reference summation over the embedded arithmetic table.
  CHECK(sse_objective(p, builtin_dataset(Task::arithmetic), on) ==
        doctest::Approx(0.06264396828711702).epsilon(1e-12));
}

TEST_CASE("local refinement") {
  const auto points = noiseless_arithmetic();
  const ScalingParams truth = published_params(Task::arithmetic);
  const ParamBounds bounds;
  const PenaltyConfig on;

  const auto fixed = local_refine(points, truth, bounds, LocalConfig{}, on);
  CHECK(fixed.sse <= 1e-28);
  const auto a = fixed.params.to_array();
  const auto b = truth.to_array();
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-10));
  }

  const ScalingParams start = perturbed(truth, 0.01);
  const auto refined = local_refine(points, start, bounds, LocalConfig{}, on);
  CHECK(refined.sse < 1e-10);
  CHECK(refined.sse <= sse_objective(start, points, on));
  CHECK(bounds.contains(refined.params));
  for (std::size_t i = 1; i < refined.sse_history.size(); ++i) {
    CHECK(refined.sse_history[i] <= refined.sse_history[i - 1]);
  }

  // Real data, poor start: still a descent method.
  const auto real = builtin_dataset(Task::commonsense);
  const ScalingParams poor{1, 1e25, 0.5, 1, 1000, 1};
  const auto descent = local_refine(real, poor, bounds, LocalConfig{}, on);
  CHECK(descent.sse <= sse_objective(poor, real, on));
  CHECK(bounds.contains(descent.params));
}

TEST_CASE("fit config validation") {
  CHECK_NOTHROW(validate(FitConfig{}));
  FitConfig bad;
  bad.bounds.box[0] = {5, 5};
  CHECK_THROWS_AS(validate(bad), ValidationError);
  bad = {};
  bad.de.population_size = 3;
  CHECK_THROWS_AS(validate(bad), ValidationError);
  bad = {};
  bad.de.crossover_rate = 1.5;
  CHECK_THROWS_AS(validate(bad), ValidationError);
  bad = {};
  bad.de.mutation_max = 2.5;
  CHECK_THROWS_AS(validate(bad), ValidationError);
  bad = {};
  bad.local.step_tol = 0;
  CHECK_THROWS_AS(validate(bad), ValidationError);
  bad = {};
  bad.bounds.box[1] = {0, 1e30};
  CHECK_THROWS_AS(validate(bad), ValidationError);
}

TEST_CASE("fit preconditions and warnings") {
  const auto all = builtin_dataset(Task::arithmetic);
  const std::vector<AggregatedPoint> six(all.begin(), all.begin() + 6);
  CHECK_THROWS_AS(fit(six, FitConfig{}), UnderdeterminedFitError);

  std::vector<AggregatedPoint> flat(all.begin(), all.begin() + 20);
  for (auto& p : flat) {
    p.metric = 0.25;
  }
  FitConfig quick;
  quick.de.max_generations = 20;
  const auto result = fit(flat, quick);
  const bool warned = std::any_of(result.warnings.begin(), result.warnings.end(),
                                  [](const auto& w) { return w.find("identical") != w.npos; });
  CHECK(warned);
}

TEST_CASE("fit on the arithmetic table") {
  const auto points = builtin_dataset(Task::arithmetic);
  FitConfig cfg;
  cfg.seed = 42;
  const auto a = fit(points, cfg);
  CHECK(a.mae <= 0.02);
  CHECK(a.sse <= a.de_sse);
  CHECK(cfg.bounds.contains(a.params));
  CHECK(a.residuals.size() == points.size());
  CHECK(a.config == cfg);
  for (const double r : a.residuals) {
    CHECK(std::abs(r) <= 1.0);
  }
  CHECK(a.mae == doctest::Approx(mean_abs_error(a.params, points, cfg.penalty)).epsilon(1e-15));

  cfg.de.workers = 3;
  const auto b = fit(points, cfg);
  CHECK(b.params == a.params);
  CHECK(b.residuals == a.residuals);
  CHECK(b.sse == a.sse);
}

TEST_CASE("final error is stable across seeds") {
  const auto points = builtin_dataset(Task::arithmetic);
  double lo = 1, hi = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    FitConfig cfg;
    cfg.seed = seed;
    const double mae = fit(points, cfg).mae;
    lo = std::min(lo, mae);
    hi = std::max(hi, mae);
  }
  CHECK(hi - lo < 0.005);
}

TEST_CASE("penalty is irrelevant far below the context limit") {
  std::vector<AggregatedPoint> short_prompts;
  for (const auto& p : builtin_dataset(Task::arithmetic)) {
    if (p.n_pmt <= p.n_ctx / 2) {
      short_prompts.push_back(p);
    }
  }
  FitConfig on;
  FitConfig off;
  off.penalty.enabled = false;
  CHECK(std::abs(fit(short_prompts, on).mae - fit(short_prompts, off).mae) <= 0.005);
}

}  // TEST_SUITE
