#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ctxscale/analysis.hpp"
#include "ctxscale/cli.hpp"
#include "ctxscale/errors.hpp"
#include "ctxscale/serialize.hpp"

namespace py = pybind11;
using namespace ctxscale;

namespace {

py::object to_python(const Json& doc) {
  return py::module_::import("json").attr("loads")(doc.dump());
}

std::vector<AggregatedPoint> parse_points_text(const std::string& text, const std::string& format) {
  std::istringstream in(text);
  return parse_points(in, parse_format(format));
}

std::vector<EvalRecord> parse_records_text(const std::string& text, const std::string& format) {
  std::istringstream in(text);
  return parse_records(in, parse_format(format));
}

std::string format_points(const std::vector<AggregatedPoint>& points, const std::string& format) {
  std::ostringstream out;
  write_points(out, points, parse_format(format));
  return out.str();
}

std::string repr(const ScalingParams& p) {
  std::ostringstream out;
  out.precision(17);
  out << "ScalingParams(A=" << p.A << ", C_c=" << p.C_c << ", alpha=" << p.alpha << ", B=" << p.B
      << ", n_pmt_c=" << p.n_pmt_c << ", beta=" << p.beta << ")";
  return out.str();
}

}  // namespace

PYBIND11_MODULE(_ctxscale, m) {
  m.doc() = "Context-aware downstream scaling laws: evaluation, fitting and analysis.";

  // Base classes first: pybind11 tries translators newest-first.
  auto validation = py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", validation.ptr());
  py::register_exception<IntegrityError>(m, "IntegrityError", validation.ptr());
  py::register_exception<UnderdeterminedFitError>(m, "UnderdeterminedFitError", validation.ptr());
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  py::class_<ScalingParams>(m, "ScalingParams")
      .def(py::init([](double A, double C_c, double alpha, double B, double n_pmt_c, double beta) {
             return ScalingParams{A, C_c, alpha, B, n_pmt_c, beta};
           }),
           py::arg("A"), py::arg("C_c"), py::arg("alpha"), py::arg("B"), py::arg("n_pmt_c"),
           py::arg("beta"))
      .def_readwrite("A", &ScalingParams::A)
      .def_readwrite("C_c", &ScalingParams::C_c)
      .def_readwrite("alpha", &ScalingParams::alpha)
      .def_readwrite("B", &ScalingParams::B)
      .def_readwrite("n_pmt_c", &ScalingParams::n_pmt_c)
      .def_readwrite("beta", &ScalingParams::beta)
      .def("to_dict", [](const ScalingParams& p) { return to_python(to_json(p)); })
      .def(py::self == py::self)
      .def("__repr__", &repr);

  py::class_<PenaltyConfig>(m, "PenaltyConfig")
      .def(py::init([](bool enabled, double sharpness) { return PenaltyConfig{enabled, sharpness}; }),
           py::arg("enabled") = true, py::arg("sharpness") = 1.0)
      .def_readwrite("enabled", &PenaltyConfig::enabled)
      .def_readwrite("sharpness", &PenaltyConfig::sharpness)
      .def(py::self == py::self);

  py::class_<AggregatedPoint>(m, "AggregatedPoint")
      .def(py::init([](std::string task, std::string model_id, double C, double n_pmt,
                       double n_ctx, int shots, double metric, std::size_t count) {
             AggregatedPoint p{std::move(task), std::move(model_id), C, n_pmt, n_ctx, shots, metric,
                               count};
             validate(p);
             return p;
           }),
           py::arg("task"), py::arg("model_id"), py::arg("C"), py::arg("n_pmt"), py::arg("n_ctx"),
           py::arg("shots"), py::arg("metric"), py::arg("count") = 1)
      .def_readonly("task", &AggregatedPoint::task)
      .def_readonly("model_id", &AggregatedPoint::model_id)
      .def_readonly("C", &AggregatedPoint::C)
      .def_readonly("n_pmt", &AggregatedPoint::n_pmt)
      .def_readonly("n_ctx", &AggregatedPoint::n_ctx)
      .def_readonly("shots", &AggregatedPoint::shots)
      .def_readonly("metric", &AggregatedPoint::metric)
      .def_readonly("count", &AggregatedPoint::count)
      .def(py::self == py::self);

  py::class_<EvalRecord>(m, "EvalRecord")
      .def_readonly("task", &EvalRecord::task)
      .def_readonly("model_id", &EvalRecord::model_id)
      .def_readonly("C", &EvalRecord::C)
      .def_readonly("n_ctx", &EvalRecord::n_ctx)
      .def_readonly("shots", &EvalRecord::shots)
      .def_readonly("n_pmt", &EvalRecord::n_pmt)
      .def_readonly("metric", &EvalRecord::metric);

  py::class_<FitConfig>(m, "FitConfig")
      .def(py::init<>())
      .def_static(
          "from_toml", [](const std::string& text) { return fit_config_from_toml(text); },
          py::arg("text"))
      .def("to_toml", &to_toml)
      .def("to_dict", [](const FitConfig& c) { return to_python(to_json(c)); })
      .def_readwrite("seed", &FitConfig::seed)
      .def_readwrite("log_space_scales", &FitConfig::log_space_scales)
      .def_readwrite("penalty", &FitConfig::penalty)
      .def_property(
          "workers", [](const FitConfig& c) { return c.de.workers; },
          [](FitConfig& c, unsigned w) { c.de.workers = w; })
      .def_property(
          "max_generations", [](const FitConfig& c) { return c.de.max_generations; },
          [](FitConfig& c, std::size_t g) { c.de.max_generations = g; })
      .def(py::self == py::self);

  py::class_<FitResult>(m, "FitResult")
      .def_readonly("params", &FitResult::params)
      .def_readonly("sse", &FitResult::sse)
      .def_readonly("mae", &FitResult::mae)
      .def_readonly("residuals", &FitResult::residuals)
      .def_readonly("de_generations_used", &FitResult::de_generations_used)
      .def_readonly("de_converged", &FitResult::de_converged)
      .def_readonly("de_sse", &FitResult::de_sse)
      .def_readonly("local_converged", &FitResult::local_converged)
      .def_readonly("local_iterations", &FitResult::local_iterations)
      .def_readonly("warnings", &FitResult::warnings)
      .def_readonly("config", &FitResult::config)
      .def("to_json", [](const FitResult& r) { return to_json(r).dump(2); })
      .def_static(
          "from_json", [](const std::string& text) { return fit_result_from_json(Json::parse(text)); },
          py::arg("text"));

  // Model
  m.def("saturating_term", &saturating_term, py::arg("coef"), py::arg("scale"),
        py::arg("exponent"), py::arg("x"));
  m.def("penalty_factor", &penalty_factor, py::arg("n_pmt"), py::arg("n_ctx"),
        py::arg("penalty") = PenaltyConfig{});
  m.def("eval_scaling_law",
        py::vectorize([](ScalingParams p, PenaltyConfig cfg, double C, double n_pmt,
                         double n_ctx) { return eval_scaling_law(p, cfg, C, n_pmt, n_ctx); }),
        py::arg("params"), py::arg("penalty"), py::arg("C"), py::arg("n_pmt"), py::arg("n_ctx"),
        "Predicted performance; C, n_pmt and n_ctx broadcast like NumPy arrays.");
  m.def(
      "training_compute",
      [](double n_params, double d_tokens) { return training_compute({n_params, d_tokens}); },
      py::arg("n_params"), py::arg("d_tokens"));
  m.def("extension_tokens", &extension_tokens, py::arg("steps"), py::arg("batch"),
        py::arg("seq_len"));

  // Data
  m.def(
      "builtin_dataset", [](const std::string& task) { return builtin_dataset(parse_task(task)); },
      py::arg("task"));
  m.def(
      "reconstruct_prompt_length",
      [](const std::string& task, int shots) {
        return reconstruct_prompt_length(task_profile(parse_task(task)), shots);
      },
      py::arg("task"), py::arg("shots"));
  m.def("parse_points", &parse_points_text, py::arg("text"), py::arg("format") = "csv");
  m.def("parse_records", &parse_records_text, py::arg("text"), py::arg("format") = "csv");
  m.def("format_points", &format_points, py::arg("points"), py::arg("format") = "csv");
  m.def("aggregate", &aggregate, py::arg("records"));

  // Optimisation and analysis
  m.def(
      "fit",
      [](const std::vector<AggregatedPoint>& points, const FitConfig& config) {
        return fit(points, config);
      },
      py::arg("points"), py::arg("config") = FitConfig{}, py::call_guard<py::gil_scoped_release>());
  m.def(
      "mean_abs_error",
      [](const ScalingParams& p, const std::vector<AggregatedPoint>& points,
         const PenaltyConfig& penalty) { return mean_abs_error(p, points, penalty); },
      py::arg("params"), py::arg("points"), py::arg("penalty") = PenaltyConfig{});
  m.def(
      "holdout_split",
      [](const std::vector<AggregatedPoint>& points, double threshold) {
        auto split = holdout_split(points, threshold);
        return py::make_tuple(split.train, split.held_out);
      },
      py::arg("points"), py::arg("threshold") = 10000.0);
  m.def(
      "context_generalization_study",
      [](const std::vector<AggregatedPoint>& points, double threshold, const FitConfig& config) {
        ContextGeneralization study;
        {
          py::gil_scoped_release release;
          study = context_generalization_study(points, threshold, config);
        }
        return to_python(to_json(study));
      },
      py::arg("points"), py::arg("threshold") = 10000.0, py::arg("config") = FitConfig{});
  m.def(
      "penalty_ablation",
      [](const std::vector<AggregatedPoint>& points, const FitConfig& config) {
        AblationReport report;
        {
          py::gil_scoped_release release;
          report = penalty_ablation(points, config);
        }
        return to_python(to_json(report));
      },
      py::arg("points"), py::arg("config") = FitConfig{});
  m.def(
      "contour_grid",
      [](const ScalingParams& p, const PenaltyConfig& penalty, const std::vector<double>& C_values,
         double n_ctx, double n_pmt_min, double n_pmt_max, std::size_t resolution) {
        const auto grid = contour_grid(p, penalty, C_values, n_ctx, n_pmt_min, n_pmt_max, resolution);
        py::array_t<double> values({grid.values.size(), grid.n_pmt_axis.size()});
        auto v = values.mutable_unchecked<2>();
        for (std::size_t i = 0; i < grid.values.size(); ++i) {
          for (std::size_t j = 0; j < grid.n_pmt_axis.size(); ++j) {
            v(i, j) = grid.values[i][j];
          }
        }
        py::dict out;
        out["C_values"] = py::array_t<double>(grid.C_values.size(), grid.C_values.data());
        out["n_ctx"] = grid.n_ctx;
        out["n_pmt_axis"] = py::array_t<double>(grid.n_pmt_axis.size(), grid.n_pmt_axis.data());
        out["values"] = values;
        return out;
      },
      py::arg("params"), py::arg("penalty"), py::arg("C_values"), py::arg("n_ctx"),
      py::arg("n_pmt_min") = kDefaultContourMin, py::arg("n_pmt_max") = kDefaultContourMax,
      py::arg("resolution") = 100);
  m.def(
      "synthetic_generate",
      [](const ScalingParams& p, const PenaltyConfig& penalty,
         const std::vector<AggregatedPoint>& design_points, double noise_sd, std::uint64_t seed,
         const std::string& task) {
        return synthetic_generate(p, penalty, design_of(design_points), noise_sd, seed, task);
      },
      py::arg("params"), py::arg("penalty"), py::arg("design"), py::arg("noise_sd") = 0.0,
      py::arg("seed") = 0, py::arg("task") = "synthetic");
  m.def(
      "published_params", [](const std::string& task) { return published_params(parse_task(task)); },
      py::arg("task"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one command-line invocation; returns (exit_code, stdout, stderr).");
}
