#include "ctxscale/serialize.hpp"

#include <cmath>
#include <ostream>
#include <set>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "csv.hpp"
#include "ctxscale/errors.hpp"

namespace ctxscale {
namespace {

[[noreturn]] void bad(const std::string& what) { throw ValidationError("config: " + what); }

void reject_unknown(const toml::table& table, const std::set<std::string_view>& allowed,
                    std::string_view section) {
  for (const auto& [key, node] : table) {
    if (!allowed.contains(key.str())) {
      bad("unknown key '" + std::string(section) + (section.empty() ? "" : ".") +
          std::string(key.str()) + "'");
    }
  }
}

double number(const toml::node& node, const std::string& name) {
  if (auto v = node.value<double>()) {
    return *v;
  }
  bad("'" + name + "' must be a number");
}

std::int64_t integer(const toml::node& node, const std::string& name) {
  if (auto v = node.value_exact<std::int64_t>()) {
    return *v;
  }
  bad("'" + name + "' must be an integer");
}

std::size_t count(const toml::node& node, const std::string& name) {
  const auto v = integer(node, name);
  if (v < 0) {
    bad("'" + name + "' must be non-negative");
  }
  return static_cast<std::size_t>(v);
}

bool boolean(const toml::node& node, const std::string& name) {
  if (auto v = node.value_exact<bool>()) {
    return *v;
  }
  bad("'" + name + "' must be true or false");
}

Interval interval(const toml::node& node, const std::string& name) {
  const auto* arr = node.as_array();
  if (arr == nullptr || arr->size() != 2) {
    bad("'" + name + "' must be a [lower, upper] array");
  }
  return {number(*arr->get(0), name), number(*arr->get(1), name)};
}

const toml::table* section(const toml::table& root, std::string_view name) {
  const auto* node = root.get(name);
  if (node == nullptr) {
    return nullptr;
  }
  if (!node->is_table()) {
    bad("'" + std::string(name) + "' must be a table");
  }
  return node->as_table();
}

template <typename T>
T get_or_throw(const Json& doc, std::string_view key) {
  const auto it = doc.find(std::string(key));
  if (it == doc.end()) {
    throw ValidationError("JSON: missing field '" + std::string(key) + "'");
  }
  try {
    return it->template get<T>();
  } catch (const Json::exception&) {
    throw ValidationError("JSON: field '" + std::string(key) + "' has the wrong type");
  }
}

}  // namespace

FitConfig fit_config_from_toml(std::string_view text, const FitConfig& base) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << e.description() << " (line " << e.source().begin.line << ")";
    throw ParseError(e.source().begin.line, std::string("TOML: ") + msg.str());
  }
  reject_unknown(root, {"seed", "log_space_scales", "bounds", "de", "local", "penalty"}, "");

  FitConfig cfg = base;
  if (const auto* n = root.get("seed")) {
    const auto s = integer(*n, "seed");
    if (s < 0) {
      bad("'seed' must be non-negative");
    }
    cfg.seed = static_cast<std::uint64_t>(s);
  }
  if (const auto* n = root.get("log_space_scales")) {
    cfg.log_space_scales = boolean(*n, "log_space_scales");
  }
  if (const auto* t = section(root, "bounds")) {
    std::set<std::string_view> names(ScalingParams::kNames.begin(), ScalingParams::kNames.end());
    reject_unknown(*t, names, "bounds");
    for (std::size_t i = 0; i < ScalingParams::kCount; ++i) {
      if (const auto* n = t->get(ScalingParams::kNames[i])) {
        cfg.bounds.box[i] = interval(*n, "bounds." + std::string(ScalingParams::kNames[i]));
      }
    }
  }
  if (const auto* t = section(root, "de")) {
    reject_unknown(*t,
                   {"population_size", "max_generations", "mutation", "crossover_rate",
                    "convergence_tol", "workers"},
                   "de");
    if (const auto* n = t->get("population_size")) {
      cfg.de.population_size = count(*n, "de.population_size");
    }
    if (const auto* n = t->get("max_generations")) {
      cfg.de.max_generations = count(*n, "de.max_generations");
    }
    if (const auto* n = t->get("mutation")) {
      const auto m = interval(*n, "de.mutation");
      cfg.de.mutation_min = m.lower;
      cfg.de.mutation_max = m.upper;
    }
    if (const auto* n = t->get("crossover_rate")) {
      cfg.de.crossover_rate = number(*n, "de.crossover_rate");
    }
    if (const auto* n = t->get("convergence_tol")) {
      cfg.de.convergence_tol = number(*n, "de.convergence_tol");
    }
    if (const auto* n = t->get("workers")) {
      cfg.de.workers = static_cast<unsigned>(count(*n, "de.workers"));
    }
  }
  if (const auto* t = section(root, "local")) {
    reject_unknown(*t, {"max_iterations", "step_tol", "gradient_tol"}, "local");
    if (const auto* n = t->get("max_iterations")) {
      cfg.local.max_iterations = count(*n, "local.max_iterations");
    }
    if (const auto* n = t->get("step_tol")) {
      cfg.local.step_tol = number(*n, "local.step_tol");
    }
    if (const auto* n = t->get("gradient_tol")) {
      cfg.local.gradient_tol = number(*n, "local.gradient_tol");
    }
  }
  if (const auto* t = section(root, "penalty")) {
    reject_unknown(*t, {"enabled", "sharpness"}, "penalty");
    if (const auto* n = t->get("enabled")) {
      cfg.penalty.enabled = boolean(*n, "penalty.enabled");
    }
    if (const auto* n = t->get("sharpness")) {
      cfg.penalty.sharpness = number(*n, "penalty.sharpness");
    }
  }
  validate(cfg);
  return cfg;
}

std::string to_toml(const FitConfig& config) {
  toml::table bounds;
  for (std::size_t i = 0; i < ScalingParams::kCount; ++i) {
    bounds.insert(ScalingParams::kNames[i],
                  toml::array{config.bounds.box[i].lower, config.bounds.box[i].upper});
  }
  toml::table root{
      {"seed", static_cast<std::int64_t>(config.seed)},
      {"log_space_scales", config.log_space_scales},
      {"bounds", bounds},
      {"de",
       toml::table{
           {"population_size", static_cast<std::int64_t>(config.de.population_size)},
           {"max_generations", static_cast<std::int64_t>(config.de.max_generations)},
           {"mutation", toml::array{config.de.mutation_min, config.de.mutation_max}},
           {"crossover_rate", config.de.crossover_rate},
           {"convergence_tol", config.de.convergence_tol},
           {"workers", static_cast<std::int64_t>(config.de.workers)},
       }},
      {"local",
       toml::table{
           {"max_iterations", static_cast<std::int64_t>(config.local.max_iterations)},
           {"step_tol", config.local.step_tol},
           {"gradient_tol", config.local.gradient_tol},
       }},
      {"penalty",
       toml::table{
           {"enabled", config.penalty.enabled},
           {"sharpness", config.penalty.sharpness},
       }},
  };
  std::ostringstream out;
  out << root << '\n';
  return out.str();
}

Json to_json(const ScalingParams& params) {
  Json j = Json::object();
  const auto v = params.to_array();
  for (std::size_t i = 0; i < v.size(); ++i) {
    j[std::string(ScalingParams::kNames[i])] = v[i];
  }
  return j;
}

Json to_json(const PenaltyConfig& penalty) {
  return {{"enabled", penalty.enabled}, {"sharpness", penalty.sharpness}};
}

Json to_json(const FitConfig& config) {
  Json bounds = Json::object();
  for (std::size_t i = 0; i < ScalingParams::kCount; ++i) {
    bounds[std::string(ScalingParams::kNames[i])] =
        Json::array({config.bounds.box[i].lower, config.bounds.box[i].upper});
  }
  return {
      {"seed", config.seed},
      {"log_space_scales", config.log_space_scales},
      {"bounds", bounds},
      {"de",
       {{"population_size", config.de.population_size},
        {"max_generations", config.de.max_generations},
        {"mutation", Json::array({config.de.mutation_min, config.de.mutation_max})},
        {"crossover_rate", config.de.crossover_rate},
        {"convergence_tol", config.de.convergence_tol},
        {"workers", config.de.workers}}},
      {"local",
       {{"max_iterations", config.local.max_iterations},
        {"step_tol", config.local.step_tol},
        {"gradient_tol", config.local.gradient_tol}}},
      {"penalty", to_json(config.penalty)},
  };
}

Json to_json(const FitResult& result) {
  return {
      {"params", to_json(result.params)},
      {"sse", result.sse},
      {"mae", result.mae},
      {"residuals", result.residuals},
      {"de_generations_used", result.de_generations_used},
      {"de_converged", result.de_converged},
      {"de_sse", result.de_sse},
      {"local_converged", result.local_converged},
      {"local_iterations", result.local_iterations},
      {"warnings", result.warnings},
      {"config", to_json(result.config)},
  };
}

Json to_json(const AblationReport& report) {
  auto subset = [](const SubsetErrors& s) {
    return Json{{"mae_in_limit", s.in_limit},
                {"mae_over_limit", s.over_limit},
                {"mae_overall", s.overall}};
  };
  return {
      {"penalty_on", subset(report.penalty_on)},
      {"penalty_off", subset(report.penalty_off)},
      {"in_limit_count", report.in_limit_count},
      {"over_limit_count", report.over_limit_count},
      {"params_on", to_json(report.params_on)},
      {"params_off", to_json(report.params_off)},
      {"config", to_json(report.config)},
  };
}

Json to_json(const ContextGeneralization& study) {
  return {
      {"threshold", study.threshold},
      {"train_count", study.train_count},
      {"held_out_count", study.held_out_count},
      {"held_out_mae", study.held_out_mae},
      {"train_fit", to_json(study.train_fit)},
  };
}

Json to_json(const ContourGrid& grid) {
  return {
      {"C_values", grid.C_values},
      {"n_ctx", grid.n_ctx},
      {"n_pmt_axis", grid.n_pmt_axis},
      {"values", grid.values},
  };
}

Json to_json(const std::vector<GeneralizationRow>& rows) {
  Json out = Json::array();
  for (const auto& r : rows) {
    Json residuals = Json::object();
    for (const auto& [task, value] : r.residuals) {
      residuals[task] = value;
    }
    out.push_back({{"model_id", r.model_id},
                   {"C", r.C},
                   {"n_ctx", r.n_ctx},
                   {"residuals", residuals}});
  }
  return out;
}

ScalingParams params_from_json(const Json& doc) {
  if (!doc.is_object()) {
    throw ValidationError("JSON: parameters must be an object");
  }
  std::array<double, ScalingParams::kCount> v{};
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = get_or_throw<double>(doc, ScalingParams::kNames[i]);
  }
  const auto params = ScalingParams::from_array(v);
  try {
    validate(params);
  } catch (const DomainError& e) {
    throw ValidationError(e.what());
  }
  return params;
}

FitConfig fit_config_from_json(const Json& doc) {
  FitConfig cfg;
  cfg.seed = get_or_throw<std::uint64_t>(doc, "seed");
  cfg.log_space_scales = get_or_throw<bool>(doc, "log_space_scales");
  const Json bounds = get_or_throw<Json>(doc, "bounds");
  for (std::size_t i = 0; i < ScalingParams::kCount; ++i) {
    const auto pair = get_or_throw<std::vector<double>>(bounds, ScalingParams::kNames[i]);
    if (pair.size() != 2) {
      throw ValidationError("JSON: bounds must be [lower, upper] pairs");
    }
    cfg.bounds.box[i] = {pair[0], pair[1]};
  }
  const Json de = get_or_throw<Json>(doc, "de");
  cfg.de.population_size = get_or_throw<std::size_t>(de, "population_size");
  cfg.de.max_generations = get_or_throw<std::size_t>(de, "max_generations");
  const auto mutation = get_or_throw<std::vector<double>>(de, "mutation");
  if (mutation.size() != 2) {
    throw ValidationError("JSON: de.mutation must be a [min, max] pair");
  }
  cfg.de.mutation_min = mutation[0];
  cfg.de.mutation_max = mutation[1];
  cfg.de.crossover_rate = get_or_throw<double>(de, "crossover_rate");
  cfg.de.convergence_tol = get_or_throw<double>(de, "convergence_tol");
  cfg.de.workers = get_or_throw<unsigned>(de, "workers");
  const Json local = get_or_throw<Json>(doc, "local");
  cfg.local.max_iterations = get_or_throw<std::size_t>(local, "max_iterations");
  cfg.local.step_tol = get_or_throw<double>(local, "step_tol");
  cfg.local.gradient_tol = get_or_throw<double>(local, "gradient_tol");
  const Json penalty = get_or_throw<Json>(doc, "penalty");
  cfg.penalty.enabled = get_or_throw<bool>(penalty, "enabled");
  cfg.penalty.sharpness = get_or_throw<double>(penalty, "sharpness");
  validate(cfg);
  return cfg;
}

FitResult fit_result_from_json(const Json& doc) {
  if (!doc.is_object()) {
    throw ValidationError("JSON: expected an object");
  }
  FitResult result;
  if (!doc.contains("params")) {
    result.params = params_from_json(doc);
    return result;
  }
  result.params = params_from_json(doc["params"]);
  if (doc.contains("config")) {
    result.config = fit_config_from_json(doc["config"]);
  }
  if (doc.contains("residuals")) {
    result.residuals = get_or_throw<std::vector<double>>(doc, "residuals");
  }
  if (doc.contains("sse")) {
    result.sse = get_or_throw<double>(doc, "sse");
  }
  if (doc.contains("mae")) {
    result.mae = get_or_throw<double>(doc, "mae");
  }
  if (doc.contains("de_generations_used")) {
    result.de_generations_used = get_or_throw<std::size_t>(doc, "de_generations_used");
  }
  if (doc.contains("de_converged")) {
    result.de_converged = get_or_throw<bool>(doc, "de_converged");
  }
  if (doc.contains("de_sse")) {
    result.de_sse = get_or_throw<double>(doc, "de_sse");
  }
  if (doc.contains("local_converged")) {
    result.local_converged = get_or_throw<bool>(doc, "local_converged");
  }
  if (doc.contains("local_iterations")) {
    result.local_iterations = get_or_throw<std::size_t>(doc, "local_iterations");
  }
  if (doc.contains("warnings")) {
    result.warnings = get_or_throw<std::vector<std::string>>(doc, "warnings");
  }
  return result;
}

void write_contour_csv(std::ostream& out, const ContourGrid& grid) {
  out << "C,n_ctx,n_pmt,value\n";
  for (std::size_t i = 0; i < grid.C_values.size(); ++i) {
    for (std::size_t j = 0; j < grid.n_pmt_axis.size(); ++j) {
      out << csv::format_double(grid.C_values[i]) << ',' << csv::format_double(grid.n_ctx) << ','
          << csv::format_double(grid.n_pmt_axis[j]) << ','
          << csv::format_double(grid.values[i][j]) << '\n';
    }
  }
}

void write_generalization_csv(std::ostream& out, const std::vector<GeneralizationRow>& rows) {
  out << "model_id,C,n_ctx,task,residual\n";
  for (const auto& r : rows) {
    for (const auto& [task, value] : r.residuals) {
      out << csv::quote_if_needed(r.model_id) << ',' << csv::format_double(r.C) << ','
          << csv::format_double(r.n_ctx) << ',' << csv::quote_if_needed(task) << ','
          << csv::format_double(value) << '\n';
    }
  }
}

}  // namespace ctxscale
