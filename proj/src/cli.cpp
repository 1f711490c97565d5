#include "ctxscale/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "csv.hpp"
#include "ctxscale/analysis.hpp"
#include "ctxscale/errors.hpp"
#include "ctxscale/serialize.hpp"

namespace ctxscale {
namespace {

namespace fs = std::filesystem;

struct Options {
  // Point sources
  std::string builtin;
  std::string input;
  std::string input_format;
  std::string task;
  // Configuration
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool no_penalty = false;
  std::optional<double> sharpness;
  std::optional<unsigned> workers;
  std::optional<std::size_t> max_generations;
  // Parameters for predict / evaluate / contour / synth
  std::string params_path;
  std::string published;
  // Output
  std::string out_path;
  std::string format;
  // Subcommand specific
  double threshold = 10000;
  std::vector<double> C_values = {7.8e22, 1.5e23};
  double n_ctx = 8192;
  double n_pmt_min = kDefaultContourMin;
  double n_pmt_max = kDefaultContourMax;
  std::size_t resolution = 100;
  double noise_sd = 0;
  std::string builtin_task;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open '" + path + "' for reading");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) {
    throw IoError("error while reading '" + path + "'");
  }
  return buf.str();
}

Format format_for_path(const std::string& path, const std::string& override_format) {
  if (!override_format.empty()) {
    return parse_format(override_format);
  }
  return fs::path(path).extension() == ".json" ? Format::json : Format::csv;
}

bool looks_aggregated(const std::string& text, Format format) {
  if (format == Format::json) {
    const auto doc = Json::parse(text, nullptr, false);
    return doc.is_array() && !doc.empty() && doc.front().is_object() &&
           doc.front().contains("count");
  }
  std::istringstream in(text);
  std::string header;
  while (std::getline(in, header)) {
    if (header.find_first_not_of(" \t\r") != std::string::npos) {
      break;
    }
  }
  const auto fields = csv::split_line(header, 1);
  return std::find(fields.begin(), fields.end(), "count") != fields.end();
}

std::vector<AggregatedPoint> load_points(const Options& o) {
  if (o.builtin.empty() == o.input.empty()) {
    throw ValidationError("give exactly one of --builtin TASK or --input FILE");
  }
  std::vector<AggregatedPoint> points;
  if (!o.builtin.empty()) {
    points = builtin_dataset(parse_task(o.builtin));
  } else {
    const std::string text = read_file(o.input);
    const Format format = format_for_path(o.input, o.input_format);
    std::istringstream in(text);
    if (looks_aggregated(text, format)) {
      points = parse_points(in, format);
    } else {
      points = aggregate(parse_records(in, format));
    }
  }
  if (!o.task.empty()) {
    std::erase_if(points, [&](const auto& p) { return p.task != o.task; });
  }
  return points;
}

void require_single_task(const std::vector<AggregatedPoint>& points) {
  std::set<std::string> tasks;
  for (const auto& p : points) {
    tasks.insert(p.task);
  }
  if (tasks.size() > 1) {
    throw ValidationError("input mixes " + std::to_string(tasks.size()) +
                          " tasks; select one with --task");
  }
  if (points.empty()) {
    throw ValidationError("no observations to work with");
  }
}

std::uint64_t parse_seed_env(const char* text) {
  std::uint64_t seed = 0;
  const std::string_view s(text);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), seed);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError("CTXSCALE_SEED must be a non-negative integer, got '" +
                          std::string(s) + "'");
  }
  return seed;
}

// Defaults < CTXSCALE_SEED < TOML config < command-line flags.
FitConfig effective_config(const Options& o) {
  FitConfig cfg;
  if (const char* env = std::getenv("CTXSCALE_SEED"); env != nullptr && *env != '\0') {
    cfg.seed = parse_seed_env(env);
  }
  if (!o.config_path.empty()) {
    cfg = fit_config_from_toml(read_file(o.config_path), cfg);
  }
  if (o.seed) {
    cfg.seed = *o.seed;
  }
  if (o.no_penalty) {
    cfg.penalty.enabled = false;
  }
  if (o.sharpness) {
    cfg.penalty.sharpness = *o.sharpness;
  }
  if (o.workers) {
    cfg.de.workers = *o.workers;
  }
  if (o.max_generations) {
    cfg.de.max_generations = *o.max_generations;
  }
  validate(cfg);
  return cfg;
}

// Parameters plus the penalty they were fitted with.
FitResult load_params(const Options& o) {
  FitResult result;
  if (!o.params_path.empty() && !o.published.empty()) {
    throw ValidationError("give only one of --params FILE or --published TASK");
  }
  if (!o.published.empty()) {
    result.params = published_params(parse_task(o.published));
  } else if (!o.params_path.empty()) {
    const std::string text = read_file(o.params_path);
    Json doc;
    try {
      doc = Json::parse(text);
    } catch (const Json::parse_error&) {
      throw ValidationError("'" + o.params_path + "' is not valid JSON");
    }
    result = fit_result_from_json(doc);
  } else {
    throw ValidationError("give --params FILE or --published TASK");
  }
  if (o.no_penalty) {
    result.config.penalty.enabled = false;
  }
  if (o.sharpness) {
    result.config.penalty.sharpness = *o.sharpness;
  }
  validate(result.config.penalty);
  return result;
}

class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) : path_(path), fallback_(fallback) {}

  std::ostream& stream() { return path_.empty() ? fallback_ : buffer_; }

  void commit() {
    if (path_.empty()) {
      fallback_.flush();
      return;
    }
    std::ofstream file(path_, std::ios::binary | std::ios::trunc);
    if (!file) {
      throw IoError("cannot open '" + path_ + "' for writing");
    }
    file << buffer_.str();
    if (!file) {
      throw IoError("error while writing '" + path_ + "'");
    }
  }

 private:
  std::string path_;
  std::ostream& fallback_;
  std::ostringstream buffer_;
};

Format output_format(const Options& o, Format fallback) {
  return o.format.empty() ? fallback : parse_format(o.format);
}

void require_json(const Options& o, std::string_view command) {
  if (output_format(o, Format::json) != Format::json) {
    throw ValidationError(std::string(command) + " only writes JSON");
  }
}

void cmd_fit(const Options& o, Output& out) {
  require_json(o, "fit");
  const auto points = load_points(o);
  require_single_task(points);
  const FitResult result = fit(points, effective_config(o));
  out.stream() << to_json(result).dump(2) << '\n';
}

void write_prediction_rows(std::ostream& os, const std::vector<AggregatedPoint>& points,
                           const FitResult& params, Format format) {
  const auto& penalty = params.config.penalty;
  if (format == Format::csv) {
    os << "task,model_id,C,n_pmt,n_ctx,shots,metric,count,predicted,residual\n";
    for (const auto& p : points) {
      const double pred = eval_scaling_law(params.params, penalty, p.C, p.n_pmt, p.n_ctx);
      os << csv::quote_if_needed(p.task) << ',' << csv::quote_if_needed(p.model_id) << ','
         << csv::format_double(p.C) << ',' << csv::format_double(p.n_pmt) << ','
         << csv::format_double(p.n_ctx) << ',' << p.shots << ',' << csv::format_double(p.metric)
         << ',' << p.count << ',' << csv::format_double(pred) << ','
         << csv::format_double(p.metric - pred) << '\n';
    }
    return;
  }
  Json rows = Json::array();
  for (const auto& p : points) {
    const double pred = eval_scaling_law(params.params, penalty, p.C, p.n_pmt, p.n_ctx);
    rows.push_back({{"task", p.task},
                    {"model_id", p.model_id},
                    {"C", p.C},
                    {"n_pmt", p.n_pmt},
                    {"n_ctx", p.n_ctx},
                    {"shots", p.shots},
                    {"metric", p.metric},
                    {"count", p.count},
                    {"predicted", pred},
                    {"residual", p.metric - pred}});
  }
  os << rows.dump(2) << '\n';
}

void cmd_predict(const Options& o, Output& out) {
  const auto params = load_params(o);
  const auto points = load_points(o);
  write_prediction_rows(out.stream(), points, params, output_format(o, Format::csv));
}

void cmd_evaluate(const Options& o, Output& out) {
  const auto params = load_params(o);
  const auto points = load_points(o);
  if (points.empty()) {
    throw ValidationError("no observations to evaluate");
  }
  const Format format = output_format(o, Format::json);
  if (format == Format::csv) {
    write_prediction_rows(out.stream(), points, params, format);
    return;
  }
  const auto& penalty = params.config.penalty;
  Json residuals = Json::array();
  for (const auto& p : points) {
    residuals.push_back(p.metric - eval_scaling_law(params.params, penalty, p.C, p.n_pmt, p.n_ctx));
  }
  const Json doc = {
      {"params", to_json(params.params)},
      {"penalty", to_json(penalty)},
      {"count", points.size()},
      {"sse", sse_objective(params.params, points, penalty)},
      {"mae", mean_abs_error(params.params, points, penalty)},
      {"residuals", residuals},
      {"by_model", to_json(generalization_report(params.params, penalty, points))},
  };
  out.stream() << doc.dump(2) << '\n';
}

void cmd_holdout(const Options& o, Output& out) {
  require_json(o, "holdout");
  const auto points = load_points(o);
  require_single_task(points);
  const auto study = context_generalization_study(points, o.threshold, effective_config(o));
  out.stream() << to_json(study).dump(2) << '\n';
}

void cmd_ablate(const Options& o, Output& out) {
  require_json(o, "ablate");
  const auto points = load_points(o);
  require_single_task(points);
  const auto report = penalty_ablation(points, effective_config(o));
  out.stream() << to_json(report).dump(2) << '\n';
}

void cmd_contour(const Options& o, Output& out) {
  const auto params = load_params(o);
  const auto grid = contour_grid(params.params, params.config.penalty, o.C_values, o.n_ctx,
                                 o.n_pmt_min, o.n_pmt_max, o.resolution);
  if (output_format(o, Format::csv) == Format::csv) {
    write_contour_csv(out.stream(), grid);
  } else {
    Json doc = to_json(grid);
    doc["params"] = to_json(params.params);
    doc["penalty"] = to_json(params.config.penalty);
    out.stream() << doc.dump(2) << '\n';
  }
}

void cmd_synth(const Options& o, Output& out) {
  const auto params = load_params(o);
  const auto design_points = load_points(o);
  const auto design = design_of(design_points);
  const std::uint64_t seed = effective_config(o).seed;
  const std::string task = design_points.empty() ? "synthetic" : design_points.front().task;
  const auto points =
      synthetic_generate(params.params, params.config.penalty, design, o.noise_sd, seed, task);
  const Format format = output_format(o, Format::csv);
  if (format == Format::csv) {
    // CSV stays a plain points table; only JSON carries the generator settings.
    write_points(out.stream(), points, format);
    return;
  }
  Json rows = Json::array();
  {
    std::ostringstream tmp;
    write_points(tmp, points, Format::json);
    rows = Json::parse(tmp.str());
  }
  const Json doc = {{"seed", seed},
                    {"noise_sd", o.noise_sd},
                    {"params", to_json(params.params)},
                    {"penalty", to_json(params.config.penalty)},
                    {"points", rows}};
  out.stream() << doc.dump(2) << '\n';
}

void cmd_builtin(const Options& o, Output& out) {
  write_points(out.stream(), builtin_dataset(parse_task(o.builtin_task)),
               output_format(o, Format::csv));
}

void add_source_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--builtin", o.builtin, "Use an embedded dataset (arithmetic|commonsense|translation)");
  cmd->add_option("--input", o.input, "Records or aggregated points file (.csv or .json)");
  cmd->add_option("--input-format", o.input_format, "Override input format detection (csv|json)");
  cmd->add_option("--task", o.task, "Keep only observations with this task label");
}

void add_config_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config_path, "FitConfig TOML file");
  cmd->add_option("--seed", o.seed, "RNG seed (overrides config and CTXSCALE_SEED)");
  cmd->add_flag("--no-penalty", o.no_penalty, "Disable the context-limit penalty");
  cmd->add_option("--sharpness", o.sharpness, "Penalty sigmoid slope per token");
  cmd->add_option("--workers", o.workers, "Threads for objective evaluation");
  cmd->add_option("--max-generations", o.max_generations, "Differential evolution generation cap");
}

void add_params_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--params", o.params_path, "FitResult or parameter JSON");
  cmd->add_option("--published", o.published, "Use the published coefficients for a task");
  cmd->add_flag("--no-penalty", o.no_penalty, "Disable the context-limit penalty");
  cmd->add_option("--sharpness", o.sharpness, "Penalty sigmoid slope per token");
}

void add_output_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--out,-o", o.out_path, "Write output here instead of stdout");
  cmd->add_option("--format", o.format, "Output format (csv|json)");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fit and evaluate context-aware downstream scaling laws", "ctxscale"};
  app.require_subcommand(1, 1);
  Options o;

  auto* fit_cmd = app.add_subcommand("fit", "Fit the scaling law and write a FitResult JSON");
  add_source_options(fit_cmd, o);
  add_config_options(fit_cmd, o);
  add_output_options(fit_cmd, o);

  auto* predict_cmd = app.add_subcommand("predict", "Predict metrics for points from fitted parameters");
  add_source_options(predict_cmd, o);
  add_params_options(predict_cmd, o);
  add_output_options(predict_cmd, o);

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Residuals and MAE of fixed parameters on points");
  add_source_options(evaluate_cmd, o);
  add_params_options(evaluate_cmd, o);
  add_output_options(evaluate_cmd, o);

  auto* holdout_cmd = app.add_subcommand("holdout", "Refit without long prompts and score them");
  add_source_options(holdout_cmd, o);
  add_config_options(holdout_cmd, o);
  add_output_options(holdout_cmd, o);
  holdout_cmd->add_option("--threshold", o.threshold, "Hold out points with n_pmt above this")
      ->capture_default_str();

  auto* ablate_cmd = app.add_subcommand("ablate", "Fit with and without the penalty term");
  add_source_options(ablate_cmd, o);
  add_config_options(ablate_cmd, o);
  add_output_options(ablate_cmd, o);

  auto* contour_cmd = app.add_subcommand("contour", "Emit a prediction grid over prompt length");
  add_params_options(contour_cmd, o);
  add_output_options(contour_cmd, o);
  contour_cmd->add_option("--C", o.C_values, "Training compute values in FLOPs")
      ->capture_default_str();
  contour_cmd->add_option("--n-ctx", o.n_ctx, "Context limit in tokens")->capture_default_str();
  contour_cmd->add_option("--n-pmt-min", o.n_pmt_min, "Smallest prompt length")->capture_default_str();
  contour_cmd->add_option("--n-pmt-max", o.n_pmt_max, "Largest prompt length")->capture_default_str();
  contour_cmd->add_option("--resolution", o.resolution, "Points on the prompt-length axis")
      ->capture_default_str();

  auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic observations on a design");
  add_source_options(synth_cmd, o);
  add_params_options(synth_cmd, o);
  add_output_options(synth_cmd, o);
  synth_cmd->add_option("--noise-sd", o.noise_sd, "Gaussian noise standard deviation")
      ->capture_default_str();
  synth_cmd->add_option("--seed", o.seed, "RNG seed (overrides CTXSCALE_SEED)");

  auto* builtin_cmd = app.add_subcommand("builtin", "Dump an embedded dataset");
  builtin_cmd->add_option("task", o.builtin_task, "arithmetic|commonsense|translation")->required();
  add_output_options(builtin_cmd, o);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "ctxscale: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    Output output(o.out_path, out);
    if (fit_cmd->parsed()) {
      cmd_fit(o, output);
    } else if (predict_cmd->parsed()) {
      cmd_predict(o, output);
    } else if (evaluate_cmd->parsed()) {
      cmd_evaluate(o, output);
    } else if (holdout_cmd->parsed()) {
      cmd_holdout(o, output);
    } else if (ablate_cmd->parsed()) {
      cmd_ablate(o, output);
    } else if (contour_cmd->parsed()) {
      cmd_contour(o, output);
    } else if (synth_cmd->parsed()) {
      cmd_synth(o, output);
    } else if (builtin_cmd->parsed()) {
      cmd_builtin(o, output);
    }
    output.commit();
  } catch (const IoError& e) {
    err << "ctxscale: " << e.what() << "\n";
    return kExitIo;
  } catch (const ValidationError& e) {
    err << "ctxscale: " << e.what() << "\n";
    return kExitValidation;
  } catch (const DomainError& e) {
    err << "ctxscale: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}

}  // namespace ctxscale
