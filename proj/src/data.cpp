#include "ctxscale/data.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <iterator>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "ctxscale/errors.hpp"
#include "fixtures.hpp"

namespace ctxscale {
namespace {

using json = nlohmann::ordered_json;

constexpr std::array<std::string_view, 7> kRecordColumns = {"task",  "model_id", "C",     "n_ctx",
                                                            "shots", "n_pmt",    "metric"};
constexpr std::array<std::string_view, 8> kPointColumns = {
    "task", "model_id", "C", "n_pmt", "n_ctx", "shots", "metric", "count"};

std::string where(std::size_t line) { return "line " + std::to_string(line) + ": "; }

void check(bool ok, const std::string& message) {
  if (!ok) {
    throw ValidationError(message);
  }
}

void check_common(std::string_view task, double C, double n_ctx, int shots, double n_pmt,
                  double metric, const std::string& prefix) {
  check(!task.empty(), prefix + "task must not be empty");
  check(std::isfinite(C) && C > 0, prefix + "C must be > 0");
  check(std::isfinite(n_ctx) && n_ctx > 0, prefix + "n_ctx must be > 0");
  check(shots >= 0, prefix + "shots must be >= 0");
  check(std::isfinite(n_pmt) && n_pmt >= 0, prefix + "n_pmt must be >= 0");
  check(std::isfinite(metric) && metric >= 0 && metric <= 1,
        prefix + "metric = " + csv::format_double(metric) + " is outside [0,1]");
}

// Reads a header-led CSV table into rows keyed by the expected column order.
template <std::size_t N>
std::vector<std::pair<std::size_t, std::array<std::string, N>>> read_table(
    std::istream& in, const std::array<std::string_view, N>& columns) {
  std::vector<std::pair<std::size_t, std::array<std::string, N>>> rows;
  std::array<std::size_t, N> index{};
  std::size_t width = 0;
  bool have_header = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.find_first_not_of(" \t") == std::string::npos) {
      continue;
    }
    auto fields = csv::split_line(line, line_no);
    if (!have_header) {
      width = fields.size();
      for (std::size_t c = 0; c < N; ++c) {
        auto it = std::find(fields.begin(), fields.end(), columns[c]);
        if (it == fields.end()) {
          throw ParseError(line_no, "header is missing column '" + std::string(columns[c]) + "'");
        }
        index[c] = static_cast<std::size_t>(it - fields.begin());
      }
      have_header = true;
      continue;
    }
    if (fields.size() != width) {
      throw ParseError(line_no, "expected " + std::to_string(width) + " fields, found " +
                                    std::to_string(fields.size()));
    }
    std::array<std::string, N> row;
    for (std::size_t c = 0; c < N; ++c) {
      row[c] = std::move(fields[index[c]]);
    }
    rows.emplace_back(line_no, std::move(row));
  }
  return rows;
}

std::string read_all(std::istream& in) {
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json parse_json_array(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + static_cast<std::size_t>(
                              std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n'));
    throw ParseError(line, "malformed JSON");
  }
  if (!doc.is_array()) {
    throw ParseError(1, "expected a JSON array of objects");
  }
  return doc;
}

template <typename T>
T json_field(const json& obj, std::string_view key, std::size_t item) {
  const auto it = obj.find(std::string(key));
  if (it == obj.end()) {
    throw ValidationError("item " + std::to_string(item) + ": missing field '" +
                          std::string(key) + "'");
  }
  try {
    return it->template get<T>();
  } catch (const json::exception&) {
    throw ValidationError("item " + std::to_string(item) + ": field '" + std::string(key) +
                          "' has the wrong type");
  }
}

int checked_int(long long v, std::string_view field, std::size_t line_no) {
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw ParseError(line_no, "field '" + std::string(field) + "' out of range");
  }
  return static_cast<int>(v);
}

}  // namespace

std::string_view to_string(Task task) {
  switch (task) {
    case Task::arithmetic:
      return "arithmetic";
    case Task::commonsense:
      return "commonsense";
    case Task::translation:
      return "translation";
  }
  return "unknown";
}

Task parse_task(std::string_view name) {
  for (Task t : kBuiltinTasks) {
    if (to_string(t) == name) {
      return t;
    }
  }
  throw ValidationError("unknown task '" + std::string(name) +
                        "' (expected arithmetic, commonsense or translation)");
}

Format parse_format(std::string_view name) {
  if (name == "csv") {
    return Format::csv;
  }
  if (name == "json") {
    return Format::json;
  }
  throw ValidationError("unknown format '" + std::string(name) + "' (expected csv or json)");
}

void validate(const EvalRecord& r) {
  check_common(r.task, r.C, r.n_ctx, r.shots, r.n_pmt, r.metric, "record: ");
}

void validate(const AggregatedPoint& p) {
  check_common(p.task, p.C, p.n_ctx, p.shots, p.n_pmt, p.metric, "point: ");
  check(p.count >= 1, "point: count must be >= 1");
}

std::vector<EvalRecord> parse_records(std::istream& source, Format format) {
  std::vector<EvalRecord> records;
  if (format == Format::csv) {
    for (auto& [line_no, row] : read_table(source, kRecordColumns)) {
      EvalRecord r;
      r.task = std::move(row[0]);
      r.model_id = std::move(row[1]);
      r.C = csv::parse_double(row[2], "C", line_no);
      r.n_ctx = static_cast<double>(csv::parse_integer(row[3], "n_ctx", line_no));
      r.shots = checked_int(csv::parse_integer(row[4], "shots", line_no), "shots", line_no);
      r.n_pmt = csv::parse_double(row[5], "n_pmt", line_no);
      r.metric = csv::parse_double(row[6], "metric", line_no);
      try {
        validate(r);
      } catch (const ValidationError& e) {
        throw ValidationError(where(line_no) + e.what());
      }
      records.push_back(std::move(r));
    }
    return records;
  }

  const std::string text = read_all(source);
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    return records;
  }
  const json doc = parse_json_array(text);
  std::size_t item = 0;
  for (const auto& obj : doc) {
    ++item;
    EvalRecord r;
    r.task = json_field<std::string>(obj, "task", item);
    r.model_id = json_field<std::string>(obj, "model_id", item);
    r.C = json_field<double>(obj, "C", item);
    r.n_ctx = json_field<double>(obj, "n_ctx", item);
    r.shots = json_field<int>(obj, "shots", item);
    r.n_pmt = json_field<double>(obj, "n_pmt", item);
    r.metric = json_field<double>(obj, "metric", item);
    try {
      validate(r);
    } catch (const ValidationError& e) {
      throw ValidationError("item " + std::to_string(item) + ": " + e.what());
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<AggregatedPoint> parse_points(std::istream& source, Format format) {
  std::vector<AggregatedPoint> points;
  if (format == Format::csv) {
    for (auto& [line_no, row] : read_table(source, kPointColumns)) {
      AggregatedPoint p;
      p.task = std::move(row[0]);
      p.model_id = std::move(row[1]);
      p.C = csv::parse_double(row[2], "C", line_no);
      p.n_pmt = csv::parse_double(row[3], "n_pmt", line_no);
      p.n_ctx = csv::parse_double(row[4], "n_ctx", line_no);
      p.shots = checked_int(csv::parse_integer(row[5], "shots", line_no), "shots", line_no);
      p.metric = csv::parse_double(row[6], "metric", line_no);
      const auto count = csv::parse_integer(row[7], "count", line_no);
      if (count < 1) {
        throw ValidationError(where(line_no) + "count must be >= 1");
      }
      p.count = static_cast<std::size_t>(count);
      try {
        validate(p);
      } catch (const ValidationError& e) {
        throw ValidationError(where(line_no) + e.what());
      }
      points.push_back(std::move(p));
    }
    return points;
  }

  const std::string text = read_all(source);
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    return points;
  }
  const json doc = parse_json_array(text);
  std::size_t item = 0;
  for (const auto& obj : doc) {
    ++item;
    AggregatedPoint p;
    p.task = json_field<std::string>(obj, "task", item);
    p.model_id = json_field<std::string>(obj, "model_id", item);
    p.C = json_field<double>(obj, "C", item);
    p.n_pmt = json_field<double>(obj, "n_pmt", item);
    p.n_ctx = json_field<double>(obj, "n_ctx", item);
    p.shots = json_field<int>(obj, "shots", item);
    p.metric = json_field<double>(obj, "metric", item);
    const auto count = json_field<long long>(obj, "count", item);
    if (count < 1) {
      throw ValidationError("item " + std::to_string(item) + ": count must be >= 1");
    }
    p.count = static_cast<std::size_t>(count);
    try {
      validate(p);
    } catch (const ValidationError& e) {
      throw ValidationError("item " + std::to_string(item) + ": " + e.what());
    }
    points.push_back(std::move(p));
  }
  return points;
}

void write_records(std::ostream& out, const std::vector<EvalRecord>& records, Format format) {
  if (format == Format::csv) {
    out << "task,model_id,C,n_ctx,shots,n_pmt,metric\n";
    for (const auto& r : records) {
      out << csv::quote_if_needed(r.task) << ',' << csv::quote_if_needed(r.model_id) << ','
          << csv::format_double(r.C) << ',' << csv::format_double(r.n_ctx) << ',' << r.shots
          << ',' << csv::format_double(r.n_pmt) << ',' << csv::format_double(r.metric) << '\n';
    }
    return;
  }
  json doc = json::array();
  for (const auto& r : records) {
    doc.push_back({{"task", r.task},
                   {"model_id", r.model_id},
                   {"C", r.C},
                   {"n_ctx", r.n_ctx},
                   {"shots", r.shots},
                   {"n_pmt", r.n_pmt},
                   {"metric", r.metric}});
  }
  out << doc.dump(2) << '\n';
}

void write_points(std::ostream& out, const std::vector<AggregatedPoint>& points, Format format) {
  if (format == Format::csv) {
    out << "task,model_id,C,n_pmt,n_ctx,shots,metric,count\n";
    for (const auto& p : points) {
      out << csv::quote_if_needed(p.task) << ',' << csv::quote_if_needed(p.model_id) << ','
          << csv::format_double(p.C) << ',' << csv::format_double(p.n_pmt) << ','
          << csv::format_double(p.n_ctx) << ',' << p.shots << ',' << csv::format_double(p.metric)
          << ',' << p.count << '\n';
    }
    return;
  }
  json doc = json::array();
  for (const auto& p : points) {
    doc.push_back({{"task", p.task},
                   {"model_id", p.model_id},
                   {"C", p.C},
                   {"n_pmt", p.n_pmt},
                   {"n_ctx", p.n_ctx},
                   {"shots", p.shots},
                   {"metric", p.metric},
                   {"count", p.count}});
  }
  out << doc.dump(2) << '\n';
}

std::vector<AggregatedPoint> aggregate(const std::vector<EvalRecord>& records) {
  struct Group {
    const EvalRecord* first = nullptr;
    double sum_pmt = 0, sum_metric = 0;
    double min_pmt = 0, max_pmt = 0, min_metric = 0, max_metric = 0;
    std::size_t count = 0;
  };
  std::map<std::tuple<std::string, std::string, int>, Group> groups;
  for (const auto& r : records) {
    validate(r);
    auto& g = groups[{r.task, r.model_id, r.shots}];
    if (g.count == 0) {
      g.first = &r;
      g.min_pmt = g.max_pmt = r.n_pmt;
      g.min_metric = g.max_metric = r.metric;
    } else if (r.C != g.first->C || r.n_ctx != g.first->n_ctx) {
      throw IntegrityError("group (task=" + r.task + ", model_id=" + r.model_id +
                           ", shots=" + std::to_string(r.shots) +
                           ") mixes different C or n_ctx values");
    }
    g.sum_pmt += r.n_pmt;
    g.sum_metric += r.metric;
    g.min_pmt = std::min(g.min_pmt, r.n_pmt);
    g.max_pmt = std::max(g.max_pmt, r.n_pmt);
    g.min_metric = std::min(g.min_metric, r.metric);
    g.max_metric = std::max(g.max_metric, r.metric);
    ++g.count;
  }

  std::vector<AggregatedPoint> points;
  points.reserve(groups.size());
  for (const auto& [key, g] : groups) {
    const auto n = static_cast<double>(g.count);
    AggregatedPoint p;
    p.task = g.first->task;
    p.model_id = g.first->model_id;
    p.C = g.first->C;
    p.n_ctx = g.first->n_ctx;
    p.shots = g.first->shots;
    // Rounding in sum / n can step an ulp outside the member range.
    p.n_pmt = std::clamp(g.sum_pmt / n, g.min_pmt, g.max_pmt);
    p.metric = std::clamp(g.sum_metric / n, g.min_metric, g.max_metric);
    p.count = g.count;
    points.push_back(std::move(p));
  }
  std::sort(points.begin(), points.end(), [](const auto& a, const auto& b) {
    return std::tie(a.task, a.C, a.n_ctx, a.shots, a.model_id) <
           std::tie(b.task, b.C, b.n_ctx, b.shots, b.model_id);
  });
  return points;
}

double reconstruct_prompt_length(const TaskProfile& profile, int shots) {
  if (profile.datasets.empty()) {
    throw DomainError("reconstruct_prompt_length: empty task profile");
  }
  if (shots < 0) {
    throw DomainError("reconstruct_prompt_length: shots must be >= 0");
  }
  double weighted = 0;
  double total = 0;
  for (const auto& d : profile.datasets) {
    if (d.test_count == 0 || !(d.avg_train_tokens > 0) || !(d.avg_test_tokens > 0)) {
      throw DomainError("reconstruct_prompt_length: dataset '" + d.name +
                        "' has non-positive statistics");
    }
    const auto w = static_cast<double>(d.test_count);
    weighted += w * (shots * d.avg_train_tokens + d.avg_test_tokens);
    total += w;
  }
  return weighted / total;
}

const TaskProfile& task_profile(Task task) {
  // Average train/test instance lengths in tokens and test-instance counts.
  static const TaskProfile arithmetic{{
      {"GSM8K", 177.64, 177.43, 250},
      {"MATH", 160.54, 155.74, 250},
      {"AQUA-RAT", 88.45, 93.09, 250},
      {"DeepMind Math", 57.94, 61.05, 56 * 50},
  }};
  static const TaskProfile commonsense{{
      {"PIQA", 81.16, 81.55, 250},
      {"OpenBookQA", 47.74, 49.39, 250},
      {"SIQA", 56.68, 56.87, 250},
      {"HellaSwag", 153.06, 156.05, 250},
      {"WinoGrande", 53.98, 53.87, 250},
      {"ARC Easy", 66.69, 67.14, 250},
      {"ARC Challenge", 75.65, 76.83, 250},
      {"CommonsenseQA", 50.42, 49.92, 250},
  }};
  static const TaskProfile translation{{
      {"WMT14 CS-EN", 95.01, 85.25, 250},
      {"WMT14 DE-EN", 85.53, 77.68, 250},
      {"WMT14 FR-EN", 95.94, 84.29, 250},
      {"WMT14 HI-EN", 34.01, 147.09, 250},
      {"WMT14 RU-EN", 73.54, 86.56, 250},
  }};
  switch (task) {
    case Task::arithmetic:
      return arithmetic;
    case Task::commonsense:
      return commonsense;
    case Task::translation:
      return translation;
  }
  return arithmetic;
}

std::size_t task_instance_count(Task task) {
  switch (task) {
    case Task::arithmetic:
      return 3550;
    case Task::commonsense:
      return 1750;
    case Task::translation:
      return 1250;
  }
  return 0;
}

std::string_view embedded_fixture(std::string_view name) {
  for (const auto& f : detail::fixtures()) {
    if (f.name == name) {
      return f.content;
    }
  }
  throw ValidationError("no embedded fixture named '" + std::string(name) + "'");
}

std::vector<AggregatedPoint> builtin_dataset(Task task) {
  const std::string file = std::string(to_string(task)) + ".csv";
  std::istringstream in{std::string(embedded_fixture(file))};
  constexpr std::array<std::string_view, 5> columns = {"model_id", "C", "n_ctx", "shots",
                                                       "metric"};
  const auto& profile = task_profile(task);
  std::vector<AggregatedPoint> points;
  for (auto& [line_no, row] : read_table(in, columns)) {
    AggregatedPoint p;
    p.task = std::string(to_string(task));
    p.model_id = std::move(row[0]);
    p.C = csv::parse_double(row[1], "C", line_no);
    p.n_ctx = csv::parse_double(row[2], "n_ctx", line_no);
    p.shots = static_cast<int>(csv::parse_integer(row[3], "shots", line_no));
    p.metric = csv::parse_double(row[4], "metric", line_no);
    p.n_pmt = reconstruct_prompt_length(profile, p.shots);
    p.count = task_instance_count(task);
    points.push_back(std::move(p));
  }
  return points;
}

const std::vector<Checkpoint>& builtin_checkpoints() {
  static const std::vector<Checkpoint> rows = [] {
    std::istringstream in{std::string(embedded_fixture("checkpoints.csv"))};
    constexpr std::array<std::string_view, 6> columns = {"model_id",    "n_params",
                                                         "n_ctx",       "base_tokens",
                                                         "added_tokens", "C"};
    std::vector<Checkpoint> out;
    for (auto& [line_no, row] : read_table(in, columns)) {
      out.push_back({row[0], csv::parse_double(row[1], "n_params", line_no),
                     csv::parse_double(row[2], "n_ctx", line_no),
                     csv::parse_double(row[3], "base_tokens", line_no),
                     csv::parse_double(row[4], "added_tokens", line_no),
                     csv::parse_double(row[5], "C", line_no)});
    }
    return out;
  }();
  return rows;
}

}  // namespace ctxscale
