#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace ctxscale {

/// Builtin task families. User data may carry any other task label.
enum class Task { arithmetic, commonsense, translation };

inline constexpr std::array<Task, 3> kBuiltinTasks = {Task::arithmetic, Task::commonsense,
                                                      Task::translation};

std::string_view to_string(Task task);
// Throws ValidationError for unknown names.
Task parse_task(std::string_view name);

/// One raw downstream observation.
struct EvalRecord {
  std::string task;
  std::string model_id;
  double C = 0;      // FLOPs
  double n_ctx = 0;  // tokens
  int shots = 0;
  double n_pmt = 0;  // tokens
  double metric = 0;

  bool operator==(const EvalRecord&) const = default;
};

/// One fitting datum: the mean over a (task, model, shots) group.
struct AggregatedPoint {
  std::string task;
  std::string model_id;
  double C = 0;
  double n_pmt = 0;
  double n_ctx = 0;
  int shots = 0;
  double metric = 0;
  std::size_t count = 1;

  bool operator==(const AggregatedPoint&) const = default;
};

// Throw ValidationError naming the offending field.
void validate(const EvalRecord& record);
void validate(const AggregatedPoint& point);

struct DatasetLengths {
  std::string name;
  double avg_train_tokens = 0;
  double avg_test_tokens = 0;
  std::size_t test_count = 0;
};

/// Per-dataset token statistics for one task family.
struct TaskProfile {
  std::vector<DatasetLengths> datasets;
};

enum class Format { csv, json };

// Throws ValidationError for anything other than "csv" / "json".
Format parse_format(std::string_view name);

/// Records schema: task,model_id,C,n_ctx,shots,n_pmt,metric (CSV header required;
/// JSON is an array of objects with the same keys). n_ctx and shots must be integral;
/// n_pmt may be fractional (pre-averaged lengths). Empty input yields no records.
std::vector<EvalRecord> parse_records(std::istream& source, Format format);

/// Aggregated schema: task,model_id,C,n_pmt,n_ctx,shots,metric,count.
std::vector<AggregatedPoint> parse_points(std::istream& source, Format format);

void write_records(std::ostream& out, const std::vector<EvalRecord>& records, Format format);
void write_points(std::ostream& out, const std::vector<AggregatedPoint>& points, Format format);

/// Groups by (task, model_id, shots) and averages prompt length and metric.
/// Output is sorted by (task, C, n_ctx, shots, model_id). Throws IntegrityError
/// when a group disagrees on C or n_ctx.
std::vector<AggregatedPoint> aggregate(const std::vector<EvalRecord>& records);

/// Test-count-weighted mean of shots * avg_train + avg_test over the profile's
/// datasets. This approximates measured group means: prompt templates and
/// separators are not counted.
double reconstruct_prompt_length(const TaskProfile& profile, int shots);

/// Token statistics of the datasets behind each builtin task.
const TaskProfile& task_profile(Task task);

/// Shot counts of the builtin observation grid.
inline constexpr std::array<int, 10> kShotGrid = {0, 1, 3, 7, 15, 31, 63, 127, 255, 511};

/// Total test instances per builtin task.
std::size_t task_instance_count(Task task);

/// The 12-checkpoint x 10-shot grid of observed means for a builtin task, with
/// prompt lengths from reconstruct_prompt_length.
std::vector<AggregatedPoint> builtin_dataset(Task task);

/// Raw text of an embedded fixture file ("arithmetic.csv", "checkpoints.csv", ...).
/// Throws ValidationError for unknown names.
std::string_view embedded_fixture(std::string_view name);

/// One row of the checkpoint table (model sizes, context limits, compute).
struct Checkpoint {
  std::string model_id;
  double n_params = 0;
  double n_ctx = 0;
  double base_tokens = 0;
  double added_tokens = 0;  // as printed, rounded to 1e6
  double C = 0;             // as printed, 5 significant digits
};

const std::vector<Checkpoint>& builtin_checkpoints();

}  // namespace ctxscale
