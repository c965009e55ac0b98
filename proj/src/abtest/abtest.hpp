#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "common/error.hpp"
#include "common/json_lines.hpp"
#include "corpus/corpus.hpp"

namespace eemp {

enum class Side { left, right, tie };

std::string_view side_name(Side s);
Side parse_side(std::string_view name);

inline constexpr std::array<std::string_view, 4> kDimensions{"coherence", "empathy", "informativeness",
                                                             "continuity"};

/// One blinded comparison. `ours_on_left` is the hidden mapping: it is stored
/// in the tasks file but never included in annotator payloads.
struct PairTask {
  std::string task_id;
  std::string dialogue_id;
  std::vector<Turn> context;
  std::string response_left;
  std::string response_right;
  bool ours_on_left = true;

  bool operator==(const PairTask&) const = default;
};

json task_to_json(const PairTask& task);  // full record, including the mapping
PairTask task_from_json(const json& obj);
/// What annotators see: task id, context, two responses.
json task_payload(const PairTask& task);

struct ModelOutput {
  std::string id;
  std::vector<Turn> context;
  std::string response;
};

/// JSON lines with {id, response|hypothesis, context?}.
std::vector<ModelOutput> load_model_outputs(const std::filesystem::path& path);

/// Samples n shared ids without replacement (seeded) and flips an
/// independent seeded coin per task for the left/right assignment.
std::vector<PairTask> build_tasks(const std::vector<ModelOutput>& ours, const std::vector<ModelOutput>& baseline,
                                  std::size_t n, std::uint64_t seed);

struct Verdict {
  std::string task_id;
  std::string annotator_id;
  std::array<Side, 4> outcomes{};  // indexed like kDimensions
  std::string timestamp;
  std::string request_id;  // optional client de-duplication token
};

json verdict_to_json(const Verdict& v);
/// Throws AbError("malformed_verdict") unless exactly the four dimensions are present.
Verdict verdict_from_json(const json& obj);

class AbError : public Error {
 public:
  AbError(std::string code, int http_status, const std::string& message)
      : Error(ErrorKind::data, message), code_(std::move(code)), http_status_(http_status) {}
  const std::string& code() const { return code_; }
  int http_status() const { return http_status_; }

 private:
  std::string code_;
  int http_status_;
};

struct OutcomeCounts {
  std::size_t win = 0, lose = 0, tie = 0;
  std::size_t total() const { return win + lose + tie; }
};

/// Win/lose/tie from our model's point of view.
struct ABReport {
  std::map<std::string, OutcomeCounts> dimensions;
  OutcomeCounts overall;  // per verdict, plurality across dimensions, ties at the top -> tie
  std::size_t tasks = 0;
  std::size_t verdicts = 0;
  std::size_t annotators = 0;
  std::size_t fully_covered_tasks = 0;

  json to_json() const;
  std::string to_text() const;
};

/// Combines per-dimension outcomes of one verdict into an overall outcome.
Side overall_side(const std::array<Side, 4>& outcomes);

class AbService {
 public:
  /// Loads tasks and replays the verdict log if present.
  AbService(std::filesystem::path tasks_path, std::filesystem::path verdict_log_path,
            std::size_t annotators_per_task = 3);

  AbService(const AbService&) = delete;
  AbService& operator=(const AbService&) = delete;

  /// Next task this annotator has not judged, among tasks that still need
  /// annotators. Repeated calls before submitting return the same task.
  std::optional<PairTask> next_task(const std::string& annotator_id);

  /// Appends durably, then acknowledges. Returns false when the same
  /// request_id was already recorded (idempotent retry).
  bool submit_verdict(Verdict verdict);

  ABReport report() const;
  json progress() const;

  std::size_t task_count() const { return tasks_.size(); }

 private:
  struct TaskState {
    std::set<std::string> judged_by;
    std::set<std::string> reserved_by;
  };

  void apply(const Verdict& v);
  void append_to_log(const Verdict& v);

  std::filesystem::path log_path_;
  std::size_t per_task_;
  std::vector<PairTask> tasks_;
  std::map<std::string, std::size_t> index_;
  std::vector<TaskState> state_;
  std::vector<Verdict> verdicts_;
  std::map<std::pair<std::string, std::string>, std::string> request_ids_;
  mutable std::mutex mutex_;
};

ABReport build_report(const std::vector<PairTask>& tasks, const std::vector<Verdict>& verdicts,
                      std::size_t annotators_per_task = 3);

void save_tasks(const std::filesystem::path& path, const std::vector<PairTask>& tasks);
std::vector<PairTask> load_tasks(const std::filesystem::path& path);
std::vector<Verdict> load_verdicts(const std::filesystem::path& path);

}  // namespace eemp
