#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "common/error.hpp"
#include "common/json_lines.hpp"
#include "corpus/corpus.hpp"

namespace eemp {

struct ScoreRecord {
  std::string dialogue_id;
  int sensibility = 0;
  int rationality = 0;
  std::string raw_reply;
  std::string scorer_id;

  bool operator==(const ScoreRecord&) const = default;
};

json score_record_to_json(const ScoreRecord& r);
/// Validates the 0..10 range.
ScoreRecord score_record_from_json(const json& obj);
std::vector<ScoreRecord> load_score_records(const std::filesystem::path& path);
void save_score_records(const std::filesystem::path& path, std::span<const ScoreRecord> records);

struct ScorerConfig {
  std::string endpoint_url;
  std::string model_name = "gpt-3.5-turbo";
  std::filesystem::path template_path;  // empty: built-in template
  int max_retries = 3;
  int concurrency_limit = 4;
  std::filesystem::path cache_path;     // empty: no cache
  int timeout_seconds = 60;
};

/// Default evaluation prompt. Users may override it with a template file.
extern const std::string_view kDefaultScoringTemplate;

constexpr std::string_view kConversationPlaceholder = "{conversation}";

/// "Speaker: ..." / "Listener: ..." lines joined by newlines.
std::string render_conversation(std::span<const Turn> turns);

std::string render_prompt(std::string_view tmpl, const Dialogue& dialogue);

class UnparseableReply : public Error {
 public:
  explicit UnparseableReply(const std::string& m) : Error(ErrorKind::scorer, m) {}
};

struct ParsedScores {
  int sensibility = 0;
  int rationality = 0;
};

/// Extracts both scores. Keys are matched case-insensitively and repaired
/// when within edit distance 2 of "sensibility"/"rationality" (or listed in
/// the alias table). Values are rounded half away from zero, then clamped to
/// [0, 10]. Throws UnparseableReply when a score is missing.
ParsedScores parse_scorer_reply(std::string_view raw);

std::size_t edit_distance(std::string_view a, std::string_view b);

/// Deterministic stand-in for an LLM judge: scores derive from
/// SHA-256(seed as 8-byte LE || rendered conversation); byte 0 mod 11 is
/// sensibility and byte 1 mod 11 is rationality.
ScoreRecord mock_score(const Dialogue& dialogue, std::uint64_t seed);

/// Completion transport. `complete` returns the model's reply text or throws
/// on transport failure. The dialogue is passed alongside the rendered prompt
/// for offline backends; network backends only send the prompt.
class ScoreBackend {
 public:
  virtual ~ScoreBackend() = default;
  virtual std::string complete(const std::string& prompt, const Dialogue& dialogue) = 0;
  virtual std::string id() const = 0;
};

/// OpenAI-style chat-completions POST. Bearer token from SCORER_API_KEY.
std::unique_ptr<ScoreBackend> make_http_backend(const ScorerConfig& config);

/// Adapts a callable, used for tests and scripted scorers.
using CompletionFn = std::function<std::string(const std::string& prompt, const Dialogue& dialogue)>;
std::unique_ptr<ScoreBackend> make_function_backend(CompletionFn fn, std::string id);

/// Picks a backend from the endpoint URL: `mock://<seed>` answers with the
/// raw_reply of mock_score(dialogue, seed), anything else goes over HTTP.
std::unique_ptr<ScoreBackend> make_backend(const ScorerConfig& config);

/// Failure after retries. Records that did succeed are still in the cache.
class ScoringFailed : public Error {
 public:
  ScoringFailed(const std::string& m, std::vector<std::string> failed_ids)
      : Error(ErrorKind::scorer, m), failed_ids_(std::move(failed_ids)) {}
  const std::vector<std::string>& failed_ids() const { return failed_ids_; }

 private:
  std::vector<std::string> failed_ids_;
};

struct ScoringStats {
  std::size_t cache_hits = 0;
  std::size_t backend_calls = 0;
};

/// Cache key: SHA-256 of model name, template and rendered conversation.
std::string score_cache_key(std::string_view model_name, std::string_view tmpl,
                            const Dialogue& dialogue);

std::vector<ScoreRecord> score_corpus(const ScorerConfig& config, std::span<const Dialogue> dialogues,
                                      ScoreBackend& backend, ScoringStats* stats = nullptr);

std::vector<ScoreRecord> score_corpus(const ScorerConfig& config, std::span<const Dialogue> dialogues);

}  // namespace eemp
