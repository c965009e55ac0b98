#include "scorer/scorer.hpp"

#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "common/hash.hpp"

namespace eemp {

json score_record_to_json(const ScoreRecord& r) {
  return {{"dialogue_id", r.dialogue_id},
          {"sensibility", r.sensibility},
          {"rationality", r.rationality},
          {"raw_reply", r.raw_reply},
          {"scorer_id", r.scorer_id}};
}

ScoreRecord score_record_from_json(const json& obj) {
  ScoreRecord r;
  try {
    r.dialogue_id = obj.at("dialogue_id").get<std::string>();
    r.sensibility = obj.at("sensibility").get<int>();
    r.rationality = obj.at("rationality").get<int>();
    r.raw_reply = obj.value("raw_reply", std::string{});
    r.scorer_id = obj.value("scorer_id", std::string{});
  } catch (const json::exception& e) {
    throw data_error(std::string("bad score record: ") + e.what());
  }
  if (r.sensibility < 0 || r.sensibility > 10 || r.rationality < 0 || r.rationality > 10) {
    throw data_error("score record '" + r.dialogue_id + "' outside 0..10");
  }
  return r;
}

std::vector<ScoreRecord> load_score_records(const std::filesystem::path& path) {
  std::vector<ScoreRecord> out;
  for_each_json_line(path, [&](const json& obj, std::size_t line) {
    try {
      out.push_back(score_record_from_json(obj));
    } catch (const Error& e) {
      throw data_error(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

void save_score_records(const std::filesystem::path& path, std::span<const ScoreRecord> records) {
  std::vector<json> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(score_record_to_json(r));
  write_json_lines(path, rows);
}

ScoreRecord mock_score(const Dialogue& dialogue, std::uint64_t seed) {
  std::string material(8, '\0');
  for (int i = 0; i < 8; ++i) material[i] = static_cast<char>((seed >> (8 * i)) & 0xFF);
  material += render_conversation(dialogue.turns);
  const std::string digest = sha256_raw(material);
  ScoreRecord r;
  r.dialogue_id = dialogue.id;
  r.sensibility = static_cast<unsigned char>(digest[0]) % 11;
  r.rationality = static_cast<unsigned char>(digest[1]) % 11;
  r.raw_reply = "Sensibility: " + std::to_string(r.sensibility) +
                "\nRationality: " + std::to_string(r.rationality);
  r.scorer_id = "mock:" + std::to_string(seed);
  return r;
}

namespace {

class FunctionBackend final : public ScoreBackend {
 public:
  FunctionBackend(CompletionFn fn, std::string id) : fn_(std::move(fn)), id_(std::move(id)) {}
  std::string complete(const std::string& prompt, const Dialogue& dialogue) override {
    return fn_(prompt, dialogue);
  }
  std::string id() const override { return id_; }

 private:
  CompletionFn fn_;
  std::string id_;
};

class MockBackend final : public ScoreBackend {
 public:
  explicit MockBackend(std::uint64_t seed) : seed_(seed) {}
  std::string complete(const std::string&, const Dialogue& dialogue) override {
    return mock_score(dialogue, seed_).raw_reply;
  }
  std::string id() const override { return "mock:" + std::to_string(seed_); }

 private:
  std::uint64_t seed_;
};

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path;
};

ParsedUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw config_error("endpoint URL lacks a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/v1/chat/completions"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

class HttpBackend final : public ScoreBackend {
 public:
  explicit HttpBackend(const ScorerConfig& config) : config_(config) {
    auto parts = split_url(config.endpoint_url);
    base_ = parts.scheme_host_port;
    path_ = parts.path;
    if (const char* key = std::getenv("SCORER_API_KEY")) api_key_ = key;
  }

  std::string complete(const std::string& prompt, const Dialogue&) override {
    httplib::Client client(base_);
    client.set_connection_timeout(config_.timeout_seconds);
    client.set_read_timeout(config_.timeout_seconds);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    json body = {{"model", config_.model_name},
                 {"temperature", 0},
                 {"messages", json::array({{{"role", "user"}, {"content", prompt}}})}};
    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) {
      throw Error(ErrorKind::scorer, "endpoint request failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      throw Error(ErrorKind::scorer, "endpoint returned HTTP " + std::to_string(res->status));
    }
    try {
      auto reply = json::parse(res->body);
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(ErrorKind::scorer, std::string("malformed endpoint response: ") + e.what());
    }
  }

  std::string id() const override { return config_.model_name + "@" + config_.endpoint_url; }

 private:
  ScorerConfig config_;
  std::string base_;
  std::string path_;
  std::string api_key_;
};

std::string load_template(const ScorerConfig& config) {
  if (config.template_path.empty()) return std::string(kDefaultScoringTemplate);
  return read_text_file(config.template_path);
}

std::unordered_map<std::string, ScoreRecord> read_cache(const std::filesystem::path& path) {
  std::unordered_map<std::string, ScoreRecord> cache;
  if (path.empty() || !std::filesystem::exists(path)) return cache;
  for_each_json_line(path, [&](const json& obj, std::size_t) {
    cache[obj.at("key").get<std::string>()] = score_record_from_json(obj);
  });
  return cache;
}

}  // namespace

std::unique_ptr<ScoreBackend> make_http_backend(const ScorerConfig& config) {
  return std::make_unique<HttpBackend>(config);
}

std::unique_ptr<ScoreBackend> make_function_backend(CompletionFn fn, std::string id) {
  return std::make_unique<FunctionBackend>(std::move(fn), std::move(id));
}

std::unique_ptr<ScoreBackend> make_backend(const ScorerConfig& config) {
  constexpr std::string_view kMock = "mock://";
  if (config.endpoint_url.starts_with(kMock)) {
    const auto seed_text = config.endpoint_url.substr(kMock.size());
    try {
      return std::make_unique<MockBackend>(seed_text.empty() ? 0 : std::stoull(seed_text));
    } catch (const std::exception&) {
      throw config_error("bad mock endpoint seed: " + config.endpoint_url);
    }
  }
  if (config.endpoint_url.empty()) throw config_error("scorer endpoint URL is not set");
  return make_http_backend(config);
}

std::string score_cache_key(std::string_view model_name, std::string_view tmpl,
                            const Dialogue& dialogue) {
  std::string material(model_name);
  material += '\x1f';
  material += tmpl;
  material += '\x1f';
  material += render_conversation(dialogue.turns);
  return sha256_hex(material);
}

std::vector<ScoreRecord> score_corpus(const ScorerConfig& config, std::span<const Dialogue> dialogues,
                                      ScoreBackend& backend, ScoringStats* stats) {
  if (config.concurrency_limit < 1) throw config_error("concurrency_limit must be >= 1");
  if (config.max_retries < 0) throw config_error("max_retries must be >= 0");
  const std::string tmpl = load_template(config);
  if (tmpl.find(kConversationPlaceholder) == std::string::npos) {
    throw config_error("prompt template lacks the {conversation} placeholder");
  }

  auto cache = read_cache(config.cache_path);
  std::vector<std::optional<ScoreRecord>> results(dialogues.size());
  std::vector<std::string> keys(dialogues.size());
  std::vector<std::size_t> pending;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < dialogues.size(); ++i) {
    keys[i] = score_cache_key(config.model_name, tmpl, dialogues[i]);
    if (auto it = cache.find(keys[i]); it != cache.end()) {
      ScoreRecord r = it->second;
      r.dialogue_id = dialogues[i].id;
      results[i] = std::move(r);
      ++hits;
    } else {
      pending.push_back(i);
    }
  }

  std::mutex writer_mutex;
  std::ofstream cache_out;
  if (!config.cache_path.empty() && !pending.empty()) {
    if (config.cache_path.has_parent_path()) {
      std::filesystem::create_directories(config.cache_path.parent_path());
    }
    cache_out.open(config.cache_path, std::ios::binary | std::ios::app);
    if (!cache_out) throw io_error("cannot append to cache " + config.cache_path.string());
  }

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> calls{0};
  std::vector<std::string> failures(dialogues.size());

  auto worker = [&] {
    for (std::size_t k = next++; k < pending.size(); k = next++) {
      const std::size_t i = pending[k];
      const std::string prompt = render_prompt(tmpl, dialogues[i]);
      std::string last_error;
      for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
        try {
          ++calls;
          std::string reply = backend.complete(prompt, dialogues[i]);
          auto scores = parse_scorer_reply(reply);
          ScoreRecord r{dialogues[i].id, scores.sensibility, scores.rationality, std::move(reply),
                        backend.id()};
          {
            std::lock_guard lock(writer_mutex);
            if (cache_out.is_open()) {
              json row = score_record_to_json(r);
              row["key"] = keys[i];
              cache_out << row.dump() << '\n';
              cache_out.flush();
            }
          }
          results[i] = std::move(r);
          last_error.clear();
          break;
        } catch (const std::exception& e) {
          last_error = e.what();
        }
      }
      if (!last_error.empty()) failures[i] = last_error;
    }
  };

  const auto n_workers =
      std::min<std::size_t>(static_cast<std::size_t>(config.concurrency_limit), pending.size());
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    for (std::size_t t = 0; t < n_workers; ++t) threads.emplace_back(worker);
  }

  if (stats) {
    stats->cache_hits = hits;
    stats->backend_calls = calls.load();
  }

  std::vector<std::string> failed_ids;
  std::string first_error;
  for (std::size_t i = 0; i < dialogues.size(); ++i) {
    if (!results[i]) {
      failed_ids.push_back(dialogues[i].id);
      if (first_error.empty()) first_error = failures[i];
    }
  }
  if (!failed_ids.empty()) {
    std::string msg = "scoring failed for " + std::to_string(failed_ids.size()) + " dialogue(s):";
    for (const auto& id : failed_ids) msg += " " + id;
    msg += " (last error: " + first_error + ")";
    throw ScoringFailed(msg, std::move(failed_ids));
  }

  std::vector<ScoreRecord> out;
  out.reserve(results.size());
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

std::vector<ScoreRecord> score_corpus(const ScorerConfig& config, std::span<const Dialogue> dialogues) {
  auto backend = make_backend(config);
  return score_corpus(config, dialogues, *backend);
}

}  // namespace eemp
