#include "eemp/eemp.h"

#include <cstring>
#include <string>

#include "corpus/corpus.hpp"
#include "pipeline/commands.hpp"
#include "pipeline/config.hpp"
#include "scorer/scorer.hpp"
#include "selection/selection.hpp"
#include "tinyformer/model.hpp"

struct eemp_config {
  eemp::PipelineConfig cfg;
};

struct eemp_model {
  eemp::AnyModel model;
};

namespace {

thread_local std::string g_last_error;

eemp_status status_for(eemp::ErrorKind kind) {
  switch (kind) {
    case eemp::ErrorKind::config: return EEMP_ERR_CONFIG;
    case eemp::ErrorKind::upstream_missing: return EEMP_ERR_UPSTREAM_MISSING;
    case eemp::ErrorKind::data: return EEMP_ERR_DATA;
    case eemp::ErrorKind::scorer: return EEMP_ERR_SCORER;
    case eemp::ErrorKind::io: return EEMP_ERR_DATA;
  }
  return EEMP_ERR_INTERNAL;
}

template <typename Fn>
eemp_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return EEMP_OK;
  } catch (const eemp::Error& e) {
    g_last_error = e.what();
    return status_for(e.kind());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return EEMP_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return EEMP_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

eemp_status invalid(const char* what) {
  g_last_error = what;
  return EEMP_ERR_INVALID_ARGUMENT;
}

eemp_status run_named(const char* command, const eemp_config* config, eemp_progress_fn progress, void* user,
                      char** report) {
  if (!command || !config) return invalid("command and config are required");
  return guarded([&] {
    eemp::ProgressFn fn;
    if (progress) fn = [progress, user](const std::string& line) { progress(line.c_str(), user); };
    std::string text = eemp::run_command(command, config->cfg, fn);
    if (report) *report = dup_string(text);
  });
}

}  // namespace

extern "C" {

const char* eemp_version(void) { return EEMP_VERSION_STRING; }

const char* eemp_last_error(void) { return g_last_error.c_str(); }

void eemp_string_free(char* s) { std::free(s); }

eemp_status eemp_config_new(eemp_config** out) {
  if (!out) return invalid("out is null");
  return guarded([&] { *out = new eemp_config{}; });
}

eemp_status eemp_config_load(const char* path, eemp_config** out) {
  if (!path || !out) return invalid("path and out are required");
  return guarded([&] { *out = new eemp_config{eemp::PipelineConfig::load(path)}; });
}

eemp_status eemp_config_set(eemp_config* config, const char* key, const char* value) {
  if (!config || !key || !value) return invalid("config, key and value are required");
  return guarded([&] { config->cfg.set(key, value); });
}

eemp_status eemp_config_get(const eemp_config* config, const char* key, char** out) {
  if (!config || !key || !out) return invalid("config, key and out are required");
  return guarded([&] {
    auto v = config->cfg.get(key);
    *out = v ? dup_string(*v) : nullptr;
  });
}

eemp_status eemp_config_keys(char** out) {
  if (!out) return invalid("out is null");
  return guarded([&] {
    std::string text;
    for (const auto& k : eemp::config_keys()) {
      text.append(k.name).append("\t").append(k.default_value).append("\t").append(k.help).append("\n");
    }
    *out = dup_string(text);
  });
}

void eemp_config_free(eemp_config* config) { delete config; }

eemp_status eemp_run(const char* command, const eemp_config* config, eemp_progress_fn progress, void* user_data,
                     char** report) {
  return run_named(command, config, progress, user_data, report);
}

eemp_status eemp_command_names(char** out) {
  if (!out) return invalid("out is null");
  return guarded([&] {
    std::string text;
    for (const auto& c : eemp::command_names()) text += c + "\n";
    *out = dup_string(text);
  });
}

#define EEMP_SUBCOMMAND(fn, name)                                  \
  eemp_status fn(const eemp_config* config, char** report) {       \
    return run_named(name, config, nullptr, nullptr, report);      \
  }

EEMP_SUBCOMMAND(eemp_ingest, "ingest")
EEMP_SUBCOMMAND(eemp_synth, "synth")
EEMP_SUBCOMMAND(eemp_score, "score")
EEMP_SUBCOMMAND(eemp_select, "select")
EEMP_SUBCOMMAND(eemp_stats, "stats")
EEMP_SUBCOMMAND(eemp_init_base, "init-base")
EEMP_SUBCOMMAND(eemp_train_expert, "train-expert")
EEMP_SUBCOMMAND(eemp_compose_moe, "compose-moe")
EEMP_SUBCOMMAND(eemp_ablate, "ablate")
EEMP_SUBCOMMAND(eemp_train_router, "train-router")
EEMP_SUBCOMMAND(eemp_generate, "generate")
EEMP_SUBCOMMAND(eemp_evaluate, "evaluate")
EEMP_SUBCOMMAND(eemp_abtest_build, "abtest-build")
EEMP_SUBCOMMAND(eemp_abtest_report, "abtest-report")

#undef EEMP_SUBCOMMAND

eemp_status eemp_abtest_serve(const eemp_config* config, eemp_progress_fn progress, void* user_data) {
  return run_named("abtest-serve", config, progress, user_data, nullptr);
}

eemp_status eemp_parse_scores(const char* reply, int* sensibility, int* rationality) {
  if (!reply || !sensibility || !rationality) return invalid("reply and outputs are required");
  return guarded([&] {
    const auto parsed = eemp::parse_scorer_reply(reply);
    *sensibility = parsed.sensibility;
    *rationality = parsed.rationality;
  });
}

eemp_status eemp_classify(int sensibility, int rationality, int threshold, int* subset) {
  if (!subset) return invalid("subset is null");
  if (sensibility < 0 || sensibility > 10 || rationality < 0 || rationality > 10 || threshold < 0 || threshold > 10) {
    return invalid("scores and threshold must be in 0..10");
  }
  *subset = static_cast<int>(eemp::classify(sensibility, rationality, threshold));
  return EEMP_OK;
}

eemp_status eemp_model_load(const char* path, eemp_model** out) {
  if (!path || !out) return invalid("path and out are required");
  return guarded([&] { *out = new eemp_model{eemp::load_any_model(path)}; });
}

eemp_status eemp_model_is_moe(const eemp_model* model, int* is_moe) {
  if (!model || !is_moe) return invalid("model and out are required");
  *is_moe = model->model.moe ? 1 : 0;
  return EEMP_OK;
}

eemp_status eemp_model_generate(const eemp_model* model, const char* context_json, int max_tokens,
                                char** response) {
  if (!model || !context_json || !response) return invalid("model, context and out are required");
  if (max_tokens < 0) return invalid("max_tokens must be >= 0");
  return guarded([&] {
    eemp::json ctx;
    try {
      ctx = eemp::json::parse(context_json);
    } catch (const eemp::json::exception& e) {
      throw eemp::data_error(std::string("context is not valid JSON: ") + e.what());
    }
    std::vector<eemp::Turn> turns;
    for (const auto& t : ctx) {
      turns.push_back({eemp::parse_role(t.at("role").get<std::string>()), t.at("text").get<std::string>()});
    }
    *response = dup_string(model->model.generate(turns, max_tokens));
  });
}

eemp_status eemp_model_nll(const eemp_model* model, const char* instances_path, double* nll) {
  if (!model || !instances_path || !nll) return invalid("model, path and out are required");
  return guarded([&] {
    const auto instances = eemp::load_instances(instances_path);
    const auto examples = eemp::make_examples(instances, model->model.config());
    *nll = model->model.mean_nll(examples);
  });
}

void eemp_model_free(eemp_model* model) { delete model; }

}  // extern "C"
