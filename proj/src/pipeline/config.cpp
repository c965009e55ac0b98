#include "pipeline/config.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>

#include "common/error.hpp"
#include "corpus/corpus.hpp"

namespace eemp {
namespace {

const std::vector<ConfigKey> kKeys = {
    {"workspace", ".", "directory holding all pipeline artifacts"},
    // ingest
    {"input", "", "raw corpus to ingest (JSON lines, or ED CSV with from_ed_csv)"},
    {"from_ed_csv", "false", "treat input as the EmpatheticDialogues CSV layout"},
    {"corpus", "corpus.jsonl", "canonical corpus"},
    {"test_instances", "test_instances.jsonl", "held-out instances for generate/evaluate"},
    // score
    {"scored", "scored.jsonl", "scored corpus"},
    {"scorer_endpoint", "mock://7", "chat-completions URL, mock://<seed> or synthetic://"},
    {"scorer_model", "gpt-3.5-turbo", "model name sent to the endpoint"},
    {"scorer_template", "", "prompt template file containing {conversation}"},
    {"scorer_max_retries", "3", "retries per dialogue after the first attempt"},
    {"scorer_concurrency", "4", "requests in flight"},
    {"scorer_cache", "score_cache.jsonl", "append-only score cache"},
    {"scorer_timeout", "60", "per-request timeout in seconds"},
    // select / stats
    {"threshold", "5", "selection threshold T in 0..10"},
    {"thresholds", "4,5,6", "thresholds compared by stats"},
    {"partitions_dir", "partitions", "partition outputs"},
    // model
    {"model_d_model", "32", "embedding width"},
    {"model_n_layers", "2", "transformer blocks"},
    {"model_n_heads", "4", "attention heads"},
    {"model_d_ff", "64", "FFN hidden width"},
    {"model_max_seq", "32", "context window in tokens"},
    {"model_seed", "1", "parameter initialisation seed"},
    {"include_emotion", "false", "prefix the emotion label to model contexts"},
    // training
    {"train_learning_rate", "0.001", "learning rate"},
    {"train_batch_size", "8", "minibatch size"},
    {"train_epochs", "10", "expert training epochs"},
    {"train_optimizer", "adam", "adam or sgd"},
    {"train_beta1", "0.9", "Adam beta1"},
    {"train_beta2", "0.999", "Adam beta2"},
    {"train_epsilon", "1e-8", "Adam epsilon"},
    {"train_grad_clip", "1.0", "global gradient norm clip, <= 0 disables"},
    {"train_seed", "1", "shuffle and dropout seed"},
    {"base_epochs", "0", "init-base training epochs on the full corpus (0: random init)"},
    {"lora", "false", "train experts through LoRA adapters, merged afterwards"},
    {"lora_rank", "8", "adapter rank"},
    {"lora_alpha", "32", "adapter alpha"},
    {"lora_dropout", "0.1", "adapter input dropout"},
    {"lora_targets", "q_proj,k_proj,v_proj,o_proj,gate_proj,up_proj,down_proj", "adapted projections"},
    {"subset", "", "train-expert subset: sensibility, rationality or discard"},
    {"checkpoints_dir", "checkpoints", "model checkpoints"},
    // moe
    {"router_seed", "1", "router initialisation seed"},
    {"router_epochs", "5", "stage-2 epochs"},
    {"router_learning_rate", "0.01", "stage-2 learning rate"},
    {"router_train_all", "false", "stage 2 also updates shared and expert tensors"},
    {"variant", "", "ablation variant a, b, c or d"},
    {"router_input", "moe", "checkpoint trained by train-router; the result is saved as <name>_routed"},
    {"model", "moe_routed", "checkpoint name or path used by generate"},
    // generate / evaluate
    {"max_tokens", "16", "generation budget"},
    {"outputs_dir", "outputs", "generated responses"},
    {"models", "", "evaluate: comma-separated checkpoint names or paths for NLL"},
    {"hypotheses", "", "evaluate: hypothesis file"},
    {"references", "", "evaluate: reference file (empty: hypotheses file holds both)"},
    {"reports_dir", "reports", "reports and statistics"},
    // abtest
    {"abtest_ours", "", "our model's outputs (JSON lines)"},
    {"abtest_baseline", "", "baseline outputs (JSON lines)"},
    {"abtest_n", "200", "tasks to sample"},
    {"abtest_seed", "1", "sampling and side-assignment seed"},
    {"abtest_annotators", "3", "annotators per task"},
    {"abtest_dir", "abtest", "tasks file and verdict log"},
    {"abtest_host", "127.0.0.1", "listen address"},
    {"abtest_port", "8080", "listen port, 0 picks a free one"},
    {"abtest_static_dir", "", "static UI bundle to serve at /"},
    // synth
    {"synth_copy", "500", "copy-task dialogues"},
    {"synth_reverse", "500", "reverse-task dialogues"},
    {"synth_noise", "100", "noise dialogues"},
    {"synth_test_fraction", "0.1", "share of copy/reverse dialogues held out as test instances"},
    {"synth_min_len", "3", "shortest utterance"},
    {"synth_max_len", "6", "longest utterance"},
    {"synth_seed", "1", "generator seed"},
    {"synth_noise_alphabet", "abcdefgh", "alphabet of noise replies (abcdefgh overlaps the copy task)"},
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

const std::vector<ConfigKey>& config_keys() { return kKeys; }

const ConfigKey* find_config_key(std::string_view name) {
  for (const auto& k : kKeys) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw config_error("config file not found: " + path.string());
  return parse(read_text_file(path), path.string());
}

PipelineConfig PipelineConfig::parse(std::string_view text, const std::string& origin) {
  PipelineConfig cfg;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) throw config_error(fmt::format("{}:{}: expected key = value", origin, line_no));
    const std::string key = trim(std::string_view(content).substr(0, eq));
    const std::string value = trim(std::string_view(content).substr(eq + 1));
    if (!find_config_key(key)) throw config_error(fmt::format("{}:{}: unknown key '{}'", origin, line_no, key));
    if (cfg.values_.count(key)) throw config_error(fmt::format("{}:{}: key '{}' set twice", origin, line_no, key));
    cfg.values_[key] = value;
    if (nl == text.size()) break;
  }
  return cfg;
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
  if (!find_config_key(key)) throw config_error("unknown config key '" + key + "'");
  values_[key] = value;
}

bool PipelineConfig::has(const std::string& key) const { return values_.count(key) != 0; }

std::optional<std::string> PipelineConfig::get(const std::string& key) const {
  if (auto it = values_.find(key); it != values_.end()) return it->second;
  const ConfigKey* k = find_config_key(key);
  if (!k) throw config_error("unknown config key '" + key + "'");
  if (k->default_value.empty()) return std::nullopt;
  return std::string(k->default_value);
}

std::string PipelineConfig::get_string(const std::string& key) const {
  auto v = get(key);
  if (!v || v->empty()) throw config_error("config key '" + key + "' is required");
  return *v;
}

long long PipelineConfig::get_int(const std::string& key) const {
  const std::string v = get_string(key);
  long long out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw config_error("config key '" + key + "' must be an integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t PipelineConfig::get_u64(const std::string& key) const {
  const long long v = get_int(key);
  if (v < 0) throw config_error("config key '" + key + "' must be non-negative");
  return static_cast<std::uint64_t>(v);
}

double PipelineConfig::get_double(const std::string& key) const {
  const std::string v = get_string(key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw config_error("config key '" + key + "' must be a number, got '" + v + "'");
  }
}

bool PipelineConfig::get_bool(const std::string& key) const {
  std::string v = get_string(key);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw config_error("config key '" + key + "' must be true or false, got '" + v + "'");
}

std::vector<std::string> PipelineConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  auto v = get(key);
  if (!v) return out;
  std::size_t pos = 0;
  while (pos <= v->size()) {
    auto comma = v->find(',', pos);
    if (comma == std::string::npos) comma = v->size();
    std::string item = trim(std::string_view(*v).substr(pos, comma - pos));
    if (!item.empty()) out.push_back(std::move(item));
    pos = comma + 1;
  }
  return out;
}

std::filesystem::path PipelineConfig::workspace() const { return get_string("workspace"); }

std::filesystem::path PipelineConfig::path(const std::string& key) const {
  std::filesystem::path p = get_string(key);
  return p.is_absolute() ? p : workspace() / p;
}

json PipelineConfig::snapshot() const {
  json out = json::object();
  for (const auto& k : kKeys) {
    if (auto v = get(std::string(k.name))) out[std::string(k.name)] = *v;
  }
  return out;
}

}  // namespace eemp
