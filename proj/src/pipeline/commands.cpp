#include "pipeline/commands.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <iostream>

#include "abtest/abtest.hpp"
#include "abtest/server.hpp"
#include "common/hash.hpp"
#include "metrics/metrics.hpp"
#include "pipeline/manifest.hpp"
#include "pipeline/synthetic.hpp"
#include "scorer/scorer.hpp"
#include "selection/selection.hpp"
#include "tinyformer/checkpoint.hpp"
#include "tinyformer/lora.hpp"
#include "tinyformer/model.hpp"

namespace eemp {
namespace {

const std::vector<std::string> kCommands = {
    "ingest",       "synth",       "score",        "select",   "stats",        "init-base",
    "train-expert", "compose-moe", "ablate",       "train-router", "generate", "evaluate",
    "abtest-build", "abtest-serve", "abtest-report"};

constexpr std::array<Subset, 3> kSubsets{Subset::sensibility, Subset::rationality, Subset::discard};

std::filesystem::path partition_file(const PipelineConfig& cfg, Subset s) {
  return cfg.path("partitions_dir") / (std::string(subset_name(s)) + ".jsonl");
}

std::filesystem::path checkpoint_path(const PipelineConfig& cfg, const std::string& name) {
  return cfg.path("checkpoints_dir") / (name + ".ckpt");
}

std::string producer_for_checkpoint(const std::string& name) {
  if (name == "base") return "init-base";
  if (name.starts_with("expert_")) return "train-expert --subset " + name.substr(7);
  if (name.ends_with("_routed")) return "train-router";
  if (name.starts_with("moe_ablate_")) return "ablate --variant " + name.substr(11);
  if (name == "moe") return "compose-moe";
  return "train-expert";
}

std::filesystem::path required_checkpoint(const PipelineConfig& cfg, const std::string& name) {
  const auto path = resolve_checkpoint(cfg, name);
  require_input(path, producer_for_checkpoint(name));
  return path;
}

RenderOptions render_from(const PipelineConfig& cfg) {
  RenderOptions r;
  r.include_emotion = cfg.get_bool("include_emotion");
  return r;
}

std::optional<LoraConfig> lora_from(const PipelineConfig& cfg) {
  if (!cfg.get_bool("lora")) return std::nullopt;
  LoraConfig l;
  l.rank = static_cast<int>(cfg.get_int("lora_rank"));
  l.alpha = cfg.get_double("lora_alpha");
  l.dropout = cfg.get_double("lora_dropout");
  l.target_modules = cfg.get_list("lora_targets");
  l.validate();
  return l;
}

std::vector<Instance> load_partition_instances(const PipelineConfig& cfg, Subset s) {
  const auto path = partition_file(cfg, s);
  require_input(path, "select");
  return load_instances(path);
}

std::string format_losses(const TrainLog& log) {
  std::string out;
  for (std::size_t i = 0; i < log.epoch_loss.size(); ++i) {
    out += fmt::format("epoch {:>3}  loss {:.4f}\n", i + 1, log.epoch_loss[i]);
  }
  return out;
}

json losses_json(const TrainLog& log) { return log.epoch_loss; }

// ---------------------------------------------------------------- commands

std::string cmd_ingest(const PipelineConfig& cfg) {
  const auto input_value = cfg.get("input");
  if (!input_value || input_value->empty()) throw config_error("ingest needs an input file (--input)");
  const std::filesystem::path input = *input_value;
  if (!std::filesystem::exists(input)) throw config_error("input file not found: " + input.string());
  const bool csv = cfg.get_bool("from_ed_csv");
  std::vector<Dialogue> dialogues = csv ? import_ed_csv(input) : load_corpus(input);
  for (const auto& d : dialogues) validate_dialogue(d);
  const auto out = cfg.path("corpus");
  save_corpus(out, dialogues);
  const std::size_t instances = expand_instances(dialogues).size();

  Manifest m(cfg.workspace(), "ingest", cfg.snapshot());
  m.add_input(input);
  m.add_output(out);
  m.set("counts", {{"dialogues", dialogues.size()}, {"instances", instances}});
  m.write("ingest");
  return fmt::format("ingested {} dialogues ({} instances) into {}\n", dialogues.size(), instances, out.string());
}

std::string cmd_synth(const PipelineConfig& cfg) {
  SyntheticConfig sc;
  sc.copy = cfg.get_u64("synth_copy");
  sc.reverse = cfg.get_u64("synth_reverse");
  sc.noise = cfg.get_u64("synth_noise");
  sc.min_len = static_cast<int>(cfg.get_int("synth_min_len"));
  sc.max_len = static_cast<int>(cfg.get_int("synth_max_len"));
  sc.seed = cfg.get_u64("synth_seed");
  sc.noise_alphabet = cfg.get_string("synth_noise_alphabet");
  const double fraction = cfg.get_double("synth_test_fraction");
  if (fraction < 0.0 || fraction >= 1.0) throw config_error("synth_test_fraction must be in [0, 1)");

  const auto all = make_synthetic_corpus(sc);
  const auto n_test = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(sc.copy + sc.reverse)));
  std::vector<Dialogue> train, test;
  for (const auto& d : all) {
    if (test.size() < n_test && classify_synthetic(d) != SynthKind::noise) {
      test.push_back(d);
    } else {
      train.push_back(d);
    }
  }
  const auto corpus_path = cfg.path("corpus");
  const auto test_path = cfg.path("test_instances");
  save_corpus(corpus_path, train);
  const auto test_instances = expand_instances(test);
  save_instances(test_path, test_instances);

  Manifest m(cfg.workspace(), "synth", cfg.snapshot());
  m.set_seed("synth_seed", sc.seed);
  m.add_output(corpus_path);
  m.add_output(test_path);
  m.write("synth");
  return fmt::format("wrote {} training dialogues to {} and {} test instances to {}\n", train.size(),
                     corpus_path.string(), test_instances.size(), test_path.string());
}

std::string cmd_score(const PipelineConfig& cfg, const ProgressFn& progress) {
  const auto corpus_path = cfg.path("corpus");
  require_input(corpus_path, "ingest");
  const auto dialogues = load_corpus(corpus_path);

  ScorerConfig sc;
  sc.endpoint_url = cfg.get_string("scorer_endpoint");
  sc.model_name = cfg.get_string("scorer_model");
  if (auto t = cfg.get("scorer_template"); t && !t->empty()) sc.template_path = *t;
  sc.max_retries = static_cast<int>(cfg.get_int("scorer_max_retries"));
  sc.concurrency_limit = static_cast<int>(cfg.get_int("scorer_concurrency"));
  sc.cache_path = cfg.path("scorer_cache");
  sc.timeout_seconds = static_cast<int>(cfg.get_int("scorer_timeout"));
  if (sc.max_retries < 0) throw config_error("scorer_max_retries must be >= 0");
  if (sc.concurrency_limit < 1) throw config_error("scorer_concurrency must be >= 1");

  std::unique_ptr<ScoreBackend> backend;
  if (sc.endpoint_url == "synthetic://") {
    backend = make_function_backend([](const std::string&, const Dialogue& d) { return synthetic_judge_reply(d); },
                                    "synthetic");
  } else {
    backend = make_backend(sc);
  }
  if (progress) progress(fmt::format("scoring {} dialogues with {}", dialogues.size(), backend->id()));
  ScoringStats stats;
  const auto records = score_corpus(sc, dialogues, *backend, &stats);
  const auto out = cfg.path("scored");
  save_score_records(out, records);

  Manifest m(cfg.workspace(), "score", cfg.snapshot());
  m.add_input(corpus_path);
  if (!sc.template_path.empty()) m.add_input(sc.template_path);
  m.add_output(out);
  m.set("scorer_id", backend->id());
  if (sc.endpoint_url.starts_with("mock://")) m.set_seed("mock_seed", std::stoull(sc.endpoint_url.substr(7)));
  m.write("score");
  return fmt::format("scored {} dialogues ({} from cache, {} endpoint calls) into {}\n", records.size(),
                     stats.cache_hits, stats.backend_calls, out.string());
}

struct ScoredCorpus {
  std::vector<Dialogue> dialogues;
  std::vector<ScoreRecord> records;
  std::filesystem::path corpus_path, scored_path;
};

ScoredCorpus load_scored(const PipelineConfig& cfg) {
  ScoredCorpus sc;
  sc.corpus_path = cfg.path("corpus");
  sc.scored_path = cfg.path("scored");
  require_input(sc.corpus_path, "ingest");
  require_input(sc.scored_path, "score");
  sc.dialogues = load_corpus(sc.corpus_path);
  sc.records = load_score_records(sc.scored_path);
  std::set<std::string> corpus_ids;
  for (const auto& d : sc.dialogues) corpus_ids.insert(d.id);
  for (const auto& r : sc.records) {
    if (!corpus_ids.count(r.dialogue_id)) {
      throw data_error("scored record '" + r.dialogue_id + "' has no dialogue in " + sc.corpus_path.string());
    }
  }
  return sc;
}

int threshold_from(const PipelineConfig& cfg, const std::string& key) {
  const long long t = cfg.get_int(key);
  if (t < 0 || t > 10) throw config_error("threshold must be in 0..10");
  return static_cast<int>(t);
}

std::string cmd_select(const PipelineConfig& cfg) {
  SelectionConfig sel{threshold_from(cfg, "threshold")};
  const auto sc = load_scored(cfg);
  const auto counts = count_instances(sc.dialogues);
  const Partition part = partition(sc.records, sel, &counts);

  std::map<std::string, Subset> membership;
  for (Subset s : kSubsets) {
    for (const auto& id : part.ids(s)) membership[id] = s;
  }
  std::array<std::vector<Instance>, 3> per_subset;
  for (const auto& d : sc.dialogues) {
    auto it = membership.find(d.id);
    if (it == membership.end()) continue;  // unscored dialogues are not selected
    const Dialogue one[] = {d};
    for (auto& inst : expand_instances(one)) per_subset[static_cast<int>(it->second)].push_back(std::move(inst));
  }

  Manifest m(cfg.workspace(), "select", cfg.snapshot());
  m.add_input(sc.corpus_path);
  m.add_input(sc.scored_path);
  for (Subset s : kSubsets) {
    const auto path = partition_file(cfg, s);
    save_instances(path, per_subset[static_cast<int>(s)]);
    m.add_output(path);
  }
  const auto dir = cfg.path("partitions_dir");
  write_text_file(dir / "partition_manifest.json", part.manifest().dump(2) + "\n");
  write_text_file(dir / "histogram.csv", histogram2d(sc.records).to_csv());
  m.add_output(dir / "partition_manifest.json");
  m.add_output(dir / "histogram.csv");
  m.set("partition", part.manifest());
  m.write("select");

  std::string out = fmt::format("threshold {}\n", sel.threshold);
  for (Subset s : kSubsets) {
    const auto& st = part.stat(s);
    out += fmt::format("{:<12} {:>7} dialogues {:>8} instances {:>6.2f}%\n", subset_name(s), st.dialogues,
                       st.instances, st.percent);
  }
  return out;
}

std::string cmd_stats(const PipelineConfig& cfg) {
  std::vector<int> thresholds;
  for (const auto& t : cfg.get_list("thresholds")) {
    try {
      const int v = std::stoi(t);
      if (v < 0 || v > 10) throw std::out_of_range(t);
      thresholds.push_back(v);
    } catch (const std::exception&) {
      throw config_error("thresholds must be integers in 0..10, got '" + t + "'");
    }
  }
  const auto sc = load_scored(cfg);
  const auto counts = count_instances(sc.dialogues);
  const auto report = selection_report(sc.records, thresholds, &counts);
  const auto dir = cfg.path("reports_dir");
  write_text_file(dir / "selection_stats.txt", report.text);
  write_text_file(dir / "selection_stats.json", report.summary.dump(2) + "\n");
  write_text_file(dir / "histogram.csv", report.histogram_csv);

  Manifest m(cfg.workspace(), "stats", cfg.snapshot());
  m.add_input(sc.corpus_path);
  m.add_input(sc.scored_path);
  m.add_output(dir / "selection_stats.txt");
  m.add_output(dir / "selection_stats.json");
  m.add_output(dir / "histogram.csv");
  m.write("stats");
  return report.text;
}

std::string cmd_init_base(const PipelineConfig& cfg, const ProgressFn& progress) {
  const ModelConfig mc = model_config_from(cfg);
  Parameters params = init_parameters(mc);
  Manifest m(cfg.workspace(), "init-base", cfg.snapshot());
  m.set_seed("model_seed", mc.seed);
  const auto epochs = cfg.get_int("base_epochs");
  std::string out;
  TrainLog log;
  if (epochs > 0) {
    const auto corpus_path = cfg.path("corpus");
    require_input(corpus_path, "ingest");
    const auto instances = expand_instances(load_corpus(corpus_path));
    TrainConfig tc = train_config_from(cfg);
    tc.epochs = static_cast<int>(epochs);
    if (progress) progress(fmt::format("training base on {} instances for {} epochs", instances.size(), epochs));
    params = train_sft(params, instances, tc, std::nullopt, &log, render_from(cfg));
    m.add_input(corpus_path);
    m.set_seed("train_seed", tc.seed);
    out = format_losses(log);
  }
  const auto path = checkpoint_path(cfg, "base");
  save_checkpoint(params, path, {{"role", "base"}, {"epoch_loss", losses_json(log)}});
  m.add_output(path);
  m.write("init-base");
  return out + fmt::format("wrote {}\n", path.string());
}

std::string cmd_train_expert(const PipelineConfig& cfg, const ProgressFn& progress) {
  const auto subset_value = cfg.get("subset");
  if (!subset_value || subset_value->empty()) {
    throw config_error("train-expert needs --subset sensibility|rationality|discard");
  }
  Subset subset;
  try {
    subset = parse_subset(*subset_value);
  } catch (const std::exception&) {
    throw config_error("unknown subset '" + *subset_value + "'");
  }
  const std::string name = "expert_" + std::string(subset_name(subset));
  const auto base_path = required_checkpoint(cfg, "base");
  const auto data_path = partition_file(cfg, subset);
  const auto instances = load_partition_instances(cfg, subset);
  if (instances.empty()) throw data_error("subset '" + std::string(subset_name(subset)) + "' is empty");
  const Parameters base = load_checkpoint(base_path);
  const TrainConfig tc = train_config_from(cfg);
  const auto lora = lora_from(cfg);
  if (progress) {
    progress(fmt::format("training {} on {} instances, {} epochs{}", name, instances.size(), tc.epochs,
                         lora ? " (LoRA)" : ""));
  }
  TrainLog log;
  const Parameters trained = train_sft(base, instances, tc, lora, &log, render_from(cfg));
  json meta = {{"role", name},
               {"subset", subset_name(subset)},
               {"base_hash", parameters_hash(base)},
               {"train_config", train_config_to_json(tc)},
               {"epoch_loss", losses_json(log)}};
  if (lora) meta["lora"] = lora_config_to_json(*lora);
  const auto out = checkpoint_path(cfg, name);
  save_checkpoint(trained, out, meta);

  Manifest m(cfg.workspace(), "train-expert", cfg.snapshot());
  m.add_input(base_path);
  m.add_input(data_path);
  m.add_output(out);
  m.set_seed("train_seed", tc.seed);
  m.set("epoch_loss", losses_json(log));
  m.write("train-expert-" + std::string(subset_name(subset)));
  return format_losses(log) + fmt::format("wrote {}\n", out.string());
}

std::string cmd_compose(const PipelineConfig& cfg) {
  const auto s_path = required_checkpoint(cfg, "expert_sensibility");
  const auto r_path = required_checkpoint(cfg, "expert_rationality");
  const auto seed = cfg.get_u64("router_seed");
  const MoEModel moe = compose(load_checkpoint(s_path), load_checkpoint(r_path), seed);
  const auto out = checkpoint_path(cfg, "moe");
  save_moe_checkpoint(moe, out);

  Manifest m(cfg.workspace(), "compose-moe", cfg.snapshot());
  m.add_input(s_path);
  m.add_input(r_path);
  m.add_output(out);
  m.set_seed("router_seed", seed);
  m.write("compose-moe");
  return fmt::format("wrote {}\n", out.string());
}

std::string cmd_ablate(const PipelineConfig& cfg) {
  const auto tag = cfg.get("variant");
  if (!tag || tag->empty()) throw config_error("ablate needs --variant a|b|c|d");
  AblationVariant variant;
  try {
    variant = parse_ablation_variant(*tag);
  } catch (const std::exception&) {
    throw config_error("unknown ablation variant '" + *tag + "'");
  }
  const auto s_path = required_checkpoint(cfg, "expert_sensibility");
  const auto r_path = required_checkpoint(cfg, "expert_rationality");
  const bool needs_base = variant == AblationVariant::a || variant == AblationVariant::c;
  const auto other_path = required_checkpoint(cfg, needs_base ? "base" : "expert_discard");
  const Parameters other = load_checkpoint(other_path);
  const auto seed = cfg.get_u64("router_seed");
  const MoEModel moe =
      ablate_compose(variant, load_checkpoint(s_path), load_checkpoint(r_path), other, other, seed);
  const std::string name = "moe_ablate_" + std::string(ablation_variant_name(variant));
  const auto out = checkpoint_path(cfg, name);
  save_moe_checkpoint(moe, out);

  Manifest m(cfg.workspace(), "ablate", cfg.snapshot());
  m.add_input(s_path);
  m.add_input(r_path);
  m.add_input(other_path);
  m.add_output(out);
  m.set_seed("router_seed", seed);
  m.write("ablate-" + std::string(ablation_variant_name(variant)));
  return fmt::format("wrote {}\n", out.string());
}

std::string cmd_train_router(const PipelineConfig& cfg, const ProgressFn& progress) {
  const std::string input_name = cfg.get_string("router_input");
  const auto in_path = required_checkpoint(cfg, input_name);
  const MoEModel moe = load_moe_checkpoint(in_path);
  std::vector<Instance> all;
  Manifest m(cfg.workspace(), "train-router", cfg.snapshot());
  m.add_input(in_path);
  for (Subset s : kSubsets) {
    auto part = load_partition_instances(cfg, s);
    m.add_input(partition_file(cfg, s));
    all.insert(all.end(), part.begin(), part.end());
  }
  TrainConfig tc = train_config_from(cfg);
  tc.epochs = static_cast<int>(cfg.get_int("router_epochs"));
  tc.learning_rate = cfg.get_double("router_learning_rate");
  RouterTrainingOptions opts;
  opts.train_all_parameters = cfg.get_bool("router_train_all");
  if (progress) progress(fmt::format("stage-2 training on {} instances, {} epochs", all.size(), tc.epochs));
  TrainLog log;
  const MoEModel trained = train_router_stage2(moe, all, tc, &log, opts, render_from(cfg));
  const std::string name = std::filesystem::path(in_path).stem().string() + "_routed";
  const auto out = checkpoint_path(cfg, name);
  save_moe_checkpoint(trained, out);
  m.add_output(out);
  m.set_seed("train_seed", tc.seed);
  m.set("epoch_loss", losses_json(log));
  m.write("train-router-" + name);
  return format_losses(log) + fmt::format("wrote {}\n", out.string());
}

std::filesystem::path outputs_file(const PipelineConfig& cfg, const std::filesystem::path& model_path) {
  return cfg.path("outputs_dir") / (model_path.stem().string() + ".jsonl");
}

std::vector<Instance> load_test_instances(const PipelineConfig& cfg) {
  const auto path = cfg.path("test_instances");
  require_input(path, "synth");
  return load_instances(path);
}

json turns_to_json(const std::vector<Turn>& turns) {
  json arr = json::array();
  for (const auto& t : turns) arr.push_back({{"role", role_name(t.role)}, {"text", t.text}});
  return arr;
}

std::string cmd_generate(const PipelineConfig& cfg, const ProgressFn& progress) {
  const std::string name = cfg.get_string("model");
  const auto model_path = required_checkpoint(cfg, name);
  const AnyModel model = load_any_model(model_path);
  const auto instances = load_test_instances(cfg);
  const int max_tokens = static_cast<int>(cfg.get_int("max_tokens"));
  if (max_tokens < 0) throw config_error("max_tokens must be >= 0");
  const RenderOptions render = render_from(cfg);
  if (progress) progress(fmt::format("generating {} responses with {}", instances.size(), model_path.string()));

  std::vector<json> rows;
  for (const auto& inst : instances) {
    rows.push_back({{"id", instance_id(inst)},
                    {"context", turns_to_json(inst.context)},
                    {"hypothesis", model.generate(inst.context, max_tokens, render)},
                    {"reference", inst.target}});
  }
  const auto out = outputs_file(cfg, model_path);
  write_json_lines(out, rows);

  Manifest m(cfg.workspace(), "generate", cfg.snapshot());
  m.add_input(model_path);
  m.add_input(cfg.path("test_instances"));
  m.add_output(out);
  m.write("generate-" + model_path.stem().string());
  return fmt::format("wrote {} responses to {}\n", rows.size(), out.string());
}

std::string cmd_evaluate(const PipelineConfig& cfg) {
  Manifest m(cfg.workspace(), "evaluate", cfg.snapshot());
  json report = json::object();
  std::string text;

  std::filesystem::path hyp, ref;
  if (auto h = cfg.get("hypotheses"); h && !h->empty()) {
    hyp = *h;
    if (auto r = cfg.get("references"); r && !r->empty()) ref = *r;
    if (!std::filesystem::exists(hyp)) throw config_error("hypothesis file not found: " + hyp.string());
    if (!ref.empty() && !std::filesystem::exists(ref)) throw config_error("reference file not found: " + ref.string());
  } else if (cfg.get_list("models").empty() || cfg.has("model")) {
    hyp = outputs_file(cfg, resolve_checkpoint(cfg, cfg.get_string("model")));
    require_input(hyp, "generate");
  }
  if (!hyp.empty()) {
    const EvalRun run = evaluate_run(hyp, ref);
    report["metrics"] = run.to_json();
    text += run.table();
    m.add_input(hyp);
    if (!ref.empty()) m.add_input(ref);
  }

  const auto model_names = cfg.get_list("models");
  if (!model_names.empty()) {
    const auto instances = load_test_instances(cfg);
    m.add_input(cfg.path("test_instances"));
    json nll = json::object();
    text += fmt::format("{:<28} {:>10}\n", "model", "test NLL");
    for (const auto& name : model_names) {
      const auto path = required_checkpoint(cfg, name);
      const AnyModel model = load_any_model(path);
      const auto examples = make_examples(instances, model.config(), render_from(cfg));
      const double v = model.mean_nll(examples);
      nll[name] = v;
      text += fmt::format("{:<28} {:>10.4f}\n", name, v);
      m.add_input(path);
    }
    report["nll"] = nll;
  }

  const auto dir = cfg.path("reports_dir");
  write_text_file(dir / "evaluate.json", report.dump(2) + "\n");
  write_text_file(dir / "evaluate.txt", text);
  m.add_output(dir / "evaluate.json");
  m.add_output(dir / "evaluate.txt");
  m.write("evaluate");
  return text;
}

std::filesystem::path outputs_arg(const PipelineConfig& cfg, const std::string& key) {
  const std::string v = cfg.get_string(key);
  std::filesystem::path p = v;
  if (std::filesystem::exists(p)) return p;
  const auto under = cfg.path("outputs_dir") / (v + ".jsonl");
  require_input(under, "generate");
  return under;
}

std::string cmd_abtest_build(const PipelineConfig& cfg) {
  const auto ours_path = outputs_arg(cfg, "abtest_ours");
  const auto base_path = outputs_arg(cfg, "abtest_baseline");
  const long long n = cfg.get_int("abtest_n");
  if (n < 0) throw config_error("abtest_n must be >= 0");
  const auto seed = cfg.get_u64("abtest_seed");
  const auto tasks =
      build_tasks(load_model_outputs(ours_path), load_model_outputs(base_path), static_cast<std::size_t>(n), seed);
  const auto out = cfg.path("abtest_dir") / "tasks.jsonl";
  save_tasks(out, tasks);

  Manifest m(cfg.workspace(), "abtest-build", cfg.snapshot());
  m.add_input(ours_path);
  m.add_input(base_path);
  m.add_output(out);
  m.set_seed("abtest_seed", seed);
  m.write("abtest-build");
  return fmt::format("wrote {} tasks to {}\n", tasks.size(), out.string());
}

std::size_t annotators_from(const PipelineConfig& cfg) {
  const long long a = cfg.get_int("abtest_annotators");
  if (a < 1) throw config_error("abtest_annotators must be >= 1");
  return static_cast<std::size_t>(a);
}

std::string cmd_abtest_serve(const PipelineConfig& cfg, const ProgressFn& progress) {
  const auto dir = cfg.path("abtest_dir");
  const auto tasks = dir / "tasks.jsonl";
  require_input(tasks, "abtest build");
  AbService service(tasks, dir / "verdicts.jsonl", annotators_from(cfg));
  std::optional<std::filesystem::path> static_dir;
  if (auto s = cfg.get("abtest_static_dir"); s && !s->empty()) static_dir = *s;
  AbServer server(service, static_dir);
  const std::string host = cfg.get_string("abtest_host");
  const int port = server.bind(host, static_cast<int>(cfg.get_int("abtest_port")));
  const std::string line = fmt::format("serving {} tasks on http://{}:{}", service.task_count(), host, port);
  if (progress) progress(line);
  server.listen_after_bind();
  return line + "\n";
}

std::string cmd_abtest_report(const PipelineConfig& cfg) {
  const auto dir = cfg.path("abtest_dir");
  const auto tasks_path = dir / "tasks.jsonl";
  require_input(tasks_path, "abtest build");
  const auto log_path = dir / "verdicts.jsonl";
  const ABReport report = build_report(load_tasks(tasks_path), load_verdicts(log_path), annotators_from(cfg));
  const auto out_dir = cfg.path("reports_dir");
  write_text_file(out_dir / "abtest_report.json", report.to_json().dump(2) + "\n");
  write_text_file(out_dir / "abtest_report.txt", report.to_text());

  Manifest m(cfg.workspace(), "abtest-report", cfg.snapshot());
  m.add_input(tasks_path);
  if (std::filesystem::exists(log_path)) m.add_input(log_path);
  m.add_output(out_dir / "abtest_report.json");
  m.add_output(out_dir / "abtest_report.txt");
  m.write("abtest-report");
  return report.to_text();
}

}  // namespace

const std::vector<std::string>& command_names() { return kCommands; }

std::string instance_id(const Instance& instance) {
  return instance.dialogue_id + "#" + std::to_string(instance.context.size());
}

const ModelConfig& AnyModel::config() const { return dense ? dense->config : moe->config; }

std::string AnyModel::generate(std::span<const Turn> context, int max_tokens, const RenderOptions& render) const {
  return dense ? eemp::generate(*dense, context, max_tokens, render) : moe_generate(*moe, context, max_tokens, render);
}

double AnyModel::mean_nll(std::span<const Example> examples) const {
  return dense ? eemp::mean_nll(*dense, examples) : moe_mean_nll(*moe, examples);
}

AnyModel load_any_model(const std::filesystem::path& path) {
  const Checkpoint ck = read_checkpoint(path);
  const std::string kind = ck.header.value("kind", std::string{});
  AnyModel m;
  if (kind == "model") {
    m.dense = load_checkpoint(path);
  } else if (kind == "moe") {
    m.moe = load_moe_checkpoint(path);
  } else {
    throw CheckpointError(CheckpointError::Reason::malformed, path.string() + ": unknown checkpoint kind '" + kind + "'");
  }
  return m;
}

ModelConfig model_config_from(const PipelineConfig& cfg) {
  ModelConfig mc;
  mc.d_model = static_cast<int>(cfg.get_int("model_d_model"));
  mc.n_layers = static_cast<int>(cfg.get_int("model_n_layers"));
  mc.n_heads = static_cast<int>(cfg.get_int("model_n_heads"));
  mc.d_ff = static_cast<int>(cfg.get_int("model_d_ff"));
  mc.max_seq = static_cast<int>(cfg.get_int("model_max_seq"));
  mc.seed = cfg.get_u64("model_seed");
  mc.validate();
  return mc;
}

TrainConfig train_config_from(const PipelineConfig& cfg) {
  TrainConfig tc;
  tc.learning_rate = cfg.get_double("train_learning_rate");
  tc.batch_size = static_cast<int>(cfg.get_int("train_batch_size"));
  tc.epochs = static_cast<int>(cfg.get_int("train_epochs"));
  const std::string opt = cfg.get_string("train_optimizer");
  if (opt == "adam") {
    tc.optimizer = OptimizerKind::adam;
  } else if (opt == "sgd") {
    tc.optimizer = OptimizerKind::sgd;
  } else {
    throw config_error("train_optimizer must be adam or sgd");
  }
  tc.beta1 = cfg.get_double("train_beta1");
  tc.beta2 = cfg.get_double("train_beta2");
  tc.epsilon = cfg.get_double("train_epsilon");
  tc.grad_clip_norm = cfg.get_double("train_grad_clip");
  tc.seed = cfg.get_u64("train_seed");
  tc.validate();
  return tc;
}

std::filesystem::path resolve_checkpoint(const PipelineConfig& cfg, const std::string& name_or_path) {
  std::filesystem::path p = name_or_path;
  if (name_or_path.find('/') != std::string::npos || p.extension() == ".ckpt") return p;
  return checkpoint_path(cfg, name_or_path);
}

std::string run_command(const std::string& name, const PipelineConfig& config, const ProgressFn& progress) {
  if (std::find(kCommands.begin(), kCommands.end(), name) == kCommands.end()) {
    throw config_error("unknown subcommand '" + name + "'");
  }
  WorkspaceLock lock(config.workspace());
  if (name == "ingest") return cmd_ingest(config);
  if (name == "synth") return cmd_synth(config);
  if (name == "score") return cmd_score(config, progress);
  if (name == "select") return cmd_select(config);
  if (name == "stats") return cmd_stats(config);
  if (name == "init-base") return cmd_init_base(config, progress);
  if (name == "train-expert") return cmd_train_expert(config, progress);
  if (name == "compose-moe") return cmd_compose(config);
  if (name == "ablate") return cmd_ablate(config);
  if (name == "train-router") return cmd_train_router(config, progress);
  if (name == "generate") return cmd_generate(config, progress);
  if (name == "evaluate") return cmd_evaluate(config);
  if (name == "abtest-build") return cmd_abtest_build(config);
  if (name == "abtest-serve") return cmd_abtest_serve(config, progress);
  return cmd_abtest_report(config);
}

}  // namespace eemp
