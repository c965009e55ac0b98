// eemp command-line front end. Everything goes through the C API.
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "eemp/eemp.h"

namespace {

struct KeyInfo {
  std::string name, default_value, help;
};

std::string take(char* s) {
  std::string out = s ? s : "";
  eemp_string_free(s);
  return out;
}

std::vector<KeyInfo> registered_keys() {
  char* raw = nullptr;
  eemp_config_keys(&raw);
  std::vector<KeyInfo> keys;
  std::istringstream in(take(raw));
  std::string line;
  while (std::getline(in, line)) {
    KeyInfo k;
    std::istringstream fields(line);
    std::getline(fields, k.name, '\t');
    std::getline(fields, k.default_value, '\t');
    std::getline(fields, k.help);
    keys.push_back(std::move(k));
  }
  return keys;
}

std::string flag_name(std::string key) {
  for (char& c : key) {
    if (c == '_') c = '-';
  }
  return "--" + key;
}

int fail(eemp_status status) {
  std::cerr << "eemp: " << eemp_last_error() << "\n";
  return static_cast<int>(status);
}

void print_progress(const char* line, void*) {
  std::cerr << line << "\n";
  std::cerr.flush();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data selection, expert training and MoE composition pipeline"};
  app.set_version_flag("--version", std::string(eemp_version()));
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("-c,--config", config_path, "key = value configuration file");

  // Every config key is also a flag; flags beat the config file.
  const auto keys = registered_keys();
  std::map<std::string, std::string> flag_values;
  for (const auto& k : keys) {
    const bool is_bool = k.default_value == "true" || k.default_value == "false";
    std::string help = k.help;
    if (!k.default_value.empty()) help += " [" + k.default_value + "]";
    if (is_bool) {
      app.add_flag(flag_name(k.name), flag_values[k.name], help)->group("Config keys");
    } else {
      app.add_option(flag_name(k.name), flag_values[k.name], help)->group("Config keys");
    }
  }

  std::map<CLI::App*, std::string> commands;
  auto add = [&](CLI::App* parent, const std::string& name, const std::string& command, const std::string& help) {
    CLI::App* sub = parent->add_subcommand(name, help);
    sub->fallthrough();
    commands[sub] = command;
    return sub;
  };
  add(&app, "ingest", "ingest", "import a raw corpus into the workspace");
  add(&app, "synth", "synth", "write the synthetic copy/reverse corpus and test instances");
  add(&app, "score", "score", "score every dialogue with the judge endpoint");
  add(&app, "select", "select", "partition the scored corpus at --threshold");
  add(&app, "stats", "stats", "selection statistics across --thresholds and the score histogram");
  add(&app, "init-base", "init-base", "create the seed model");
  add(&app, "train-expert", "train-expert", "fine-tune the seed model on one --subset");
  add(&app, "compose-moe", "compose-moe", "merge the two experts into a routed model");
  add(&app, "ablate", "ablate", "compose an ablation model (--variant a|b|c|d)");
  add(&app, "train-router", "train-router", "stage-2 router training on the full selection");
  add(&app, "generate", "generate", "greedy responses for the test instances");
  add(&app, "evaluate", "evaluate", "BLEU/ROUGE/Distinct and test NLL");
  CLI::App* abtest = app.add_subcommand("abtest", "blinded pairwise human evaluation");
  abtest->fallthrough();
  abtest->require_subcommand(1);
  add(abtest, "build", "abtest-build", "sample comparison tasks");
  add(abtest, "serve", "abtest-serve", "serve tasks and record verdicts over HTTP");
  add(abtest, "report", "abtest-report", "unblind and aggregate verdicts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : EEMP_ERR_CONFIG;
  }

  eemp_config* raw_config = nullptr;
  eemp_status st = config_path.empty() ? eemp_config_new(&raw_config) : eemp_config_load(config_path.c_str(), &raw_config);
  if (st != EEMP_OK) return fail(st);
  std::unique_ptr<eemp_config, decltype(&eemp_config_free)> config(raw_config, &eemp_config_free);
  for (const auto& k : keys) {
    if (app.count(flag_name(k.name)) == 0) continue;
    st = eemp_config_set(config.get(), k.name.c_str(), flag_values[k.name].c_str());
    if (st != EEMP_OK) return fail(st);
  }

  std::string command;
  for (const auto& [sub, name] : commands) {
    if (sub->parsed()) command = name;
  }

  char* report = nullptr;
  st = eemp_run(command.c_str(), config.get(), &print_progress, nullptr, &report);
  if (st != EEMP_OK) return fail(st);
  std::cout << take(report);
  return 0;
}
