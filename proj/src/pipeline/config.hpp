#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "common/json_lines.hpp"

namespace eemp {

struct ConfigKey {
  std::string_view name;
  std::string_view default_value;  // empty: unset
  std::string_view help;
};

/// Every recognised key. The CLI mirrors each as --<name with '-' for '_'>.
const std::vector<ConfigKey>& config_keys();
const ConfigKey* find_config_key(std::string_view name);

/// Plain-text configuration: one `key = value` per line, '#' starts a
/// comment, blank lines ignored. Unknown or repeated keys are config errors.
class PipelineConfig {
 public:
  static PipelineConfig load(const std::filesystem::path& path);
  static PipelineConfig parse(std::string_view text, const std::string& origin = "<config>");

  /// Later calls win, so flags applied after load() take precedence.
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  /// Explicit value, else the registered default, else nullopt.
  std::optional<std::string> get(const std::string& key) const;
  std::string get_string(const std::string& key) const;  // config error when unset
  long long get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;  // comma separated

  /// Workspace-relative path for a path key.
  std::filesystem::path path(const std::string& key) const;
  std::filesystem::path workspace() const;

  /// Effective values of every key (explicit and defaults), sorted.
  json snapshot() const;
  const std::map<std::string, std::string>& explicit_values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace eemp
