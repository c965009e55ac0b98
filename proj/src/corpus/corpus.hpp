#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "common/json_lines.hpp"

namespace eemp {

enum class Role { speaker, listener };

std::string_view role_name(Role role);
Role parse_role(std::string_view name);

struct Turn {
  Role role = Role::speaker;
  std::string text;

  bool operator==(const Turn&) const = default;
};

struct Dialogue {
  std::string id;
  std::string emotion;
  std::string situation;
  std::vector<Turn> turns;

  bool operator==(const Dialogue&) const = default;
};

/// One (context, target) training pair. The context always ends with a
/// speaker turn and the target is the listener turn that followed it.
struct Instance {
  std::string dialogue_id;
  std::vector<Turn> context;
  std::string target;

  bool operator==(const Instance&) const = default;
};

/// Trims both ends and collapses internal whitespace runs (space, tab, CR, LF) to one space.
std::string normalize_text(std::string_view text);

/// Throws a data error naming the dialogue id on any invariant violation.
void validate_dialogue(const Dialogue& dialogue);

json dialogue_to_json(const Dialogue& dialogue);
/// Parses and normalizes; does not validate.
Dialogue dialogue_from_json(const json& obj);

json instance_to_json(const Instance& instance);
Instance instance_from_json(const json& obj);

std::vector<Dialogue> load_corpus(const std::filesystem::path& path);
void save_corpus(const std::filesystem::path& path, std::span<const Dialogue> dialogues);

std::vector<Instance> expand_instances(std::span<const Dialogue> dialogues);

std::vector<Instance> load_instances(const std::filesystem::path& path);
void save_instances(const std::filesystem::path& path, std::span<const Instance> instances);

/// Number of listener turns, i.e. the number of instances the dialogue expands to.
std::size_t listener_turn_count(const Dialogue& dialogue);

/// Converts the public EmpatheticDialogues CSV layout
/// (conv_id,utterance_idx,context,prompt,speaker_idx,utterance,...) into
/// dialogues. `_comma_` escapes are restored.
std::vector<Dialogue> import_ed_csv(const std::filesystem::path& path);

}  // namespace eemp
