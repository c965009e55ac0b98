#include "corpus/corpus.hpp"

#include <unordered_set>

#include "common/error.hpp"

namespace eemp {

std::string_view role_name(Role role) {
  return role == Role::speaker ? "speaker" : "listener";
}

Role parse_role(std::string_view name) {
  if (name == "speaker") return Role::speaker;
  if (name == "listener") return Role::listener;
  throw data_error("unknown role '" + std::string(name) + "'");
}

std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r';
    if (space) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

void validate_dialogue(const Dialogue& d) {
  auto fail = [&](const std::string& what) {
    throw data_error("dialogue '" + d.id + "': " + what);
  };
  if (d.id.empty()) throw data_error("dialogue with empty id");
  if (d.turns.empty()) fail("no turns");
  for (std::size_t i = 0; i < d.turns.size(); ++i) {
    const Role expected = i % 2 == 0 ? Role::speaker : Role::listener;
    if (d.turns[i].role != expected) {
      fail("turn " + std::to_string(i) + " breaks speaker/listener alternation");
    }
    if (normalize_text(d.turns[i].text).empty()) {
      fail("turn " + std::to_string(i) + " has empty text");
    }
  }
}

json dialogue_to_json(const Dialogue& d) {
  json turns = json::array();
  for (const auto& t : d.turns) {
    turns.push_back({{"role", role_name(t.role)}, {"text", t.text}});
  }
  return {{"id", d.id}, {"emotion", d.emotion}, {"situation", d.situation}, {"turns", turns}};
}

namespace {

std::string string_field(const json& obj, const char* key, bool required) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    if (required) throw data_error(std::string("missing field '") + key + "'");
    return {};
  }
  if (!it->is_string()) throw data_error(std::string("field '") + key + "' is not a string");
  return it->get<std::string>();
}

std::vector<Turn> turns_from_json(const json& arr) {
  if (!arr.is_array()) throw data_error("'turns' is not an array");
  std::vector<Turn> turns;
  turns.reserve(arr.size());
  for (const auto& t : arr) {
    if (!t.is_object()) throw data_error("turn is not an object");
    turns.push_back({parse_role(string_field(t, "role", true)),
                     normalize_text(string_field(t, "text", true))});
  }
  return turns;
}

json turns_to_json(const std::vector<Turn>& turns) {
  json arr = json::array();
  for (const auto& t : turns) arr.push_back({{"role", role_name(t.role)}, {"text", t.text}});
  return arr;
}

}  // namespace

Dialogue dialogue_from_json(const json& obj) {
  if (!obj.is_object()) throw data_error("dialogue is not a JSON object");
  Dialogue d;
  d.id = string_field(obj, "id", true);
  d.emotion = normalize_text(string_field(obj, "emotion", false));
  d.situation = normalize_text(string_field(obj, "situation", false));
  auto it = obj.find("turns");
  if (it == obj.end()) throw data_error("dialogue '" + d.id + "': missing field 'turns'");
  d.turns = turns_from_json(*it);
  return d;
}

json instance_to_json(const Instance& inst) {
  return {{"dialogue_id", inst.dialogue_id},
          {"context", turns_to_json(inst.context)},
          {"target", inst.target}};
}

Instance instance_from_json(const json& obj) {
  if (!obj.is_object()) throw data_error("instance is not a JSON object");
  Instance inst;
  inst.dialogue_id = string_field(obj, "dialogue_id", true);
  inst.context = turns_from_json(obj.at("context"));
  inst.target = normalize_text(string_field(obj, "target", true));
  if (inst.context.empty() || inst.context.back().role != Role::speaker) {
    throw data_error("instance of '" + inst.dialogue_id + "': context must end with a speaker turn");
  }
  return inst;
}

std::vector<Dialogue> load_corpus(const std::filesystem::path& path) {
  std::vector<Dialogue> out;
  std::unordered_set<std::string> seen;
  for_each_json_line(path, [&](const json& obj, std::size_t line) {
    Dialogue d;
    try {
      d = dialogue_from_json(obj);
    } catch (const Error& e) {
      throw data_error(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
    validate_dialogue(d);
    if (!seen.insert(d.id).second) throw data_error("duplicate dialogue id '" + d.id + "'");
    out.push_back(std::move(d));
  });
  return out;
}

void save_corpus(const std::filesystem::path& path, std::span<const Dialogue> dialogues) {
  std::vector<json> rows;
  rows.reserve(dialogues.size());
  for (const auto& d : dialogues) rows.push_back(dialogue_to_json(d));
  write_json_lines(path, rows);
}

std::size_t listener_turn_count(const Dialogue& d) {
  std::size_t n = 0;
  for (const auto& t : d.turns) n += t.role == Role::listener ? 1 : 0;
  return n;
}

std::vector<Instance> expand_instances(std::span<const Dialogue> dialogues) {
  std::vector<Instance> out;
  for (const auto& d : dialogues) {
    for (std::size_t i = 1; i < d.turns.size(); ++i) {
      if (d.turns[i].role != Role::listener) continue;
      Instance inst;
      inst.dialogue_id = d.id;
      inst.context.assign(d.turns.begin(), d.turns.begin() + static_cast<std::ptrdiff_t>(i));
      inst.target = d.turns[i].text;
      out.push_back(std::move(inst));
    }
  }
  return out;
}

std::vector<Instance> load_instances(const std::filesystem::path& path) {
  std::vector<Instance> out;
  for_each_json_line(path, [&](const json& obj, std::size_t line) {
    try {
      out.push_back(instance_from_json(obj));
    } catch (const Error& e) {
      throw data_error(path.string() + ":" + std::to_string(line) + ": " + e.what());
    } catch (const json::exception& e) {
      throw data_error(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

void save_instances(const std::filesystem::path& path, std::span<const Instance> instances) {
  std::vector<json> rows;
  rows.reserve(instances.size());
  for (const auto& inst : instances) rows.push_back(instance_to_json(inst));
  write_json_lines(path, rows);
}

}  // namespace eemp
