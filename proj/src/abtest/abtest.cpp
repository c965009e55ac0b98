#include "abtest/abtest.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <ctime>

#include "common/rng.hpp"

namespace eemp {
namespace {

json turns_json(const std::vector<Turn>& turns) {
  json arr = json::array();
  for (const auto& t : turns) arr.push_back({{"role", role_name(t.role)}, {"text", t.text}});
  return arr;
}

std::vector<Turn> turns_from(const json& arr) {
  std::vector<Turn> out;
  for (const auto& t : arr) out.push_back({parse_role(t.at("role").get<std::string>()), t.at("text").get<std::string>()});
  return out;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

double pct(std::size_t part, std::size_t total) {
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(part) / static_cast<double>(total);
}

json counts_json(const OutcomeCounts& c) {
  return {{"win", c.win},
          {"lose", c.lose},
          {"tie", c.tie},
          {"total", c.total()},
          {"win_pct", pct(c.win, c.total())},
          {"lose_pct", pct(c.lose, c.total())},
          {"tie_pct", pct(c.tie, c.total())}};
}

void tally(OutcomeCounts& c, Side served, bool ours_on_left) {
  if (served == Side::tie) {
    ++c.tie;
  } else if ((served == Side::left) == ours_on_left) {
    ++c.win;
  } else {
    ++c.lose;
  }
}

}  // namespace

std::string_view side_name(Side s) {
  switch (s) {
    case Side::left: return "left";
    case Side::right: return "right";
    case Side::tie: return "tie";
  }
  return "?";
}

Side parse_side(std::string_view name) {
  if (name == "left") return Side::left;
  if (name == "right") return Side::right;
  if (name == "tie") return Side::tie;
  throw AbError("malformed_verdict", 400, "outcome must be left, right or tie, got '" + std::string(name) + "'");
}

json task_to_json(const PairTask& t) {
  json j = task_payload(t);
  j["dialogue_id"] = t.dialogue_id;
  j["ours_side"] = t.ours_on_left ? "left" : "right";
  return j;
}

PairTask task_from_json(const json& obj) {
  PairTask t;
  t.task_id = obj.at("task_id").get<std::string>();
  t.dialogue_id = obj.value("dialogue_id", std::string{});
  t.context = turns_from(obj.at("context"));
  t.response_left = obj.at("response_left").get<std::string>();
  t.response_right = obj.at("response_right").get<std::string>();
  t.ours_on_left = obj.at("ours_side").get<std::string>() == "left";
  return t;
}

json task_payload(const PairTask& t) {
  return {{"task_id", t.task_id},
          {"context", turns_json(t.context)},
          {"response_left", t.response_left},
          {"response_right", t.response_right}};
}

std::vector<ModelOutput> load_model_outputs(const std::filesystem::path& path) {
  std::vector<ModelOutput> out;
  for_each_json_line(path, [&](const json& obj, std::size_t line) {
    try {
      ModelOutput m;
      m.id = obj.at("id").is_string() ? obj.at("id").get<std::string>() : obj.at("id").dump();
      m.response = obj.contains("response") ? obj.at("response").get<std::string>()
                                            : obj.at("hypothesis").get<std::string>();
      if (obj.contains("context")) m.context = turns_from(obj.at("context"));
      out.push_back(std::move(m));
    } catch (const std::exception& e) {
      throw data_error(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

std::vector<PairTask> build_tasks(const std::vector<ModelOutput>& ours, const std::vector<ModelOutput>& baseline,
                                  std::size_t n, std::uint64_t seed) {
  std::map<std::string, const ModelOutput*> base_by_id;
  for (const auto& b : baseline) base_by_id[b.id] = &b;
  std::vector<const ModelOutput*> shared;
  for (const auto& o : ours) {
    if (base_by_id.count(o.id)) shared.push_back(&o);
  }
  std::sort(shared.begin(), shared.end(), [](auto* a, auto* b) { return a->id < b->id; });
  if (shared.size() < n) {
    throw data_error(fmt::format("only {} shared ids between the two output sets, {} requested", shared.size(), n));
  }
  Rng sample_rng(seed);
  shuffle_in_place(shared, sample_rng);
  Rng coin(seed ^ 0xA5A5A5A55A5A5A5AULL);
  std::vector<PairTask> tasks;
  for (std::size_t i = 0; i < n; ++i) {
    const ModelOutput& o = *shared[i];
    const ModelOutput& b = *base_by_id[o.id];
    PairTask t;
    t.task_id = fmt::format("t{:04d}", i + 1);
    t.dialogue_id = o.id;
    t.context = o.context.empty() ? b.context : o.context;
    t.ours_on_left = coin.bernoulli(0.5);
    t.response_left = t.ours_on_left ? o.response : b.response;
    t.response_right = t.ours_on_left ? b.response : o.response;
    tasks.push_back(std::move(t));
  }
  return tasks;
}

json verdict_to_json(const Verdict& v) {
  json outcomes = json::object();
  for (std::size_t i = 0; i < kDimensions.size(); ++i) outcomes[std::string(kDimensions[i])] = side_name(v.outcomes[i]);
  json j = {{"task_id", v.task_id}, {"annotator_id", v.annotator_id}, {"outcomes", outcomes}, {"timestamp", v.timestamp}};
  if (!v.request_id.empty()) j["request_id"] = v.request_id;
  return j;
}

Verdict verdict_from_json(const json& obj) {
  auto malformed = [](const std::string& m) { return AbError("malformed_verdict", 400, m); };
  if (!obj.is_object()) throw malformed("verdict must be a JSON object");
  Verdict v;
  auto str = [&](const char* key, bool required) -> std::string {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
      if (required) throw malformed(std::string("missing '") + key + "'");
      return {};
    }
    if (!it->is_string()) throw malformed(std::string("'") + key + "' must be a string");
    return it->get<std::string>();
  };
  v.task_id = str("task_id", true);
  v.annotator_id = str("annotator_id", true);
  v.timestamp = str("timestamp", false);
  v.request_id = str("request_id", false);
  if (v.annotator_id.empty()) throw malformed("empty annotator_id");
  auto it = obj.find("outcomes");
  if (it == obj.end() || !it->is_object()) throw malformed("missing 'outcomes' object");
  if (it->size() != kDimensions.size()) throw malformed("outcomes must cover exactly the four dimensions");
  for (std::size_t i = 0; i < kDimensions.size(); ++i) {
    auto d = it->find(std::string(kDimensions[i]));
    if (d == it->end() || !d->is_string()) {
      throw malformed("missing outcome for dimension '" + std::string(kDimensions[i]) + "'");
    }
    v.outcomes[i] = parse_side(d->get<std::string>());
  }
  return v;
}

Side overall_side(const std::array<Side, 4>& outcomes) {
  std::array<int, 3> votes{};
  for (Side s : outcomes) ++votes[static_cast<int>(s)];
  const int best = *std::max_element(votes.begin(), votes.end());
  int leaders = 0;
  Side leader = Side::tie;
  for (int s = 0; s < 3; ++s) {
    if (votes[s] == best) {
      ++leaders;
      leader = static_cast<Side>(s);
    }
  }
  return leaders == 1 ? leader : Side::tie;
}

ABReport build_report(const std::vector<PairTask>& tasks, const std::vector<Verdict>& verdicts,
                      std::size_t annotators_per_task) {
  std::map<std::string, const PairTask*> by_id;
  for (const auto& t : tasks) by_id[t.task_id] = &t;
  ABReport r;
  r.tasks = tasks.size();
  for (auto d : kDimensions) r.dimensions[std::string(d)] = {};
  std::set<std::string> annotators;
  std::map<std::string, std::size_t> per_task;
  for (const auto& v : verdicts) {
    auto it = by_id.find(v.task_id);
    if (it == by_id.end()) continue;
    const bool ours_left = it->second->ours_on_left;
    for (std::size_t i = 0; i < kDimensions.size(); ++i) {
      tally(r.dimensions[std::string(kDimensions[i])], v.outcomes[i], ours_left);
    }
    tally(r.overall, overall_side(v.outcomes), ours_left);
    annotators.insert(v.annotator_id);
    ++per_task[v.task_id];
    ++r.verdicts;
  }
  r.annotators = annotators.size();
  for (const auto& [id, n] : per_task) r.fully_covered_tasks += n >= annotators_per_task ? 1 : 0;
  return r;
}

json ABReport::to_json() const {
  json dims = json::object();
  for (const auto& [name, c] : dimensions) dims[name] = counts_json(c);
  return {{"tasks", tasks},
          {"verdicts", verdicts},
          {"annotators", annotators},
          {"fully_covered_tasks", fully_covered_tasks},
          {"dimensions", dims},
          {"overall", counts_json(overall)}};
}

std::string ABReport::to_text() const {
  std::string out = fmt::format("tasks {}  verdicts {}  annotators {}  fully covered {}\n", tasks, verdicts,
                                annotators, fully_covered_tasks);
  out += fmt::format("{:<16} {:>8} {:>8} {:>8}\n", "dimension", "win%", "tie%", "lose%");
  auto row = [&](const std::string& name, const OutcomeCounts& c) {
    out += fmt::format("{:<16} {:>8.1f} {:>8.1f} {:>8.1f}\n", name, pct(c.win, c.total()), pct(c.tie, c.total()),
                       pct(c.lose, c.total()));
  };
  for (auto d : kDimensions) row(std::string(d), dimensions.at(std::string(d)));
  row("overall", overall);
  return out;
}

void save_tasks(const std::filesystem::path& path, const std::vector<PairTask>& tasks) {
  std::vector<json> rows;
  for (const auto& t : tasks) rows.push_back(task_to_json(t));
  write_json_lines(path, rows);
}

std::vector<PairTask> load_tasks(const std::filesystem::path& path) {
  std::vector<PairTask> out;
  for_each_json_line(path, [&](const json& obj, std::size_t line) {
    try {
      out.push_back(task_from_json(obj));
    } catch (const json::exception& e) {
      throw data_error(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

std::vector<Verdict> load_verdicts(const std::filesystem::path& path) {
  std::vector<Verdict> out;
  if (!std::filesystem::exists(path)) return out;
  for_each_json_line(path, [&](const json& obj, std::size_t) { out.push_back(verdict_from_json(obj)); });
  return out;
}

AbService::AbService(std::filesystem::path tasks_path, std::filesystem::path verdict_log_path,
                     std::size_t annotators_per_task)
    : log_path_(std::move(verdict_log_path)), per_task_(annotators_per_task) {
  tasks_ = load_tasks(tasks_path);
  state_.resize(tasks_.size());
  for (std::size_t i = 0; i < tasks_.size(); ++i) index_[tasks_[i].task_id] = i;
  for (auto& v : load_verdicts(log_path_)) {
    if (!index_.count(v.task_id)) throw data_error("verdict log references unknown task '" + v.task_id + "'");
    apply(v);
  }
}

void AbService::apply(const Verdict& v) {
  auto& st = state_[index_.at(v.task_id)];
  st.judged_by.insert(v.annotator_id);
  st.reserved_by.erase(v.annotator_id);
  request_ids_[{v.task_id, v.annotator_id}] = v.request_id;
  verdicts_.push_back(v);
}

void AbService::append_to_log(const Verdict& v) {
  if (log_path_.has_parent_path()) std::filesystem::create_directories(log_path_.parent_path());
  const std::string line = verdict_to_json(v).dump() + "\n";
  const int fd = ::open(log_path_.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw io_error("cannot open verdict log " + log_path_.string());
  const auto written = ::write(fd, line.data(), line.size());
  const int synced = ::fsync(fd);
  ::close(fd);
  if (written != static_cast<ssize_t>(line.size()) || synced != 0) {
    throw io_error("failed to append to verdict log " + log_path_.string());
  }
}

std::optional<PairTask> AbService::next_task(const std::string& annotator_id) {
  std::lock_guard lock(mutex_);
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    if (state_[i].reserved_by.count(annotator_id)) return tasks_[i];
  }
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    auto& st = state_[i];
    if (st.judged_by.count(annotator_id)) continue;
    if (st.judged_by.size() + st.reserved_by.size() >= per_task_) continue;
    st.reserved_by.insert(annotator_id);
    return tasks_[i];
  }
  return std::nullopt;
}

bool AbService::submit_verdict(Verdict v) {
  std::lock_guard lock(mutex_);
  auto it = index_.find(v.task_id);
  if (it == index_.end()) throw AbError("unknown_task", 404, "unknown task id '" + v.task_id + "'");
  auto& st = state_[it->second];
  if (st.judged_by.count(v.annotator_id)) {
    auto prev = request_ids_.find({v.task_id, v.annotator_id});
    if (!v.request_id.empty() && prev != request_ids_.end() && prev->second == v.request_id) return false;
    throw AbError("duplicate_verdict", 409,
                  "annotator '" + v.annotator_id + "' already judged task '" + v.task_id + "'");
  }
  if (st.judged_by.size() >= per_task_) {
    throw AbError("task_full", 409, "task '" + v.task_id + "' already has enough verdicts");
  }
  if (v.timestamp.empty()) v.timestamp = utc_timestamp();
  append_to_log(v);
  apply(v);
  return true;
}

ABReport AbService::report() const {
  std::lock_guard lock(mutex_);
  return build_report(tasks_, verdicts_, per_task_);
}

json AbService::progress() const {
  std::lock_guard lock(mutex_);
  std::map<std::string, std::size_t> per_annotator;
  std::size_t complete = 0;
  for (const auto& v : verdicts_) ++per_annotator[v.annotator_id];
  for (const auto& st : state_) complete += st.judged_by.size() >= per_task_ ? 1 : 0;
  return {{"tasks", tasks_.size()},
          {"verdicts", verdicts_.size()},
          {"required_verdicts", tasks_.size() * per_task_},
          {"completed_tasks", complete},
          {"per_annotator", per_annotator}};
}

}  // namespace eemp
