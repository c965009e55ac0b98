#include <algorithm>
#include <fstream>
#include <map>

#include "common/error.hpp"
#include "corpus/corpus.hpp"

namespace eemp {
namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string unescape(std::string s) {
  static const std::string kComma = "_comma_";
  for (auto pos = s.find(kComma); pos != std::string::npos; pos = s.find(kComma, pos + 1)) {
    s.replace(pos, kComma.size(), ",");
  }
  return normalize_text(s);
}

}  // namespace

// ED ships without CSV quoting: commas inside text are written as `_comma_`,
// so a plain split is exact for the first six columns.
std::vector<Dialogue> import_ed_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot read " + path.string());

  struct Row {
    int utterance_idx;
    std::string text;
  };
  std::vector<std::string> order;
  std::map<std::string, Dialogue> by_id;
  std::map<std::string, std::vector<Row>> rows;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = split_commas(line);
    if (line_no == 1 && !f.empty() && f[0] == "conv_id") continue;
    if (f.size() < 6) {
      throw data_error(path.string() + ":" + std::to_string(line_no) +
                       ": expected at least 6 columns, found " + std::to_string(f.size()));
    }
    int idx = 0;
    try {
      idx = std::stoi(f[1]);
    } catch (const std::exception&) {
      throw data_error(path.string() + ":" + std::to_string(line_no) + ": bad utterance_idx");
    }
    auto [it, inserted] = by_id.try_emplace(f[0]);
    if (inserted) {
      order.push_back(f[0]);
      it->second.id = f[0];
      it->second.emotion = unescape(f[2]);
      it->second.situation = unescape(f[3]);
    }
    rows[f[0]].push_back({idx, unescape(f[5])});
  }

  std::vector<Dialogue> out;
  out.reserve(order.size());
  for (const auto& id : order) {
    auto& d = by_id[id];
    auto& rs = rows[id];
    std::stable_sort(rs.begin(), rs.end(),
                     [](const Row& a, const Row& b) { return a.utterance_idx < b.utterance_idx; });
    for (std::size_t i = 0; i < rs.size(); ++i) {
      d.turns.push_back({i % 2 == 0 ? Role::speaker : Role::listener, rs[i].text});
    }
    validate_dialogue(d);
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace eemp
