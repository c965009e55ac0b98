#include "common/json_lines.hpp"

#include <fstream>
#include <sstream>

#include "common/error.hpp"

namespace eemp {

void for_each_json_line(const std::filesystem::path& path,
                        const std::function<void(const json&, std::size_t)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot read " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw data_error(path.string() + ":" + std::to_string(line_no) +
                       ": malformed JSON line (" + e.what() + ")");
    }
    fn(obj, line_no);
  }
}

void write_json_lines(const std::filesystem::path& path, const std::vector<json>& rows) {
  std::string text;
  for (const auto& row : rows) {
    text += row.dump(-1, ' ', false, json::error_handler_t::replace);
    text += '\n';
  }
  write_text_file(path, text);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write " + path.string());
  out << text;
  if (!out) throw io_error("write failed for " + path.string());
}

}  // namespace eemp
