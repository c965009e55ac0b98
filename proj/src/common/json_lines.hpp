#pragma once

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace eemp {

using json = nlohmann::json;

/// Calls `fn(object, line_number)` for every non-blank line of a JSON-lines
/// file. Parse failures raise a data error naming the 1-based line.
void for_each_json_line(const std::filesystem::path& path,
                        const std::function<void(const json&, std::size_t)>& fn);

void write_json_lines(const std::filesystem::path& path, const std::vector<json>& rows);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace eemp
