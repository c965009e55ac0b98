#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace eemp {

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

/// Raw 32-byte SHA-256 digest.
std::string sha256_raw(std::string_view bytes);

std::string sha256_file(const std::filesystem::path& path);

}  // namespace eemp
