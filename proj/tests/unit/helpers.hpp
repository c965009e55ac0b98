#pragma once

#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

namespace test {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(EEMP_FIXTURES_DIR) / name; }

/// Fresh directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("eemp-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace test
