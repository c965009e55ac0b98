#pragma once

#include <filesystem>
#include <string>

#include "common/error.hpp"
#include "common/json_lines.hpp"

namespace eemp {

/// Raised when an input produced by an earlier subcommand is absent.
Error upstream_missing(const std::filesystem::path& path, const std::string& producer);
/// Throws upstream_missing unless `path` exists.
void require_input(const std::filesystem::path& path, const std::string& producer);

/// Run manifest: command, tool version, config snapshot, seeds, and the
/// content hashes of every input and output. Inputs also point at the
/// manifest that produced them, when one exists in the workspace, which
/// links manifests into a provenance chain.
class Manifest {
 public:
  Manifest(std::filesystem::path workspace, std::string command, json config_snapshot);

  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);
  void set_seed(const std::string& name, std::uint64_t seed);
  void set(const std::string& key, json value);

  /// Writes <workspace>/manifests/<name>.json and returns its path.
  std::filesystem::path write(const std::string& name);
  const json& body() const { return body_; }

 private:
  std::filesystem::path workspace_;
  json body_;
};

std::filesystem::path manifests_dir(const std::filesystem::path& workspace);

/// Exclusive advisory lock on <workspace>/.eemp.lock for the lifetime of the object.
class WorkspaceLock {
 public:
  explicit WorkspaceLock(const std::filesystem::path& workspace);
  ~WorkspaceLock();
  WorkspaceLock(const WorkspaceLock&) = delete;
  WorkspaceLock& operator=(const WorkspaceLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace eemp
