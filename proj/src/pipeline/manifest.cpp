#include "pipeline/manifest.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <chrono>
#include <ctime>

#include "common/hash.hpp"

namespace eemp {
namespace {

std::string timestamp_utc() {
  const std::time_t tt = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string canonical_string(const std::filesystem::path& p) {
  std::error_code ec;
  auto c = std::filesystem::weakly_canonical(p, ec);
  return ec ? p.lexically_normal().string() : c.string();
}

/// Manifest in the workspace whose outputs list `path`, with its hash.
json producer_of(const std::filesystem::path& workspace, const std::filesystem::path& path) {
  const auto dir = manifests_dir(workspace);
  if (!std::filesystem::is_directory(dir)) return nullptr;
  const std::string wanted = canonical_string(path);
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    try {
      const std::string text = read_text_file(entry.path());
      const json m = json::parse(text);
      for (const auto& out : m.value("outputs", json::array())) {
        if (canonical_string(out.at("path").get<std::string>()) == wanted) {
          return {{"path", entry.path().string()}, {"sha256", sha256_hex(text)}};
        }
      }
    } catch (const std::exception&) {
      continue;
    }
  }
  return nullptr;
}

json file_ref(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return {{"path", path.string()}, {"sha256", nullptr}};
  return {{"path", path.string()}, {"sha256", sha256_file(path)}};
}

}  // namespace

Error upstream_missing(const std::filesystem::path& path, const std::string& producer) {
  return Error(ErrorKind::upstream_missing,
               "missing " + path.string() + " (produced by `eemp " + producer + "`)");
}

void require_input(const std::filesystem::path& path, const std::string& producer) {
  if (!std::filesystem::exists(path)) throw upstream_missing(path, producer);
}

std::filesystem::path manifests_dir(const std::filesystem::path& workspace) { return workspace / "manifests"; }

Manifest::Manifest(std::filesystem::path workspace, std::string command, json config_snapshot)
    : workspace_(std::move(workspace)) {
  body_ = {{"command", std::move(command)},
           {"tool_version", EEMP_VERSION_STRING},
           {"config", std::move(config_snapshot)},
           {"seeds", json::object()},
           {"inputs", json::array()},
           {"outputs", json::array()}};
}

void Manifest::add_input(const std::filesystem::path& path) {
  json ref = file_ref(path);
  if (json producer = producer_of(workspace_, path); !producer.is_null()) ref["manifest"] = producer;
  body_["inputs"].push_back(std::move(ref));
}

void Manifest::add_output(const std::filesystem::path& path) { body_["outputs"].push_back(file_ref(path)); }

void Manifest::set_seed(const std::string& name, std::uint64_t seed) { body_["seeds"][name] = seed; }

void Manifest::set(const std::string& key, json value) { body_[key] = std::move(value); }

std::filesystem::path Manifest::write(const std::string& name) {
  json out = body_;
  out["created_at"] = timestamp_utc();
  const auto path = manifests_dir(workspace_) / (name + ".json");
  write_text_file(path, out.dump(2) + "\n");
  return path;
}

WorkspaceLock::WorkspaceLock(const std::filesystem::path& workspace) {
  std::filesystem::create_directories(workspace);
  const auto path = workspace / ".eemp.lock";
  fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
  if (fd_ < 0) throw io_error("cannot open lock file " + path.string());
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw Error(ErrorKind::config, "workspace " + workspace.string() + " is locked by another eemp process");
  }
}

WorkspaceLock::~WorkspaceLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

}  // namespace eemp
