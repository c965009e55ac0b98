#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "abtest/abtest.hpp"

namespace httplib {
class Server;
}

namespace eemp {

/// HTTP front end over an AbService.
///   GET  /api/tasks/next?annotator=<id>
///   POST /api/verdicts
///   GET  /api/report
///   GET  /api/progress
/// Errors are 4xx with {"error": code, "message": text}.
class AbServer {
 public:
  AbServer(AbService& service, std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~AbServer();

  /// Returns the bound port (port 0 picks a free one).
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  AbService& service_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace eemp
