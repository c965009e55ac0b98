#include "abtest/server.hpp"

#include <httplib.h>

namespace eemp {
namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(-1, ' ', false, json::error_handler_t::replace), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send_json(res, status, {{"error", code}, {"message", message}});
}

}  // namespace

AbServer::AbServer(AbService& service, std::optional<std::filesystem::path> static_dir)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
  auto& srv = *server_;

  srv.Get("/api/tasks/next", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string annotator = req.get_param_value("annotator");
    if (annotator.empty()) {
      send_error(res, 400, "missing_annotator", "query parameter 'annotator' is required");
      return;
    }
    auto task = service_.next_task(annotator);
    send_json(res, 200, {{"task", task ? task_payload(*task) : json(nullptr)}});
  });

  srv.Post("/api/verdicts", [this](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      send_error(res, 400, "malformed_verdict", "request body is not valid JSON");
      return;
    }
    try {
      const bool recorded = service_.submit_verdict(verdict_from_json(body));
      send_json(res, 200, {{"status", recorded ? "recorded" : "already_recorded"}});
    } catch (const AbError& e) {
      send_error(res, e.http_status(), e.code(), e.what());
    } catch (const Error& e) {
      send_error(res, 500, "internal", e.what());
    }
  });

  srv.Get("/api/report", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, service_.report().to_json());
  });

  srv.Get("/api/progress", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, service_.progress());
  });

  if (static_dir) {
    if (!srv.set_mount_point("/", static_dir->string())) {
      throw config_error("static directory not found: " + static_dir->string());
    }
  }
}

AbServer::~AbServer() { stop(); }

int AbServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = server_->bind_to_any_port(host);
    if (p < 0) throw io_error("cannot bind " + host);
    return p;
  }
  if (!server_->bind_to_port(host, port)) throw io_error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void AbServer::listen_after_bind() { server_->listen_after_bind(); }

void AbServer::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

void AbServer::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace eemp
