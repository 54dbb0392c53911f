#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "ic/service.hpp"

namespace ic {

/// JSON over HTTP front end of an AnnotationService:
///   POST /sessions                     create, body = session config
///   GET  /sessions                     list ids
///   GET  /sessions/{id}/status
///   GET  /sessions/{id}/queries
///   POST /sessions/{id}/labels         {"annotator"?, "labels": [{"sample_id", "class"}]}
///   GET  /sessions/{id}/embedding
///   GET  /sessions/{id}/samples/{sid}
///   GET  /sessions/{id}/history
/// Errors carry {code, message, detail} with 404 for unknown ids, 409 for a
/// wrong phase and 422 for invalid input. A UI directory, when given, is
/// served as static files from "/".
class HttpApi {
 public:
  explicit HttpApi(AnnotationService& service, std::optional<std::filesystem::path> ui_dir = std::nullopt);
  ~HttpApi();

  HttpApi(const HttpApi&) = delete;
  HttpApi& operator=(const HttpApi&) = delete;

  /// Returns the bound port, or -1.
  int bind(const std::string& host, int port);
  int bind_any_port(const std::string& host = "127.0.0.1");
  /// Serves until stop(); call after a successful bind.
  bool listen();
  void wait_until_ready() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ic
