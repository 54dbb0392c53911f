#include "ic/http_api.hpp"

#include <httplib.h>

namespace ic {

using nlohmann::json;

namespace {

int http_status(ServiceError::Code code) {
  switch (code) {
    case ServiceError::Code::NotFound: return 404;
    case ServiceError::Code::WrongPhase: return 409;
    case ServiceError::Code::Validation: return 422;
    case ServiceError::Code::Internal: return 500;
  }
  return 500;
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message,
                const json& detail) {
  send_json(res, status, json{{"code", code}, {"message", message}, {"detail", detail}});
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw ServiceError(ServiceError::Code::Validation, "request body is not valid JSON", json{{"error", e.what()}});
  }
}

std::string label_text(const json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_number_integer() && value.get<long long>() >= 0) return std::to_string(value.get<long long>());
  throw ServiceError(ServiceError::Code::Validation, "class must be a name or a non-negative index",
                     json{{"class", value}});
}

using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

Handler guarded(Handler inner) {
  return [inner = std::move(inner)](const httplib::Request& req, httplib::Response& res) {
    try {
      inner(req, res);
    } catch (const ServiceError& e) {
      send_error(res, http_status(e.code()), e.code_name(), e.what(), e.detail());
    } catch (const json::exception& e) {
      send_error(res, 422, "validation", "malformed request", json{{"error", e.what()}});
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what(), json::object());
    }
  };
}

}  // namespace

struct HttpApi::Impl {
  AnnotationService& service;
  httplib::Server server;

  explicit Impl(AnnotationService& s) : service(s) {}
};

HttpApi::HttpApi(AnnotationService& service, std::optional<std::filesystem::path> ui_dir)
    : impl_(std::make_unique<Impl>(service)) {
  httplib::Server& srv = impl_->server;
  AnnotationService& svc = impl_->service;

  srv.Post("/sessions", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             const SessionConfig config = parse_body(req).get<SessionConfig>();
             const std::string id = svc.create_session(config);
             send_json(res, 201, json{{"session_id", id}, {"phase", to_string(svc.status(id).phase)}});
           }));
  srv.Get("/sessions", guarded([&svc](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, json{{"sessions", svc.session_ids()}});
          }));
  srv.Get("/sessions/:id/status", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, json(svc.status(req.path_params.at("id"))));
          }));
  srv.Get("/sessions/:id/queries", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            const std::string& id = req.path_params.at("id");
            send_json(res, 200, json{{"iteration", svc.status(id).iteration}, {"queries", svc.next_queries(id)}});
          }));
  srv.Post("/sessions/:id/labels", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             const std::string& id = req.path_params.at("id");
             const json body = parse_body(req);
             if (!body.contains("labels") || !body["labels"].is_array())
               throw ServiceError(ServiceError::Code::Validation, "body needs a \"labels\" array");
             std::vector<LabelSubmission> labels;
             for (const json& item : body["labels"])
               labels.push_back({item.at("sample_id").get<std::string>(), label_text(item.at("class"))});
             const std::size_t remaining = svc.submit_labels(id, labels, body.value("annotator", ""));
             send_json(res, 200, json{{"remaining", remaining}, {"phase", to_string(svc.status(id).phase)}});
           }));
  srv.Get("/sessions/:id/embedding", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, json{{"points", svc.embedding_projection(req.path_params.at("id"))}});
          }));
  srv.Get("/sessions/:id/samples/:sid", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, svc.sample(req.path_params.at("id"), req.path_params.at("sid")));
          }));
  srv.Get("/sessions/:id/history", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            const std::string& id = req.path_params.at("id");
            send_json(res, 200, json{{"iterations", svc.history(id)}, {"labels", svc.labels(id)}});
          }));

  if (ui_dir) {
    if (!std::filesystem::is_directory(*ui_dir))
      throw std::invalid_argument("ui directory '" + ui_dir->string() + "' does not exist");
    srv.set_mount_point("/", ui_dir->string());
  }
  srv.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (res.status == 404 && res.body.empty())
      send_error(res, 404, "not_found", "no route for " + req.method + " " + req.path, json::object());
  });
}

HttpApi::~HttpApi() { stop(); }

int HttpApi::bind(const std::string& host, int port) {
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

int HttpApi::bind_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool HttpApi::listen() { return impl_->server.listen_after_bind(); }

void HttpApi::wait_until_ready() const { impl_->server.wait_until_ready(); }

void HttpApi::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

}  // namespace ic
