#include "morai/protocol.hpp"

#include <httplib.h>

namespace morai {

using json = nlohmann::json;

std::vector<EditRequest> parse_edit_batch(const json& body) {
  if (!body.is_object() || !body.contains("edits") || !body.at("edits").is_array()) {
    throw Error(ErrorCode::kInvalidArgument, "body must be {\"edits\": [...]}");
  }
  std::vector<EditRequest> out;
  try {
    for (const auto& e : body.at("edits")) {
      EditRequest r;
      r.kind = parse_edit_kind(e.at("kind").get<std::string>());
      r.x = e.at("x").get<int>();
      r.y = e.at("y").get<int>();
      const auto& t = e.at("tile");
      r.tile = t.is_string() ? TileManifest::standard().id_of(t.get<std::string>()) : t.get<TileId>();
      out.push_back(r);
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kInvalidArgument, ex.what());
  }
  return out;
}

json edit_json(const Edit& e) {
  return json{{"kind", to_string(e.kind)}, {"x", e.x},           {"y", e.y},
              {"tile", e.tile},           {"author", to_string(e.author)}, {"turn_id", e.turn_id}};
}

json turn_result_json(const TurnResult& r) {
  json additions = json::array();
  for (std::size_t i = 0; i < r.additions.size(); ++i) {
    const auto& a = r.additions[i];
    additions.push_back({{"x", a.x}, {"y", a.y}, {"tile", a.tile}, {"activation", r.activations[i]}});
  }
  json explanations = json::array();
  for (const auto& e : r.explanations) {
    explanations.push_back({{"x0", e.x0},
                            {"y0", e.y0},
                            {"delta", e.delta},
                            {"confidence", e.confidence},
                            {"max_filter", e.max_filter},
                            {"text", e.text}});
  }
  return json{{"turn_id", r.turn_id},
              {"window_origin", r.window_origin},
              {"additions", additions},
              {"explanations", explanations}};
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownSession: return 404;
    case ErrorCode::kSessionClosed:
    case ErrorCode::kNothingToRemove: return 409;
    case ErrorCode::kIo: return 500;
    default: return 400;
  }
}

struct HttpServer::Impl {
  SessionService& service;
  httplib::Server server;

  explicit Impl(SessionService& s) : service(s) {}

  static void reply(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <typename Fn>
  static void guarded(httplib::Response& res, Fn&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      reply(res, json{{"error", to_string(e.code())}, {"message", e.what()}}, http_status(e.code()));
    } catch (const json::exception& e) {
      reply(res, json{{"error", "InvalidArgument"}, {"message", e.what()}}, 400);
    } catch (const std::exception& e) {
      reply(res, json{{"error", "Internal"}, {"message", e.what()}}, 500);
    }
  }

  static json body_of(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
      return json::parse(req.body);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kInvalidArgument, std::string("malformed JSON: ") + e.what());
    }
  }

  void routes() {
    server.Get("/version", [](const httplib::Request&, httplib::Response& res) {
      reply(res, json{{"protocol", kProtocolVersion}});
    });
    server.Post("/session", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto body = body_of(req);
        const json& cfg = body.contains("config") ? body.at("config") : body;
        auto id = service.create_session(session_config_from_json(cfg));
        reply(res, json{{"session_id", id}});
      });
    });
    server.Post(R"(/session/([^/]+)/edits)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto turn = service.submit_human_edits(req.matches[1], parse_edit_batch(body_of(req)));
        reply(res, json{{"ok", true}, {"turn_id", turn}});
      });
    });
    server.Post(R"(/session/([^/]+)/end-turn)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto body = body_of(req);
        if (!body.contains("focus_x")) throw Error(ErrorCode::kInvalidArgument, "focus_x required");
        reply(res, turn_result_json(service.end_turn(req.matches[1], body.at("focus_x").get<int>())));
      });
    });
    server.Post(R"(/session/([^/]+)/remove-ai-turn)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        json removed = json::array();
        for (const auto& e : service.remove_last_ai_turn(req.matches[1])) removed.push_back(edit_json(e));
        reply(res, json{{"removed", removed}});
      });
    });
    server.Post(R"(/session/([^/]+)/reset-level)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto body = body_of(req);
        std::optional<int> width;
        if (body.contains("width") && !body.at("width").is_null()) width = body.at("width").get<int>();
        service.reset_level(req.matches[1], width);
        reply(res, json{{"ok", true}});
      });
    });
    server.Post(R"(/session/([^/]+)/close)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto body = body_of(req);
        std::optional<int> ranking;
        if (body.contains("reuse_ranking") && !body.at("reuse_ranking").is_null()) {
          ranking = body.at("reuse_ranking").get<int>();
        }
        if (body.contains("rankings")) {
          service.with_session(req.matches[1], [&](Session& s) {
            for (const auto& r : body.at("rankings")) {
              s.record_ranking(r.at("comparison").get<std::string>(), r.at("feature").get<std::string>(),
                               r.at("first").get<std::string>());
            }
          });
        }
        auto path = service.close_session(req.matches[1], ranking);
        reply(res, json{{"log_path", path.empty() ? json(nullptr) : json(path)}});
      });
    });
    server.Get(R"(/session/([^/]+)/level)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { res.set_content(service.level_text(req.matches[1]), "text/plain"); });
    });
    server.Get(R"(/session/([^/]+)/log)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { res.set_content(service.export_log(req.matches[1]), "application/x-ndjson"); });
    });
  }
};

HttpServer::HttpServer(SessionService& service, std::string static_dir) : impl_(std::make_unique<Impl>(service)) {
  impl_->routes();
  if (!static_dir.empty()) impl_->server.set_mount_point("/app", static_dir);
}

HttpServer::~HttpServer() = default;

bool HttpServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }
int HttpServer::bind_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }
bool HttpServer::listen_after_bind() { return impl_->server.listen_after_bind(); }
void HttpServer::stop() { impl_->server.stop(); }
void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace morai
