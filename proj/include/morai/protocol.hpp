#pragma once

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "morai/error.hpp"
#include "morai/session.hpp"

namespace morai {

inline constexpr int kProtocolVersion = 1;

/// `{"edits": [{"kind": "addition"|"deletion", "x", "y", "tile": id|name}]}`
std::vector<EditRequest> parse_edit_batch(const nlohmann::json& body);
nlohmann::json turn_result_json(const TurnResult& result);
nlohmann::json edit_json(const Edit& edit);
int http_status(ErrorCode code);

/// HTTP+JSON front end over a SessionService. Routes are documented in
/// docs/protocol.md.
class HttpServer {
 public:
  explicit HttpServer(SessionService& service, std::string static_dir = {});
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Blocks until stop().
  bool listen(const std::string& host, int port);
  /// Binds an ephemeral port and returns it; follow with listen_after_bind().
  int bind_any_port(const std::string& host);
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace morai
