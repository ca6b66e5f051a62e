#include <filesystem>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "morai/protocol.hpp"
#include "morai/sim.hpp"
#include "test_util.hpp"

using namespace morai;
using json = nlohmann::json;

namespace {

class Server : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() / "morai_http_sessions";
    std::filesystem::remove_all(dir_);
    ServiceOptions o;
    o.sessions_dir = dir_.string();
    o.clock_factory = logical_clock;
    CnnAgentConfig cfg;
    cfg.init_seed = 2;
    o.default_cnn = CnnAgent(cfg);
    service_ = std::make_unique<SessionService>(o);
    server_ = std::make_unique<HttpServer>(*service_);
    port_ = server_->bind_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }

  void TearDown() override {
    server_->stop();
    thread_.join();
    std::filesystem::remove_all(dir_);
  }

  std::pair<int, json> post(const std::string& path, const json& body) {
    auto res = client_->Post(path, body.dump(), "application/json");
    if (!res) return {0, json()};
    return {res->status, json::parse(res->body)};
  }

  std::filesystem::path dir_;
  std::unique_ptr<SessionService> service_;
  std::unique_ptr<HttpServer> server_;
  std::unique_ptr<httplib::Client> client_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace

TEST(ProtocolJson, EditBatchParsing) {
  auto edits = parse_edit_batch(json::parse(
      R"({"edits":[{"kind":"addition","x":1,"y":14,"tile":"ground"},{"kind":"deletion","x":2,"y":3,"tile":9}]})"));
  ASSERT_EQ(edits.size(), 2u);
  EXPECT_EQ(edits[0].tile, 0);
  EXPECT_EQ(edits[1].kind, EditKind::kDeletion);
  EXPECT_EQ(edits[1].tile, 9);
  EXPECT_MORAI_ERROR(parse_edit_batch(json::parse(R"({"edit":[]})")), ErrorCode::kInvalidArgument);
  EXPECT_MORAI_ERROR(parse_edit_batch(json::parse(R"({"edits":[{"kind":"move","x":1,"y":1,"tile":0}]})")),
                     ErrorCode::kInvalidArgument);
  EXPECT_MORAI_ERROR(parse_edit_batch(json::parse(R"({"edits":[{"kind":"addition","x":1,"y":1}]})")),
                     ErrorCode::kInvalidArgument);
}

TEST(ProtocolJson, StatusCodes) {
  EXPECT_EQ(http_status(ErrorCode::kUnknownSession), 404);
  EXPECT_EQ(http_status(ErrorCode::kSessionClosed), 409);
  EXPECT_EQ(http_status(ErrorCode::kNothingToRemove), 409);
  EXPECT_EQ(http_status(ErrorCode::kOutOfBounds), 400);
}

TEST_F(Server, FullLifecycle) {
  auto version = client_->Get("/version");
  ASSERT_TRUE(version);
  EXPECT_EQ(json::parse(version->body).at("protocol"), kProtocolVersion);

  auto [s1, created] = post("/session", {{"config", {{"width", 80}, {"tau", 0.01}, {"cap", 3}}}});
  ASSERT_EQ(s1, 200);
  const std::string id = created.at("session_id");
  const std::string base = "/session/" + id;

  json edits = json::array();
  for (int x = 0; x < 20; ++x) edits.push_back({{"kind", "addition"}, {"x", x}, {"y", 14}, {"tile", "ground"}});
  auto [s2, ok] = post(base + "/edits", {{"edits", edits}});
  EXPECT_EQ(s2, 200);
  EXPECT_EQ(ok.at("ok"), true);
  EXPECT_EQ(ok.at("turn_id"), 0);

  auto [s3, turn] = post(base + "/end-turn", {{"focus_x", 10}});
  ASSERT_EQ(s3, 200);
  EXPECT_EQ(turn.at("turn_id"), 1);
  ASSERT_EQ(turn.at("additions").size(), 3u);
  ASSERT_EQ(turn.at("explanations").size(), 3u);
  for (const auto& a : turn.at("additions")) {
    EXPECT_TRUE(a.contains("activation"));
    EXPECT_GT(a.at("activation").get<double>(), 0.01);
  }
  EXPECT_NE(turn.at("explanations")[0].at("text").get<std::string>().find("Added "), std::string::npos);

  auto level = client_->Get(base + "/level");
  ASSERT_TRUE(level);
  EXPECT_EQ(load_level(level->body).occupied_count(), 23);

  auto [s4, removed] = post(base + "/remove-ai-turn", json::object());
  EXPECT_EQ(s4, 200);
  EXPECT_EQ(removed.at("removed").size(), 3u);
  auto [s5, again] = post(base + "/remove-ai-turn", json::object());
  EXPECT_EQ(s5, 409);
  EXPECT_EQ(again.at("error"), "NothingToRemove");

  auto [s6, closed] = post(base + "/close", {{"reuse_ranking", 1},
                                              {"rankings", {{{"comparison", "cnn-markov"},
                                                             {"feature", "Most Fun"},
                                                             {"first", "cnn"}}}}});
  ASSERT_EQ(s6, 200);
  const std::string path = closed.at("log_path");
  EXPECT_TRUE(std::filesystem::exists(path));
  auto log = client_->Get(base + "/log");
  ASSERT_TRUE(log);
  auto events = parse_jsonl(log->body);
  EXPECT_EQ(replay_log(events), load_level(client_->Get(base + "/level")->body));
  bool ranked = false;
  for (const auto& e : events) ranked |= e.at("event_type") == "ranking";
  EXPECT_TRUE(ranked);

  auto [s7, err] = post(base + "/end-turn", {{"focus_x", 0}});
  EXPECT_EQ(s7, 409);
  EXPECT_EQ(err.at("error"), "SessionClosed");
}

TEST_F(Server, Errors) {
  auto [s1, e1] = post("/session/s999999/end-turn", {{"focus_x", 0}});
  EXPECT_EQ(s1, 404);
  EXPECT_EQ(e1.at("error"), "UnknownSession");
  auto [s2, e2] = post("/session", {{"width", 10}});
  EXPECT_EQ(s2, 400);
  EXPECT_EQ(e2.at("error"), "BadConfig");

  auto [s3, created] = post("/session", {{"width", 60}});
  const std::string base = "/session/" + created.at("session_id").get<std::string>();
  auto [s4, e4] = post(base + "/edits", {{"edits", {{{"kind", "addition"}, {"x", 99}, {"y", 0}, {"tile", 0}}}}});
  EXPECT_EQ(s4, 400);
  EXPECT_EQ(e4.at("error"), "OutOfBounds");
  auto [s5, e5] = post(base + "/end-turn", json::object());
  EXPECT_EQ(s5, 400);
  auto raw = client_->Post(base + "/edits", "{not json", "application/json");
  ASSERT_TRUE(raw);
  EXPECT_EQ(raw->status, 400);
  auto [s6, reset] = post(base + "/reset-level", {{"width", 45}});
  EXPECT_EQ(s6, 200);
  EXPECT_EQ(load_level(client_->Get(base + "/level")->body).width(), 45);
}

TEST_F(Server, ParallelClients) {
  std::vector<std::thread> threads;
  std::atomic<int> failures{0};
  for (int i = 0; i < 3; ++i) {
    threads.emplace_back([&, i] {
      httplib::Client c("127.0.0.1", port_);
      auto r = c.Post("/session", json{{"width", 60}, {"seed", i}}.dump(), "application/json");
      if (!r || r->status != 200) {
        ++failures;
        return;
      }
      const std::string base = "/session/" + json::parse(r->body).at("session_id").get<std::string>();
      for (int t = 0; t < 3; ++t) {
        json e{{"edits", {{{"kind", "addition"}, {"x", t}, {"y", 14}, {"tile", 0}}}}};
        auto a = c.Post(base + "/edits", e.dump(), "application/json");
        auto b = c.Post(base + "/end-turn", json{{"focus_x", t}}.dump(), "application/json");
        if (!a || !b || a->status != 200 || b->status != 200) ++failures;
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(failures, 0);
}
