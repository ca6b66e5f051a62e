#include <random>
#include <set>

#include <gtest/gtest.h>

#include "morai/sim.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace morai;
using json = nlohmann::json;

namespace {

const std::string kPersonaDir = std::string(MORAI_DATA_DIR) + "/personas/";

SimulationOptions options(std::uint64_t seed, int turns, double tau = 0.02) {
  SimulationOptions o;
  CnnAgentConfig cfg;
  cfg.init_seed = seed + 11;
  o.service.default_cnn = CnnAgent(cfg);
  o.session.tau = tau;
  o.session.cap = 6;
  o.session.width = 80;
  o.session.seed = seed;
  o.turns = turns;
  o.seed = seed;
  return o;
}

json turn_event(int id, int additions) {
  return {{"event_type", "turn"}, {"turn_id", id}, {"addition_count", additions}};
}

json feedback_event(int turn, const std::string& outcome) {
  return {{"event_type", "feedback"}, {"addition_turn", turn}, {"outcome", outcome}};
}

}  // namespace

TEST(Persona, LoadsShippedFiles) {
  const auto flat = Persona::load(kPersonaDir + "flat_ground.json");
  ASSERT_TRUE(flat.allow.has_value());
  EXPECT_EQ(flat.allow->size(), 6u);
  EXPECT_EQ(flat.row_min, 10);
  EXPECT_EQ(flat.row_max, 14);
  EXPECT_EQ(flat.generator, "flat_ground");
  const auto gap = Persona::load(kPersonaDir + "gap_protection.json");
  EXPECT_TRUE(gap.is_protected(15));
  EXPECT_FALSE(gap.is_protected(17));
  EXPECT_FALSE(Persona::load(kPersonaDir + "keep_all.json").allow.has_value());
  const auto scripted = Persona::load(kPersonaDir + "scripted.json");
  ASSERT_EQ(scripted.script.size(), 3u);
  EXPECT_EQ(scripted.script[2][0].kind, EditKind::kDeletion);
  const auto round = Persona::from_json(scripted.to_json());
  EXPECT_EQ(round.to_json(), scripted.to_json());
}

TEST(Persona, KeepRule) {
  const auto p = Persona::load(kPersonaDir + "gap_protection.json");
  const auto& m = TileManifest::standard();
  const Level level(80);
  EXPECT_TRUE(p.keeps(20, 14, m.id_of("ground"), level));
  EXPECT_FALSE(p.keeps(20, 9, m.id_of("ground"), level));
  EXPECT_FALSE(p.keeps(20, 14, m.id_of("goomba"), level));
  EXPECT_FALSE(p.keeps(41, 14, m.id_of("ground"), level));
}

TEST(Persona, BadFiles) {
  EXPECT_MORAI_ERROR(Persona::from_json(json::parse(R"({"allow": "some"})")), ErrorCode::kBadConfig);
  EXPECT_MORAI_ERROR(Persona::from_json(json::parse(R"({"rows": [5, 15]})")), ErrorCode::kBadConfig);
  EXPECT_MORAI_ERROR(Persona::from_json(json::parse(R"({"rows": [9, 4]})")), ErrorCode::kBadConfig);
  EXPECT_MORAI_ERROR(Persona::from_json(json::parse(R"({"placement": {"generator": "maze"}})")), ErrorCode::kBadConfig);
  EXPECT_THROW(Persona::from_json(json::parse(R"({"allow": ["not_a_tile"]})")), Error);
  EXPECT_MORAI_ERROR(Persona::load(kPersonaDir + "missing.json"), ErrorCode::kIo);
}

TEST(Persona, PlacementIsLegal) {
  auto p = Persona::load(kPersonaDir + "random_fuzz.json");
  PersonaPlayer player(p, 4);
  Level level(60);
  for (int turn = 0; turn < 40; ++turn) {
    for (const auto& e : player.next_edits(level)) {
      Edit edit{e.kind, e.x, e.y, e.tile, Author::kHuman, turn, 0};
      ASSERT_NO_THROW(apply_edit(level, edit));
    }
  }
  EXPECT_GT(level.occupied_count(), 0);
}

TEST(Adaptation, ArithmeticAndNulls) {
  std::vector<json> events{turn_event(1, 10)};
  for (int i = 0; i < 6; ++i) events.push_back(feedback_event(1, "deleted"));
  for (int i = 0; i < 4; ++i) events.push_back(feedback_event(1, "kept"));
  const auto r = adaptation_metrics(events);
  ASSERT_TRUE(r.overall_ratio.has_value());
  EXPECT_DOUBLE_EQ(*r.overall_ratio, 0.6);
  EXPECT_EQ(r.ai_deleted, 6);

  const auto none = adaptation_metrics(std::vector<json>{});
  EXPECT_FALSE(none.early_ratio.has_value());
  EXPECT_FALSE(none.late_ratio.has_value());
  EXPECT_TRUE(none.to_json().at("overall_ratio").is_null());
}

TEST(Adaptation, EarlyAndLateWindows) {
  std::vector<json> events;
  for (int t = 1; t <= 12; ++t) {
    events.push_back(turn_event(t, 2));
    events.push_back(feedback_event(t, t <= 5 ? "deleted" : "kept"));
  }
  const auto r = adaptation_metrics(events);
  EXPECT_DOUBLE_EQ(*r.early_ratio, 0.5);
  EXPECT_DOUBLE_EQ(*r.late_ratio, 0.0);
  ASSERT_EQ(r.turns.size(), 12u);
  EXPECT_DOUBLE_EQ(*r.turns[0].ratio, 0.5);
}

TEST(Adaptation, MalformedLogs) {
  EXPECT_MORAI_ERROR(adaptation_metrics(std::vector<json>{feedback_event(3, "deleted")}), ErrorCode::kMalformedLog);
  EXPECT_MORAI_ERROR(adaptation_metrics(std::vector<json>{turn_event(1, 1), turn_event(1, 1)}), ErrorCode::kMalformedLog);
  EXPECT_MORAI_ERROR(adaptation_metrics(std::vector<json>{turn_event(1, 1), feedback_event(1, "maybe")}),
                     ErrorCode::kMalformedLog);
  EXPECT_MORAI_ERROR(adaptation_metrics(std::vector<json>{turn_event(1, 0), feedback_event(1, "kept")}),
                     ErrorCode::kMalformedLog);
  EXPECT_MORAI_ERROR(adaptation_metrics(std::vector<json>{{{"event_type", "turn"}}}), ErrorCode::kMalformedLog);
  EXPECT_THROW(adaptation_metrics(std::string("{bad\n")), Error);
}

TEST(Simulation, DeleteAllLeavesOnlyPersonaTiles) {
  auto p = Persona::load(kPersonaDir + "delete_all.json");
  p.generator = "flat_ground";
  const auto result = simulate_session(p, options(1, 8));
  EXPECT_GT(result.report.ai_additions, 0);
  EXPECT_EQ(result.report.ai_deleted, result.report.ai_additions);
  for (const auto& e : parse_jsonl(result.log)) {
    if (e.value("event_type", "") == "session_closed") EXPECT_EQ(e.at("reuse_ranking"), -1);
  }
  // Rebuild from human edits alone.
  Level human(result.final_level.width());
  for (const auto& e : parse_jsonl(result.log)) {
    if (e.value("event_type", "") != "edit" || e.at("author") != "human") continue;
    Edit edit{parse_edit_kind(e.at("kind").get<std::string>()), e.at("x"), e.at("y"), e.at("tile"), Author::kHuman, 0, 0};
    if (edit.kind == EditKind::kDeletion && !human.at(edit.x, edit.y)) continue;
    apply_edit(human, edit);
  }
  EXPECT_EQ(result.final_level, human);
}

TEST(Simulation, KeepAllHasZeroRatio) {
  auto p = Persona::load(kPersonaDir + "keep_all.json");
  p.generator = "flat_ground";
  const auto result = simulate_session(p, options(2, 8));
  EXPECT_GT(result.report.ai_additions, 0);
  for (const auto& t : result.report.turns)
    if (t.ratio) EXPECT_DOUBLE_EQ(*t.ratio, 0.0);
  EXPECT_EQ(result.reuse_ranking, 1);
}

TEST(Simulation, DeterministicLogs) {
  const auto p = Persona::load(kPersonaDir + "random_fuzz.json");
  const auto a = simulate_session(p, options(7, 6));
  const auto b = simulate_session(p, options(7, 6));
  EXPECT_EQ(a.log, b.log);
  const auto c = simulate_session(p, options(8, 6));
  EXPECT_NE(a.log, c.log);
}

TEST(Simulation, ReportMatchesRecountAndReplay) {
  for (const char* name : {"flat_ground.json", "random_fuzz.json", "gap_protection.json", "scripted.json"}) {
    const auto p = Persona::load(kPersonaDir + name);
    const auto result = simulate_session(p, options(3, 8));
    const auto events = parse_jsonl(result.log);
    const auto rc = oracle::recount(events);
    EXPECT_EQ(result.report.ai_additions, rc.ai_additions) << name;
    EXPECT_EQ(result.report.ai_deleted, rc.ai_deleted) << name;
    EXPECT_EQ(replay_log(events), result.final_level) << name;
    for (const auto& t : result.report.turns)
      if (t.ratio) {
        EXPECT_GE(*t.ratio, 0.0);
        EXPECT_LE(*t.ratio, 1.0);
      }
  }
}

TEST(Simulation, GapProtectionNeverRepeats) {
  const auto p = Persona::load(kPersonaDir + "gap_protection.json");
  auto o = options(5, 20);
  o.session.width = 120;
  const auto result = simulate_session(p, o);
  std::set<std::tuple<int, int, int>> deleted;
  int protected_additions = 0;
  for (const auto& e : parse_jsonl(result.log)) {
    if (e.value("event_type", "") != "edit") continue;
    const auto key = std::make_tuple(e.at("x").get<int>(), e.at("y").get<int>(), e.at("tile").get<int>());
    if (e.at("author") == "ai") {
      EXPECT_FALSE(deleted.contains(key)) << "re-added a deleted triple";
      if (p.is_protected(std::get<0>(key))) ++protected_additions;
    } else if (e.at("kind") == "deletion") {
      deleted.insert(key);
    }
  }
  RecordProperty("protected_additions", protected_additions);
}

TEST(Simulation, TurnsMustBePositive) {
  EXPECT_MORAI_ERROR(simulate_session(Persona{}, options(1, 0)), ErrorCode::kInvalidArgument);
}

TEST(Rankings, DerivedFromPairedSessions) {
  auto make = [](const std::string& agent, const std::string& participant, int reuse) {
    std::vector<json> events{
        {{"event_type", "session_created"}, {"config", {{"agent", agent}, {"participant", participant}, {"width", 40}}}},
        turn_event(1, 4), feedback_event(1, "deleted"),
        {{"event_type", "session_closed"}, {"reuse_ranking", reuse}}};
    return events;
  };
  std::vector<std::vector<json>> logs{make("cnn", "p1", 1), make("markov", "p1", -1), make("cnn", "p2", -1),
                                      make("markov", "p2", 1), make("cnn", "solo", 1)};
  logs[0].push_back({{"event_type", "ranking"}, {"comparison", "cnn-markov"}, {"feature", "Most Fun"}, {"first", "cnn"}});
  const auto records = rankings_from_logs(logs);
  int reuse_cnn = 0, reuse_markov = 0, fun = 0;
  for (const auto& r : records) {
    EXPECT_EQ(r.comparison, "cnn-markov");
    if (r.feature == "Reuse") (r.first == "cnn" ? reuse_cnn : reuse_markov)++;
    if (r.feature == "Most Fun") ++fun;
  }
  EXPECT_EQ(reuse_cnn, 1);
  EXPECT_EQ(reuse_markov, 1);
  EXPECT_EQ(fun, 1);
  EXPECT_EQ(records.size(), 5u);
}

TEST(SessionLogProperties, FuzzedInvariants) {
  const auto persona = Persona::load(kPersonaDir + "random_fuzz.json");
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    ServiceOptions o;
    CnnAgentConfig cfg;
    cfg.init_seed = seed;
    o.default_cnn = CnnAgent(cfg);
    o.clock_factory = logical_clock;
    SessionService service(o);
    SessionConfig sc;
    sc.width = 50;
    sc.tau = 0.02;
    sc.cap = 5;
    sc.explain = false;
    const auto id = service.create_session(sc);
    PersonaPlayer player(persona, seed);
    std::mt19937_64 rng(seed);
    for (int t = 0; t < 15; ++t) {
      const auto edits = player.next_edits(service.with_session(id, [](Session& s) { return s.level(); }));
      if (!edits.empty()) service.submit_human_edits(id, edits);
      const auto turn = service.end_turn(id, player.focus_x());
      std::vector<EditRequest> rejected;
      for (const auto& a : turn.additions)
        if (rng() % 2) rejected.push_back({EditKind::kDeletion, a.x, a.y, a.tile});
      if (!rejected.empty()) service.submit_human_edits(id, rejected);
    }
    service.close_session(id, seed % 2 ? 1 : -1);
    const auto events = parse_jsonl(service.export_log(id));
    int additions = 0, feedback = 0;
    std::int64_t last_turn = 0;
    for (const auto& e : events) {
      const auto type = e.at("event_type").get<std::string>();
      if (type == "turn") {
        EXPECT_EQ(e.at("turn_id").get<std::int64_t>(), last_turn + 1);
        last_turn = e.at("turn_id").get<std::int64_t>();
      } else if (type == "edit" && e.at("author") == "ai") {
        ++additions;
      } else if (type == "feedback") {
        ++feedback;
        const double r = e.at("reward").get<double>();
        EXPECT_TRUE(r == 0.1 || r == -0.1) << r;
        if (e.at("outcome") == "deleted") {
          const Triple tr{e.at("x").get<int>(), e.at("y").get<int>(), e.at("tile").get<TileId>()};
          EXPECT_TRUE(service.with_session(id, [&](Session& s) { return s.blacklist().contains(tr); }));
        }
      } else if (type == "episode_reward") {
        const int r = e.at("reward").get<int>();
        EXPECT_TRUE(r == 1 || r == -1);
      }
    }
    EXPECT_LE(feedback, additions);
    EXPECT_EQ(last_turn, 15);
  }
}
