#include "morai/sim.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "morai/error.hpp"

namespace morai {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Persona

bool Persona::is_protected(int x) const {
  return std::any_of(protected_columns.begin(), protected_columns.end(),
                     [x](const ColumnRange& r) { return x >= r.first && x <= r.last; });
}

bool Persona::keeps(int x, int y, TileId tile, const Level& /*level*/) const {
  if (allow && !allow->contains(tile)) return false;
  if (y < row_min || y > row_max) return false;
  return !is_protected(x);
}

Persona Persona::from_json(const json& j, const TileManifest& manifest) {
  try {
    Persona p;
    p.name = j.value("name", std::string("persona"));
    if (j.contains("allow")) {
      const auto& a = j.at("allow");
      if (a.is_string()) {
        if (a.get<std::string>() != "*") throw Error(ErrorCode::kBadConfig, "allow must be a list or \"*\"");
      } else {
        p.allow.emplace();
        for (const auto& name : a) p.allow->insert(manifest.id_of(name.get<std::string>()));
      }
    }
    if (j.contains("rows")) {
      p.row_min = j.at("rows").at(0).get<int>();
      p.row_max = j.at("rows").at(1).get<int>();
    }
    for (const auto& r : j.value("protected_columns", json::array())) {
      p.protected_columns.push_back({r.at(0).get<int>(), r.at(1).get<int>()});
    }
    p.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("placement")) {
      const auto& pl = j.at("placement");
      if (pl.contains("script")) {
        p.generator = "script";
        for (const auto& batch : pl.at("script")) {
          std::vector<EditRequest> edits;
          for (const auto& e : batch) {
            const auto& tile = e.at("tile");
            TileId id = tile.is_string() ? manifest.id_of(tile.get<std::string>()) : tile.get<TileId>();
            edits.push_back({parse_edit_kind(e.value("kind", std::string("addition"))), e.at("x").get<int>(),
                             e.at("y").get<int>(), id});
          }
          p.script.push_back(std::move(edits));
        }
      } else {
        p.generator = pl.value("generator", std::string("none"));
      }
      p.columns_per_turn = pl.value("columns_per_turn", p.columns_per_turn);
      p.edits_per_turn = pl.value("edits_per_turn", p.edits_per_turn);
    }
    if (p.generator != "none" && p.generator != "flat_ground" && p.generator != "random" && p.generator != "script") {
      throw Error(ErrorCode::kBadConfig, "unknown placement generator '" + p.generator + "'");
    }
    if (p.row_min < 0 || p.row_max >= kLevelHeight || p.row_min > p.row_max) {
      throw Error(ErrorCode::kBadConfig, "row band must lie within 0..14");
    }
    if (p.columns_per_turn < 1 || p.edits_per_turn < 0) throw Error(ErrorCode::kBadConfig, "bad placement counts");
    return p;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kBadConfig, std::string("persona: ") + e.what());
  }
}

Persona Persona::load(const std::string& path, const TileManifest& manifest) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open persona " + path);
  try {
    return from_json(json::parse(in), manifest);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kBadConfig, std::string("persona: ") + e.what());
  }
}

json Persona::to_json(const TileManifest& manifest) const {
  json j;
  j["name"] = name;
  if (allow) {
    j["allow"] = json::array();
    for (auto t : *allow) j["allow"].push_back(manifest.at(t).name);
  } else {
    j["allow"] = "*";
  }
  j["rows"] = {row_min, row_max};
  j["protected_columns"] = json::array();
  for (const auto& r : protected_columns) j["protected_columns"].push_back({r.first, r.last});
  j["seed"] = seed;
  if (generator == "script") {
    json batches = json::array();
    for (const auto& b : script) {
      json edits = json::array();
      for (const auto& e : b) {
        edits.push_back({{"kind", to_string(e.kind)}, {"x", e.x}, {"y", e.y}, {"tile", manifest.at(e.tile).name}});
      }
      batches.push_back(std::move(edits));
    }
    j["placement"] = {{"script", batches}};
  } else {
    j["placement"] = {{"generator", generator},
                      {"columns_per_turn", columns_per_turn},
                      {"edits_per_turn", edits_per_turn}};
  }
  return j;
}

// ---------------------------------------------------------------------------
// Placement

PersonaPlayer::PersonaPlayer(Persona persona, std::uint64_t seed)
    : persona_(std::move(persona)), rng_(persona_.seed * 0x9e3779b97f4a7c15ULL + seed) {}

std::vector<EditRequest> PersonaPlayer::next_edits(const Level& level) {
  std::vector<EditRequest> edits;
  if (persona_.generator == "flat_ground") {
    edits = flat_ground(level);
  } else if (persona_.generator == "random") {
    edits = random_edits(level);
  } else if (persona_.generator == "script") {
    if (script_index_ < persona_.script.size()) edits = persona_.script[script_index_++];
  } else {
    cursor_ = std::min(cursor_ + persona_.columns_per_turn, level.width() - 1);
  }
  if (!edits.empty()) {
    focus_x_ = edits.back().x;
  } else {
    focus_x_ = std::min(cursor_, level.width() - 1);
  }
  return edits;
}

std::vector<EditRequest> PersonaPlayer::flat_ground(const Level& level) {
  const auto& m = TileManifest::standard();
  const TileId ground = m.id_of("ground");
  const TileId brick = m.id_of("brick");
  std::vector<EditRequest> edits;
  Level scratch = level;
  auto add = [&](int x, int y, TileId t) {
    if (!scratch.in_bounds(x, y) || !scratch.empty_at(x, y) || persona_.is_protected(x)) return;
    scratch.set(x, y, t);
    edits.push_back({EditKind::kAddition, x, y, t});
  };
  const int start = cursor_;
  const int end = std::min(level.width(), cursor_ + persona_.columns_per_turn);
  for (int x = start; x < end; ++x) {
    add(x, kLevelHeight - 1, ground);
    add(x, kLevelHeight - 2, ground);
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double roll = unit(rng_);
  if (end - start >= 3 && roll < 0.3) {
    const int x0 = std::uniform_int_distribution<int>(start, end - 3)(rng_);
    for (int x = x0; x < x0 + 3; ++x) add(x, 10, brick);
  } else if (end - start >= 2 && roll < 0.45) {
    const int x0 = std::uniform_int_distribution<int>(start, end - 2)(rng_);
    add(x0, 11, m.id_of("pipe_top_left"));
    add(x0 + 1, 11, m.id_of("pipe_top_right"));
    add(x0, 12, m.id_of("pipe_body_left"));
    add(x0 + 1, 12, m.id_of("pipe_body_right"));
  }
  cursor_ = std::min(end, level.width() - 1);
  return edits;
}

std::vector<EditRequest> PersonaPlayer::random_edits(const Level& level) {
  std::vector<EditRequest> edits;
  Level scratch = level;
  std::uniform_int_distribution<int> col(0, level.width() - 1);
  std::uniform_int_distribution<int> row(0, kLevelHeight - 1);
  std::uniform_int_distribution<int> tile(0, kTileCount - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < persona_.edits_per_turn; ++i) {
    const int x = col(rng_);
    const int y = row(rng_);
    if (persona_.is_protected(x)) continue;
    auto current = scratch.at(x, y);
    if (current) {
      if (unit(rng_) < 0.5) {
        edits.push_back({EditKind::kDeletion, x, y, *current});
        scratch.set(x, y, std::nullopt);
      }
    } else {
      const auto t = static_cast<TileId>(tile(rng_));
      edits.push_back({EditKind::kAddition, x, y, t});
      scratch.set(x, y, t);
    }
  }
  cursor_ = edits.empty() ? cursor_ : edits.back().x;
  return edits;
}

// ---------------------------------------------------------------------------
// Metrics

json AdaptationReport::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json turns_j = json::array();
  for (const auto& t : turns) {
    turns_j.push_back({{"turn_id", t.turn_id},
                       {"additions", t.additions},
                       {"deleted", t.deleted},
                       {"kept", t.kept},
                       {"ratio", opt(t.ratio)}});
  }
  return json{{"turns", turns_j},
              {"early_ratio", opt(early_ratio)},
              {"late_ratio", opt(late_ratio)},
              {"overall_ratio", opt(overall_ratio)},
              {"ai_additions", ai_additions},
              {"ai_deleted", ai_deleted},
              {"ai_kept", ai_kept},
              {"human_additions", human_additions},
              {"human_deletions", human_deletions}};
}

std::vector<json> parse_jsonl(const std::string& jsonl) {
  std::vector<json> out;
  std::istringstream in(jsonl);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kMalformedLog, "line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

namespace {

const std::string& event_type(const json& e) {
  if (!e.is_object() || !e.contains("event_type") || !e.at("event_type").is_string()) {
    throw Error(ErrorCode::kMalformedLog, "event without event_type");
  }
  return e.at("event_type").get_ref<const std::string&>();
}

std::optional<double> pooled_ratio(const std::vector<TurnStat>& turns, std::size_t first, std::size_t last) {
  int adds = 0, dels = 0;
  for (std::size_t i = first; i < last; ++i) {
    adds += turns[i].additions;
    dels += turns[i].deleted;
  }
  if (adds == 0) return std::nullopt;
  return static_cast<double>(dels) / adds;
}

}  // namespace

AdaptationReport adaptation_metrics(const std::vector<json>& events) {
  AdaptationReport r;
  std::map<std::int64_t, std::size_t> by_turn;
  try {
    for (const auto& e : events) {
      const auto& type = event_type(e);
      if (type == "turn") {
        TurnStat t;
        t.turn_id = e.at("turn_id").get<std::int64_t>();
        t.additions = e.at("addition_count").get<int>();
        if (by_turn.contains(t.turn_id)) throw Error(ErrorCode::kMalformedLog, "duplicate turn");
        by_turn[t.turn_id] = r.turns.size();
        r.turns.push_back(t);
        r.ai_additions += t.additions;
      } else if (type == "feedback") {
        const auto turn = e.at("addition_turn").get<std::int64_t>();
        auto it = by_turn.find(turn);
        if (it == by_turn.end()) throw Error(ErrorCode::kMalformedLog, "feedback for unknown turn");
        const auto& outcome = e.at("outcome").get_ref<const std::string&>();
        if (outcome == "deleted") {
          ++r.turns[it->second].deleted;
          ++r.ai_deleted;
        } else if (outcome == "kept") {
          ++r.turns[it->second].kept;
          ++r.ai_kept;
        } else {
          throw Error(ErrorCode::kMalformedLog, "unknown feedback outcome");
        }
      } else if (type == "edit") {
        if (e.at("author").get_ref<const std::string&>() != "human") continue;
        if (e.at("kind").get_ref<const std::string&>() == "addition") {
          ++r.human_additions;
        } else {
          ++r.human_deletions;
        }
      }
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kMalformedLog, ex.what());
  }
  for (auto& t : r.turns) {
    if (t.deleted + t.kept > t.additions) throw Error(ErrorCode::kMalformedLog, "more feedback than additions");
    if (t.additions > 0) t.ratio = static_cast<double>(t.deleted) / t.additions;
  }
  const std::size_t n = r.turns.size();
  const std::size_t w = std::min<std::size_t>(kAdaptationWindowTurns, n);
  r.early_ratio = pooled_ratio(r.turns, 0, w);
  r.late_ratio = pooled_ratio(r.turns, n - w, n);
  r.overall_ratio = pooled_ratio(r.turns, 0, n);
  return r;
}

AdaptationReport adaptation_metrics(const std::string& jsonl) { return adaptation_metrics(parse_jsonl(jsonl)); }

Level replay_log(const std::vector<json>& events) {
  std::optional<Level> level;
  try {
    for (const auto& e : events) {
      const auto& type = event_type(e);
      if (type == "session_created") {
        level.emplace(e.at("config").at("width").get<int>());
      } else if (type == "level_reset") {
        level.emplace(e.at("width").get<int>());
      } else if (type == "edit") {
        if (!level) throw Error(ErrorCode::kMalformedLog, "edit before session_created");
        Edit edit{parse_edit_kind(e.at("kind").get<std::string>()),
                  e.at("x").get<int>(),
                  e.at("y").get<int>(),
                  e.at("tile").get<TileId>(),
                  parse_author(e.at("author").get<std::string>()),
                  e.at("turn_id").get<std::int64_t>(),
                  e.at("timestamp").get<std::int64_t>()};
        apply_edit(*level, edit);
      }
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kMalformedLog, ex.what());
  }
  if (!level) throw Error(ErrorCode::kMalformedLog, "log has no session_created event");
  return *level;
}

// ---------------------------------------------------------------------------
// Simulation

SimulationResult simulate_session(const Persona& persona, SimulationOptions options) {
  if (options.turns < 1) throw Error(ErrorCode::kInvalidArgument, "turns must be >= 1");
  // Timestamps come from a logical clock so logs are reproducible.
  options.service.clock_factory = logical_clock;
  SessionService service(options.service);
  const auto id = service.create_session(options.session);
  PersonaPlayer player(persona, options.seed);

  for (int turn = 0; turn < options.turns; ++turn) {
    const Level current = service.with_session(id, [](Session& s) { return s.level(); });
    auto edits = player.next_edits(current);
    if (!edits.empty()) service.submit_human_edits(id, edits);
    auto result = service.end_turn(id, player.focus_x());
    std::vector<EditRequest> rejected;
    const Level after = service.with_session(id, [](Session& s) { return s.level(); });
    for (const auto& a : result.additions) {
      if (!persona.keeps(a.x, a.y, a.tile, after)) rejected.push_back({EditKind::kDeletion, a.x, a.y, a.tile});
    }
    if (!rejected.empty()) service.submit_human_edits(id, rejected);
  }

  SimulationResult out;
  out.session_id = id;
  const auto before_close = parse_jsonl(service.export_log(id));
  const auto interim = adaptation_metrics(before_close);
  out.reuse_ranking = interim.late_ratio && *interim.late_ratio < 0.5 ? 1 : -1;
  service.close_session(id, out.reuse_ranking);
  out.log = service.export_log(id);
  out.report = adaptation_metrics(out.log);
  out.final_level = service.with_session(id, [](Session& s) { return s.level(); });
  return out;
}

// ---------------------------------------------------------------------------
// Rankings

namespace {

struct SessionSummary {
  std::string agent;
  std::string participant;
  int reuse = 0;
  double ratio = 1.0;
  int kept = 0;
};

}  // namespace

std::vector<stats::RankingRecord> rankings_from_logs(const std::vector<std::vector<json>>& logs) {
  std::vector<stats::RankingRecord> records;
  std::map<std::string, std::vector<SessionSummary>> by_participant;
  for (const auto& events : logs) {
    SessionSummary s;
    bool created = false;
    try {
      for (const auto& e : events) {
        const auto& type = event_type(e);
        if (type == "ranking") {
          records.push_back({e.at("comparison").get<std::string>(), e.at("feature").get<std::string>(),
                             e.at("first").get<std::string>()});
        } else if (type == "session_created") {
          created = true;
          s.agent = e.at("config").at("agent").get<std::string>();
          s.participant = e.at("config").value("participant", std::string());
        } else if (type == "session_closed") {
          const auto& r = e.at("reuse_ranking");
          s.reuse = r.is_null() ? 0 : r.get<int>();
        }
      }
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::kMalformedLog, ex.what());
    }
    if (!created || s.participant.empty()) continue;
    const auto report = adaptation_metrics(events);
    s.ratio = report.overall_ratio.value_or(1.0);
    s.kept = report.ai_additions - report.ai_deleted;
    by_participant[s.participant].push_back(s);
  }
  for (auto& [participant, sessions] : by_participant) {
    if (sessions.size() != 2 || sessions[0].agent == sessions[1].agent) continue;
    std::sort(sessions.begin(), sessions.end(), [](const auto& a, const auto& b) { return a.agent < b.agent; });
    const auto& a = sessions[0];
    const auto& b = sessions[1];
    const std::string comparison = a.agent + "-" + b.agent;
    // Ties fall through to the lower deletion ratio, then to the first agent.
    auto pick = [&](int score_a, int score_b) {
      if (score_a != score_b) return score_a > score_b ? a.agent : b.agent;
      if (a.ratio != b.ratio) return a.ratio < b.ratio ? a.agent : b.agent;
      return a.agent;
    };
    records.push_back({comparison, "Reuse", pick(a.reuse, b.reuse)});
    records.push_back({comparison, "Most Aided", pick(a.kept, b.kept)});
  }
  return records;
}

}  // namespace morai
