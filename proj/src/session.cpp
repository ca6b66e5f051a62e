#include "morai/session.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "morai/error.hpp"

namespace morai {

using json = nlohmann::json;

std::string_view to_string(AgentKind kind) { return kind == AgentKind::kCnn ? "cnn" : "markov"; }

AgentKind parse_agent_kind(std::string_view text) {
  if (text == "cnn") return AgentKind::kCnn;
  if (text == "markov") return AgentKind::kMarkov;
  throw Error(ErrorCode::kBadConfig, "unknown agent '" + std::string(text) + "'");
}

json to_json(const SessionConfig& c) {
  json j{{"width", c.width},
         {"agent", to_string(c.agent)},
         {"checkpoint", c.checkpoint},
         {"seed", c.seed},
         {"explain", c.explain},
         {"participant", c.participant}};
  j["tau"] = c.tau ? json(*c.tau) : json(nullptr);
  j["cap"] = c.cap ? json(*c.cap) : json(nullptr);
  return j;
}

SessionConfig session_config_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kBadConfig, "config must be a JSON object");
  try {
    SessionConfig c;
    c.width = j.value("width", c.width);
    if (j.contains("agent")) c.agent = parse_agent_kind(j.at("agent").get<std::string>());
    c.checkpoint = j.value("checkpoint", std::string());
    if (j.contains("tau") && !j.at("tau").is_null()) c.tau = j.at("tau").get<double>();
    if (j.contains("cap") && !j.at("cap").is_null()) c.cap = j.at("cap").get<int>();
    c.seed = j.value("seed", std::uint64_t{0});
    c.explain = j.value("explain", true);
    c.participant = j.value("participant", std::string());
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kBadConfig, e.what());
  }
}

Clock steady_clock_since_now() {
  auto start = std::chrono::steady_clock::now();
  return [start] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
  };
}

Clock logical_clock() {
  auto counter = std::make_shared<std::int64_t>(0);
  return [counter] { return (*counter)++; };
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

// ---------------------------------------------------------------------------
// Session

Session::Session(std::string id, SessionConfig config, Partner partner, Clock clock)
    : id_(std::move(id)),
      config_(std::move(config)),
      partner_(std::move(partner)),
      clock_(std::move(clock)),
      level_(config_.width) {
  if (config_.width < kMinLevelWidth) throw Error(ErrorCode::kBadConfig, "level width must be >= 40");
  json e{{"event_type", "session_created"}, {"session_id", id_}, {"config", to_json(config_)}};
  log(std::move(e));
}

const Blacklist& Session::blacklist() const {
  if (const auto* cnn = std::get_if<CnnAgent>(&partner_)) return cnn->blacklist();
  return std::get<MarkovPartner>(partner_).blacklist;
}

Blacklist& Session::mutable_blacklist() {
  if (auto* cnn = std::get_if<CnnAgent>(&partner_)) return cnn->blacklist();
  return std::get<MarkovPartner>(partner_).blacklist;
}

void Session::require_active() const {
  if (status_ != SessionStatus::kActive) throw Error(ErrorCode::kSessionClosed, "session " + id_ + " is closed");
}

void Session::log(json event) {
  if (!event.contains("turn_id")) event["turn_id"] = turn_counter_;
  if (!event.contains("timestamp")) event["timestamp"] = clock_();
  if (!event.contains("author")) event["author"] = "system";
  events_.push_back(std::move(event));
}

void Session::log_edit(const Edit& e, std::optional<double> activation) {
  json j{{"event_type", "edit"},
         {"kind", to_string(e.kind)},
         {"x", e.x},
         {"y", e.y},
         {"tile", e.tile},
         {"tile_name", TileManifest::standard().at(e.tile).name},
         {"author", to_string(e.author)},
         {"turn_id", e.turn_id},
         {"timestamp", e.timestamp_ms}};
  if (activation) j["activation"] = *activation;
  log(std::move(j));
}

void Session::issue_feedback(int x, int y, AiTile& tile, Outcome outcome) {
  const Triple triple = episode_[tile.episode_index].addition;
  if (auto* cnn = std::get_if<CnnAgent>(&partner_)) {
    cnn->feedback(triple, outcome, windows_[tile.window_index]);
  } else if (outcome == Outcome::kDeleted) {
    std::get<MarkovPartner>(partner_).blacklist.add(triple);
  }
  tile.rewarded = true;
  if (outcome == Outcome::kDeleted) episode_[tile.episode_index].kept = false;
  log(json{{"event_type", "feedback"},
           {"outcome", to_string(outcome)},
           {"reward", outcome == Outcome::kKept ? kKeptReward : kDeletedReward},
           {"x", x},
           {"y", y},
           {"tile", triple.tile},
           {"addition_turn", tile.turn_id}});
}

void Session::confirm_pending() {
  for (auto cell : pending_) {
    auto it = ai_tiles_.find(cell);
    if (it == ai_tiles_.end() || it->second.rewarded) continue;
    issue_feedback(cell.first, cell.second, it->second, Outcome::kKept);
  }
  pending_.clear();
}

std::int64_t Session::submit_human_edits(const std::vector<EditRequest>& edits) {
  require_active();
  std::vector<Edit> batch;
  batch.reserve(edits.size());
  {
    Level scratch = level_;
    for (const auto& r : edits) {
      Edit e{r.kind, r.x, r.y, r.tile, Author::kHuman, turn_counter_, 0};
      apply_edit(scratch, e);
      batch.push_back(e);
    }
  }
  for (auto& e : batch) {
    e.timestamp_ms = clock_();
    apply_edit(level_, e);
    ledger_.push_back(e);
    log_edit(e);
    if (e.kind != EditKind::kDeletion) continue;
    auto it = ai_tiles_.find({e.x, e.y});
    if (it == ai_tiles_.end()) continue;
    if (!it->second.rewarded) {
      issue_feedback(e.x, e.y, it->second, Outcome::kDeleted);
    } else {
      // Already rewarded as kept: no second reward, but never re-propose.
      const Triple t = episode_[it->second.episode_index].addition;
      mutable_blacklist().add(t);
      episode_[it->second.episode_index].kept = false;
      log(json{{"event_type", "blacklist"}, {"x", t.x}, {"y", t.y}, {"tile", t.tile}});
    }
    ai_tiles_.erase(it);
  }
  return turn_counter_;
}

TurnResult Session::end_turn(int focus_x) {
  require_active();
  confirm_pending();
  Window window = extract_window(level_, focus_x);
  AgentProposal proposal;
  if (auto* cnn = std::get_if<CnnAgent>(&partner_)) {
    proposal = cnn->propose(window);
  } else {
    auto& m = std::get<MarkovPartner>(partner_);
    proposal = markov_propose(*m.model, window, m.cap, mix_seed(config_.seed, static_cast<std::uint64_t>(turn_counter_)),
                              &m.blacklist);
  }
  TurnResult result;
  result.turn_id = ++turn_counter_;
  result.window_origin = window.origin_x;
  const std::size_t window_index = windows_.size();
  windows_.push_back(window);
  log(json{{"event_type", "turn"},
           {"focus_x", focus_x},
           {"window_origin", window.origin_x},
           {"addition_count", proposal.additions.size()},
           {"author", "ai"}});
  for (const auto& a : proposal.additions) {
    Edit e{EditKind::kAddition, a.x, a.y, a.tile, Author::kAi, result.turn_id, clock_()};
    apply_edit(level_, e);
    ledger_.push_back(e);
    log_edit(e, a.activation);
    episode_.push_back(EpisodeEntry{window, a.triple(), true});
    ai_tiles_[{a.x, a.y}] = AiTile{result.turn_id, episode_.size() - 1, window_index, false};
    pending_.emplace_back(a.x, a.y);
    result.additions.push_back(e);
    result.activations.push_back(a.activation);
  }
  if (config_.explain) {
    if (const auto* cnn = std::get_if<CnnAgent>(&partner_)) {
      for (const auto& a : proposal.additions) {
        auto ex = explain(cnn->network(), window, a.triple());
        log(json{{"event_type", "explanation"},
                 {"x", ex.x},
                 {"y", ex.y},
                 {"tile", ex.tile},
                 {"x0", ex.x0},
                 {"y0", ex.y0},
                 {"delta", ex.delta},
                 {"confidence", ex.confidence},
                 {"max_filter", ex.max_filter},
                 {"text", ex.text}});
        result.explanations.push_back(std::move(ex));
      }
    }
  }
  last_ai_turn_ = result.additions;
  return result;
}

std::vector<Edit> Session::remove_last_ai_turn() {
  require_active();
  if (last_ai_turn_.empty()) throw Error(ErrorCode::kNothingToRemove, "no AI turn to remove");
  std::vector<Edit> removed;
  for (const auto& a : last_ai_turn_) {
    auto it = ai_tiles_.find({a.x, a.y});
    if (it == ai_tiles_.end() || it->second.turn_id != a.turn_id) continue;
    Edit d{EditKind::kDeletion, a.x, a.y, a.tile, Author::kHuman, turn_counter_, clock_()};
    apply_edit(level_, d);
    ledger_.push_back(d);
    log_edit(d);
    if (!it->second.rewarded) {
      issue_feedback(a.x, a.y, it->second, Outcome::kDeleted);
    } else {
      mutable_blacklist().add(Triple{a.x, a.y, a.tile});
      episode_[it->second.episode_index].kept = false;
    }
    ai_tiles_.erase(it);
    removed.push_back(d);
  }
  last_ai_turn_.clear();
  if (removed.empty()) throw Error(ErrorCode::kNothingToRemove, "last AI turn was already deleted");
  log(json{{"event_type", "remove_ai_turn"}, {"removed", removed.size()}, {"author", "human"}});
  return removed;
}

void Session::reset_level(std::optional<int> width) {
  require_active();
  const int w = width.value_or(level_.width());
  if (w < kMinLevelWidth) throw Error(ErrorCode::kBadConfig, "level width must be >= 40");
  // Additions still awaiting confirmation are dropped without a reward.
  pending_.clear();
  ai_tiles_.clear();
  last_ai_turn_.clear();
  ledger_.clear();
  level_ = Level(w);
  ++level_index_;
  log(json{{"event_type", "level_reset"}, {"width", w}, {"level_index", level_index_}});
}

void Session::close(std::optional<int> reuse_ranking) {
  require_active();
  if (reuse_ranking && *reuse_ranking != 1 && *reuse_ranking != -1) {
    throw Error(ErrorCode::kInvalidArgument, "reuse ranking must be 1, -1 or null");
  }
  if (reuse_ranking) {
    std::size_t replayed = 0;
    if (auto* cnn = std::get_if<CnnAgent>(&partner_)) {
      cnn->apply_episode_reward(*reuse_ranking, episode_);
      replayed = static_cast<std::size_t>(std::count_if(episode_.begin(), episode_.end(), [](const auto& e) { return e.kept; }));
    }
    log(json{{"event_type", "episode_reward"}, {"reward", *reuse_ranking}, {"replayed", replayed}});
  }
  status_ = SessionStatus::kClosed;
  json e{{"event_type", "session_closed"}};
  e["reuse_ranking"] = reuse_ranking ? json(*reuse_ranking) : json(nullptr);
  log(std::move(e));
}

void Session::record_ranking(const std::string& comparison, const std::string& feature, const std::string& first) {
  require_active();
  const auto dash = comparison.find('-');
  if (dash == std::string::npos || (first != comparison.substr(0, dash) && first != comparison.substr(dash + 1))) {
    throw Error(ErrorCode::kInvalidArgument, "ranking must name one agent of '" + comparison + "'");
  }
  log(json{{"event_type", "ranking"},
           {"comparison", comparison},
           {"feature", feature},
           {"first", first},
           {"author", "human"}});
}

std::string Session::export_log() const {
  std::string out;
  for (const auto& e : events_) {
    out += e.dump();
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Service

std::string resolve_sessions_dir(const std::string& fallback) {
  if (const char* env = std::getenv("MORAI_SESSIONS_DIR"); env && *env) return env;
  return fallback;
}

SessionService::SessionService(ServiceOptions options) : options_(std::move(options)) {
  if (!options_.clock_factory) options_.clock_factory = steady_clock_since_now;
}

Partner SessionService::make_partner(const SessionConfig& config) {
  const double tau = config.tau.value_or(options_.default_tau);
  const int cap = config.cap.value_or(options_.default_cap);
  if (!(tau > 0.0 && tau < 1.0)) throw Error(ErrorCode::kBadConfig, "tau must be in (0,1)");
  if (cap < 1) throw Error(ErrorCode::kBadConfig, "cap must be >= 1");
  if (config.agent == AgentKind::kMarkov) {
    MarkovPartner p;
    p.cap = cap;
    if (!config.checkpoint.empty()) {
      namespace fs = std::filesystem;
      if (fs::is_directory(config.checkpoint)) {
        p.model = std::make_shared<MarkovModel>(markov_train(load_corpus(config.checkpoint)));
      } else {
        std::ifstream in(config.checkpoint);
        if (!in) throw Error(ErrorCode::kBadCheckpoint, "cannot open markov model " + config.checkpoint);
        std::stringstream ss;
        ss << in.rdbuf();
        p.model = std::make_shared<MarkovModel>(MarkovModel::from_json(ss.str()));
      }
    } else if (options_.default_markov) {
      p.model = options_.default_markov;
    } else {
      throw Error(ErrorCode::kBadConfig, "markov agent needs a model or corpus");
    }
    return p;
  }
  CnnAgent agent = !config.checkpoint.empty() ? CnnAgent::load(config.checkpoint)
                   : options_.default_cnn    ? *options_.default_cnn
                                             : CnnAgent(CnnAgentConfig{.init_seed = config.seed});
  agent.reset_session();
  agent.config().tau = tau;
  agent.config().cap = cap;
  return agent;
}

std::string SessionService::create_session(const SessionConfig& config) {
  if (config.width < kMinLevelWidth) throw Error(ErrorCode::kBadConfig, "level width must be >= 40");
  Partner partner = make_partner(config);
  std::string id;
  {
    std::lock_guard lock(registry_mutex_);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "s%06llu", static_cast<unsigned long long>(next_id_++));
    id = buf;
  }
  auto entry = std::make_shared<Entry>(id, config, std::move(partner), options_.clock_factory());
  std::lock_guard lock(registry_mutex_);
  sessions_.emplace(id, std::move(entry));
  return id;
}

std::shared_ptr<SessionService::Entry> SessionService::find(const std::string& id) {
  std::lock_guard lock(registry_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorCode::kUnknownSession, "no session " + id);
  return it->second;
}

std::int64_t SessionService::submit_human_edits(const std::string& id, const std::vector<EditRequest>& edits) {
  return with_session(id, [&](Session& s) { return s.submit_human_edits(edits); });
}

TurnResult SessionService::end_turn(const std::string& id, int focus_x) {
  return with_session(id, [&](Session& s) { return s.end_turn(focus_x); });
}

std::vector<Edit> SessionService::remove_last_ai_turn(const std::string& id) {
  return with_session(id, [&](Session& s) { return s.remove_last_ai_turn(); });
}

void SessionService::reset_level(const std::string& id, std::optional<int> width) {
  with_session(id, [&](Session& s) { s.reset_level(width); });
}

std::string SessionService::close_session(const std::string& id, std::optional<int> reuse_ranking) {
  return with_session(id, [&](Session& s) {
    s.close(reuse_ranking);
    if (options_.sessions_dir.empty()) return std::string();
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(options_.sessions_dir, ec);
    if (ec) throw Error(ErrorCode::kIo, "cannot create " + options_.sessions_dir);
    const auto path = (fs::path(options_.sessions_dir) / (s.id() + ".jsonl")).string();
    std::ofstream out(path);
    out << s.export_log();
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
    if (options_.save_agent_on_close) {
      if (const auto* cnn = std::get_if<CnnAgent>(&s.partner())) {
        cnn->save((fs::path(options_.sessions_dir) / (s.id() + ".agent")).string());
      }
    }
    return path;
  });
}

std::string SessionService::level_text(const std::string& id) {
  return with_session(id, [](Session& s) { return save_level(s.level()); });
}

std::string SessionService::export_log(const std::string& id) {
  return with_session(id, [](Session& s) { return s.export_log(); });
}

}  // namespace morai
