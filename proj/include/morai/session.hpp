#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "morai/agents.hpp"
#include "morai/explainer.hpp"
#include "morai/level.hpp"

namespace morai {

enum class AgentKind { kCnn, kMarkov };
std::string_view to_string(AgentKind kind);
AgentKind parse_agent_kind(std::string_view text);

struct SessionConfig {
  int width = kDefaultLevelWidth;
  AgentKind agent = AgentKind::kCnn;
  std::string checkpoint;  // CNN agent directory; empty = service default
  std::optional<double> tau;
  std::optional<int> cap;
  std::uint64_t seed = 0;
  bool explain = true;
  std::string participant;  // free-form tag carried into the log
};

nlohmann::json to_json(const SessionConfig& config);
SessionConfig session_config_from_json(const nlohmann::json& j);

/// Milliseconds since session start.
using Clock = std::function<std::int64_t()>;
Clock steady_clock_since_now();
/// Advances by one on every call; keeps logs byte-identical across runs.
Clock logical_clock();

/// An edit as submitted by a client, before attribution and timestamping.
struct EditRequest {
  EditKind kind = EditKind::kAddition;
  int x = 0;
  int y = 0;
  TileId tile = 0;
};

struct TurnResult {
  std::int64_t turn_id = 0;
  int window_origin = 0;
  std::vector<Edit> additions;
  std::vector<double> activations;
  std::vector<Explanation> explanations;  // empty when explanations are off or the agent is Markov
};

enum class SessionStatus { kActive, kClosed };

/// The partner taking AI turns: the CNN agent or the Markov baseline.
struct MarkovPartner {
  std::shared_ptr<const MarkovModel> model;
  int cap = 15;
  Blacklist blacklist;
};
using Partner = std::variant<CnnAgent, MarkovPartner>;

class Session {
 public:
  Session(std::string id, SessionConfig config, Partner partner, Clock clock);

  const std::string& id() const { return id_; }
  const SessionConfig& config() const { return config_; }
  const Level& level() const { return level_; }
  SessionStatus status() const { return status_; }
  std::int64_t turn_counter() const { return turn_counter_; }
  const std::vector<Edit>& ledger() const { return ledger_; }
  const std::vector<Edit>& last_ai_turn() const { return last_ai_turn_; }
  const std::vector<EpisodeEntry>& episode() const { return episode_; }
  const Partner& partner() const { return partner_; }
  const Blacklist& blacklist() const;

  /// Atomic: either every edit applies or none does.
  std::int64_t submit_human_edits(const std::vector<EditRequest>& edits);
  TurnResult end_turn(int focus_x);
  std::vector<Edit> remove_last_ai_turn();
  /// Starts a fresh empty level; the agent and blacklist carry over.
  void reset_level(std::optional<int> width = std::nullopt);
  /// Applies the episode reward when a ranking is given and closes the
  /// session. Further mutations throw SessionClosed.
  void close(std::optional<int> reuse_ranking);
  /// Logs a forced-choice answer, e.g. ("cnn-markov", "Most Fun", "cnn").
  void record_ranking(const std::string& comparison, const std::string& feature, const std::string& first);

  const std::vector<nlohmann::json>& events() const { return events_; }
  std::string export_log() const;

 private:
  struct AiTile {
    std::int64_t turn_id;
    std::size_t episode_index;
    std::size_t window_index;
    bool rewarded;  // immediate keep/delete feedback already issued
  };

  void require_active() const;
  void log(nlohmann::json event);
  void log_edit(const Edit& e, std::optional<double> activation = std::nullopt);
  void issue_feedback(int x, int y, AiTile& tile, Outcome outcome);
  void confirm_pending();
  Blacklist& mutable_blacklist();

  std::string id_;
  SessionConfig config_;
  Partner partner_;
  Clock clock_;
  Level level_;
  SessionStatus status_ = SessionStatus::kActive;
  std::int64_t turn_counter_ = 0;
  std::int64_t level_index_ = 0;
  std::vector<Edit> ledger_;
  std::vector<Edit> last_ai_turn_;
  std::vector<EpisodeEntry> episode_;
  std::vector<Window> windows_;
  std::map<std::pair<int, int>, AiTile> ai_tiles_;
  std::vector<std::pair<int, int>> pending_;  // AI cells awaiting keep confirmation, in addition order
  std::vector<nlohmann::json> events_;
};

struct ServiceOptions {
  std::string sessions_dir;  // empty = do not persist
  bool save_agent_on_close = false;
  std::optional<CnnAgent> default_cnn;               // prototype copied per session
  std::shared_ptr<const MarkovModel> default_markov;
  double default_tau = 0.5;
  int default_cap = 15;
  std::function<Clock()> clock_factory = steady_clock_since_now;
};

/// Resolves the sessions directory: MORAI_SESSIONS_DIR wins over `fallback`.
std::string resolve_sessions_dir(const std::string& fallback);

/// Thread-safe registry. Each session has its own mutex; operations on
/// different sessions proceed in parallel.
class SessionService {
 public:
  explicit SessionService(ServiceOptions options);

  std::string create_session(const SessionConfig& config);
  std::int64_t submit_human_edits(const std::string& id, const std::vector<EditRequest>& edits);
  TurnResult end_turn(const std::string& id, int focus_x);
  std::vector<Edit> remove_last_ai_turn(const std::string& id);
  void reset_level(const std::string& id, std::optional<int> width);
  /// Returns the path of the flushed log (empty when not persisting).
  std::string close_session(const std::string& id, std::optional<int> reuse_ranking);
  std::string level_text(const std::string& id);
  std::string export_log(const std::string& id);

  /// Runs `fn` with the session locked.
  template <typename Fn>
  auto with_session(const std::string& id, Fn&& fn) {
    auto entry = find(id);
    std::lock_guard lock(entry->mutex);
    return fn(entry->session);
  }

  const ServiceOptions& options() const { return options_; }

 private:
  struct Entry {
    std::mutex mutex;
    Session session;
    template <typename... Args>
    explicit Entry(Args&&... args) : session(std::forward<Args>(args)...) {}
  };
  std::shared_ptr<Entry> find(const std::string& id);
  Partner make_partner(const SessionConfig& config);

  ServiceOptions options_;
  std::mutex registry_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::uint64_t next_id_ = 1;
};

}  // namespace morai
