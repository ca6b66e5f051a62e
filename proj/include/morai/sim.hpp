#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "morai/session.hpp"
#include "morai/stats.hpp"

namespace morai {

struct ColumnRange {
  int first = 0;
  int last = 0;  // inclusive
};

/// Declarative stand-in for a human designer, loaded from JSON:
///
///   {"name": "...", "allow": ["ground", ...] | "*", "rows": [lo, hi],
///    "protected_columns": [[a, b], ...], "seed": 1,
///    "placement": {"generator": "flat_ground" | "none" | "random",
///                  "columns_per_turn": 4, "edits_per_turn": 6}
///    | {"script": [[{"kind": "addition", "x": 0, "y": 14, "tile": "ground"}, ...], ...]}}
struct Persona {
  std::string name;
  std::optional<std::set<TileId>> allow;  // nullopt keeps every tile type
  int row_min = 0;
  int row_max = kLevelHeight - 1;
  std::vector<ColumnRange> protected_columns;
  std::string generator = "none";
  int columns_per_turn = 4;
  int edits_per_turn = 6;
  std::vector<std::vector<EditRequest>> script;
  std::uint64_t seed = 0;

  bool is_protected(int x) const;
  /// Keep/delete rule for one AI addition. Pure in its arguments.
  bool keeps(int x, int y, TileId tile, const Level& level) const;

  static Persona from_json(const nlohmann::json& j, const TileManifest& manifest = TileManifest::standard());
  static Persona load(const std::string& path, const TileManifest& manifest = TileManifest::standard());
  nlohmann::json to_json(const TileManifest& manifest = TileManifest::standard()) const;
};

/// Runtime state of a persona's placement policy.
class PersonaPlayer {
 public:
  PersonaPlayer(Persona persona, std::uint64_t seed);

  /// Legal edits for this turn against `level`.
  std::vector<EditRequest> next_edits(const Level& level);
  /// Column the persona is working at: its last edited column, else its cursor.
  int focus_x() const { return focus_x_; }
  const Persona& persona() const { return persona_; }

 private:
  std::vector<EditRequest> flat_ground(const Level& level);
  std::vector<EditRequest> random_edits(const Level& level);

  Persona persona_;
  std::mt19937_64 rng_;
  int cursor_ = 0;
  int focus_x_ = 0;
  std::size_t script_index_ = 0;
};

struct TurnStat {
  std::int64_t turn_id = 0;
  int additions = 0;
  int deleted = 0;
  int kept = 0;
  std::optional<double> ratio;
};

struct AdaptationReport {
  std::vector<TurnStat> turns;
  std::optional<double> early_ratio;  // first 5 AI turns, pooled
  std::optional<double> late_ratio;   // last 5 AI turns, pooled
  std::optional<double> overall_ratio;
  int ai_additions = 0;
  int ai_deleted = 0;
  int ai_kept = 0;
  int human_additions = 0;
  int human_deletions = 0;

  nlohmann::json to_json() const;
};

inline constexpr int kAdaptationWindowTurns = 5;

/// Deletion ratios from `turn` and `feedback` events only. Throws MalformedLog.
AdaptationReport adaptation_metrics(const std::vector<nlohmann::json>& events);
AdaptationReport adaptation_metrics(const std::string& jsonl);
std::vector<nlohmann::json> parse_jsonl(const std::string& jsonl);

/// Folds the log's edit events (and level resets) into a grid.
Level replay_log(const std::vector<nlohmann::json>& events);

struct SimulationResult {
  std::string session_id;
  std::string log;  // JSONL
  AdaptationReport report;
  Level final_level;
  int reuse_ranking = 0;
};

struct SimulationOptions {
  SessionConfig session;
  ServiceOptions service;
  int turns = 30;
  std::uint64_t seed = 0;
};

/// persona edits -> end turn -> persona deletes what it rejects; closes with
/// reuse +1 when the late deletion ratio is below 0.5, else -1.
SimulationResult simulate_session(const Persona& persona, SimulationOptions options);

/// Forced-choice rankings per participant: explicit `ranking` events, plus
/// "Reuse" and "Most Aided" derived from participants with exactly two
/// sessions run against different agents.
std::vector<stats::RankingRecord> rankings_from_logs(const std::vector<std::vector<nlohmann::json>>& logs);

}  // namespace morai
