#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "morai/level.hpp"
#include "morai/tensor_net.hpp"

namespace morai {

inline constexpr double kKeptReward = 0.1;
inline constexpr double kDeletedReward = -0.1;

/// (column, row, tile). Columns are absolute level coordinates unless a
/// function says otherwise.
struct Triple {
  int x = 0;
  int y = 0;
  TileId tile = 0;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct Addition {
  int x = 0;  // absolute column
  int y = 0;
  TileId tile = 0;
  double activation = 0.0;

  Triple triple() const { return {x, y, tile}; }
  friend bool operator==(const Addition&, const Addition&) = default;
};

struct AgentProposal {
  std::vector<Addition> additions;
  std::optional<Volume> action_matrix;  // CNN agent only
  std::int64_t turn_id = 0;
};

/// Session-scoped set of triples the human deleted; grows monotonically.
class Blacklist {
 public:
  void add(const Triple& t) { entries_.insert(t); }
  bool contains(const Triple& t) const { return entries_.contains(t); }
  std::size_t size() const { return entries_.size(); }
  const std::set<Triple>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

  /// One `{"x":..,"y":..,"tile":..}` object per line.
  std::string to_jsonl() const;
  static Blacklist from_jsonl(const std::string& text);

 private:
  std::set<Triple> entries_;
};

enum class Outcome { kKept, kDeleted };
std::string_view to_string(Outcome outcome);

// ---------------------------------------------------------------------------
// Markov chain baseline

/// Context slot value: a tile id, kEmptySlot, or kBoundarySlot.
inline constexpr int kEmptySlot = -1;
inline constexpr int kBoundarySlot = -2;
/// Outcome index kTileCount stands for "leave empty".
inline constexpr int kOutcomeCount = kTileCount + 1;

struct MarkovContext {
  int left = kBoundarySlot;
  int below = kBoundarySlot;
  int below_left = kBoundarySlot;
  friend auto operator<=>(const MarkovContext&, const MarkovContext&) = default;
};

struct MarkovModel {
  std::map<MarkovContext, std::array<double, kOutcomeCount>> counts;
  double smoothing = 0.1;

  /// Smoothed conditional distribution; unseen contexts put all mass on empty.
  std::array<double, kOutcomeCount> distribution(const MarkovContext& ctx) const;

  std::string to_json() const;
  static MarkovModel from_json(const std::string& text);
};

/// Scans columns left to right, rows bottom to top; context is the cells to
/// the left, below, and below-left.
MarkovModel markov_train(const std::vector<Level>& corpus, double smoothing = 0.1);

/// Samples an outcome for each empty window cell in scan order, feeding
/// sampled tiles back into later contexts, and returns at most `n` additions.
/// Blacklisted triples are treated as an "empty" outcome.
AgentProposal markov_propose(const MarkovModel& model, const Window& window, int n, std::uint64_t seed,
                             const Blacklist* blacklist = nullptr);

// ---------------------------------------------------------------------------
// CNN agent

struct CnnAgentConfig {
  double tau = 0.5;
  int cap = 15;
  double lr = 1e-3;
  int head_radius = 0;
  std::uint64_t init_seed = 0;
};

struct EpisodeEntry {
  Window window;
  Triple addition;  // absolute column
  bool kept = true;
};

struct PretrainOptions {
  int epochs = 5;
  int steps_per_epoch = 40;
  double hide_min = 0.1;
  double hide_max = 0.5;
  std::uint64_t seed = 0;
};

struct PretrainReport {
  std::vector<double> epoch_mean_loss;
  std::int64_t steps = 0;
};

struct FeedbackResult {
  double activation_before = 0.0;
  double target = 0.0;
  double loss = 0.0;
};

class CnnAgent {
 public:
  explicit CnnAgent(const CnnAgentConfig& config = {});
  CnnAgent(Network network, AdamState optimizer, const CnnAgentConfig& config);

  const CnnAgentConfig& config() const { return config_; }
  CnnAgentConfig& config() { return config_; }
  const Network& network() const { return network_; }
  Network& network() { return network_; }
  const AdamState& optimizer() const { return optimizer_; }
  const Blacklist& blacklist() const { return blacklist_; }
  Blacklist& blacklist() { return blacklist_; }

  Volume action_matrix(const Window& window) const;
  /// Activation for an absolute-column triple inside `window`.
  double activation(const Window& window, const Triple& triple) const;

  /// Threshold at tau, drop occupied cells and blacklisted triples, keep the
  /// top `cap` by activation (ties to the lowest (x, y, tile)), one per cell.
  AgentProposal propose(const Window& window);

  /// One masked Adam step at the addition's action-matrix index toward
  /// clamp(activation + reward, 0, 1). Deletions also enter the blacklist.
  /// Throws UnknownAddition for triples this agent never proposed.
  FeedbackResult feedback(const Triple& addition, Outcome outcome, const Window& window_at_proposal);

  /// Replays kept episode additions one step each toward
  /// clamp(activation + 0.1 * outcome, 0, 1).
  void apply_episode_reward(int session_outcome, const std::vector<EpisodeEntry>& episode);

  /// Masked-completion training on a level corpus.
  PretrainReport pretrain(const std::vector<Level>& corpus, const PretrainOptions& options);

  /// Forgets per-session state: blacklist and the proposed-addition record.
  void reset_session();

  /// Directory with net.bin (network + Adam), blacklist.jsonl, config.json.
  void save(const std::string& dir) const;
  static CnnAgent load(const std::string& dir);

 private:
  double train_single(const Window& window, int wx, int y, TileId tile, double target);

  CnnAgentConfig config_;
  Network network_;
  AdamState optimizer_;
  Blacklist blacklist_;
  std::set<Triple> proposed_;
};


}  // namespace morai
