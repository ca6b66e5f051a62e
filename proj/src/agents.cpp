#include "morai/agents.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "morai/error.hpp"

namespace morai {

using json = nlohmann::json;

std::string_view to_string(Outcome outcome) { return outcome == Outcome::kKept ? "kept" : "deleted"; }

std::string Blacklist::to_jsonl() const {
  std::string out;
  for (const auto& t : entries_) {
    out += json{{"x", t.x}, {"y", t.y}, {"tile", t.tile}}.dump();
    out += '\n';
  }
  return out;
}

Blacklist Blacklist::from_jsonl(const std::string& text) {
  Blacklist b;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      auto j = json::parse(line);
      b.add(Triple{j.at("x").get<int>(), j.at("y").get<int>(), j.at("tile").get<TileId>()});
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kBadCheckpoint, std::string("blacklist line: ") + e.what());
    }
  }
  return b;
}

// ---------------------------------------------------------------------------
// Markov

namespace {

template <typename CellFn>
MarkovContext context_at(int x, int y, int width, CellFn cell) {
  auto slot = [&](int cx, int cy) {
    if (cx < 0 || cx >= width || cy < 0 || cy >= kLevelHeight) return kBoundarySlot;
    return cell(cx, cy);
  };
  return MarkovContext{slot(x - 1, y), slot(x, y + 1), slot(x - 1, y + 1)};
}

int outcome_index(std::optional<TileId> t) { return t ? *t : kTileCount; }

}  // namespace

std::array<double, kOutcomeCount> MarkovModel::distribution(const MarkovContext& ctx) const {
  std::array<double, kOutcomeCount> p{};
  auto it = counts.find(ctx);
  if (it == counts.end()) {
    p[kTileCount] = 1.0;
    return p;
  }
  double total = 0.0;
  for (int o = 0; o < kOutcomeCount; ++o) {
    p[o] = it->second[o] + smoothing;
    total += p[o];
  }
  if (total <= 0.0) {
    p.fill(0.0);
    p[kTileCount] = 1.0;
    return p;
  }
  for (auto& v : p) v /= total;
  return p;
}

std::string MarkovModel::to_json() const {
  json j;
  j["smoothing"] = smoothing;
  j["contexts"] = json::array();
  for (const auto& [ctx, c] : counts) {
    j["contexts"].push_back({{"left", ctx.left}, {"below", ctx.below}, {"below_left", ctx.below_left}, {"counts", c}});
  }
  return j.dump();
}

MarkovModel MarkovModel::from_json(const std::string& text) {
  try {
    auto j = json::parse(text);
    MarkovModel m;
    m.smoothing = j.at("smoothing").get<double>();
    for (const auto& e : j.at("contexts")) {
      MarkovContext ctx{e.at("left").get<int>(), e.at("below").get<int>(), e.at("below_left").get<int>()};
      m.counts[ctx] = e.at("counts").get<std::array<double, kOutcomeCount>>();
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kBadCheckpoint, std::string("markov model: ") + e.what());
  }
}

MarkovModel markov_train(const std::vector<Level>& corpus, double smoothing) {
  if (corpus.empty()) throw Error(ErrorCode::kEmptyCorpus, "markov_train needs at least one level");
  if (smoothing < 0.0) throw Error(ErrorCode::kInvalidArgument, "smoothing must be >= 0");
  MarkovModel model;
  model.smoothing = smoothing;
  for (const auto& level : corpus) {
    auto cell = [&](int cx, int cy) {
      auto t = level.at(cx, cy);
      return t ? static_cast<int>(*t) : kEmptySlot;
    };
    for (int x = 0; x < level.width(); ++x) {
      for (int y = kLevelHeight - 1; y >= 0; --y) {
        auto ctx = context_at(x, y, level.width(), cell);
        auto& row = model.counts[ctx];
        row[outcome_index(level.at(x, y))] += 1.0;
      }
    }
  }
  return model;
}

AgentProposal markov_propose(const MarkovModel& model, const Window& window, int n, std::uint64_t seed,
                             const Blacklist* blacklist) {
  if (n < 1) throw Error(ErrorCode::kInvalidArgument, "markov_propose needs n >= 1");
  AgentProposal proposal;
  Window work = window;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto cell = [&](int cx, int cy) {
    auto t = work.at(cx, cy);
    return t ? static_cast<int>(*t) : kEmptySlot;
  };
  for (int x = 0; x < kWindowWidth; ++x) {
    for (int y = kLevelHeight - 1; y >= 0; --y) {
      if (static_cast<int>(proposal.additions.size()) >= n) return proposal;
      if (!work.empty_at(x, y)) continue;
      const auto p = model.distribution(context_at(x, y, kWindowWidth, cell));
      const double u = unit(rng);
      double acc = 0.0;
      int outcome = kTileCount;
      for (int o = 0; o < kOutcomeCount; ++o) {
        acc += p[o];
        if (u < acc) {
          outcome = o;
          break;
        }
      }
      if (outcome == kTileCount) continue;
      const Triple t{window.origin_x + x, y, static_cast<TileId>(outcome)};
      if (blacklist && blacklist->contains(t)) continue;
      work.cells[static_cast<std::size_t>(x) * kLevelHeight + y] = static_cast<std::int8_t>(outcome);
      proposal.additions.push_back(Addition{t.x, t.y, t.tile, p[outcome]});
    }
  }
  return proposal;
}

// ---------------------------------------------------------------------------
// CNN agent

namespace {

void check_config(const CnnAgentConfig& c) {
  if (!(c.tau > 0.0 && c.tau < 1.0)) throw Error(ErrorCode::kBadConfig, "tau must be in (0,1)");
  if (c.cap < 1) throw Error(ErrorCode::kBadConfig, "cap must be >= 1");
  if (!(c.lr > 0.0)) throw Error(ErrorCode::kBadConfig, "learning rate must be positive");
  if (c.head_radius < 0) throw Error(ErrorCode::kBadConfig, "head radius must be >= 0");
}

}  // namespace

CnnAgent::CnnAgent(const CnnAgentConfig& config)
    : config_(config),
      network_(Network::create(agent_architecture(config.head_radius), config.init_seed)),
      optimizer_(AdamState::with_lr(config.lr)) {
  check_config(config_);
}

CnnAgent::CnnAgent(Network network, AdamState optimizer, const CnnAgentConfig& config)
    : config_(config), network_(std::move(network)), optimizer_(std::move(optimizer)) {
  check_config(config_);
  if (!(network_.architecture() == agent_architecture(config_.head_radius))) {
    throw Error(ErrorCode::kBadCheckpoint, "network does not have the agent architecture");
  }
  optimizer_.lr = config_.lr;
}

Volume CnnAgent::action_matrix(const Window& window) const { return network_.forward(to_tensor(window)); }

double CnnAgent::activation(const Window& window, const Triple& triple) const {
  const int wx = triple.x - window.origin_x;
  if (wx < 0 || wx >= kWindowWidth || triple.y < 0 || triple.y >= kLevelHeight) {
    throw Error(ErrorCode::kOutOfBounds, "triple outside the window");
  }
  return network_.output_at(to_tensor(window), wx, triple.y, triple.tile);
}

AgentProposal CnnAgent::propose(const Window& window) {
  AgentProposal proposal;
  Volume matrix = action_matrix(window);
  std::vector<Addition> candidates;
  for (int x = 0; x < kWindowWidth; ++x) {
    for (int y = 0; y < kLevelHeight; ++y) {
      if (!window.empty_at(x, y)) continue;
      for (int t = 0; t < kTileCount; ++t) {
        const double a = matrix.at(x, y, t);
        if (!(a > config_.tau)) continue;
        const Triple triple{window.origin_x + x, y, static_cast<TileId>(t)};
        if (blacklist_.contains(triple)) continue;
        candidates.push_back(Addition{triple.x, y, triple.tile, a});
      }
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Addition& a, const Addition& b) {
    if (a.activation != b.activation) return a.activation > b.activation;
    return a.triple() < b.triple();
  });
  std::set<std::pair<int, int>> used;
  for (const auto& c : candidates) {
    if (static_cast<int>(proposal.additions.size()) >= config_.cap) break;
    if (!used.insert({c.x, c.y}).second) continue;
    proposal.additions.push_back(c);
    proposed_.insert(c.triple());
  }
  proposal.action_matrix = std::move(matrix);
  return proposal;
}

double CnnAgent::train_single(const Window& window, int wx, int y, TileId tile, double target) {
  Volume input = to_tensor(window);
  Volume target_v(kWindowWidth, kLevelHeight, kTileCount);
  Volume mask(kWindowWidth, kLevelHeight, kTileCount);
  target_v.at(wx, y, tile) = target;
  mask.at(wx, y, tile) = 1.0;
  auto result = backward(network_, input, target_v, mask);
  adam_step(network_, result.gradients, optimizer_);
  return result.loss;
}

FeedbackResult CnnAgent::feedback(const Triple& addition, Outcome outcome, const Window& window_at_proposal) {
  if (!proposed_.contains(addition)) {
    throw Error(ErrorCode::kUnknownAddition, "agent did not propose (" + std::to_string(addition.x) + "," +
                                                 std::to_string(addition.y) + "," +
                                                 std::to_string(addition.tile) + ")");
  }
  const int wx = addition.x - window_at_proposal.origin_x;
  if (wx < 0 || wx >= kWindowWidth) throw Error(ErrorCode::kUnknownAddition, "addition outside its window");
  FeedbackResult r;
  r.activation_before = activation(window_at_proposal, addition);
  const double reward = outcome == Outcome::kKept ? kKeptReward : kDeletedReward;
  r.target = std::clamp(r.activation_before + reward, 0.0, 1.0);
  r.loss = train_single(window_at_proposal, wx, addition.y, addition.tile, r.target);
  if (outcome == Outcome::kDeleted) blacklist_.add(addition);
  return r;
}

void CnnAgent::apply_episode_reward(int session_outcome, const std::vector<EpisodeEntry>& episode) {
  if (session_outcome != 1 && session_outcome != -1) {
    throw Error(ErrorCode::kInvalidArgument, "episode outcome must be +1 or -1");
  }
  for (const auto& e : episode) {
    if (!e.kept) continue;
    const int wx = e.addition.x - e.window.origin_x;
    if (wx < 0 || wx >= kWindowWidth) continue;
    const double a = activation(e.window, e.addition);
    const double target = std::clamp(a + kKeptReward * session_outcome, 0.0, 1.0);
    train_single(e.window, wx, e.addition.y, e.addition.tile, target);
  }
}

PretrainReport CnnAgent::pretrain(const std::vector<Level>& corpus, const PretrainOptions& options) {
  if (corpus.empty()) throw Error(ErrorCode::kEmptyCorpus, "pretrain needs at least one level");
  for (const auto& l : corpus) {
    if (l.width() < kWindowWidth) throw Error(ErrorCode::kLevelTooNarrow, "corpus level narrower than 40");
  }
  if (options.epochs < 0 || options.steps_per_epoch < 1 || options.hide_min < 0.0 ||
      options.hide_max < options.hide_min || options.hide_max > 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "bad pretrain options");
  }
  PretrainReport report;
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> ratio_dist(options.hide_min, options.hide_max);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    double total = 0.0;
    for (int step = 0; step < options.steps_per_epoch; ++step) {
      const auto& level =
          corpus[std::uniform_int_distribution<std::size_t>(0, corpus.size() - 1)(rng)];
      const int origin = std::uniform_int_distribution<int>(0, level.width() - kWindowWidth)(rng);
      Window window = window_at(level, origin);
      std::vector<std::pair<int, int>> occupied;
      std::vector<std::pair<int, int>> empty;
      for (int x = 0; x < kWindowWidth; ++x) {
        for (int y = 0; y < kLevelHeight; ++y) (window.empty_at(x, y) ? empty : occupied).emplace_back(x, y);
      }
      const double ratio = ratio_dist(rng);
      const auto hide = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(occupied.size())));
      std::shuffle(occupied.begin(), occupied.end(), rng);

      Window input_window = window;
      Volume target(kWindowWidth, kLevelHeight, kTileCount);
      Volume mask(kWindowWidth, kLevelHeight, kTileCount);
      for (std::size_t i = 0; i < hide && i < occupied.size(); ++i) {
        auto [x, y] = occupied[i];
        const auto tile = *window.at(x, y);
        input_window.cells[static_cast<std::size_t>(x) * kLevelHeight + y] = -1;
        target.at(x, y, tile) = 1.0;
        mask.at(x, y, tile) = 1.0;
      }
      // Equal number of negatives drawn from (empty cell, tile) pairs.
      const std::size_t negatives = std::min(hide, empty.size() * kTileCount);
      std::set<std::tuple<int, int, int>> chosen;
      std::uniform_int_distribution<std::size_t> pick_cell(0, empty.empty() ? 0 : empty.size() - 1);
      std::uniform_int_distribution<int> pick_tile(0, kTileCount - 1);
      while (chosen.size() < negatives) {
        auto [x, y] = empty[pick_cell(rng)];
        const int t = pick_tile(rng);
        if (chosen.emplace(x, y, t).second) mask.at(x, y, t) = 1.0;
      }
      auto result = backward(network_, to_tensor(input_window), target, mask);
      adam_step(network_, result.gradients, optimizer_);
      total += result.loss;
      ++report.steps;
    }
    report.epoch_mean_loss.push_back(total / options.steps_per_epoch);
  }
  return report;
}

void CnnAgent::reset_session() {
  blacklist_.clear();
  proposed_.clear();
}

void CnnAgent::save(const std::string& dir) const {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir);
  save_checkpoint((fs::path(dir) / "net.bin").string(), network_, &optimizer_);
  {
    std::ofstream out(fs::path(dir) / "blacklist.jsonl");
    out << blacklist_.to_jsonl();
  }
  json cfg{{"tau", config_.tau},
           {"cap", config_.cap},
           {"lr", config_.lr},
           {"head_radius", config_.head_radius},
           {"init_seed", config_.init_seed}};
  std::ofstream out(fs::path(dir) / "config.json");
  out << cfg.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "cannot write agent config");
}

CnnAgent CnnAgent::load(const std::string& dir) {
  namespace fs = std::filesystem;
  CnnAgentConfig cfg;
  {
    std::ifstream in(fs::path(dir) / "config.json");
    if (!in) throw Error(ErrorCode::kBadCheckpoint, "missing config.json in " + dir);
    try {
      auto j = json::parse(in);
      cfg.tau = j.value("tau", cfg.tau);
      cfg.cap = j.value("cap", cfg.cap);
      cfg.lr = j.value("lr", cfg.lr);
      cfg.head_radius = j.value("head_radius", cfg.head_radius);
      cfg.init_seed = j.value("init_seed", cfg.init_seed);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kBadCheckpoint, std::string("config.json: ") + e.what());
    }
  }
  auto cp = load_checkpoint((fs::path(dir) / "net.bin").string(), agent_architecture(cfg.head_radius));
  CnnAgent agent(std::move(cp.network), cp.adam.value_or(AdamState::with_lr(cfg.lr)), cfg);
  std::ifstream in(fs::path(dir) / "blacklist.jsonl");
  if (in) {
    std::stringstream ss;
    ss << in.rdbuf();
    agent.blacklist_ = Blacklist::from_jsonl(ss.str());
  }
  return agent;
}

}  // namespace morai
