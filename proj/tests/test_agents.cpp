#include <filesystem>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "morai/agents.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace morai;

namespace {

Level ground_level(int width, int ground_to) {
  Level l(width);
  for (int x = 0; x < ground_to; ++x) l.set(x, 14, 0);
  return l;
}

// Agent whose action matrix is leaky_relu(bias) everywhere: zero weights.
CnnAgent constant_agent(double base, const std::map<Triple, double>& spikes, double tau = 0.5) {
  CnnAgentConfig cfg;
  cfg.tau = tau;
  CnnAgent agent(cfg);
  for (auto block : agent.network().parameters()) std::fill(block.begin(), block.end(), 0.0);
  auto& head = agent.network().head();
  std::fill(head.biases.begin(), head.biases.end(), base);
  for (const auto& [t, v] : spikes) head.biases[(static_cast<std::size_t>(t.x) * 15 + t.y) * 32 + t.tile] = v;
  return agent;
}

std::vector<Level> toy_corpus() { return load_corpus(std::string(MORAI_DATA_DIR) + "/corpus"); }

}  // namespace

TEST(Blacklist, JsonlRoundTrip) {
  Blacklist b;
  b.add({3, 14, 0});
  b.add({10, 2, 31});
  auto c = Blacklist::from_jsonl(b.to_jsonl());
  EXPECT_EQ(c.entries(), b.entries());
  EXPECT_TRUE(c.contains({10, 2, 31}));
}

TEST(Markov, AllEmptyCorpus) {
  auto model = markov_train({Level(40), Level(45)}, 0.0);
  for (const auto& [ctx, counts] : model.counts) {
    auto p = model.distribution(ctx);
    EXPECT_EQ(p[kTileCount], 1.0);
  }
}

TEST(Markov, GroundRowContext) {
  auto level = ground_level(4, 4);
  const MarkovContext ctx{0, kBoundarySlot, kBoundarySlot};
  auto raw = markov_train({level}, 0.0);
  ASSERT_TRUE(raw.counts.contains(ctx));
  EXPECT_EQ(raw.counts.at(ctx)[0], 3.0);
  EXPECT_EQ(raw.distribution(ctx)[0], 1.0);
  auto smoothed = markov_train({level}, 0.1);
  auto p = smoothed.distribution(ctx);
  double sum = 0.0;
  for (double v : p) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    sum += v;
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_NEAR(p[0], 3.1 / (3.0 + 0.1 * kOutcomeCount), 1e-12);
}

TEST(Markov, UnseenContextFallsBackToEmpty) {
  auto model = markov_train({ground_level(40, 40)});
  auto p = model.distribution({7, 7, 7});
  EXPECT_EQ(p[kTileCount], 1.0);
}

TEST(Markov, ExtendsHalfFinishedRow) {
  auto model = markov_train({ground_level(40, 40), ground_level(50, 50)}, 0.0);
  auto window = extract_window(ground_level(40, 20), 0);
  auto p = markov_propose(model, window, 100, 1);
  ASSERT_EQ(p.additions.size(), 20u);
  for (int i = 0; i < 20; ++i) {
    EXPECT_EQ(p.additions[i].x, 20 + i);
    EXPECT_EQ(p.additions[i].y, 14);
    EXPECT_EQ(p.additions[i].tile, 0);
  }
  auto capped = markov_propose(model, window, 5, 1);
  EXPECT_EQ(capped.additions.size(), 5u);
  EXPECT_EQ(capped.additions.back().x, 24);
}

TEST(Markov, DeterministicAndFullWindow) {
  auto model = markov_train(toy_corpus());
  auto window = extract_window(toy_corpus()[0], 30);
  auto a = markov_propose(model, window, 15, 9);
  auto b = markov_propose(model, window, 15, 9);
  EXPECT_EQ(a.additions, b.additions);
  for (const auto& add : a.additions) EXPECT_TRUE(window.empty_at(add.x - window.origin_x, add.y));

  Window full = empty_window();
  std::fill(full.cells.begin(), full.cells.end(), 1);
  EXPECT_TRUE(markov_propose(model, full, 15, 9).additions.empty());
}

TEST(Markov, SamplerMatchesDistribution) {
  // Every cell but (5,14) occupied, so each draw samples exactly one context.
  MarkovModel model;
  model.smoothing = 0.0;
  const MarkovContext ctx{3, kBoundarySlot, kBoundarySlot};
  std::array<double, kOutcomeCount> counts{};
  counts[0] = 5;
  counts[1] = 3;
  counts[8] = 1;
  counts[kTileCount] = 1;
  model.counts[ctx] = counts;
  Window w = empty_window();
  std::fill(w.cells.begin(), w.cells.end(), 3);
  w.cells[5 * 15 + 14] = -1;
  std::array<double, kOutcomeCount> freq{};
  const int draws = 10000;
  Blacklist bl;
  bl.add({5, 14, 8});
  std::array<double, kOutcomeCount> blocked{};
  for (int s = 0; s < draws; ++s) {
    auto p = markov_propose(model, w, 1, s);
    freq[p.additions.empty() ? kTileCount : p.additions[0].tile] += 1.0 / draws;
    auto q = markov_propose(model, w, 1, s, &bl);
    blocked[q.additions.empty() ? kTileCount : q.additions[0].tile] += 1.0 / draws;
  }
  auto expect = model.distribution(ctx);
  double tv = 0.0, tv_blocked = 0.0;
  auto expect_blocked = expect;
  expect_blocked[kTileCount] += expect_blocked[8];
  expect_blocked[8] = 0.0;
  for (int o = 0; o < kOutcomeCount; ++o) {
    tv += std::abs(freq[o] - expect[o]) / 2.0;
    tv_blocked += std::abs(blocked[o] - expect_blocked[o]) / 2.0;
  }
  EXPECT_LT(tv, 0.05);
  EXPECT_LT(tv_blocked, 0.05);
  EXPECT_EQ(blocked[8], 0.0);
}

TEST(Markov, JsonRoundTrip) {
  auto model = markov_train(toy_corpus());
  auto back = MarkovModel::from_json(model.to_json());
  EXPECT_EQ(back.counts, model.counts);
  EXPECT_EQ(back.smoothing, model.smoothing);
}

TEST(CnnPropose, ThresholdAndBlacklist) {
  auto window = empty_window();
  auto quiet = constant_agent(0.1, {});
  EXPECT_TRUE(quiet.propose(window).additions.empty());

  auto single = constant_agent(0.1, {{{7, 3, 12}, 0.9}});
  auto p = single.propose(window);
  ASSERT_EQ(p.additions.size(), 1u);
  EXPECT_EQ(p.additions[0].triple(), (Triple{7, 3, 12}));
  EXPECT_DOUBLE_EQ(p.additions[0].activation, 0.9);
  ASSERT_TRUE(p.action_matrix);
  EXPECT_EQ(p.action_matrix->size(), 19200u);

  auto two = constant_agent(0.1, {{{7, 3, 12}, 0.9}, {{20, 14, 0}, 0.6}});
  two.blacklist().add({7, 3, 12});
  p = two.propose(window);
  ASSERT_EQ(p.additions.size(), 1u);
  EXPECT_EQ(p.additions[0].triple(), (Triple{20, 14, 0}));
}

TEST(CnnPropose, CapOrderAndOnePerCell) {
  std::map<Triple, double> spikes;
  for (int x = 0; x < 20; ++x) spikes[{x, 10, 1}] = 0.6 + 0.01 * x;
  spikes[{19, 10, 2}] = 0.99;  // same cell as the strongest brick
  spikes[{4, 4, 4}] = 0.7;     // occupied below
  auto agent = constant_agent(0.0, spikes);
  agent.config().cap = 5;
  auto window = empty_window();
  window.cells[4 * 15 + 4] = 0;
  auto p = agent.propose(window);
  ASSERT_EQ(p.additions.size(), 5u);
  EXPECT_EQ(p.additions[0].triple(), (Triple{19, 10, 2}));
  for (int i = 1; i < 5; ++i) EXPECT_EQ(p.additions[i].triple(), (Triple{19 - i, 10, 1}));
}

TEST(CnnPropose, ProposalsRespectInvariants) {
  std::mt19937_64 rng(4);
  CnnAgentConfig cfg;
  cfg.tau = 0.05;
  cfg.cap = 40;
  CnnAgent agent(cfg);
  for (int trial = 0; trial < 5; ++trial) {
    auto w = oracle::random_window(rng, 0.3, 17);
    agent.blacklist().add({17 + trial, 14, 0});
    auto p = agent.propose(w);
    EXPECT_LE(p.additions.size(), 40u);
    for (const auto& a : p.additions) {
      EXPECT_TRUE(w.empty_at(a.x - 17, a.y));
      EXPECT_FALSE(agent.blacklist().contains(a.triple()));
      EXPECT_GT(a.activation, cfg.tau);
    }
  }
}

TEST(CnnFeedback, KeptRaisesDeletedLowersAndBlacklists) {
  auto window = extract_window(toy_corpus()[1], 50);
  for (Outcome outcome : {Outcome::kKept, Outcome::kDeleted}) {
    CnnAgentConfig cfg;
    cfg.tau = 0.01;
    cfg.init_seed = 12;
    CnnAgent agent(cfg);
    auto p = agent.propose(window);
    const Addition* pick = nullptr;
    for (const auto& a : p.additions)
      if (a.activation < 0.9) {
        pick = &a;
        break;
      }
    ASSERT_NE(pick, nullptr);
    const double before = agent.activation(window, pick->triple());
    auto r = agent.feedback(pick->triple(), outcome, window);
    EXPECT_EQ(r.activation_before, before);
    const double after = agent.activation(window, pick->triple());
    if (outcome == Outcome::kKept) {
      EXPECT_DOUBLE_EQ(r.target, before + 0.1);
      EXPECT_GT(after, before);
      EXPECT_FALSE(agent.blacklist().contains(pick->triple()));
    } else {
      EXPECT_LT(after, before);
      EXPECT_TRUE(agent.blacklist().contains(pick->triple()));
      for (const auto& a : agent.propose(window).additions) EXPECT_NE(a.triple(), pick->triple());
    }
  }
}

TEST(CnnFeedback, SaturatedKeepIsNoOp) {
  auto agent = constant_agent(0.0, {{{3, 14, 0}, 1.0}});
  auto window = empty_window();
  auto p = agent.propose(window);
  ASSERT_EQ(p.additions.size(), 1u);
  const auto before = agent.network().fingerprint();
  auto r = agent.feedback({3, 14, 0}, Outcome::kKept, window);
  EXPECT_EQ(r.target, 1.0);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(agent.network().fingerprint(), before);
  EXPECT_EQ(agent.optimizer().step_count, 0);
}

TEST(CnnFeedback, UnknownAddition) {
  CnnAgent agent;
  EXPECT_MORAI_ERROR(agent.feedback({1, 1, 1}, Outcome::kKept, empty_window()), ErrorCode::kUnknownAddition);
}

TEST(EpisodeReward, DirectionAndEmptyEpisode) {
  auto window = extract_window(toy_corpus()[2], 40);
  CnnAgentConfig cfg;
  cfg.tau = 0.01;
  cfg.init_seed = 3;
  CnnAgent base(cfg);
  auto p = base.propose(window);
  const Addition* pick = nullptr;
  for (const auto& a : p.additions)
    if (a.activation < 0.9) {
      pick = &a;
      break;
    }
  ASSERT_NE(pick, nullptr);
  const double before = base.activation(window, pick->triple());

  CnnAgent empty = base;
  const auto fp = empty.network().fingerprint();
  empty.apply_episode_reward(-1, {});
  EXPECT_EQ(empty.network().fingerprint(), fp);

  std::vector<EpisodeEntry> episode{{window, pick->triple(), true}};
  CnnAgent up = base;
  up.apply_episode_reward(+1, episode);
  EXPECT_GT(up.activation(window, pick->triple()), before);
  CnnAgent down = base;
  down.apply_episode_reward(-1, episode);
  EXPECT_LT(down.activation(window, pick->triple()), before);

  std::vector<EpisodeEntry> deleted{{window, pick->triple(), false}};
  CnnAgent skip = base;
  skip.apply_episode_reward(+1, deleted);
  EXPECT_EQ(skip.network().fingerprint(), fp);
  EXPECT_MORAI_ERROR(skip.apply_episode_reward(0, episode), ErrorCode::kInvalidArgument);
}

TEST(Pretrain, LossDescendsOnToyCorpus) {
  CnnAgent agent;
  auto report = agent.pretrain(toy_corpus(), {.epochs = 5, .steps_per_epoch = 40, .seed = 1});
  ASSERT_EQ(report.epoch_mean_loss.size(), 5u);
  EXPECT_EQ(report.steps, 200);
  EXPECT_LT(report.epoch_mean_loss.back(), report.epoch_mean_loss.front());
}

TEST(Pretrain, ZeroHideRatioIsNoOp) {
  CnnAgent agent;
  const auto fp = agent.network().fingerprint();
  auto report = agent.pretrain({toy_corpus()[0]}, {.epochs = 1, .steps_per_epoch = 3, .hide_min = 0.0,
                                                   .hide_max = 0.0, .seed = 1});
  EXPECT_EQ(report.epoch_mean_loss[0], 0.0);
  EXPECT_EQ(agent.network().fingerprint(), fp);
}

TEST(Pretrain, Deterministic) {
  CnnAgent a, b;
  auto ra = a.pretrain(toy_corpus(), {.epochs = 1, .steps_per_epoch = 10, .seed = 5});
  auto rb = b.pretrain(toy_corpus(), {.epochs = 1, .steps_per_epoch = 10, .seed = 5});
  EXPECT_EQ(ra.epoch_mean_loss, rb.epoch_mean_loss);
  EXPECT_EQ(a.network().fingerprint(), b.network().fingerprint());
  EXPECT_MORAI_ERROR(a.pretrain({}, {}), ErrorCode::kEmptyCorpus);
}

TEST(CnnAgentIo, SaveLoad) {
  auto dir = std::filesystem::temp_directory_path() / "morai_agent_io";
  std::filesystem::remove_all(dir);
  CnnAgentConfig cfg;
  cfg.tau = 0.3;
  cfg.cap = 7;
  CnnAgent agent(cfg);
  agent.pretrain(toy_corpus(), {.epochs = 1, .steps_per_epoch = 2, .seed = 1});
  agent.blacklist().add({1, 2, 3});
  agent.save(dir.string());
  auto back = CnnAgent::load(dir.string());
  EXPECT_EQ(back.network().fingerprint(), agent.network().fingerprint());
  EXPECT_EQ(back.optimizer().step_count, 2);
  EXPECT_EQ(back.config().cap, 7);
  EXPECT_DOUBLE_EQ(back.config().tau, 0.3);
  EXPECT_TRUE(back.blacklist().contains({1, 2, 3}));
  EXPECT_MORAI_ERROR(CnnAgent::load((dir / "missing").string()), ErrorCode::kBadCheckpoint);
  std::filesystem::remove_all(dir);
}

TEST(CnnAgentConfig, Validation) {
  CnnAgentConfig bad;
  bad.tau = 1.0;
  EXPECT_MORAI_ERROR(CnnAgent{bad}, ErrorCode::kBadConfig);
  bad.tau = 0.5;
  bad.cap = 0;
  EXPECT_MORAI_ERROR(CnnAgent{bad}, ErrorCode::kBadConfig);
}
