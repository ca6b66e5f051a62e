// morai: train / propose / serve / simulate / analyze.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "morai/agents.hpp"
#include "morai/error.hpp"
#include "morai/explainer.hpp"
#include "morai/protocol.hpp"
#include "morai/session.hpp"
#include "morai/sim.hpp"
#include "morai/stats.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw morai::Error(morai::ErrorCode::kIo, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  const auto parent = fs::path(path).parent_path();
  std::error_code ec;
  if (!parent.empty()) fs::create_directories(parent, ec);
  std::ofstream out(path);
  out << text;
  if (!out) throw morai::Error(morai::ErrorCode::kIo, "cannot write " + path);
}

std::shared_ptr<const morai::MarkovModel> load_markov(const std::string& source) {
  if (fs::is_directory(source)) {
    return std::make_shared<morai::MarkovModel>(morai::markov_train(morai::load_corpus(source)));
  }
  return std::make_shared<morai::MarkovModel>(morai::MarkovModel::from_json(read_file(source)));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Co-creative level design partner: training, sessions, simulation and analysis"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Pretrain a CNN agent on a level corpus");
  std::string corpus_dir, out_dir;
  int epochs = 5, steps = 40, head_radius = 0;
  std::uint64_t seed = 0, init_seed = 0;
  double lr = 1e-3;
  train->add_option("--corpus", corpus_dir, "Directory of *.txt levels")->required();
  train->add_option("--epochs", epochs)->check(CLI::NonNegativeNumber);
  train->add_option("--steps-per-epoch", steps)->check(CLI::PositiveNumber);
  train->add_option("--seed", seed, "Sampling seed");
  train->add_option("--init-seed", init_seed, "Weight initialization seed");
  train->add_option("--lr", lr);
  train->add_option("--head-radius", head_radius, "Spatial radius of the output layer");
  train->add_option("--out", out_dir, "Output agent checkpoint directory")->required();

  // propose
  auto* propose = app.add_subcommand("propose", "Print an agent's additions for a level");
  std::string checkpoint, level_path, agent_kind = "cnn";
  int focus = 0;
  std::optional<double> tau;
  std::optional<int> cap;
  bool with_explanations = false;
  propose->add_option("--checkpoint", checkpoint, "CNN checkpoint dir, or Markov corpus dir / model json")->required();
  propose->add_option("--level", level_path)->required();
  propose->add_option("--focus", focus)->required();
  propose->add_option("--agent", agent_kind)->check(CLI::IsMember({"cnn", "markov"}));
  propose->add_option("--tau", tau);
  propose->add_option("--cap", cap);
  propose->add_option("--seed", seed);
  propose->add_flag("--explain", with_explanations);

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP session service");
  int port = 8080;
  std::string sessions_dir = "sessions", markov_source, static_dir, host = "0.0.0.0";
  bool save_agents = false;
  serve->add_option("--port", port);
  serve->add_option("--host", host);
  serve->add_option("--checkpoint", checkpoint, "Default CNN agent checkpoint");
  serve->add_option("--agent", agent_kind, "Default agent")->check(CLI::IsMember({"cnn", "markov"}));
  serve->add_option("--markov", markov_source, "Corpus dir or model json for the Markov agent");
  serve->add_option("--tau", tau);
  serve->add_option("--cap", cap);
  serve->add_option("--sessions-dir", sessions_dir, "Overridden by MORAI_SESSIONS_DIR");
  serve->add_option("--static", static_dir, "Editor assets served under /app");
  serve->add_flag("--save-agents", save_agents, "Save agent checkpoints on close");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Run a persona-driven session headlessly");
  std::string persona_path, report_path, log_path, participant;
  int turns = 30;
  int width = morai::kDefaultLevelWidth;
  bool explain_sim = false;
  simulate->add_option("--persona", persona_path)->required();
  simulate->add_option("--turns", turns)->check(CLI::PositiveNumber);
  simulate->add_option("--seed", seed);
  simulate->add_option("--agent-checkpoint", checkpoint, "CNN checkpoint dir, or Markov corpus dir / model json");
  simulate->add_option("--agent", agent_kind)->check(CLI::IsMember({"cnn", "markov"}));
  simulate->add_option("--tau", tau);
  simulate->add_option("--cap", cap);
  simulate->add_option("--width", width);
  simulate->add_option("--participant", participant);
  simulate->add_flag("--explain", explain_sim, "Compute explanations for every addition");
  simulate->add_option("--out", report_path, "Adaptation report JSON")->required();
  simulate->add_option("--log", log_path, "Session log JSONL");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Ranking tables and correlations over session logs");
  std::string logs_dir, tables_path;
  analyze->add_option("--logs", logs_dir)->required();
  analyze->add_option("--out", tables_path, "tables.json")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      morai::CnnAgentConfig cfg;
      cfg.lr = lr;
      cfg.head_radius = head_radius;
      cfg.init_seed = init_seed;
      morai::CnnAgent agent(cfg);
      auto corpus = morai::load_corpus(corpus_dir);
      auto report = agent.pretrain(corpus, {.epochs = epochs, .steps_per_epoch = steps, .seed = seed});
      for (std::size_t i = 0; i < report.epoch_mean_loss.size(); ++i) {
        std::printf("epoch %zu mean loss %.6f\n", i + 1, report.epoch_mean_loss[i]);
      }
      agent.save(out_dir);
      std::printf("saved %s (%zu parameters)\n", out_dir.c_str(), agent.network().parameter_count());
    } else if (*propose) {
      auto level = morai::load_level_file(level_path);
      auto window = morai::extract_window(level, focus);
      const auto& manifest = morai::TileManifest::standard();
      if (agent_kind == "markov") {
        auto model = load_markov(checkpoint);
        auto p = morai::markov_propose(*model, window, cap.value_or(15), seed);
        for (const auto& a : p.additions) {
          std::printf("%d\t%d\t%s\t%.4f\n", a.x, a.y, manifest.at(a.tile).name.c_str(), a.activation);
        }
      } else {
        auto agent = morai::CnnAgent::load(checkpoint);
        if (tau) agent.config().tau = *tau;
        if (cap) agent.config().cap = *cap;
        auto p = agent.propose(window);
        for (const auto& a : p.additions) {
          std::printf("%d\t%d\t%s\t%.4f\n", a.x, a.y, manifest.at(a.tile).name.c_str(), a.activation);
          if (with_explanations) {
            std::printf("  %s\n", morai::explain(agent.network(), window, a.triple()).text.c_str());
          }
        }
      }
    } else if (*serve) {
      morai::ServiceOptions options;
      options.sessions_dir = morai::resolve_sessions_dir(sessions_dir);
      options.save_agent_on_close = save_agents;
      if (!checkpoint.empty()) options.default_cnn = morai::CnnAgent::load(checkpoint);
      if (!markov_source.empty()) options.default_markov = load_markov(markov_source);
      if (tau) options.default_tau = *tau;
      if (cap) options.default_cap = *cap;
      morai::SessionService service(options);
      morai::HttpServer server(service, static_dir);
      std::printf("listening on %s:%d (sessions in %s, default agent %s)\n", host.c_str(), port,
                  options.sessions_dir.c_str(), agent_kind.c_str());
      std::fflush(stdout);
      if (!server.listen(host, port)) {
        std::fprintf(stderr, "cannot listen on port %d\n", port);
        return 1;
      }
    } else if (*simulate) {
      auto persona = morai::Persona::load(persona_path);
      morai::SimulationOptions options;
      options.turns = turns;
      options.seed = seed;
      options.session.width = width;
      options.session.agent = morai::parse_agent_kind(agent_kind);
      options.session.checkpoint = checkpoint;
      options.session.tau = tau;
      options.session.cap = cap;
      options.session.seed = seed;
      options.session.explain = explain_sim;
      options.session.participant = participant;
      auto result = morai::simulate_session(persona, options);
      json report = result.report.to_json();
      report["persona"] = persona.name;
      report["agent"] = agent_kind;
      report["seed"] = seed;
      report["reuse_ranking"] = result.reuse_ranking;
      write_file(report_path, report.dump(2) + "\n");
      if (!log_path.empty()) write_file(log_path, result.log);
      auto fmt = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string("null"); };
      std::printf("additions %d, deleted %d, early ratio %s, late ratio %s, reuse %+d\n", result.report.ai_additions,
                  result.report.ai_deleted, fmt(result.report.early_ratio).c_str(),
                  fmt(result.report.late_ratio).c_str(), result.reuse_ranking);
    } else if (*analyze) {
      if (!fs::is_directory(logs_dir)) throw morai::Error(morai::ErrorCode::kIo, "no such directory " + logs_dir);
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(logs_dir)) {
        if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      std::vector<std::vector<json>> logs;
      json sessions = json::array();
      for (const auto& f : files) {
        logs.push_back(morai::parse_jsonl(read_file(f.string())));
        auto r = morai::adaptation_metrics(logs.back()).to_json();
        r.erase("turns");
        r["file"] = f.filename().string();
        sessions.push_back(std::move(r));
      }
      auto rows = morai::stats::ranking_tables(morai::rankings_from_logs(logs));
      std::fputs(morai::stats::format_ranking_table(rows).c_str(), stdout);
      json out{{"rankings", morai::stats::ranking_rows_json(rows)}, {"sessions", sessions}};
      write_file(tables_path, out.dump(2) + "\n");
    }
  } catch (const morai::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
