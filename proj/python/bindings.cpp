#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "morai/agents.hpp"
#include "morai/error.hpp"
#include "morai/explainer.hpp"
#include "morai/protocol.hpp"
#include "morai/sim.hpp"
#include "morai/stats.hpp"

namespace py = pybind11;
using namespace morai;
using json = nlohmann::json;

namespace {

// Complex results cross the boundary as JSON text; the Python package parses them.
std::string dump(const json& j) { return j.dump(); }

json explanation_json(const Explanation& e) {
  return {{"x", e.x}, {"y", e.y}, {"tile", e.tile}, {"window_origin", e.window_origin}, {"x0", e.x0}, {"y0", e.y0},
          {"delta", e.delta}, {"confidence", e.confidence}, {"max_filter", e.max_filter}, {"text", e.text}};
}

CnnAgent make_agent(double tau, int cap, double lr, int head_radius, std::uint64_t init_seed) {
  CnnAgentConfig cfg;
  cfg.tau = tau;
  cfg.cap = cap;
  cfg.lr = lr;
  cfg.head_radius = head_radius;
  cfg.init_seed = init_seed;
  return CnnAgent(cfg);
}

class PyService {
 public:
  PyService(const std::string& sessions_dir, const std::string& checkpoint, const std::string& markov_corpus,
            double tau, int cap, bool logical) {
    ServiceOptions o;
    o.sessions_dir = sessions_dir;
    if (!checkpoint.empty()) o.default_cnn = CnnAgent::load(checkpoint);
    if (!markov_corpus.empty()) o.default_markov = std::make_shared<MarkovModel>(markov_train(load_corpus(markov_corpus)));
    o.default_tau = tau;
    o.default_cap = cap;
    if (logical) o.clock_factory = logical_clock;
    service_ = std::make_unique<SessionService>(std::move(o));
  }

  std::string create(const std::string& config) {
    return service_->create_session(session_config_from_json(json::parse(config)));
  }
  std::int64_t submit(const std::string& id, const std::string& batch) {
    return service_->submit_human_edits(id, parse_edit_batch(json::parse(batch)));
  }
  std::string end_turn(const std::string& id, int focus_x) { return dump(turn_result_json(service_->end_turn(id, focus_x))); }
  std::string remove(const std::string& id) {
    json removed = json::array();
    for (const auto& e : service_->remove_last_ai_turn(id)) removed.push_back(edit_json(e));
    return dump(removed);
  }
  void reset(const std::string& id, std::optional<int> width) { service_->reset_level(id, width); }
  std::string close(const std::string& id, std::optional<int> reuse) { return service_->close_session(id, reuse); }
  std::string level(const std::string& id) { return service_->level_text(id); }
  std::string log(const std::string& id) { return service_->export_log(id); }

 private:
  std::unique_ptr<SessionService> service_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Co-creative level design engine";
  py::register_exception<Error>(m, "MoraiError", PyExc_RuntimeError);

  m.attr("LEVEL_HEIGHT") = kLevelHeight;
  m.attr("WINDOW_WIDTH") = kWindowWidth;
  m.attr("TILE_COUNT") = kTileCount;

  m.def("tile_names", [] {
    std::vector<std::string> names;
    for (int t = 0; t < kTileCount; ++t) names.push_back(TileManifest::standard().at(static_cast<TileId>(t)).name);
    return names;
  });
  m.def("tile_id", [](const std::string& name) { return TileManifest::standard().id_of(name); });

  py::class_<Level>(m, "Level")
      .def(py::init<int>(), py::arg("width") = kDefaultLevelWidth)
      .def_property_readonly("width", &Level::width)
      .def("get", &Level::at)
      .def("set",
           [](Level& l, int x, int y, std::optional<TileId> t) {
             if (!l.in_bounds(x, y)) throw Error(ErrorCode::kOutOfBounds, "cell outside the level");
             l.set(x, y, t);
           })
      .def("occupied_count", &Level::occupied_count)
      .def("to_text", [](const Level& l) { return save_level(l); })
      .def_static("from_text", [](const std::string& text) { return load_level(text); })
      .def(py::self == py::self);

  m.def("load_corpus", [](const std::string& dir) { return load_corpus(dir); });

  m.def("ranking_sample", &stats::ranking_sample, py::arg("first"), py::arg("second"));
  m.def("wilcoxon_rank_sum", [](const std::vector<double>& x, const std::vector<double>& y) {
    const auto r = stats::wilcoxon_rank_sum(x, y);
    return py::make_tuple(r.statistic, r.p_value, std::string(stats::to_string(r.method)));
  });
  m.def("spearman_rho", [](const std::vector<double>& x, const std::vector<double>& y) {
    const auto r = stats::spearman_rho(x, y);
    return py::make_tuple(r.rho, r.p_value);
  });

  py::class_<CnnAgent>(m, "CnnAgent")
      .def(py::init(&make_agent), py::arg("tau") = 0.5, py::arg("cap") = 15, py::arg("lr") = 1e-3,
           py::arg("head_radius") = 0, py::arg("init_seed") = 0)
      .def_static("load", &CnnAgent::load)
      .def("save", &CnnAgent::save)
      .def_property_readonly("parameter_count", [](const CnnAgent& a) { return a.network().parameter_count(); })
      .def(
          "pretrain",
          [](CnnAgent& a, const std::vector<Level>& corpus, int epochs, int steps, std::uint64_t seed) {
            py::gil_scoped_release release;
            return a.pretrain(corpus, {.epochs = epochs, .steps_per_epoch = steps, .seed = seed}).epoch_mean_loss;
          },
          py::arg("corpus"), py::arg("epochs") = 5, py::arg("steps_per_epoch") = 40, py::arg("seed") = 0)
      .def("action_matrix",
           [](const CnnAgent& a, const Level& level, int focus_x) {
             const Volume v = a.action_matrix(extract_window(level, focus_x));
             py::array_t<double> out({v.width(), v.height(), v.channels()});
             auto view = out.mutable_unchecked<3>();
             for (int x = 0; x < v.width(); ++x)
               for (int y = 0; y < v.height(); ++y)
                 for (int c = 0; c < v.channels(); ++c) view(x, y, c) = v.at(x, y, c);
             return out;
           })
      .def("propose",
           [](CnnAgent& a, const Level& level, int focus_x) {
             std::vector<py::tuple> out;
             for (const auto& add : a.propose(extract_window(level, focus_x)).additions)
               out.push_back(py::make_tuple(add.x, add.y, add.tile, add.activation));
             return out;
           })
      .def("activation",
           [](const CnnAgent& a, const Level& level, int focus_x, int x, int y, TileId tile) {
             return a.activation(extract_window(level, focus_x), Triple{x, y, tile});
           })
      .def("feedback",
           [](CnnAgent& a, const Level& level, int focus_x, int x, int y, TileId tile, bool kept) {
             const auto r = a.feedback(Triple{x, y, tile}, kept ? Outcome::kKept : Outcome::kDeleted,
                                       extract_window(level, focus_x));
             return py::make_tuple(r.activation_before, r.target, r.loss);
           })
      .def("is_blacklisted",
           [](const CnnAgent& a, int x, int y, TileId tile) { return a.blacklist().contains(Triple{x, y, tile}); })
      .def("explain", [](const CnnAgent& a, const Level& level, int focus_x, int x, int y, TileId tile) {
        return dump(explanation_json(explain(a.network(), extract_window(level, focus_x), Triple{x, y, tile})));
      });

  py::class_<PyService>(m, "_Service")
      .def(py::init<const std::string&, const std::string&, const std::string&, double, int, bool>(),
           py::arg("sessions_dir") = "", py::arg("checkpoint") = "", py::arg("markov_corpus") = "",
           py::arg("tau") = 0.5, py::arg("cap") = 15, py::arg("logical_clock") = true)
      .def("create_session", &PyService::create)
      .def("submit_edits", &PyService::submit)
      .def("end_turn", &PyService::end_turn, py::call_guard<py::gil_scoped_release>())
      .def("remove_last_ai_turn", &PyService::remove)
      .def("reset_level", &PyService::reset, py::arg("id"), py::arg("width") = std::nullopt)
      .def("close_session", &PyService::close, py::arg("id"), py::arg("reuse_ranking") = std::nullopt)
      .def("level_text", &PyService::level)
      .def("export_log", &PyService::log);

  m.def(
      "_simulate",
      [](const std::string& persona, int turns, std::uint64_t seed, const std::string& checkpoint,
         const std::string& config) {
        SimulationOptions o;
        o.session = session_config_from_json(json::parse(config));
        if (!checkpoint.empty()) o.service.default_cnn = CnnAgent::load(checkpoint);
        o.turns = turns;
        o.seed = seed;
        const auto p = Persona::from_json(json::parse(persona));
        SimulationResult r;
        {
          py::gil_scoped_release release;
          r = simulate_session(p, o);
        }
        return dump({{"session_id", r.session_id},
                     {"report", r.report.to_json()},
                     {"reuse_ranking", r.reuse_ranking},
                     {"log", r.log},
                     {"final_level", save_level(r.final_level)}});
      },
      py::arg("persona"), py::arg("turns"), py::arg("seed"), py::arg("checkpoint"), py::arg("config"));
  m.def("_adaptation_metrics", [](const std::string& jsonl) { return dump(adaptation_metrics(jsonl).to_json()); });
}
