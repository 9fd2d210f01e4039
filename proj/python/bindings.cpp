#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "curling/config.hpp"
#include "curling/observation.hpp"
#include "curling/trainer.hpp"

namespace py = pybind11;
using namespace curling;

namespace {

Team team_of(const std::string& s) {
    if (s == "A") return Team::A;
    if (s == "B") return Team::B;
    throw py::value_error("team must be 'A' or 'B'");
}

std::vector<Stone> stones_of(const std::vector<std::tuple<std::string, double, double>>& in) {
    std::vector<Stone> out;
    for (const auto& [team, x, y] : in) {
        Stone s;
        s.team = team_of(team);
        s.position = {x, y};
        out.push_back(s);
    }
    return out;
}

dt::DecisionTreeSpec tree_of(const std::string& name_or_text) {
    auto trees = dt::builtin_trees();
    if (auto it = trees.find(name_or_text); it != trees.end()) return it->second;
    return dt::parse_tree(name_or_text);
}

SimConfig sim_of(const std::string& config_json) {
    return config_json.empty() ? SimConfig{} : app_config_from_json(config_json).sim;
}

py::dict stats_dict(const train::WinStats& s) {
    py::dict d;
    d["wins"] = s.wins;
    d["losses"] = s.losses;
    d["draws"] = s.draws;
    d["win_rate"] = s.win_rate;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Curling simulator, decision-tree policies and PPO debugger";

    py::register_exception<dt::TreeParseError>(m, "TreeParseError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    m.def("builtin_tree_names", [] {
        std::vector<std::string> out;
        for (const auto& [name, _] : dt::builtin_trees()) out.push_back(name);
        return out;
    });
    m.def("builtin_tree", &dt::builtin_tree_text, py::arg("name"));
    m.def(
        "validate_tree",
        [](const std::string& text) {
            std::vector<std::string> out;
            try {
                dt::parse_tree(text);
            } catch (const dt::TreeParseError& e) {
                for (const auto& d : e.diagnostics()) out.push_back(d.to_string());
            }
            return out;
        },
        py::arg("text"), "Diagnostics for a tree document; empty when valid.");
    m.def(
        "semantically_equal",
        [](const std::string& a, const std::string& b) { return dt::semantically_equal(tree_of(a), tree_of(b)); },
        py::arg("a"), py::arg("b"));

    m.def(
        "score_game",
        [](const std::vector<std::tuple<std::string, double, double>>& stones, bool bounded) {
            SimConfig c;
            if (!bounded) c.house_radius.reset();
            GameScore s = score_game(stones_of(stones), c);
            return py::make_tuple(s.team ? py::object(py::str(team_name(*s.team))) : py::object(py::none()), s.points);
        },
        py::arg("stones"), py::arg("bounded") = true, "Stones are (team, x, y) tuples; returns (winner or None, points).");

    m.def(
        "play",
        [](const std::string& a, const std::string& b, std::uint64_t seed, const std::string& config_json) {
            dt::TreePolicy pa(tree_of(a)), pb(tree_of(b));
            MatchTrace t;
            {
                py::gil_scoped_release release;
                t = run_match(pa, pb, sim_of(config_json), seed);
            }
            return trace_to_json(t);
        },
        py::arg("a"), py::arg("b"), py::arg("seed") = 1, py::arg("config") = "",
        "Plays one match between two trees (builtin names or documents); returns the trace JSON.");

    m.def(
        "evaluate",
        [](const std::string& a, const std::string& b, int n, std::uint64_t seed, const std::string& config_json) {
            dt::TreePolicy pa(tree_of(a)), pb(tree_of(b));
            train::WinStats s;
            {
                py::gil_scoped_release release;
                s = train::evaluate(pa, pb, n, seed, sim_of(config_json), 0);
            }
            return stats_dict(s);
        },
        py::arg("a"), py::arg("b"), py::arg("n") = 200, py::arg("seed") = 1, py::arg("config") = "");

    m.def(
        "gae",
        [](const std::vector<double>& rewards, const std::vector<double>& values, double gamma, double lambda) {
            if (rewards.size() != values.size()) throw py::value_error("rewards and values differ in length");
            std::vector<nn::Transition> t(rewards.size());
            for (std::size_t i = 0; i < t.size(); ++i) {
                t[i].r = rewards[i];
                t[i].v = values[i];
            }
            nn::gae_returns(t, gamma, lambda);
            std::vector<double> adv, ret;
            for (const auto& x : t) {
                adv.push_back(x.advantage);
                ret.push_back(x.r);
            }
            return py::make_tuple(adv, ret);
        },
        py::arg("rewards"), py::arg("values"), py::arg("gamma"), py::arg("lam"), "Returns (advantages, returns).");

    m.def(
        "observe",
        [](const std::vector<std::tuple<std::string, double, double>>& stones, const std::string& viewer) {
            GameState s = new_match(SimConfig{}, 0);
            s.stones = stones_of(stones);
            ObsGrid g = render_observation(s, team_of(viewer));
            std::vector<std::vector<int>> rows;
            for (const auto& r : g.cells) rows.emplace_back(r.begin(), r.end());
            std::vector<std::tuple<bool, int, int>> found;
            for (const auto& d : extract_coordinates(g)) found.emplace_back(d.own, d.row, d.col);
            return py::make_tuple(rows, found);
        },
        py::arg("stones"), py::arg("viewer") = "A", "Returns (grid rows, [(own, row, col)]).");

    m.def(
        "train",
        [](const std::string& opponent, const std::string& config_json, std::uint64_t seed) {
            AppConfig app = app_config_from_json(config_json.empty() ? "{}" : config_json);
            train::TrainerConfig tc = app.trainer_config();
            tc.validate();
            train::TrainResult r;
            {
                py::gil_scoped_release release;
                r = opponent == "far_corner" ? train::train(train::far_corner_opponent(tc.sim), tc, seed)
                                             : train::train(tree_of(opponent), tc, seed);
            }
            py::dict d;
            d["verdict"] = train::verdict_name(r.verdict);
            d["win_rate"] = r.final_win_rate;
            d["env_throws"] = r.env_throws;
            d["stop_reason"] = r.stop_reason;
            std::vector<std::pair<long, double>> curve;
            for (const auto& p : r.curve.points) curve.emplace_back(p.env_throws, p.win_rate);
            d["curve"] = curve;
            d["checkpoint"] = nn::checkpoint_to_json(r.net);
            return d;
        },
        py::arg("opponent"), py::arg("config") = "", py::arg("seed") = 1);
}
