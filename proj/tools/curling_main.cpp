#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "curling/config.hpp"
#include "replay.hpp"

using namespace curling;
namespace fs = std::filesystem;

namespace {

// Bad invocation, unreadable inputs or invalid configuration; exit code 2.
class UsageError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::string fmt3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

struct Common {
    std::string config_path;
    std::uint64_t seed = 1;
    std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "JSON configuration file (every section optional)");
    cmd->add_option("--seed", c.seed, "Base random seed")->capture_default_str();
    cmd->add_option("--out", c.out, "Output directory (default: paths.out_dir from the config)");
}

AppConfig load_config(const Common& c) {
    AppConfig cfg = c.config_path.empty() ? AppConfig{} : load_app_config(c.config_path);
    if (!c.out.empty()) cfg.paths.out_dir = c.out;
    return cfg;
}

dt::DecisionTreeSpec load_tree(const std::string& ref) {
    auto builtin = dt::builtin_trees();
    if (auto it = builtin.find(ref); it != builtin.end()) return it->second;
    return dt::parse_tree(read_file(ref));
}

bool is_checkpoint(const std::string& text) {
    try {
        auto j = nlohmann::json::parse(text);
        return j.is_object() && j.value("format", std::string{}) == "curling-policy-net";
    } catch (const nlohmann::json::exception&) {
        return false;
    }
}

// A builtin tree name, far_corner, a tree file or a policy checkpoint.
struct LoadedPolicy {
    std::unique_ptr<Policy> policy;
    std::string label;
};

LoadedPolicy load_policy(const std::string& ref, const SimConfig& sim) {
    if (ref == "far_corner") return {std::make_unique<train::FarCornerPolicy>(sim), ref};
    auto builtin = dt::builtin_trees();
    if (auto it = builtin.find(ref); it != builtin.end()) return {std::make_unique<dt::TreePolicy>(it->second), ref};
    std::string text = read_file(ref);
    if (is_checkpoint(text)) {
        auto net = std::make_shared<const nn::PolicyNet>(nn::checkpoint_from_json(text));
        if (net->input_size() != kFeatureLength || net->action_count() != sim.grid.size())
            throw UsageError("checkpoint " + ref + " does not match the configured action grid");
        return {std::make_unique<train::NetPolicy>(net, true), ref};
    }
    return {std::make_unique<dt::TreePolicy>(dt::parse_tree(text)), ref};
}

train::PolicyFactory opponent_factory(const std::string& ref, const SimConfig& sim) {
    if (ref == "far_corner") return train::far_corner_opponent(sim);
    return train::tree_opponent(load_tree(ref));
}

void print_score(const MatchTrace& t) {
    std::string winner = t.winner ? team_name(*t.winner) : "draw";
    std::cout << "final A " << t.total[0] << " - B " << t.total[1] << " winner " << winner;
    if (t.aborted) std::cout << " (aborted: " << t.fault << ")";
    std::cout << "\n";
}

int cmd_play(const Common& common, const std::string& a, const std::string& b) {
    AppConfig cfg = load_config(common);
    cfg.sim.validate();
    auto pa = load_policy(a, cfg.sim);
    auto pb = load_policy(b, cfg.sim);
    MatchTrace t = run_match(*pa.policy, *pb.policy, cfg.sim, common.seed);
    fs::path out = fs::path(cfg.paths.out_dir) / "trace.json";
    write_file(out, trace_to_json(t) + "\n");
    print_score(t);
    std::cout << "trace " << out.string() << "\n";
    return t.aborted ? 1 : 0;
}

int cmd_train(const Common& common, const std::string& opponent, std::optional<long> budget,
              std::optional<int> actors, bool single_threaded) {
    AppConfig cfg = load_config(common);
    if (budget) cfg.trainer.max_env_throws = *budget;
    if (actors) cfg.trainer.num_actors = *actors;
    if (single_threaded) cfg.trainer.single_threaded = true;
    cfg.validate();
    train::TrainerConfig tc = cfg.trainer_config();
    fs::path out = cfg.paths.out_dir;
    tc.checkpoint_dir = out.string();
    auto factory = opponent_factory(opponent, cfg.sim);
    train::TrainResult r;
    try {
        r = train::train(factory, tc, common.seed, [](const std::string& line) { std::cout << line << "\n"; });
    } catch (const train::OpponentError& e) {
        std::cerr << "opponent tree fault: " << e.what() << "\n";
        return 1;
    }
    write_file(out / "curve.csv", r.curve.to_csv());
    nn::save_checkpoint(r.net, (out / "policy.json").string());
    std::cout << "verdict " << train::verdict_name(r.verdict) << " win_rate " << fmt3(r.final_win_rate) << " env_throws "
              << r.env_throws << " stop " << r.stop_reason << "\n";
    return 0;
}

int cmd_refine(const Common& common, const std::string& tactic_file, std::optional<bool> live,
               const std::optional<std::string>& scenario, const std::optional<std::string>& fixtures,
               const std::optional<std::string>& endpoint, const std::optional<std::string>& model,
               std::optional<int> max_iterations, std::optional<long> budget) {
    AppConfig cfg = load_config(common);
    if (live) cfg.llm.mode = *live ? llm::Mode::live : llm::Mode::mock;
    if (scenario) cfg.llm.scenario = *scenario;
    if (fixtures) cfg.paths.fixture_dir = *fixtures;
    if (endpoint) cfg.llm.endpoint = *endpoint;
    if (model) cfg.llm.model = *model;
    if (max_iterations) cfg.refine.max_iterations = *max_iterations;
    if (budget) cfg.trainer.max_env_throws = *budget;
    cfg.validate();
    std::string tactic = read_file(tactic_file);
    llm::LLMClient client(cfg.llm_settings());
    fs::path out = cfg.paths.out_dir;
    llm::RefinementReport report = llm::refine_loop(tactic, cfg.refine_config(common.seed), client,
                                                    llm::PromptBundle::builtin(),
                                                    [](const std::string& line) { std::cout << line << "\n"; });
    write_file(out / "report.json", report.to_json() + "\n");
    write_file(out / "report.md", report.to_markdown());
    for (std::size_t i = 0; i < report.trees.size(); ++i)
        write_file(out / "trees" / ("tree_" + std::to_string(i + 1) + ".json"), dt::serialize_tree(report.trees[i]) + "\n");
    std::cout << "termination " << llm::termination_name(report.termination) << " trees " << report.trees.size()
              << " iterations " << report.iterations.size() << "\n";
    return report.termination == llm::Termination::coder_failed ? 1 : 0;
}

int cmd_evaluate(const Common& common, const std::string& a, const std::string& b, int n) {
    AppConfig cfg = load_config(common);
    cfg.sim.validate();
    if (n < 0) throw UsageError("--n must be >= 0");
    auto pa = load_policy(a, cfg.sim);
    auto pb = load_policy(b, cfg.sim);
    train::WinStats s = train::evaluate(*pa.policy, *pb.policy, n, common.seed, cfg.sim, cfg.refine.lost_trace_cap);
    fs::path out = cfg.paths.out_dir;
    nlohmann::ordered_json j;
    j["a"] = pa.label;
    j["b"] = pb.label;
    j["matches"] = s.matches();
    j["wins"] = s.wins;
    j["losses"] = s.losses;
    j["draws"] = s.draws;
    j["win_rate"] = s.win_rate;
    j["seed"] = common.seed;
    auto lost = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < s.lost_traces.size(); ++i) {
        std::string name = "lost_" + std::to_string(i + 1) + ".json";
        write_file(out / name, trace_to_json(s.lost_traces[i].trace) + "\n");
        lost.push_back({{"file", name}, {"margin", s.lost_traces[i].margin}, {"seed", s.lost_traces[i].trace.seed}});
    }
    j["lost_traces"] = lost;
    write_file(out / "stats.json", j.dump(2) + "\n");
    std::cout << pa.label << " vs " << pb.label << ": win_rate " << fmt3(s.win_rate) << " wins " << s.wins << " losses "
              << s.losses << " draws " << s.draws << " matches " << s.matches() << "\n";
    return 0;
}

int cmd_replay(const Common& common, const std::string& trace_file) {
    AppConfig cfg = load_config(common);
    MatchTrace t;
    try {
        t = trace_from_json(read_file(trace_file));
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception& e) {
        throw UsageError("cannot parse trace " + trace_file + ": " + e.what());
    }
    auto res = cli::render_replay(t, cfg.sim, cfg.paths.out_dir);
    if (res.truncated)
        std::cerr << "warning: trace truncated after " << t.throws.size() << " of " << res.expected_throws
                  << " throws\n";
    std::cout << "frames " << res.frames.size() << " index " << (fs::path(cfg.paths.out_dir) / "index.html").string()
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Curling decision-tree refinement toolkit"};
    app.require_subcommand(1);

    Common play_c, train_c, refine_c, eval_c, replay_c;

    auto* play = app.add_subcommand("play", "Play one match between two policies and write its trace");
    add_common(play, play_c);
    std::string play_a, play_b;
    play->add_option("--a", play_a, "Team A policy: builtin tree name, tree file, checkpoint or far_corner")->required();
    play->add_option("--b", play_b, "Team B policy")->required();

    auto* trn = app.add_subcommand("train", "Train the RL debugger against a fixed opponent");
    add_common(trn, train_c);
    std::string opponent;
    std::optional<long> train_budget;
    std::optional<int> actors;
    bool single = false;
    trn->add_option("--opponent", opponent, "Opponent: builtin tree name, tree file or far_corner")->required();
    trn->add_option("--budget", train_budget, "Environment throw budget (overrides trainer.max_env_throws)");
    trn->add_option("--actors", actors, "Number of actors (overrides trainer.num_actors)");
    trn->add_flag("--single-threaded", single, "Interleave actors and learner on one thread (deterministic)");

    auto* ref = app.add_subcommand("refine", "Run the Coder / RL debugger / Critic refinement loop");
    add_common(ref, refine_c);
    std::string tactic_file;
    std::optional<std::string> scenario, fixtures, endpoint, model;
    std::optional<int> max_iterations;
    std::optional<long> refine_budget;
    bool mock_flag = false, live_flag = false;
    ref->add_option("--tactic", tactic_file, "Text file holding the initial tactic description")->required();
    auto* mock_opt = ref->add_flag("--mock-llm", mock_flag, "Answer LLM calls from fixture files (default)");
    ref->add_flag("--live-llm", live_flag, "Call the configured chat-completion endpoint")->excludes(mock_opt);
    ref->add_option("--scenario", scenario, "Fixture scenario directory name (mock mode)");
    ref->add_option("--fixtures", fixtures, "Fixture root directory (overrides paths.fixture_dir)");
    ref->add_option("--endpoint", endpoint, "Chat-completion endpoint URL (live mode)");
    ref->add_option("--model", model, "Model name (live mode)");
    ref->add_option("--max-iterations", max_iterations, "Refinement iteration cap");
    ref->add_option("--budget", refine_budget, "Per-iteration training throw budget");

    auto* ev = app.add_subcommand("evaluate", "Play seeded head-to-head matches and report win rates");
    add_common(ev, eval_c);
    std::string ev_a, ev_b;
    int ev_n = 200;
    ev->add_option("--a", ev_a, "Policy whose win rate is reported")->required();
    ev->add_option("--b", ev_b, "Opposing policy")->required();
    ev->add_option("--n", ev_n, "Number of matches")->capture_default_str();

    auto* rep = app.add_subcommand("replay", "Render a trace as SVG frames with an index page");
    add_common(rep, replay_c);
    std::string trace_file;
    rep->add_option("--trace", trace_file, "Trace JSON written by play or evaluate")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*play) return cmd_play(play_c, play_a, play_b);
        if (*trn) return cmd_train(train_c, opponent, train_budget, actors, single);
        if (*ref) {
            std::optional<bool> live;
            if (live_flag) live = true;
            if (mock_flag) live = false;
            return cmd_refine(refine_c, tactic_file, live, scenario, fixtures, endpoint, model, max_iterations,
                              refine_budget);
        }
        if (*ev) return cmd_evaluate(eval_c, ev_a, ev_b, ev_n);
        if (*rep) return cmd_replay(replay_c, trace_file);
    } catch (const dt::TreeParseError& e) {
        std::cerr << "tree error:\n";
        for (const auto& d : e.diagnostics()) std::cerr << "  " << d.to_string() << "\n";
        return 2;
    } catch (const llm::CredentialError& e) {
        std::cerr << "credential missing: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
