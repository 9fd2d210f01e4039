#include "curling/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace curling {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Reads known keys from one JSON object and rejects the rest.
class Section {
   public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
    }
    ~Section() noexcept(false) {
        if (std::uncaught_exceptions()) return;
        for (const auto& [k, _] : j_.items())
            if (!seen_.count(k)) throw ConfigError("unknown config key " + path_ + "." + k);
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError("config key " + path_ + "." + key + " has the wrong type");
        }
    }

    void get_opt(const char* key, std::optional<double>& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        const auto& v = j_.at(key);
        if (v.is_null()) {
            out.reset();
        } else if (v.is_number()) {
            out = v.get<double>();
        } else {
            throw ConfigError("config key " + path_ + "." + key + " must be a number or null");
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    std::string path(const char* key) const { return path_ + "." + key; }

   private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_grid(const json& j, const std::string& path, UniformGrid& g) {
    Section s(j, path);
    s.get("lo", g.lo);
    s.get("hi", g.hi);
    s.get("count", g.count);
}

void read_sim(const json& j, SimConfig& c) {
    Section s(j, "sim");
    s.get("field_width", c.field_width);
    s.get("field_length", c.field_length);
    if (const json* ct = s.child("center_target")) {
        if (!ct->is_array() || ct->size() != 2 || !(*ct)[0].is_number() || !(*ct)[1].is_number())
            throw ConfigError("sim.center_target must be [x, y]");
        c.center_target = {(*ct)[0].get<double>(), (*ct)[1].get<double>()};
    }
    s.get("red_line_y", c.red_line_y);
    s.get_opt("house_radius", c.house_radius);
    s.get("stone_radius", c.stone_radius);
    s.get("stone_mass", c.stone_mass);
    s.get("friction_decel", c.friction_decel);
    s.get("restitution_stone", c.restitution_stone);
    s.get("restitution_wall", c.restitution_wall);
    s.get("dt", c.dt);
    s.get("rest_speed_eps", c.rest_speed_eps);
    s.get("max_ticks_per_throw", c.max_ticks_per_throw);
    s.get("launch_noise_angle_deg", c.launch_noise_angle_deg);
    s.get("launch_noise_speed_frac", c.launch_noise_speed_frac);
    if (const json* g = s.child("grid")) {
        Section gs(*g, "sim.grid");
        if (const json* x = gs.child("x0")) read_grid(*x, "sim.grid.x0", c.grid.x0);
        if (const json* a = gs.child("angle_deg")) read_grid(*a, "sim.grid.angle_deg", c.grid.angle_deg);
        if (const json* v = gs.child("speed")) read_grid(*v, "sim.grid.speed", c.grid.speed);
    }
}

void read_trainer(const json& j, train::TrainerConfig& t) {
    Section s(j, "trainer");
    s.get("num_actors", t.num_actors);
    s.get("buffer_capacity", t.buffer_capacity);
    s.get("hidden", t.hidden);
    s.get("sync_interval", t.sync_interval);
    s.get("eval_matches", t.eval_matches);
    s.get("win_rate_threshold", t.win_rate_threshold);
    s.get("max_env_throws", t.max_env_throws);
    s.get("eval_interval_throws", t.eval_interval_throws);
    s.get("plateau_window", t.plateau_window);
    s.get("plateau_range", t.plateau_range);
    s.get("plateau_min_env_throws", t.plateau_min_env_throws);
    s.get("single_threaded", t.single_threaded);
    s.get("max_numeric_failures", t.max_numeric_failures);
    s.get("checkpoint_every", t.checkpoint_every);
}

void read_ppo(const json& j, nn::PPOConfig& p) {
    Section s(j, "ppo");
    s.get("gamma", p.gamma);
    s.get("lambda", p.lambda);
    s.get("clip_epsilon", p.clip_epsilon);
    s.get("value_coef", p.value_coef);
    s.get("entropy_coef", p.entropy_coef);
    s.get("learning_rate", p.learning_rate);
    s.get("normalize_advantages", p.normalize_advantages);
    s.get("max_grad_norm", p.max_grad_norm);
    s.get("epochs", p.epochs);
    s.get("minibatch_size", p.minibatch_size);
}

void read_llm(const json& j, llm::LLMSettings& l) {
    Section s(j, "llm");
    std::string mode = l.mode == llm::Mode::live ? "live" : "mock";
    s.get("mode", mode);
    if (mode == "live")
        l.mode = llm::Mode::live;
    else if (mode == "mock")
        l.mode = llm::Mode::mock;
    else
        throw ConfigError("llm.mode must be \"mock\" or \"live\"");
    s.get("endpoint", l.endpoint);
    s.get("model", l.model);
    s.get("temperature", l.temperature);
    s.get("max_retries", l.max_retries);
    s.get("timeout_seconds", l.timeout_seconds);
    s.get("credential_env", l.credential_env);
    s.get("scenario", l.scenario);
}

ordered_json grid_json(const UniformGrid& g) { return {{"lo", g.lo}, {"hi", g.hi}, {"count", g.count}}; }

}  // namespace

void AppConfig::validate() const {
    try {
        sim.validate();
        trainer_config().validate();
        llm.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (refine.max_iterations < 1) throw ConfigError("refine.max_iterations must be >= 1");
    if (refine.eval_matches < 1) throw ConfigError("refine.eval_matches must be >= 1");
    if (refine.lost_trace_cap < 0) throw ConfigError("refine.lost_trace_cap must be >= 0");
    if (paths.out_dir.empty()) throw ConfigError("paths.out_dir must not be empty");
}

train::TrainerConfig AppConfig::trainer_config() const {
    train::TrainerConfig t = trainer;
    t.sim = sim;
    t.ppo = ppo;
    return t;
}

llm::RefineConfig AppConfig::refine_config(std::uint64_t seed) const {
    llm::RefineConfig r;
    r.max_iterations = refine.max_iterations;
    r.trainer = trainer_config();
    r.eval_matches = refine.eval_matches;
    r.lost_trace_cap = refine.lost_trace_cap;
    r.seed = seed;
    return r;
}

llm::LLMSettings AppConfig::llm_settings() const {
    llm::LLMSettings l = llm;
    l.fixture_dir = paths.fixture_dir;
    return l;
}

AppConfig app_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    AppConfig c;
    {
        Section root(j, "config");
        if (const json* s = root.child("sim")) read_sim(*s, c.sim);
        if (const json* t = root.child("trainer")) read_trainer(*t, c.trainer);
        if (const json* p = root.child("ppo")) read_ppo(*p, c.ppo);
        if (const json* l = root.child("llm")) read_llm(*l, c.llm);
        if (const json* r = root.child("refine")) {
            Section rs(*r, "refine");
            rs.get("max_iterations", c.refine.max_iterations);
            rs.get("eval_matches", c.refine.eval_matches);
            rs.get("lost_trace_cap", c.refine.lost_trace_cap);
        }
        if (const json* p = root.child("paths")) {
            Section ps(*p, "paths");
            ps.get("out_dir", c.paths.out_dir);
            ps.get("fixture_dir", c.paths.fixture_dir);
        }
    }
    c.validate();
    return c;
}

AppConfig load_app_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return app_config_from_json(ss.str());
}

std::string app_config_to_json(const AppConfig& c) {
    ordered_json j;
    const SimConfig& s = c.sim;
    j["sim"] = {{"field_width", s.field_width},
                {"field_length", s.field_length},
                {"center_target", {s.center_target.x, s.center_target.y}},
                {"red_line_y", s.red_line_y},
                {"house_radius", s.house_radius ? ordered_json(*s.house_radius) : ordered_json(nullptr)},
                {"stone_radius", s.stone_radius},
                {"stone_mass", s.stone_mass},
                {"friction_decel", s.friction_decel},
                {"restitution_stone", s.restitution_stone},
                {"restitution_wall", s.restitution_wall},
                {"dt", s.dt},
                {"rest_speed_eps", s.rest_speed_eps},
                {"max_ticks_per_throw", s.max_ticks_per_throw},
                {"launch_noise_angle_deg", s.launch_noise_angle_deg},
                {"launch_noise_speed_frac", s.launch_noise_speed_frac},
                {"grid",
                 {{"x0", grid_json(s.grid.x0)}, {"angle_deg", grid_json(s.grid.angle_deg)}, {"speed", grid_json(s.grid.speed)}}}};
    const auto& t = c.trainer;
    j["trainer"] = {{"num_actors", t.num_actors},
                    {"buffer_capacity", t.buffer_capacity},
                    {"hidden", t.hidden},
                    {"sync_interval", t.sync_interval},
                    {"eval_matches", t.eval_matches},
                    {"win_rate_threshold", t.win_rate_threshold},
                    {"max_env_throws", t.max_env_throws},
                    {"eval_interval_throws", t.eval_interval_throws},
                    {"plateau_window", t.plateau_window},
                    {"plateau_range", t.plateau_range},
                    {"plateau_min_env_throws", t.plateau_min_env_throws},
                    {"single_threaded", t.single_threaded},
                    {"max_numeric_failures", t.max_numeric_failures},
                    {"checkpoint_every", t.checkpoint_every}};
    const auto& p = c.ppo;
    j["ppo"] = {{"gamma", p.gamma},
                {"lambda", p.lambda},
                {"clip_epsilon", p.clip_epsilon},
                {"value_coef", p.value_coef},
                {"entropy_coef", p.entropy_coef},
                {"learning_rate", p.learning_rate},
                {"normalize_advantages", p.normalize_advantages},
                {"max_grad_norm", p.max_grad_norm},
                {"epochs", p.epochs},
                {"minibatch_size", p.minibatch_size}};
    const auto& l = c.llm;
    j["llm"] = {{"mode", l.mode == llm::Mode::live ? "live" : "mock"},
                {"endpoint", l.endpoint},
                {"model", l.model},
                {"temperature", l.temperature},
                {"max_retries", l.max_retries},
                {"timeout_seconds", l.timeout_seconds},
                {"credential_env", l.credential_env},
                {"scenario", l.scenario}};
    j["refine"] = {{"max_iterations", c.refine.max_iterations},
                   {"eval_matches", c.refine.eval_matches},
                   {"lost_trace_cap", c.refine.lost_trace_cap}};
    j["paths"] = {{"out_dir", c.paths.out_dir}, {"fixture_dir", c.paths.fixture_dir}};
    return j.dump(2) + "\n";
}

}  // namespace curling
