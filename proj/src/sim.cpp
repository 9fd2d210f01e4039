#include "curling/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include <json.hpp>

namespace curling {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kScoreTieEps = 1e-9;
constexpr int kMaxResolvePasses = 32;

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    // Collapse "-0.000000" so replays do not depend on the sign of tiny values.
    if (std::string_view(buf) == "-0.000000") return "0.000000";
    return buf;
}

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

void require(bool ok, const char* message) {
    if (!ok) throw ConfigError(message);
}

}  // namespace

const char* team_name(Team t) { return t == Team::A ? "A" : "B"; }

double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
double norm(Vec2 v) { return std::hypot(v.x, v.y); }
double distance(Vec2 a, Vec2 b) { return norm(a - b); }

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

double unit_uniform(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

double UniformGrid::at(int i) const {
    if (count <= 1) return lo;
    return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
}

int UniformGrid::nearest(double value) const {
    if (count <= 1) return 0;
    int best = 0;
    double best_err = std::numeric_limits<double>::infinity();
    for (int i = 0; i < count; ++i) {
        double err = std::abs(at(i) - value);
        if (err < best_err - 1e-12) {
            best_err = err;
            best = i;
        }
    }
    return best;
}

void SimConfig::validate() const {
    require(field_width > 0, "field_width must be > 0");
    require(field_length > 0, "field_length must be > 0");
    require(stone_radius > 0, "stone_radius must be > 0");
    require(stone_mass > 0, "stone_mass must be > 0");
    require(!house_radius || *house_radius > 0, "house_radius must be > 0");
    require(red_line_y > 0, "red_line_y must be > 0");
    require(red_line_y < center_target.y, "red_line_y must be < center_target.y");
    require(center_target.x > 0 && center_target.x < field_width, "center_target.x outside the field");
    require(center_target.y > 0 && center_target.y < field_length, "center_target.y outside the field");
    require(friction_decel >= 0, "friction_decel must be >= 0");
    require(restitution_stone > 0 && restitution_stone <= 1, "restitution_stone: restitution out of (0,1]");
    require(restitution_wall > 0 && restitution_wall <= 1, "restitution_wall: restitution out of (0,1]");
    require(dt > 0, "dt must be > 0");
    require(rest_speed_eps > 0, "rest_speed_eps must be > 0");
    require(max_ticks_per_throw > 0, "max_ticks_per_throw must be > 0");
    require(launch_noise_angle_deg >= 0, "launch_noise_angle_deg must be >= 0");
    require(launch_noise_speed_frac >= 0 && launch_noise_speed_frac < 1,
            "launch_noise_speed_frac must be in [0,1)");
    auto grid_ok = [](const UniformGrid& g) { return g.count >= 1 && g.hi >= g.lo; };
    require(grid_ok(grid.x0), "grid.x0 must have count >= 1 and hi >= lo");
    require(grid_ok(grid.angle_deg), "grid.angle_deg must have count >= 1 and hi >= lo");
    require(grid_ok(grid.speed), "grid.speed must have count >= 1 and hi >= lo");
    require(grid.speed.lo > 0, "grid.speed must be positive");
    require(grid.x0.lo >= 0 && grid.x0.hi <= field_width, "grid.x0 outside the field width");
    require(grid.angle_deg.lo > -90 && grid.angle_deg.hi < 90, "grid.angle_deg must lie in (-90, 90)");
}

std::string config_hash(const SimConfig& c) {
    std::string s;
    auto add = [&](double v) {
        s += fmt17(v);
        s += ';';
    };
    add(c.field_width);
    add(c.field_length);
    add(c.center_target.x);
    add(c.center_target.y);
    add(c.red_line_y);
    add(c.house_radius ? *c.house_radius : -1.0);
    add(c.stone_radius);
    add(c.stone_mass);
    add(c.friction_decel);
    add(c.restitution_stone);
    add(c.restitution_wall);
    add(c.dt);
    add(c.rest_speed_eps);
    add(c.max_ticks_per_throw);
    add(c.launch_noise_angle_deg);
    add(c.launch_noise_speed_frac);
    for (const auto* g : {&c.grid.x0, &c.grid.angle_deg, &c.grid.speed}) {
        add(g->lo);
        add(g->hi);
        add(g->count);
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(s)));
    return buf;
}

ActionValues action_values(const ActionGrid& grid, const ThrowAction& a) {
    return {grid.x0.at(a.x0_index), grid.angle_deg.at(a.angle_index), grid.speed.at(a.speed_index)};
}

void check_action(const ActionGrid& grid, const ThrowAction& a) {
    auto bad = [](int i, const UniformGrid& g) { return i < 0 || i >= g.count; };
    if (bad(a.x0_index, grid.x0)) throw ActionError("x0_index out of range: " + std::to_string(a.x0_index));
    if (bad(a.angle_index, grid.angle_deg))
        throw ActionError("angle_index out of range: " + std::to_string(a.angle_index));
    if (bad(a.speed_index, grid.speed))
        throw ActionError("speed_index out of range: " + std::to_string(a.speed_index));
}

int flat_index(const ActionGrid& grid, const ThrowAction& a) {
    check_action(grid, a);
    return (a.x0_index * grid.angle_deg.count + a.angle_index) * grid.speed.count + a.speed_index;
}

ThrowAction from_flat_index(const ActionGrid& grid, int index) {
    if (index < 0 || index >= grid.size()) throw ActionError("flat action index out of range");
    ThrowAction a;
    a.speed_index = index % grid.speed.count;
    index /= grid.speed.count;
    a.angle_index = index % grid.angle_deg.count;
    a.x0_index = index / grid.angle_deg.count;
    return a;
}

std::array<int, 2> GameState::total_scores() const {
    std::array<int, 2> total{0, 0};
    for (const auto& g : game_scores)
        if (g.team) total[index_of(*g.team)] += g.points;
    return total;
}

std::vector<const Stone*> GameState::stones_in_play() const {
    std::vector<const Stone*> out;
    for (const auto& s : stones)
        if (s.in_play) out.push_back(&s);
    return out;
}

GameState new_match(const SimConfig& config, std::uint64_t seed) {
    config.validate();
    GameState state;
    state.config = config;
    state.rng_seed = seed;
    return state;
}

std::string serialize_state(const GameState& s) {
    nlohmann::ordered_json j;
    j["config_hash"] = config_hash(s.config);
    j["game_index"] = s.game_index;
    j["thrower"] = team_name(s.thrower);
    j["throws_left"] = {{"A", s.throws_left[0]}, {"B", s.throws_left[1]}};
    j["phase"] = static_cast<int>(s.phase);
    j["rng_seed"] = s.rng_seed;
    j["throw_count"] = s.throw_count;
    auto stones = nlohmann::ordered_json::array();
    for (const auto& st : s.stones)
        stones.push_back({{"team", team_name(st.team)},
                          {"x", st.position.x},
                          {"y", st.position.y},
                          {"vx", st.velocity.x},
                          {"vy", st.velocity.y},
                          {"in_play", st.in_play}});
    j["stones"] = std::move(stones);
    auto scores = nlohmann::ordered_json::array();
    for (const auto& g : s.game_scores)
        scores.push_back({{"team", g.team ? team_name(*g.team) : "none"}, {"points", g.points}});
    j["game_scores"] = std::move(scores);
    return j.dump();
}

namespace physics {

double kinetic_energy(const std::vector<Stone>& stones, double mass) {
    double e = 0.0;
    for (const auto& s : stones)
        if (s.in_play) e += 0.5 * mass * dot(s.velocity, s.velocity);
    return e;
}

bool resolve_contact(Stone& a, Stone& b, const SimConfig& config) {
    Vec2 delta = b.position - a.position;
    double dist = norm(delta);
    if (dist <= 0.0) return false;
    Vec2 n = delta * (1.0 / dist);
    double closing = dot(a.velocity - b.velocity, n);
    if (closing <= 0.0) return false;
    // Equal masses throughout; the general form reduces to j = (1+e)/2 * closing.
    double j = (1.0 + config.restitution_stone) * closing * 0.5;
    a.velocity -= n * j;
    b.velocity += n * j;
    return true;
}

void apply_friction(std::vector<Stone>& stones, const SimConfig& config) {
    const double dv = config.friction_decel * config.dt;
    for (auto& s : stones) {
        if (!s.in_play) continue;
        double speed = norm(s.velocity);
        if (speed == 0.0) continue;
        double next = speed - dv;
        if (next < config.rest_speed_eps)
            s.velocity = {0.0, 0.0};
        else
            s.velocity = s.velocity * (next / speed);
    }
}

void integrate_positions(std::vector<Stone>& stones, const SimConfig& config) {
    for (auto& s : stones)
        if (s.in_play) s.position += s.velocity * config.dt;
}

namespace {

// Reflects a stone moving into a wall and clamps it back inside.
bool resolve_walls(Stone& s, const SimConfig& c) {
    const double r = c.stone_radius;
    bool hit = false;
    if (s.position.x < r) {
        s.position.x = r;
        if (s.velocity.x < 0) s.velocity.x = -c.restitution_wall * s.velocity.x;
        hit = true;
    } else if (s.position.x > c.field_width - r) {
        s.position.x = c.field_width - r;
        if (s.velocity.x > 0) s.velocity.x = -c.restitution_wall * s.velocity.x;
        hit = true;
    }
    if (s.position.y > c.field_length - r) {
        s.position.y = c.field_length - r;
        if (s.velocity.y > 0) s.velocity.y = -c.restitution_wall * s.velocity.y;
        hit = true;
    } else if (s.position.y < r && s.velocity.y < 0) {
        // The launch point sits on the near wall; only returning stones bounce.
        s.position.y = r;
        s.velocity.y = -c.restitution_wall * s.velocity.y;
        hit = true;
    }
    return hit;
}

}  // namespace

ResolveReport resolve_collisions(std::vector<Stone>& stones, const SimConfig& config, int tick) {
    ResolveReport report;
    const double min_dist = 2.0 * config.stone_radius;
    const int n = static_cast<int>(stones.size());
    // Stones clamped against a wall stop yielding; their partner takes the whole push.
    std::vector<char> pinned(n, 0);
    for (int pass = 0; pass < kMaxResolvePasses; ++pass) {
        bool any = false;
        for (int i = 0; i < n; ++i) {
            if (!stones[i].in_play) continue;
            for (int j = i + 1; j < n; ++j) {
                if (!stones[j].in_play) continue;
                Vec2 delta = stones[j].position - stones[i].position;
                double dist = norm(delta);
                if (dist >= min_dist) continue;
                Vec2 normal = dist > 0.0 ? delta * (1.0 / dist) : Vec2{0.0, 1.0};
                if (resolve_contact(stones[i], stones[j], config))
                    report.events.push_back({tick, CollisionEvent::Kind::stone, i, j});
                double gap = min_dist - dist + 2e-9;
                double share_i = pinned[i] == pinned[j] ? 0.5 : (pinned[i] ? 0.0 : 1.0);
                stones[i].position -= normal * (gap * share_i);
                stones[j].position += normal * (gap * (1.0 - share_i));
                any = true;
            }
        }
        for (int i = 0; i < n; ++i) {
            if (!stones[i].in_play) continue;
            Vec2 before = stones[i].velocity;
            if (!resolve_walls(stones[i], config)) continue;
            pinned[i] = 1;
            any = true;  // the clamp may have opened a new overlap
            if (!(before == stones[i].velocity) && pass == 0)
                report.events.push_back({tick, CollisionEvent::Kind::wall, i, -1});
        }
        if (!any) break;
    }
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
        if (!stones[i].in_play) continue;
        for (int j = i + 1; j < n; ++j) {
            if (!stones[j].in_play) continue;
            worst = std::max(worst, min_dist - distance(stones[i].position, stones[j].position));
        }
    }
    report.max_overlap_after = worst;
    return report;
}

void mark_out_of_field(std::vector<Stone>& stones, const SimConfig& c) {
    const double r = c.stone_radius;
    for (auto& s : stones) {
        if (!s.in_play) continue;
        bool inside = s.position.x >= -r && s.position.x <= c.field_width + r && s.position.y >= -r &&
                      s.position.y <= c.field_length + r;
        if (!inside) {
            s.in_play = false;
            s.velocity = {0.0, 0.0};
        }
    }
}

ResolveReport step(std::vector<Stone>& stones, const SimConfig& config, int tick) {
    apply_friction(stones, config);
    integrate_positions(stones, config);
    auto report = resolve_collisions(stones, config, tick);
    mark_out_of_field(stones, config);
    return report;
}

bool all_at_rest(const std::vector<Stone>& stones) {
    return std::all_of(stones.begin(), stones.end(), [](const Stone& s) {
        return !s.in_play || (s.velocity.x == 0.0 && s.velocity.y == 0.0);
    });
}

}  // namespace physics

namespace {

void end_game_if_done(GameState& state, ThrowOutcome& outcome) {
    if (state.throws_left[0] > 0 || state.throws_left[1] > 0) return;
    GameScore result = score_game(state.stones, state.config);
    state.game_scores.push_back(result);
    outcome.game_result = result;
    if (state.game_index == 1) {
        state.game_index = 2;
        state.stones.clear();
        state.throws_left = {kThrowsPerTeam, kThrowsPerTeam};
        // Game 1 opens with A and alternates, so B threw second; B opens game 2.
        state.thrower = Team::B;
        state.phase = Phase::awaiting_throw;
    } else {
        state.phase = Phase::match_over;
    }
}

}  // namespace

ThrowOutcome apply_throw(GameState& state, const ThrowAction& action) {
    if (state.phase != Phase::awaiting_throw) throw StateError("execute_throw: phase is not awaiting_throw");
    if (state.throws_left_for(state.thrower) <= 0) throw StateError("execute_throw: thrower has no throws left");
    const SimConfig& c = state.config;
    check_action(c.grid, action);

    ActionValues v = action_values(c.grid, action);
    std::uint64_t bits = splitmix64(state.rng_seed ^ splitmix64(static_cast<std::uint64_t>(state.throw_count) + 1));
    double u_angle = 2.0 * unit_uniform(bits) - 1.0;
    double u_speed = 2.0 * unit_uniform(splitmix64(bits)) - 1.0;
    double angle = (v.angle_deg + u_angle * c.launch_noise_angle_deg) * kDegToRad;
    double speed = v.speed * (1.0 + u_speed * c.launch_noise_speed_frac);

    Stone stone;
    stone.team = state.thrower;
    stone.position = {v.x0, 0.0};
    stone.velocity = {speed * std::sin(angle), speed * std::cos(angle)};
    state.stones.push_back(stone);
    state.throws_left[index_of(state.thrower)] -= 1;
    state.throw_count += 1;
    state.phase = Phase::stone_gliding;

    ThrowOutcome outcome;
    int tick = 0;
    while (!physics::all_at_rest(state.stones)) {
        if (tick >= c.max_ticks_per_throw) {
            for (auto& s : state.stones) s.velocity = {0.0, 0.0};
            outcome.tick_budget_exhausted = true;
            break;
        }
        auto report = physics::step(state.stones, c, tick);
        outcome.collisions.insert(outcome.collisions.end(), report.events.begin(), report.events.end());
        ++tick;
    }
    outcome.ticks = tick;
    outcome.final_stones = state.stones;

    state.phase = Phase::awaiting_throw;
    state.thrower = other(state.thrower);
    end_game_if_done(state, outcome);
    return outcome;
}

std::pair<GameState, ThrowOutcome> execute_throw(const GameState& state, const ThrowAction& action) {
    GameState next = state;
    ThrowOutcome outcome = apply_throw(next, action);
    return {std::move(next), std::move(outcome)};
}

GameScore score_game(const std::vector<Stone>& stones, const SimConfig& config) {
    std::array<double, 2> best{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    for (const auto& s : stones) {
        if (!s.in_play) continue;
        double d = distance(s.position, config.center_target);
        if (config.house_radius && d > *config.house_radius) continue;
        best[index_of(s.team)] = std::min(best[index_of(s.team)], d);
    }
    if (std::isinf(best[0]) && std::isinf(best[1])) return {};
    if (std::abs(best[0] - best[1]) <= kScoreTieEps) return {};
    Team winner = best[0] < best[1] ? Team::A : Team::B;
    double opp_best = best[index_of(other(winner))];
    int points = 0;
    for (const auto& s : stones) {
        if (!s.in_play || s.team != winner) continue;
        double d = distance(s.position, config.center_target);
        if (config.house_radius && d > *config.house_radius) continue;
        if (d < opp_best) ++points;
    }
    return {winner, points};
}

MatchTrace run_match(Policy& policy_a, Policy& policy_b, const SimConfig& config, std::uint64_t seed) {
    GameState state = new_match(config, seed);
    MatchTrace trace;
    trace.seed = seed;
    trace.config_hash = config_hash(config);
    while (state.phase != Phase::match_over) {
        Team team = state.thrower;
        Policy& policy = team == Team::A ? policy_a : policy_b;
        int game = state.game_index;
        int index = 2 * kThrowsPerTeam - state.throws_left[0] - state.throws_left[1];
        ThrowAction action;
        try {
            action = policy.act(state);
            check_action(config.grid, action);
        } catch (const std::exception& e) {
            trace.aborted = true;
            trace.fault = std::string(team_name(team)) + ": " + e.what() + " at state " + serialize_state(state);
            trace.faulting_team = team;
            trace.total = state.total_scores();
            trace.winner = other(team);
            return trace;
        }
        ThrowOutcome outcome = apply_throw(state, action);
        ThrowRecord rec;
        rec.game = game;
        rec.index = index;
        rec.team = team;
        rec.action = action;
        rec.values = action_values(config.grid, action);
        for (const auto& s : outcome.final_stones)
            if (s.in_play) rec.stones_after.push_back({s.team, s.position.x, s.position.y});
        rec.score_after = state.total_scores();
        trace.throws.push_back(std::move(rec));
    }
    trace.total = state.total_scores();
    if (trace.total[0] != trace.total[1]) trace.winner = trace.total[0] > trace.total[1] ? Team::A : Team::B;
    return trace;
}

std::string trace_to_json(const MatchTrace& t) {
    std::string out;
    out.reserve(4096);
    out += "{\"meta\":{\"seed\":" + std::to_string(t.seed) + ",\"config_hash\":\"" + t.config_hash + "\"},";
    out += "\"throws\":[";
    for (std::size_t i = 0; i < t.throws.size(); ++i) {
        const auto& r = t.throws[i];
        if (i) out += ',';
        out += "{\"game\":" + std::to_string(r.game) + ",\"idx\":" + std::to_string(r.index) + ",\"team\":\"" +
               team_name(r.team) + "\",";
        out += "\"action\":{\"x0\":" + fmt6(r.values.x0) + ",\"angle\":" + fmt6(r.values.angle_deg) +
               ",\"speed\":" + fmt6(r.values.speed) + "},";
        out += "\"stones_after\":[";
        for (std::size_t k = 0; k < r.stones_after.size(); ++k) {
            const auto& s = r.stones_after[k];
            if (k) out += ',';
            out += "{\"team\":\"" + std::string(team_name(s.team)) + "\",\"x\":" + fmt6(s.x) + ",\"y\":" + fmt6(s.y) +
                   "}";
        }
        out += "],\"score_after\":{\"A\":" + std::to_string(r.score_after[0]) +
               ",\"B\":" + std::to_string(r.score_after[1]) + "}}";
    }
    out += "],\"result\":{\"A\":" + std::to_string(t.total[0]) + ",\"B\":" + std::to_string(t.total[1]) +
           ",\"winner\":\"" + (t.winner ? team_name(*t.winner) : "draw") + "\"";
    if (t.aborted) {
        nlohmann::json fault = t.fault;
        out += ",\"fault\":" + fault.dump();
        out += ",\"faulting_team\":\"" + std::string(team_name(t.faulting_team.value_or(Team::A))) + "\"";
    }
    out += "}}";
    return out;
}

MatchTrace trace_from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    auto team_of = [](const std::string& s) {
        if (s == "A") return Team::A;
        if (s == "B") return Team::B;
        throw std::runtime_error("trace: bad team '" + s + "'");
    };
    MatchTrace t;
    t.seed = j.at("meta").at("seed").get<std::uint64_t>();
    t.config_hash = j.at("meta").at("config_hash").get<std::string>();
    for (const auto& r : j.at("throws")) {
        ThrowRecord rec;
        rec.game = r.at("game").get<int>();
        rec.index = r.at("idx").get<int>();
        rec.team = team_of(r.at("team").get<std::string>());
        rec.values = {r.at("action").at("x0").get<double>(), r.at("action").at("angle").get<double>(),
                      r.at("action").at("speed").get<double>()};
        for (const auto& s : r.at("stones_after"))
            rec.stones_after.push_back({team_of(s.at("team").get<std::string>()), s.at("x").get<double>(),
                                        s.at("y").get<double>()});
        rec.score_after = {r.at("score_after").at("A").get<int>(), r.at("score_after").at("B").get<int>()};
        t.throws.push_back(std::move(rec));
    }
    const auto& res = j.at("result");
    t.total = {res.at("A").get<int>(), res.at("B").get<int>()};
    std::string w = res.at("winner").get<std::string>();
    if (w != "draw") t.winner = team_of(w);
    if (res.contains("fault")) {
        t.aborted = true;
        t.fault = res.at("fault").get<std::string>();
        if (res.contains("faulting_team")) t.faulting_team = team_of(res.at("faulting_team").get<std::string>());
    }
    return t;
}

}  // namespace curling
