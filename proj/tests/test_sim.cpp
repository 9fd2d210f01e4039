#include <doctest.h>

#include <cmath>
#include <random>

#include "curling/dt_policy.hpp"
#include "curling/sim.hpp"
#include "oracles.hpp"

using namespace curling;

namespace {

SimConfig quiet_config() {
    SimConfig c;
    c.launch_noise_angle_deg = 0.0;
    c.launch_noise_speed_frac = 0.0;
    return c;
}

Stone stone(Team t, double x, double y, double vx = 0, double vy = 0) {
    Stone s;
    s.team = t;
    s.position = {x, y};
    s.velocity = {vx, vy};
    return s;
}

class FixedPolicy : public Policy {
   public:
    explicit FixedPolicy(ThrowAction a) : a_(a) {}
    ThrowAction act(const GameState&) override { return a_; }

   private:
    ThrowAction a_;
};

class NeverThrows : public Policy {
   public:
    ThrowAction act(const GameState&) override { throw std::runtime_error("no throw available"); }
};

std::vector<oracle::ScoreStone> to_oracle(const std::vector<Stone>& stones) {
    std::vector<oracle::ScoreStone> out;
    for (const auto& s : stones) out.push_back({index_of(s.team), s.position.x, s.position.y, s.in_play});
    return out;
}

}  // namespace

TEST_CASE("new_match starts empty with team A throwing") {
    GameState s = new_match(SimConfig{}, 0);
    CHECK(s.stones.empty());
    CHECK(s.thrower == Team::A);
    CHECK(s.throws_left == std::array<int, 2>{4, 4});
    CHECK(s.phase == Phase::awaiting_throw);
    CHECK(s.game_index == 1);
}

TEST_CASE("new_match rejects restitution above one") {
    SimConfig c;
    c.restitution_stone = 1.2;
    CHECK_THROWS_WITH_AS(new_match(c, 3), doctest::Contains("restitution out of (0,1]"), ConfigError);
}

TEST_CASE("new_match is deterministic for a seed") {
    CHECK(serialize_state(new_match(SimConfig{}, 7)) == serialize_state(new_match(SimConfig{}, 7)));
}

TEST_CASE("straight draw stops near the closed-form stopping point") {
    SimConfig c = quiet_config();
    double range = c.center_target.y;
    c.grid.x0 = {5.0, 5.0, 1};
    c.grid.angle_deg = {0.0, 0.0, 1};
    c.grid.speed.lo = c.grid.speed.hi = std::sqrt(2.0 * c.friction_decel * range);
    c.grid.speed.count = 1;
    auto [next, outcome] = execute_throw(new_match(c, 0), ThrowAction{0, 0, 0});
    REQUIRE(next.stones.size() == 1);
    CHECK(distance(next.stones[0].position, c.center_target) < 0.2);
    CHECK_FALSE(outcome.tick_budget_exhausted);
}

TEST_CASE("head-on equal-mass collision follows the restitution equations") {
    SimConfig c;
    Stone a = stone(Team::A, 5, 10, 0, 2.0);
    Stone b = stone(Team::B, 5, 10.7, 0, 0);
    REQUIRE(physics::resolve_contact(a, b, c));
    auto [va, vb] = oracle::head_on_restitution(2.0, 0.0, c.restitution_stone);
    CHECK(a.velocity.y == doctest::Approx(va).epsilon(1e-12));
    CHECK(b.velocity.y == doctest::Approx(vb).epsilon(1e-12));
    CHECK(vb == doctest::Approx(0.95 * 2.0));
    CHECK(va == doctest::Approx(0.05 * 2.0));
}

TEST_CASE("separating stones receive no impulse") {
    SimConfig c;
    Stone a = stone(Team::A, 5, 10, 0, -1.0);
    Stone b = stone(Team::B, 5, 10.6, 0, 1.0);
    CHECK_FALSE(physics::resolve_contact(a, b, c));
    CHECK(a.velocity.y == -1.0);
}

TEST_CASE("invalid speed index is an action error") {
    SimConfig c;
    CHECK_THROWS_AS(execute_throw(new_match(c, 0), ThrowAction{0, 0, c.grid.speed.count}), ActionError);
    CHECK_THROWS_AS(execute_throw(new_match(c, 0), ThrowAction{-1, 0, 0}), ActionError);
}

TEST_CASE("throwing after the match is over is a state error") {
    SimConfig c;
    GameState s = new_match(c, 0);
    ThrowAction a{2, 12, 4};
    for (int i = 0; i < 16; ++i) apply_throw(s, a);
    CHECK(s.phase == Phase::match_over);
    CHECK_THROWS_AS(apply_throw(s, a), StateError);
}

TEST_CASE("tick budget exhaustion stops every stone") {
    SimConfig c = quiet_config();
    c.max_ticks_per_throw = 5;
    auto [next, outcome] = execute_throw(new_match(c, 0), ThrowAction{2, 12, 4});
    CHECK(outcome.tick_budget_exhausted);
    CHECK(physics::all_at_rest(next.stones));
}

TEST_CASE("serve swaps in the second game") {
    SimConfig c;
    GameState s = new_match(c, 1);
    std::vector<Team> order;
    for (int i = 0; i < 16; ++i) {
        order.push_back(s.thrower);
        apply_throw(s, ThrowAction{2, 12, 4});
    }
    CHECK(order[0] == Team::A);
    CHECK(order[1] == Team::B);
    CHECK(order[7] == Team::B);
    CHECK(order[8] == Team::B);
    CHECK(order[9] == Team::A);
    CHECK(s.game_scores.size() == 2);
}

TEST_CASE("score_game hand-checked cases") {
    SimConfig c;
    std::vector<Stone> st{stone(Team::A, 5, 26), stone(Team::A, 5, 28.5), stone(Team::B, 5, 27)};
    auto s = score_game(st, c);
    REQUIRE(s.team);
    CHECK(*s.team == Team::A);
    CHECK(s.points == 1);
    CHECK(score_game({}, c) == GameScore{});

    std::vector<Stone> tie{stone(Team::A, 5, 26), stone(Team::B, 6, 25)};
    CHECK(score_game(tie, c) == GameScore{});

    SimConfig unbounded = c;
    unbounded.house_radius.reset();
    auto u = score_game(st, unbounded);
    CHECK(u.points == 1);
    std::vector<Stone> far{stone(Team::B, 1, 5)};
    CHECK(score_game(far, c) == GameScore{});
    CHECK(score_game(far, unbounded).points == 1);
}

TEST_CASE("score_game agrees with the brute-force oracle") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ux(0, 10), uy(18, 30), coin(0, 1);
    for (bool bounded : {true, false}) {
        SimConfig c;
        if (!bounded) c.house_radius.reset();
        for (int trial = 0; trial < 300; ++trial) {
            std::vector<Stone> st;
            int n = static_cast<int>(rng() % 9);
            for (int i = 0; i < n; ++i) {
                Stone s = stone(coin(rng) < 0.5 ? Team::A : Team::B, ux(rng), uy(rng));
                s.in_play = coin(rng) > 0.1;
                st.push_back(s);
            }
            auto got = score_game(st, c);
            auto want = oracle::brute_force_score(to_oracle(st), c.center_target.x, c.center_target.y, c.house_radius);
            CHECK((got.team ? index_of(*got.team) : -1) == want.team);
            CHECK(got.points == want.points);
        }
    }
}

TEST_CASE("friction leaves resting stones exactly stationary") {
    SimConfig c;
    std::vector<Stone> st{stone(Team::A, 5, 20, 0.01, 0.02)};
    physics::apply_friction(st, c);
    CHECK(st[0].velocity == Vec2{0, 0});
    Vec2 p = st[0].position;
    physics::step(st, c, 1);
    CHECK(st[0].position == p);
}

TEST_CASE("stones leaving the field are removed") {
    SimConfig c;
    std::vector<Stone> st{stone(Team::A, 5, c.field_length + 1.0)};
    physics::mark_out_of_field(st, c);
    CHECK_FALSE(st[0].in_play);
}

TEST_CASE("physics per-tick invariants on random scenes") {
    SimConfig c;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ux(0.5, 9.5), uy(10, 29), uv(-3, 3);
    for (int scene = 0; scene < 200; ++scene) {
        std::vector<Stone> st;
        for (int i = 0; i < 6; ++i) st.push_back(stone(i % 2 ? Team::B : Team::A, ux(rng), uy(rng), uv(rng), uv(rng)));
        physics::resolve_collisions(st, c, 0);
        for (int tick = 1; tick < 200; ++tick) {
            double e0 = physics::kinetic_energy(st, c.stone_mass);
            auto rep = physics::step(st, c, tick);
            CHECK(physics::kinetic_energy(st, c.stone_mass) <= e0 + 1e-12);
            CHECK(rep.max_overlap_after <= 1e-6);
        }
    }
}

TEST_CASE("run_match is reproducible and swaps serve") {
    auto trees = dt::builtin_trees();
    dt::TreePolicy a(trees.at("tree_I")), b(trees.at("tree_I"));
    MatchTrace t1 = run_match(a, b, SimConfig{}, 1);
    MatchTrace t2 = run_match(a, b, SimConfig{}, 1);
    CHECK(trace_to_json(t1) == trace_to_json(t2));
    REQUIRE(t1.throws.size() == 16);
    CHECK(t1.throws[0].team == Team::A);
    CHECK(t1.throws[8].team == Team::B);
    CHECK(t1.throws[15].index == 7);
}

TEST_CASE("different seeds change the trace through launch noise") {
    auto trees = dt::builtin_trees();
    dt::TreePolicy a(trees.at("tree_I")), b(trees.at("tree_II"));
    CHECK(trace_to_json(run_match(a, b, SimConfig{}, 1)) != trace_to_json(run_match(a, b, SimConfig{}, 2)));
}

TEST_CASE("trace score_after matches scoring at game end") {
    auto trees = dt::builtin_trees();
    dt::TreePolicy a(trees.at("tree_II")), b(trees.at("tree_III"));
    SimConfig c;
    MatchTrace t = run_match(a, b, c, 9);
    std::array<int, 2> before{0, 0};
    for (std::size_t i = 0; i < t.throws.size(); ++i) {
        const auto& r = t.throws[i];
        if (r.index != 7) continue;
        std::vector<Stone> st;
        for (const auto& s : r.stones_after) st.push_back(stone(s.team, s.x, s.y));
        auto g = score_game(st, c);
        std::array<int, 2> want = before;
        if (g.team) want[index_of(*g.team)] += g.points;
        CHECK(r.score_after == want);
        before = r.score_after;
    }
}

TEST_CASE("faulting policy aborts the match and forfeits") {
    auto trees = dt::builtin_trees();
    dt::TreePolicy a(trees.at("tree_I"));
    NeverThrows stub;
    MatchTrace t = run_match(a, stub, SimConfig{}, 4);
    CHECK(t.aborted);
    REQUIRE(t.faulting_team);
    CHECK(*t.faulting_team == Team::B);
    REQUIRE(t.winner);
    CHECK(*t.winner == Team::A);
    CHECK(t.throws.size() == 1);
}

TEST_CASE("trace JSON has the fixed schema and round-trips") {
    FixedPolicy p(ThrowAction{2, 12, 4});
    MatchTrace t = run_match(p, p, SimConfig{}, 3);
    std::string text = trace_to_json(t);
    CHECK(text.rfind("{\"meta\":{\"seed\":3,\"config_hash\":", 0) == 0);
    MatchTrace back = trace_from_json(text);
    CHECK(back.total == t.total);
    CHECK(back.throws.size() == t.throws.size());
    CHECK(trace_to_json(back) == text);
}

TEST_CASE("grid helpers") {
    UniformGrid g{3.0, 4.8, 13};
    CHECK(g.at(0) == 3.0);
    CHECK(g.at(12) == doctest::Approx(4.8));
    CHECK(g.nearest(3.075) == 0);  // midpoint rounds down
    ActionGrid ag;
    for (int i = 0; i < ag.size(); i += 97) CHECK(flat_index(ag, from_flat_index(ag, i)) == i);
}
