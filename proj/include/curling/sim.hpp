#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace curling {

enum class Team : std::uint8_t { A = 0, B = 1 };

inline constexpr Team other(Team t) { return t == Team::A ? Team::B : Team::A; }
inline constexpr int index_of(Team t) { return static_cast<int>(t); }
const char* team_name(Team t);

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
    Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
    bool operator==(const Vec2&) const = default;
};

double dot(Vec2 a, Vec2 b);
double norm(Vec2 v);
double distance(Vec2 a, Vec2 b);

class ConfigError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};
class StateError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};
class ActionError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// Uniform sampling of a closed interval; count == 1 yields the lower bound.
struct UniformGrid {
    double lo = 0.0;
    double hi = 0.0;
    int count = 1;

    double at(int i) const;
    int nearest(double value) const;  // ties toward the smaller index
};

// Discretized macro throw: lateral start offset, launch angle from the
// downfield (+y) axis in degrees, launch speed.
struct ActionGrid {
    UniformGrid x0{2.5, 7.5, 5};
    UniformGrid angle_deg{-30.0, 30.0, 25};
    UniformGrid speed{3.0, 4.8, 13};

    int size() const { return x0.count * angle_deg.count * speed.count; }
};

struct SimConfig {
    double field_width = 10.0;
    double field_length = 30.0;
    Vec2 center_target{5.0, 25.0};
    double red_line_y = 9.0;
    std::optional<double> house_radius = 3.0;  // nullopt: unbounded
    double stone_radius = 0.35;
    double stone_mass = 1.0;
    double friction_decel = 0.25;
    double restitution_stone = 0.9;
    double restitution_wall = 0.3;
    double dt = 0.05;
    double rest_speed_eps = 0.05;
    int max_ticks_per_throw = 4000;
    // Execution noise applied at launch, seeded per throw from the match seed.
    double launch_noise_angle_deg = 0.5;
    double launch_noise_speed_frac = 0.01;
    ActionGrid grid{};

    void validate() const;  // throws ConfigError naming the offending field
};

std::string config_hash(const SimConfig& config);

struct Stone {
    Team team = Team::A;
    Vec2 position{};
    Vec2 velocity{};
    bool in_play = true;
};

enum class Phase : std::uint8_t { awaiting_throw, stone_gliding, game_over, match_over };

struct GameScore {
    std::optional<Team> team;
    int points = 0;
    bool operator==(const GameScore&) const = default;
};

struct ThrowAction {
    int x0_index = 0;
    int angle_index = 0;
    int speed_index = 0;
    bool operator==(const ThrowAction&) const = default;
};

struct ActionValues {
    double x0 = 0.0;
    double angle_deg = 0.0;
    double speed = 0.0;
};

ActionValues action_values(const ActionGrid& grid, const ThrowAction& a);
void check_action(const ActionGrid& grid, const ThrowAction& a);  // throws ActionError
int flat_index(const ActionGrid& grid, const ThrowAction& a);
ThrowAction from_flat_index(const ActionGrid& grid, int index);

inline constexpr int kThrowsPerTeam = 4;

struct GameState {
    SimConfig config{};
    std::vector<Stone> stones;
    int game_index = 1;
    Team thrower = Team::A;
    std::array<int, 2> throws_left{kThrowsPerTeam, kThrowsPerTeam};
    Phase phase = Phase::awaiting_throw;
    std::vector<GameScore> game_scores;
    std::uint64_t rng_seed = 0;
    int throw_count = 0;  // throws executed so far in the match

    int throws_left_for(Team t) const { return throws_left[index_of(t)]; }
    std::array<int, 2> total_scores() const;
    std::vector<const Stone*> stones_in_play() const;
};

GameState new_match(const SimConfig& config, std::uint64_t seed);
std::string serialize_state(const GameState& state);

struct CollisionEvent {
    enum class Kind : std::uint8_t { stone, wall };
    int tick = 0;
    Kind kind = Kind::stone;
    int first = 0;
    int second = -1;  // -1 for walls
};

struct ThrowOutcome {
    std::vector<CollisionEvent> collisions;
    std::vector<Stone> final_stones;
    bool tick_budget_exhausted = false;
    int ticks = 0;
    std::optional<GameScore> game_result;  // set when this throw ended a game
};

// Mutating form of execute_throw.
ThrowOutcome apply_throw(GameState& state, const ThrowAction& action);
std::pair<GameState, ThrowOutcome> execute_throw(const GameState& state, const ThrowAction& action);

GameScore score_game(const std::vector<Stone>& stones, const SimConfig& config);

namespace physics {

double kinetic_energy(const std::vector<Stone>& stones, double mass);

// Equal-mass impulse along the line of centers; only applied when
// the stones approach. Returns true if an impulse was applied.
bool resolve_contact(Stone& a, Stone& b, const SimConfig& config);

// Pushes overlapping stones apart and clamps against walls; returns true if
// any stone-stone contact was detected.
struct ResolveReport {
    std::vector<CollisionEvent> events;
    double max_overlap_after = 0.0;
};
ResolveReport resolve_collisions(std::vector<Stone>& stones, const SimConfig& config, int tick);

void apply_friction(std::vector<Stone>& stones, const SimConfig& config);
void integrate_positions(std::vector<Stone>& stones, const SimConfig& config);
void mark_out_of_field(std::vector<Stone>& stones, const SimConfig& config);

// One full tick: friction, position update, collision resolution.
ResolveReport step(std::vector<Stone>& stones, const SimConfig& config, int tick);

bool all_at_rest(const std::vector<Stone>& stones);

}  // namespace physics

class Policy {
   public:
    virtual ~Policy() = default;
    virtual ThrowAction act(const GameState& state) = 0;
    virtual std::string name() const { return "policy"; }
};

struct StoneSnapshot {
    Team team = Team::A;
    double x = 0.0;
    double y = 0.0;
};

struct ThrowRecord {
    int game = 1;
    int index = 0;  // 0..7 within the game
    Team team = Team::A;
    ThrowAction action{};
    ActionValues values{};
    std::vector<StoneSnapshot> stones_after;
    std::array<int, 2> score_after{0, 0};
};

struct MatchTrace {
    std::uint64_t seed = 0;
    std::string config_hash;
    std::vector<ThrowRecord> throws;
    std::array<int, 2> total{0, 0};
    std::optional<Team> winner;  // nullopt: draw
    bool aborted = false;
    std::string fault;
    std::optional<Team> faulting_team;

    int margin_for(Team t) const { return total[index_of(t)] - total[index_of(other(t))]; }
};

MatchTrace run_match(Policy& policy_a, Policy& policy_b, const SimConfig& config, std::uint64_t seed);

std::string trace_to_json(const MatchTrace& trace);
MatchTrace trace_from_json(const std::string& text);

std::uint64_t splitmix64(std::uint64_t x);
double unit_uniform(std::uint64_t bits);  // [0, 1)

}  // namespace curling
