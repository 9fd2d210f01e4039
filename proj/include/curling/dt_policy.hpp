#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "curling/sim.hpp"

namespace curling::dt {

enum class Feature {
    opp_nearest_dist_to_center,
    own_nearest_dist_to_center,
    opp_stones_in_house,
    own_stones_in_house,
    own_throws_left,
    opp_throws_left,
    is_last_throw,
    game_index,
    center_occupied_by,
};

enum class Comparator { lt, le, eq, ge, gt };
enum class ShotKind { draw, hit, guard };
enum class SpeedHint { slow, medium, fast };
enum class Selector { opp_nearest_to_center };

// Distance reported for a side with no stone in play.
inline constexpr double kNoStoneDistance = 99.0;
inline constexpr int kMaxDepth = 32;

const char* to_string(Feature f);
const char* to_string(Comparator c);
const char* to_string(ShotKind k);
const char* to_string(SpeedHint s);
std::optional<Feature> feature_from_string(const std::string& s);

struct Predicate {
    Feature feature{};
    Comparator op{};
    double constant = 0.0;
};

struct Shot {
    ShotKind kind = ShotKind::draw;
    std::variant<Vec2, Selector> target = Vec2{5.0, 25.0};
    bool target_is_center = true;  // "center" keyword: resolved from SimConfig
    SpeedHint speed = SpeedHint::medium;
};

struct Condition {
    Predicate predicate;
    std::string true_branch;
    std::string false_branch;
};

struct Leaf {
    Shot shot;
};

using Node = std::variant<Condition, Leaf>;

struct DecisionTreeSpec {
    std::string name;
    std::string comment;
    std::string root;
    std::map<std::string, Node> nodes;

    int depth() const;  // conditions on the longest root-to-leaf path
};

struct Diagnostic {
    std::string node;  // empty for document-level problems
    std::string code;  // syntax, unknown_feature, dangling_branch, cycle, ...
    std::string message;

    std::string to_string() const;
};

class TreeParseError : public std::runtime_error {
   public:
    explicit TreeParseError(std::vector<Diagnostic> diags);
    const std::vector<Diagnostic>& diagnostics() const { return diags_; }

   private:
    std::vector<Diagnostic> diags_;
};

// Structural checks; empty result means valid.
std::vector<Diagnostic> validate(const DecisionTreeSpec& spec);

DecisionTreeSpec parse_tree(const std::string& text);  // throws TreeParseError
std::string serialize_tree(const DecisionTreeSpec& spec);

// Preorder-renumbered text form with names and comments stripped.
std::string canonical_form(const DecisionTreeSpec& spec);
bool semantically_equal(const DecisionTreeSpec& a, const DecisionTreeSpec& b);

struct DerivedFeatures {
    double opp_nearest_dist_to_center = kNoStoneDistance;
    double own_nearest_dist_to_center = kNoStoneDistance;
    int opp_stones_in_house = 0;
    int own_stones_in_house = 0;
    int own_throws_left = 0;
    int opp_throws_left = 0;
    int is_last_throw = 0;
    int game_index = 1;
    int center_occupied_by = 0;  // +1 own, -1 opponent, 0 none

    double get(Feature f) const;
};

DerivedFeatures derive_features(const GameState& state, Team me);

struct Decision {
    ThrowAction action;
    Shot shot;               // the leaf that fired
    bool hit_fallback = false;  // hit requested with no opponent stone in play
    int conditions_visited = 0;
};

Decision decide_traced(const DecisionTreeSpec& spec, const GameState& state);
ThrowAction decide(const DecisionTreeSpec& spec, const GameState& state);

// Aiming solver: grid action whose ray passes closest to `target`, with the
// speed chosen for the requested travel distance along that ray.
ThrowAction aim_draw(const SimConfig& config, Vec2 target);
ThrowAction aim_hit(const SimConfig& config, Vec2 target, SpeedHint speed);
ThrowAction aim_guard(const SimConfig& config, Vec2 target);

std::map<std::string, DecisionTreeSpec> builtin_trees();
std::string builtin_tree_text(const std::string& name);  // throws std::out_of_range

class TreePolicy : public Policy {
   public:
    explicit TreePolicy(DecisionTreeSpec spec) : spec_(std::move(spec)) {}
    ThrowAction act(const GameState& state) override;
    std::string name() const override { return spec_.name; }
    int fallbacks() const { return fallbacks_; }
    const DecisionTreeSpec& spec() const { return spec_; }

   private:
    DecisionTreeSpec spec_;
    int fallbacks_ = 0;
};

}  // namespace curling::dt
