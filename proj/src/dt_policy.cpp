#include "curling/dt_policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <set>

#include <json.hpp>

#include "curling/embedded_assets.hpp"

namespace curling::dt {

using nlohmann::ordered_json;

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kEqTolerance = 1e-9;
constexpr double kGuardShortfall = 2.0;
constexpr double kMinTargetY = 1.0;

constexpr std::pair<Feature, const char*> kFeatureNames[] = {
    {Feature::opp_nearest_dist_to_center, "opp_nearest_dist_to_center"},
    {Feature::own_nearest_dist_to_center, "own_nearest_dist_to_center"},
    {Feature::opp_stones_in_house, "opp_stones_in_house"},
    {Feature::own_stones_in_house, "own_stones_in_house"},
    {Feature::own_throws_left, "own_throws_left"},
    {Feature::opp_throws_left, "opp_throws_left"},
    {Feature::is_last_throw, "is_last_throw"},
    {Feature::game_index, "game_index"},
    {Feature::center_occupied_by, "center_occupied_by"},
};

std::optional<Comparator> comparator_from_string(const std::string& s) {
    if (s == "<") return Comparator::lt;
    if (s == "<=" || s == "≤") return Comparator::le;
    if (s == "=" || s == "==") return Comparator::eq;
    if (s == ">=" || s == "≥") return Comparator::ge;
    if (s == ">") return Comparator::gt;
    return std::nullopt;
}

std::optional<ShotKind> kind_from_string(const std::string& s) {
    if (s == "draw") return ShotKind::draw;
    if (s == "hit") return ShotKind::hit;
    if (s == "guard") return ShotKind::guard;
    return std::nullopt;
}

std::optional<SpeedHint> speed_from_string(const std::string& s) {
    if (s == "slow") return SpeedHint::slow;
    if (s == "medium") return SpeedHint::medium;
    if (s == "fast") return SpeedHint::fast;
    return std::nullopt;
}

std::string fixed9(double v) {
    double rounded = std::round(v * 1e9) / 1e9;
    if (rounded == 0.0) rounded = 0.0;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9f", rounded);
    return buf;
}

bool compare(double lhs, Comparator op, double rhs) {
    switch (op) {
        case Comparator::lt: return lhs < rhs - kEqTolerance;
        case Comparator::le: return lhs <= rhs + kEqTolerance;
        case Comparator::eq: return std::abs(lhs - rhs) <= kEqTolerance;
        case Comparator::ge: return lhs >= rhs - kEqTolerance;
        case Comparator::gt: return lhs > rhs + kEqTolerance;
    }
    return false;
}

void parse_shot(const std::string& id, const nlohmann::json& j, Shot& shot, std::vector<Diagnostic>& diags) {
    if (!j.is_object()) {
        diags.push_back({id, "bad_shot", "leaf needs a 'shot' object"});
        return;
    }
    auto kind = j.contains("kind") && j["kind"].is_string() ? kind_from_string(j["kind"].get<std::string>())
                                                           : std::nullopt;
    if (!kind) {
        diags.push_back({id, "bad_shot", "shot.kind must be one of draw, hit, guard"});
        return;
    }
    shot.kind = *kind;
    if (j.contains("speed")) {
        auto sp = j["speed"].is_string() ? speed_from_string(j["speed"].get<std::string>()) : std::nullopt;
        if (!sp)
            diags.push_back({id, "bad_shot", "shot.speed must be one of slow, medium, fast"});
        else
            shot.speed = *sp;
    }
    if (!j.contains("target")) {
        if (shot.kind == ShotKind::hit) {
            diags.push_back({id, "bad_shot", "hit requires target selector 'opp_nearest_to_center'"});
            return;
        }
        shot.target = Vec2{};
        shot.target_is_center = true;
        return;
    }
    const auto& t = j["target"];
    if (t.is_string()) {
        std::string s = t.get<std::string>();
        if (s == "center" && shot.kind != ShotKind::hit) {
            shot.target_is_center = true;
            shot.target = Vec2{};
        } else if (s == "opp_nearest_to_center" && shot.kind == ShotKind::hit) {
            shot.target_is_center = false;
            shot.target = Selector::opp_nearest_to_center;
        } else {
            diags.push_back({id, "bad_shot", "target '" + s + "' not allowed for " + to_string(shot.kind)});
        }
        return;
    }
    if (t.is_array() && t.size() == 2 && t[0].is_number() && t[1].is_number()) {
        if (shot.kind == ShotKind::hit) {
            diags.push_back({id, "bad_shot", "hit requires target selector 'opp_nearest_to_center'"});
            return;
        }
        shot.target_is_center = false;
        shot.target = Vec2{t[0].get<double>(), t[1].get<double>()};
        return;
    }
    diags.push_back({id, "bad_shot", "target must be \"center\", [x, y] or a stone selector"});
}

ordered_json shot_to_json(const Shot& s) {
    ordered_json j;
    j["kind"] = to_string(s.kind);
    if (s.target_is_center)
        j["target"] = "center";
    else if (std::holds_alternative<Selector>(s.target))
        j["target"] = "opp_nearest_to_center";
    else
        j["target"] = {std::get<Vec2>(s.target).x, std::get<Vec2>(s.target).y};
    j["speed"] = to_string(s.speed);
    return j;
}

std::string canonical_shot(const Shot& s) {
    std::string out = std::string("L(") + to_string(s.kind) + ",";
    if (s.target_is_center)
        out += "center";
    else if (std::holds_alternative<Selector>(s.target))
        out += "opp_nearest_to_center";
    else
        out += fixed9(std::get<Vec2>(s.target).x) + "," + fixed9(std::get<Vec2>(s.target).y);
    // Only hits read the speed hint; draws and guards solve for speed.
    if (s.kind == ShotKind::hit) out += std::string(",") + to_string(s.speed);
    return out + ")";
}

double stopping_distance(const SimConfig& c, double v) {
    if (c.friction_decel <= 0.0) return std::numeric_limits<double>::infinity();
    return v * v / (2.0 * c.friction_decel);
}

int speed_for_distance(const SimConfig& c, double range) {
    const auto& g = c.grid.speed;
    int best = 0;
    double best_err = std::numeric_limits<double>::infinity();
    for (int i = 0; i < g.count; ++i) {
        double err = std::abs(stopping_distance(c, g.at(i)) - range);
        if (err < best_err - 1e-12) {
            best_err = err;
            best = i;
        }
    }
    return best;
}

struct Aim {
    int x0_index = 0;
    int angle_index = 0;
    double range = 0.0;  // distance along the ray to the target's foot point
};

Aim aim_at(const SimConfig& c, Vec2 target) {
    target.y = std::max(target.y, kMinTargetY);
    Aim best;
    double best_miss = std::numeric_limits<double>::infinity();
    for (int xi = 0; xi < c.grid.x0.count; ++xi) {
        Vec2 launch{c.grid.x0.at(xi), 0.0};
        Vec2 rel = target - launch;
        double wanted = std::atan2(rel.x, rel.y) / kDegToRad;
        int ai = c.grid.angle_deg.nearest(wanted);
        double a = c.grid.angle_deg.at(ai) * kDegToRad;
        Vec2 dir{std::sin(a), std::cos(a)};
        double miss = std::abs(rel.x * dir.y - rel.y * dir.x);
        if (miss < best_miss - 1e-12) {
            best_miss = miss;
            best = {xi, ai, dot(rel, dir)};
        }
    }
    return best;
}

}  // namespace

const char* to_string(Feature f) {
    for (auto [feat, name] : kFeatureNames)
        if (feat == f) return name;
    return "?";
}

const char* to_string(Comparator c) {
    switch (c) {
        case Comparator::lt: return "<";
        case Comparator::le: return "<=";
        case Comparator::eq: return "=";
        case Comparator::ge: return ">=";
        case Comparator::gt: return ">";
    }
    return "?";
}

const char* to_string(ShotKind k) {
    switch (k) {
        case ShotKind::draw: return "draw";
        case ShotKind::hit: return "hit";
        case ShotKind::guard: return "guard";
    }
    return "?";
}

const char* to_string(SpeedHint s) {
    switch (s) {
        case SpeedHint::slow: return "slow";
        case SpeedHint::medium: return "medium";
        case SpeedHint::fast: return "fast";
    }
    return "?";
}

std::optional<Feature> feature_from_string(const std::string& s) {
    for (auto [feat, name] : kFeatureNames)
        if (s == name) return feat;
    return std::nullopt;
}

std::string Diagnostic::to_string() const {
    std::string out = node.empty() ? std::string("<document>") : "node '" + node + "'";
    return out + ": " + code + ": " + message;
}

TreeParseError::TreeParseError(std::vector<Diagnostic> diags)
    : std::runtime_error([&] {
          std::string msg = "invalid decision tree";
          for (const auto& d : diags) msg += "\n  " + d.to_string();
          return msg;
      }()),
      diags_(std::move(diags)) {}

int DecisionTreeSpec::depth() const {
    std::function<int(const std::string&, int)> walk = [&](const std::string& id, int guard) -> int {
        auto it = nodes.find(id);
        if (it == nodes.end() || guard > static_cast<int>(nodes.size())) return 0;
        if (const auto* c = std::get_if<Condition>(&it->second))
            return 1 + std::max(walk(c->true_branch, guard + 1), walk(c->false_branch, guard + 1));
        return 0;
    };
    return walk(root, 0);
}

std::vector<Diagnostic> validate(const DecisionTreeSpec& spec) {
    std::vector<Diagnostic> diags;
    if (spec.root.empty() || !spec.nodes.count(spec.root)) {
        diags.push_back({spec.root, "missing_root", "root node '" + spec.root + "' does not exist"});
        return diags;
    }
    std::map<std::string, int> visits;
    std::set<std::string> on_path;
    bool cyclic = false;
    std::function<void(const std::string&, const std::string&, int)> walk = [&](const std::string& id,
                                                                                 const std::string& parent, int depth) {
        if (!spec.nodes.count(id)) {
            diags.push_back({parent, "dangling_branch", "branch references missing node '" + id + "'"});
            return;
        }
        if (on_path.count(id)) {
            diags.push_back({id, "cycle", "cycle detected through node '" + id + "'"});
            cyclic = true;
            return;
        }
        if (++visits[id] > 1) {
            diags.push_back({id, "shared_node", "node reachable more than once; trees may not share subtrees"});
            return;
        }
        const auto& node = spec.nodes.at(id);
        if (const auto* c = std::get_if<Condition>(&node)) {
            if (depth + 1 > kMaxDepth) {
                diags.push_back({id, "too_deep", "tree depth exceeds " + std::to_string(kMaxDepth)});
                return;
            }
            if (c->true_branch.empty() || c->false_branch.empty()) {
                diags.push_back({id, "missing_branch", "condition needs both true and false branches"});
                return;
            }
            on_path.insert(id);
            walk(c->true_branch, id, depth + 1);
            if (!cyclic) walk(c->false_branch, id, depth + 1);
            on_path.erase(id);
        } else {
            const auto& shot = std::get<Leaf>(node).shot;
            if (!shot.target_is_center && std::holds_alternative<Vec2>(shot.target)) {
                Vec2 p = std::get<Vec2>(shot.target);
                if (p.x < 0 || p.y < 0 || p.x > 1e3 || p.y > 1e3 || !std::isfinite(p.x) || !std::isfinite(p.y))
                    diags.push_back({id, "bad_shot", "shot target outside the field"});
            }
            if (shot.kind == ShotKind::hit && !std::holds_alternative<Selector>(shot.target))
                diags.push_back({id, "bad_shot", "hit requires a stone selector"});
        }
    };
    walk(spec.root, "", 0);
    if (!cyclic)
        for (const auto& [id, node] : spec.nodes)
            if (!visits.count(id)) diags.push_back({id, "unreachable", "node is not reachable from the root"});
    return diags;
}

DecisionTreeSpec parse_tree(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw TreeParseError({{"", "syntax", "JSON syntax error at byte " + std::to_string(e.byte) + ": " + e.what()}});
    }
    std::vector<Diagnostic> diags;
    if (!doc.is_object()) throw TreeParseError({{"", "syntax", "document must be a JSON object"}});
    DecisionTreeSpec spec;
    if (doc.contains("name") && doc["name"].is_string()) spec.name = doc["name"].get<std::string>();
    if (doc.contains("comment") && doc["comment"].is_string()) spec.comment = doc["comment"].get<std::string>();
    if (!doc.contains("root") || !doc["root"].is_string())
        diags.push_back({"", "syntax", "missing string field 'root'"});
    else
        spec.root = doc["root"].get<std::string>();
    if (!doc.contains("nodes") || !doc["nodes"].is_object()) {
        diags.push_back({"", "syntax", "missing object field 'nodes'"});
        throw TreeParseError(std::move(diags));
    }
    for (const auto& [id, n] : doc["nodes"].items()) {
        if (!n.is_object() || !n.contains("type") || !n["type"].is_string()) {
            diags.push_back({id, "syntax", "node needs a string 'type' (condition or leaf)"});
            continue;
        }
        std::string type = n["type"].get<std::string>();
        if (type == "condition") {
            Condition c;
            std::string feature = n.value("feature", std::string{});
            auto f = feature_from_string(feature);
            if (!f) {
                diags.push_back({id, "unknown_feature", "unknown feature '" + feature + "'"});
                continue;
            }
            c.predicate.feature = *f;
            auto op = n.contains("op") && n["op"].is_string() ? comparator_from_string(n["op"].get<std::string>())
                                                             : std::nullopt;
            if (!op) {
                diags.push_back({id, "bad_comparator", "op must be one of <, <=, =, >=, >"});
                continue;
            }
            c.predicate.op = *op;
            if (!n.contains("value") || !n["value"].is_number()) {
                diags.push_back({id, "syntax", "condition needs a numeric 'value'"});
                continue;
            }
            c.predicate.constant = n["value"].get<double>();
            auto branch = [&](const char* key) -> std::string {
                return n.contains(key) && n[key].is_string() ? n[key].get<std::string>() : std::string{};
            };
            c.true_branch = branch("true");
            c.false_branch = branch("false");
            spec.nodes.emplace(id, std::move(c));
        } else if (type == "leaf") {
            Leaf leaf;
            std::size_t before = diags.size();
            parse_shot(id, n.contains("shot") ? n["shot"] : nlohmann::json(), leaf.shot, diags);
            if (diags.size() == before) spec.nodes.emplace(id, std::move(leaf));
        } else {
            diags.push_back({id, "syntax", "unknown node type '" + type + "'"});
        }
    }
    if (diags.empty()) diags = validate(spec);
    if (!diags.empty()) throw TreeParseError(std::move(diags));
    return spec;
}

std::string serialize_tree(const DecisionTreeSpec& spec) {
    ordered_json j;
    j["name"] = spec.name;
    j["comment"] = spec.comment;
    j["root"] = spec.root;
    ordered_json nodes = ordered_json::object();
    for (const auto& [id, node] : spec.nodes) {
        if (const auto* c = std::get_if<Condition>(&node)) {
            nodes[id] = {{"type", "condition"},
                         {"feature", to_string(c->predicate.feature)},
                         {"op", to_string(c->predicate.op)},
                         {"value", c->predicate.constant},
                         {"true", c->true_branch},
                         {"false", c->false_branch}};
        } else {
            nodes[id] = {{"type", "leaf"}, {"shot", shot_to_json(std::get<Leaf>(node).shot)}};
        }
    }
    j["nodes"] = std::move(nodes);
    return j.dump(2);
}

std::string canonical_form(const DecisionTreeSpec& spec) {
    std::string out;
    int counter = 0;
    std::function<void(const std::string&)> walk = [&](const std::string& id) {
        const auto& node = spec.nodes.at(id);
        out += "#" + std::to_string(counter++);
        if (const auto* c = std::get_if<Condition>(&node)) {
            out += std::string("C(") + to_string(c->predicate.feature) + "," + to_string(c->predicate.op) + "," +
                   fixed9(c->predicate.constant) + ")[";
            walk(c->true_branch);
            out += "|";
            walk(c->false_branch);
            out += "]";
        } else {
            out += canonical_shot(std::get<Leaf>(node).shot);
        }
    };
    walk(spec.root);
    return out;
}

bool semantically_equal(const DecisionTreeSpec& a, const DecisionTreeSpec& b) {
    return canonical_form(a) == canonical_form(b);
}

double DerivedFeatures::get(Feature f) const {
    switch (f) {
        case Feature::opp_nearest_dist_to_center: return opp_nearest_dist_to_center;
        case Feature::own_nearest_dist_to_center: return own_nearest_dist_to_center;
        case Feature::opp_stones_in_house: return opp_stones_in_house;
        case Feature::own_stones_in_house: return own_stones_in_house;
        case Feature::own_throws_left: return own_throws_left;
        case Feature::opp_throws_left: return opp_throws_left;
        case Feature::is_last_throw: return is_last_throw;
        case Feature::game_index: return game_index;
        case Feature::center_occupied_by: return center_occupied_by;
    }
    return 0.0;
}

DerivedFeatures derive_features(const GameState& state, Team me) {
    const SimConfig& c = state.config;
    DerivedFeatures f;
    double nearest_in_house = std::numeric_limits<double>::infinity();
    for (const auto& s : state.stones) {
        if (!s.in_play) continue;
        double d = distance(s.position, c.center_target);
        bool own = s.team == me;
        double& nearest = own ? f.own_nearest_dist_to_center : f.opp_nearest_dist_to_center;
        nearest = std::min(nearest, d);
        if (!c.house_radius || d <= *c.house_radius) {
            (own ? f.own_stones_in_house : f.opp_stones_in_house) += 1;
            if (d < nearest_in_house) {
                nearest_in_house = d;
                f.center_occupied_by = own ? 1 : -1;
            }
        }
    }
    f.own_throws_left = state.throws_left_for(me);
    f.opp_throws_left = state.throws_left_for(other(me));
    f.is_last_throw = f.own_throws_left == 1 ? 1 : 0;
    f.game_index = state.game_index;
    return f;
}

ThrowAction aim_draw(const SimConfig& c, Vec2 target) {
    Aim aim = aim_at(c, target);
    return {aim.x0_index, aim.angle_index, speed_for_distance(c, aim.range)};
}

ThrowAction aim_hit(const SimConfig& c, Vec2 target, SpeedHint speed) {
    Aim aim = aim_at(c, target);
    int si = c.grid.speed.count - 1;
    if (speed == SpeedHint::medium)
        si = std::max(speed_for_distance(c, aim.range + 6.0), speed_for_distance(c, aim.range) + 1);
    else if (speed == SpeedHint::slow)
        si = std::max(speed_for_distance(c, aim.range + 2.0), speed_for_distance(c, aim.range) + 1);
    return {aim.x0_index, aim.angle_index, std::min(si, c.grid.speed.count - 1)};
}

ThrowAction aim_guard(const SimConfig& c, Vec2 target) {
    Aim aim = aim_at(c, target);
    return {aim.x0_index, aim.angle_index, speed_for_distance(c, std::max(aim.range - kGuardShortfall, 0.0))};
}

Decision decide_traced(const DecisionTreeSpec& spec, const GameState& state) {
    if (state.phase != Phase::awaiting_throw) throw StateError("decide: state is not awaiting a throw");
    DerivedFeatures feats = derive_features(state, state.thrower);
    Decision out;
    const Node* node = &spec.nodes.at(spec.root);
    while (const auto* c = std::get_if<Condition>(node)) {
        if (++out.conditions_visited > kMaxDepth) throw StateError("decide: depth cap exceeded");
        bool taken = compare(feats.get(c->predicate.feature), c->predicate.op, c->predicate.constant);
        node = &spec.nodes.at(taken ? c->true_branch : c->false_branch);
    }
    const Shot& shot = std::get<Leaf>(*node).shot;
    out.shot = shot;
    const SimConfig& cfg = state.config;
    Vec2 point = shot.target_is_center || !std::holds_alternative<Vec2>(shot.target) ? cfg.center_target
                                                                                     : std::get<Vec2>(shot.target);
    switch (shot.kind) {
        case ShotKind::draw: out.action = aim_draw(cfg, point); break;
        case ShotKind::guard: out.action = aim_guard(cfg, point); break;
        case ShotKind::hit: {
            const Stone* target = nullptr;
            double best = std::numeric_limits<double>::infinity();
            for (const auto& s : state.stones) {
                if (!s.in_play || s.team == state.thrower) continue;
                double d = distance(s.position, cfg.center_target);
                if (d < best) {
                    best = d;
                    target = &s;
                }
            }
            if (target) {
                out.action = aim_hit(cfg, target->position, shot.speed);
            } else {
                out.hit_fallback = true;
                out.action = aim_draw(cfg, cfg.center_target);
            }
            break;
        }
    }
    return out;
}

ThrowAction decide(const DecisionTreeSpec& spec, const GameState& state) { return decide_traced(spec, state).action; }

ThrowAction TreePolicy::act(const GameState& state) {
    Decision d = decide_traced(spec_, state);
    if (d.hit_fallback) ++fallbacks_;
    return d.action;
}

std::string builtin_tree_text(const std::string& name) {
    for (const auto& [n, text] : assets::kBuiltinTrees)
        if (name == n) return text;
    throw std::out_of_range("no builtin tree named '" + name + "'");
}

std::map<std::string, DecisionTreeSpec> builtin_trees() {
    std::map<std::string, DecisionTreeSpec> out;
    for (const auto& [name, text] : assets::kBuiltinTrees) out.emplace(name, parse_tree(text));
    return out;
}

}  // namespace curling::dt
