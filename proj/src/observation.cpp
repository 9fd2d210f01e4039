#include "curling/observation.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace curling {

namespace {

constexpr double kWindowSize = 10.0;
constexpr double kCellSize = kWindowSize / kObsSize;
constexpr std::size_t kMaxDetections = 8;
constexpr int kSearchBudget = 200000;

bool in_grid(int r, int c) { return r >= 0 && r < kObsSize && c >= 0 && c < kObsSize; }

struct Candidate {
    int row;
    int col;
    int value;
    int score;  // in-bounds footprint cells equal to value
};

template <typename F>
void for_footprint(int row, int col, F&& f) {
    for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc)
            if (in_grid(row + dr, col + dc)) f(row + dr, col + dc);
}

bool exact_match(const ObsGrid& g, int row, int col, int value) {
    bool ok = true;
    for_footprint(row, col, [&](int r, int c) { ok = ok && g.at(r, c) == value; });
    return ok;
}

int match_score(const ObsGrid& g, int row, int col, int value) {
    int score = 0;
    for_footprint(row, col, [&](int r, int c) { score += g.at(r, c) == value; });
    return score;
}

// Backtracking exact cover of all non-zero cells by exact-match templates.
class CoverSearch {
   public:
    explicit CoverSearch(const ObsGrid& g) : grid_(g) {}

    std::optional<std::vector<Candidate>> run() {
        if (solve()) return chosen_;
        return std::nullopt;
    }

   private:
    bool solve() {
        if (++steps_ > kSearchBudget) return false;
        int fr = -1, fc = -1;
        for (int r = 0; r < kObsSize && fr < 0; ++r)
            for (int c = 0; c < kObsSize; ++c)
                if (grid_.at(r, c) != 0 && !covered_[r][c]) {
                    fr = r;
                    fc = c;
                    break;
                }
        if (fr < 0) return true;
        if (chosen_.size() >= kMaxDetections) return false;
        const int value = grid_.at(fr, fc);
        // The first uncovered cell is normally a template's top-left corner.
        static constexpr int order[9][2] = {{1, 1}, {1, 0}, {0, 1}, {0, 0}, {1, -1}, {-1, 1}, {0, -1}, {-1, 0}, {-1, -1}};
        for (const auto& off : order) {
            int row = fr + off[0], col = fc + off[1];
            if (!in_grid(row, col) || !exact_match(grid_, row, col, value)) continue;
            bool free = true;
            for_footprint(row, col, [&](int r, int c) { free = free && !covered_[r][c]; });
            if (!free) continue;
            set_cover(row, col, true);
            chosen_.push_back({row, col, value, 0});
            if (solve()) return true;
            chosen_.pop_back();
            set_cover(row, col, false);
        }
        return false;
    }

    void set_cover(int row, int col, bool v) {
        for_footprint(row, col, [&](int r, int c) { covered_[r][c] = v; });
    }

    const ObsGrid& grid_;
    std::array<std::array<bool, kObsSize>, kObsSize> covered_{};
    std::vector<Candidate> chosen_;
    int steps_ = 0;
};

// Overlapping templates: greedy non-maximum suppression on match score.
std::vector<Candidate> suppress(const ObsGrid& g) {
    std::vector<Candidate> cands;
    for (int r = 0; r < kObsSize; ++r)
        for (int c = 0; c < kObsSize; ++c) {
            int v = g.at(r, c);
            if (v == 0) continue;
            cands.push_back({r, c, v, match_score(g, r, c, v)});
        }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    std::array<std::array<bool, kObsSize>, kObsSize> covered{};
    std::vector<Candidate> kept;
    for (const auto& cand : cands) {
        if (covered[cand.row][cand.col]) continue;
        bool near_same = std::any_of(kept.begin(), kept.end(), [&](const Candidate& k) {
            return k.value == cand.value && std::max(std::abs(k.row - cand.row), std::abs(k.col - cand.col)) < 2;
        });
        if (near_same) continue;
        kept.push_back(cand);
        for_footprint(cand.row, cand.col, [&](int r, int c) {
            if (g.at(r, c) == cand.value) covered[r][c] = true;
        });
    }
    return kept;
}

}  // namespace

std::optional<CellRef> cell_of(Vec2 p, const SimConfig& config) {
    double x_min = config.center_target.x - kWindowSize / 2;
    double y_min = config.center_target.y - kWindowSize / 2;
    int col = static_cast<int>(std::floor((p.x - x_min) / kCellSize));
    int row = static_cast<int>(std::floor((p.y - y_min) / kCellSize));
    if (!in_grid(row, col)) return std::nullopt;
    return CellRef{row, col};
}

void stamp_template(ObsGrid& grid, CellRef cell, int value) {
    for_footprint(cell.row, cell.col, [&](int r, int c) { grid.cells[r][c] = std::max(grid.cells[r][c], value); });
}

ObsGrid render_observation(const GameState& state, Team team) {
    ObsGrid grid;
    for (const auto& s : state.stones) {
        if (!s.in_play) continue;
        auto cell = cell_of(s.position, state.config);
        if (!cell) continue;
        stamp_template(grid, *cell, s.team == team ? kOwnCell : kOppCell);
    }
    return grid;
}

std::vector<Detection> extract_coordinates(const ObsGrid& grid) {
    for (int r = 0; r < kObsSize; ++r)
        for (int c = 0; c < kObsSize; ++c) {
            int v = grid.at(r, c);
            if (v != 0 && v != kOwnCell && v != kOppCell)
                throw ExtractionError("invalid cell value " + std::to_string(v), {});
        }
    std::vector<Candidate> found;
    if (auto cover = CoverSearch(grid).run())
        found = std::move(*cover);
    else
        found = suppress(grid);

    std::vector<Detection> out;
    for (const auto& c : found) out.push_back({c.value == kOwnCell, c.row, c.col});
    std::sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) {
        if (a.row != b.row) return a.row < b.row;
        if (a.col != b.col) return a.col < b.col;
        return a.own && !b.own;
    });
    if (out.size() > kMaxDetections) throw ExtractionError("more than 8 stone detections", out);
    return out;
}

std::string dump_grid(const ObsGrid& grid) {
    std::string out;
    out.reserve(kObsSize * (kObsSize + 1));
    for (int r = 0; r < kObsSize; ++r) {
        for (int c = 0; c < kObsSize; ++c) out += static_cast<char>('0' + grid.at(r, c));
        out += '\n';
    }
    return out;
}

FeatureVector build_features(const GameState& state, Team team) {
    const SimConfig& c = state.config;
    std::array<std::vector<Vec2>, 2> by_side;  // 0: own, 1: opponent
    for (const auto& s : state.stones)
        if (s.in_play) by_side[s.team == team ? 0 : 1].push_back(s.position);
    FeatureVector f;
    int slot = 0;
    for (auto& side : by_side) {
        std::sort(side.begin(), side.end(), [&](Vec2 a, Vec2 b) {
            double da = distance(a, c.center_target), db = distance(b, c.center_target);
            if (da != db) return da < db;
            if (a.x != b.x) return a.x < b.x;
            return a.y < b.y;
        });
        for (int k = 0; k < kThrowsPerTeam; ++k, ++slot) {
            if (k < static_cast<int>(side.size())) {
                f.values[2 * slot] = std::clamp(side[k].x / c.field_width, 0.0, 1.0);
                f.values[2 * slot + 1] = std::clamp(side[k].y / c.field_length, 0.0, 1.0);
            } else {
                f.values[2 * slot] = kAbsentCoord;
                f.values[2 * slot + 1] = kAbsentCoord;
            }
        }
    }
    f.values[16] = static_cast<double>(state.throws_left_for(team)) / kThrowsPerTeam;
    f.values[17] = static_cast<double>(state.throws_left_for(other(team))) / kThrowsPerTeam;
    return f;
}

}  // namespace curling
