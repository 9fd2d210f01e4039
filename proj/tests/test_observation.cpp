#include <doctest.h>

#include <algorithm>
#include <random>

#include "curling/observation.hpp"

using namespace curling;

namespace {

Stone at(Team t, double x, double y) {
    Stone s;
    s.team = t;
    s.position = {x, y};
    return s;
}

GameState with_stones(std::vector<Stone> stones) {
    GameState s = new_match(SimConfig{}, 0);
    s.stones = std::move(stones);
    return s;
}

// Field point at the center of a cell.
Vec2 cell_center(int row, int col) { return {col / 3.0 + 1.0 / 6.0, 20.0 + row / 3.0 + 1.0 / 6.0}; }

}  // namespace

TEST_CASE("empty field renders an all-zero grid") {
    ObsGrid g = render_observation(with_stones({}), Team::A);
    CHECK(g == ObsGrid{});
    CHECK(extract_coordinates(g).empty());
}

TEST_CASE("stone at the center stamps a 3x3 block around cell (15,15)") {
    ObsGrid g = render_observation(with_stones({at(Team::A, 5, 25)}), Team::A);
    for (int r = 0; r < kObsSize; ++r)
        for (int c = 0; c < kObsSize; ++c) {
            bool inside = std::abs(r - 15) <= 1 && std::abs(c - 15) <= 1;
            CHECK(g.at(r, c) == (inside ? kOwnCell : 0));
        }
    // The same stone seen from the other side uses the opponent code.
    CHECK(render_observation(with_stones({at(Team::A, 5, 25)}), Team::B).at(15, 15) == kOppCell);
}

TEST_CASE("template at the window corner is clipped") {
    ObsGrid g = render_observation(with_stones({at(Team::B, 0.1, 20.1)}), Team::A);
    int count = 0;
    for (int r = 0; r < kObsSize; ++r)
        for (int c = 0; c < kObsSize; ++c) count += g.at(r, c) != 0;
    CHECK(count == 4);
    CHECK(g.at(0, 0) == kOppCell);
    CHECK(g.at(1, 1) == kOppCell);
    auto d = extract_coordinates(g);
    REQUIRE(d.size() == 1);
    CHECK(d[0] == Detection{false, 0, 0});
}

TEST_CASE("stones outside the window are omitted") {
    ObsGrid g = render_observation(with_stones({at(Team::A, 5, 12)}), Team::A);
    CHECK(g == ObsGrid{});
}

TEST_CASE("single stamped template is recovered") {
    ObsGrid g;
    stamp_template(g, {10, 12}, kOwnCell);
    auto d = extract_coordinates(g);
    REQUIRE(d.size() == 1);
    CHECK(d[0] == Detection{true, 10, 12});
}

TEST_CASE("render then extract is exact for random non-overlapping placements") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<CellRef> cells;
        std::vector<Stone> stones;
        int n = 1 + static_cast<int>(rng() % 8);
        int attempts = 0;
        while (static_cast<int>(cells.size()) < n && attempts++ < 1000) {
            CellRef c{static_cast<int>(rng() % kObsSize), static_cast<int>(rng() % kObsSize)};
            bool clear = std::all_of(cells.begin(), cells.end(), [&](const CellRef& o) {
                return std::max(std::abs(o.row - c.row), std::abs(o.col - c.col)) >= 3;
            });
            if (!clear) continue;
            cells.push_back(c);
            stones.push_back(at(rng() % 2 ? Team::A : Team::B, cell_center(c.row, c.col).x, cell_center(c.row, c.col).y));
        }
        GameState s = with_stones(stones);
        std::vector<Detection> want;
        for (std::size_t i = 0; i < cells.size(); ++i) want.push_back({stones[i].team == Team::A, cells[i].row, cells[i].col});
        std::sort(want.begin(), want.end(), [](const Detection& a, const Detection& b) {
            return std::tie(a.row, a.col) < std::tie(b.row, b.col);
        });
        CHECK(extract_coordinates(render_observation(s, Team::A)) == want);
    }
}

TEST_CASE("invalid cell values and clutter are extraction errors") {
    ObsGrid bad;
    bad.cells[3][3] = 5;
    CHECK_THROWS_AS(extract_coordinates(bad), ExtractionError);
    ObsGrid dense;
    int placed = 0;
    for (int r = 1; r < kObsSize && placed < 9; r += 4)
        for (int c = 1; c < kObsSize && placed < 9; c += 4, ++placed) stamp_template(dense, {r, c}, kOwnCell);
    try {
        extract_coordinates(dense);
        FAIL("expected an extraction error");
    } catch (const ExtractionError& e) {
        CHECK(e.candidates().size() == 9);
    }
}

TEST_CASE("dump_grid prints 30 lines of 30 digits") {
    ObsGrid g;
    stamp_template(g, {0, 29}, kOppCell);
    std::string d = dump_grid(g);
    CHECK(std::count(d.begin(), d.end(), '\n') == 30);
    CHECK(d.substr(0, 31) == std::string(28, '0') + "44\n");
}

TEST_CASE("features of an empty field") {
    FeatureVector f = build_features(with_stones({}), Team::A);
    for (int i = 0; i < 16; ++i) CHECK(f.values[i] == kAbsentCoord);
    CHECK(f.values[16] == 1.0);
    CHECK(f.values[17] == 1.0);
}

TEST_CASE("features fill own slots then opponent slots by distance") {
    std::vector<Stone> st{at(Team::A, 5, 27), at(Team::B, 6, 25), at(Team::A, 5, 25.5), at(Team::B, 2, 22),
                          at(Team::A, 9, 29)};
    GameState s = with_stones(st);
    s.throws_left = {1, 2};
    FeatureVector f = build_features(s, Team::A);
    // Hand sorted: own (5,25.5) d=0.5, (5,27) d=2, (9,29) d=5.66; opp (6,25) d=1, (2,22) d=4.24.
    std::array<double, 18> want{0.5, 25.5 / 30, 0.5, 27.0 / 30, 0.9, 29.0 / 30, -1, -1,
                                0.6, 25.0 / 30, 0.2, 22.0 / 30, -1,  -1,        -1,  -1, 0.25, 0.5};
    for (int i = 0; i < 18; ++i) CHECK(f.values[i] == doctest::Approx(want[i]));
    std::reverse(s.stones.begin(), s.stones.end());
    CHECK(build_features(s, Team::A) == f);
}

TEST_CASE("features survive state re-serialization ordering") {
    std::vector<Stone> st{at(Team::A, 4, 25), at(Team::A, 6, 25)};
    GameState a = with_stones(st);
    std::swap(st[0], st[1]);
    GameState b = with_stones(st);
    CHECK(build_features(a, Team::B) == build_features(b, Team::B));
}
