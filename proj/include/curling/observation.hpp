#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "curling/sim.hpp"

namespace curling {

inline constexpr int kObsSize = 30;
inline constexpr int kOwnCell = 8;
inline constexpr int kOppCell = 4;

// 10x10-unit window centered on the house, 1/3-unit cells. Row follows y,
// column follows x.
struct ObsGrid {
    std::array<std::array<int, kObsSize>, kObsSize> cells{};

    int at(int row, int col) const { return cells[row][col]; }
    bool operator==(const ObsGrid&) const = default;
};

struct CellRef {
    int row = 0;
    int col = 0;
    bool operator==(const CellRef&) const = default;
};

// Nearest cell of a field point, or nullopt when it falls outside the window.
std::optional<CellRef> cell_of(Vec2 p, const SimConfig& config);

ObsGrid render_observation(const GameState& state, Team team);
// Stamps a 3x3 template centered at `cell`, clipped to the grid.
void stamp_template(ObsGrid& grid, CellRef cell, int value);

struct Detection {
    bool own = true;
    int row = 0;
    int col = 0;
    bool operator==(const Detection&) const = default;
};

class ExtractionError : public std::runtime_error {
   public:
    ExtractionError(const std::string& what, std::vector<Detection> candidates)
        : std::runtime_error(what), candidates_(std::move(candidates)) {}
    const std::vector<Detection>& candidates() const { return candidates_; }

   private:
    std::vector<Detection> candidates_;
};

// Detections sorted by (row, col, own-first).
std::vector<Detection> extract_coordinates(const ObsGrid& grid);

std::string dump_grid(const ObsGrid& grid);

inline constexpr int kFeatureLength = 18;
inline constexpr double kAbsentCoord = -1.0;

struct FeatureVector {
    std::array<double, kFeatureLength> values{};
    bool operator==(const FeatureVector&) const = default;
};

FeatureVector build_features(const GameState& state, Team team);

}  // namespace curling
