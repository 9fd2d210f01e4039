#pragma once

#include <string>
#include <vector>

#include "curling/sim.hpp"

namespace curling::cli {

struct ReplayResult {
    std::vector<std::string> frames;  // file names relative to the output directory
    bool truncated = false;
    int expected_throws = 0;
};

// One SVG per recorded throw plus index.html.
ReplayResult render_replay(const MatchTrace& trace, const SimConfig& config, const std::string& out_dir);

std::string render_frame(const MatchTrace& trace, std::size_t throw_index, const SimConfig& config);

}  // namespace curling::cli
